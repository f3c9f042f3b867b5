use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};

use super::{
    BeliefLevel, BeliefUpdateRecord, DialogueSummary, EpisodicRecord, MemoryBundle, MemoryError, Scored,
    SemanticRecord,
};

/// Recency decay λ per day used by episodic ranking.
pub const DEFAULT_DECAY_PER_DAY: f64 = 0.01;
pub const DEFAULT_RETRIEVAL_K: usize = 5;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS agents (
    agent_id TEXT PRIMARY KEY
);
CREATE TABLE IF NOT EXISTS episodic_memory (
    memory_id TEXT PRIMARY KEY,
    agent_id TEXT NOT NULL REFERENCES agents(agent_id),
    event_type TEXT NOT NULL,
    event_time TEXT NOT NULL,
    content TEXT NOT NULL,
    emotional_valence REAL NOT NULL,
    importance REAL NOT NULL,
    metadata_json TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS episodic_by_agent ON episodic_memory(agent_id);
CREATE TABLE IF NOT EXISTS semantic_memory (
    fact_id TEXT PRIMARY KEY,
    agent_id TEXT NOT NULL REFERENCES agents(agent_id),
    category TEXT NOT NULL,
    content TEXT NOT NULL,
    confidence REAL NOT NULL,
    source TEXT NOT NULL,
    updated_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS semantic_by_agent ON semantic_memory(agent_id);
CREATE TABLE IF NOT EXISTS belief_updates (
    update_id TEXT PRIMARY KEY,
    agent_id TEXT NOT NULL REFERENCES agents(agent_id),
    belief_level TEXT NOT NULL CHECK (belief_level IN ('core', 'intermediate')),
    belief_type TEXT NOT NULL,
    old_value TEXT NOT NULL,
    new_value TEXT NOT NULL,
    trigger_event TEXT NOT NULL,
    timestamp TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS dialogue_summaries (
    summary_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL,
    agent_id TEXT NOT NULL REFERENCES agents(agent_id),
    summary TEXT NOT NULL,
    key_topics_json TEXT NOT NULL,
    emotional_trajectory_json TEXT NOT NULL,
    created_at TEXT NOT NULL
);
";

fn fmt_ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_ts(idx: usize, s: String) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(&s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, Box::new(e)))
}

fn parse_json<T: serde::de::DeserializeOwned>(idx: usize, s: String) -> rusqlite::Result<T> {
    serde_json::from_str(&s)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, Box::new(e)))
}

fn episode_from_row(row: &Row<'_>) -> rusqlite::Result<EpisodicRecord> {
    Ok(EpisodicRecord {
        memory_id: row.get(0)?,
        agent_id: row.get(1)?,
        event_type: row.get(2)?,
        event_time: parse_ts(3, row.get(3)?)?,
        content: row.get(4)?,
        emotional_valence: row.get(5)?,
        importance: row.get(6)?,
        metadata: parse_json(7, row.get(7)?)?,
    })
}

fn fact_from_row(row: &Row<'_>) -> rusqlite::Result<SemanticRecord> {
    Ok(SemanticRecord {
        fact_id: row.get(0)?,
        agent_id: row.get(1)?,
        category: row.get(2)?,
        content: row.get(3)?,
        confidence: row.get(4)?,
        source: row.get(5)?,
        updated_at: parse_ts(6, row.get(6)?)?,
    })
}

fn update_from_row(row: &Row<'_>) -> rusqlite::Result<BeliefUpdateRecord> {
    let level: String = row.get(2)?;
    Ok(BeliefUpdateRecord {
        update_id: row.get(0)?,
        agent_id: row.get(1)?,
        belief_level: BeliefLevel::parse(&level).ok_or_else(|| {
            rusqlite::Error::FromSqlConversionFailure(2, rusqlite::types::Type::Text, format!("bad level {level}").into())
        })?,
        belief_type: row.get(3)?,
        old_value: row.get(4)?,
        new_value: row.get(5)?,
        trigger_event: row.get(6)?,
        timestamp: parse_ts(7, row.get(7)?)?,
    })
}

fn summary_from_row(row: &Row<'_>) -> rusqlite::Result<DialogueSummary> {
    Ok(DialogueSummary {
        summary_id: row.get(0)?,
        session_id: row.get(1)?,
        agent_id: row.get(2)?,
        summary: row.get(3)?,
        key_topics: parse_json(4, row.get(4)?)?,
        emotional_trajectory: parse_json(5, row.get(5)?)?,
        created_at: parse_ts(6, row.get(6)?)?,
    })
}

const EPISODE_COLS: &str =
    "memory_id, agent_id, event_type, event_time, content, emotional_valence, importance, metadata_json";
const FACT_COLS: &str = "fact_id, agent_id, category, content, confidence, source, updated_at";
const UPDATE_COLS: &str =
    "update_id, agent_id, belief_level, belief_type, old_value, new_value, trigger_event, timestamp";
const SUMMARY_COLS: &str =
    "summary_id, session_id, agent_id, summary, key_topics_json, emotional_trajectory_json, created_at";

/// Every long-term record of one agent, as a single JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryDump {
    pub agent_id: String,
    #[serde(default)]
    pub episodic: Vec<EpisodicRecord>,
    #[serde(default)]
    pub semantic: Vec<SemanticRecord>,
    #[serde(default)]
    pub belief_updates: Vec<BeliefUpdateRecord>,
    #[serde(default)]
    pub summaries: Vec<DialogueSummary>,
}

impl MemoryDump {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Relational long-term memory. Readers may share the store; writes are
/// serialized through the connection lock.
pub struct MemoryStore {
    conn: Mutex<Connection>,
    decay_per_day: f64,
}

impl std::fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryStore")
            .field("decay_per_day", &self.decay_per_day)
            .finish_non_exhaustive()
    }
}

impl MemoryStore {
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let conn = Connection::open(path).map_err(MemoryError::storage(format!("open {}", path.display())))?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, MemoryError> {
        let conn = Connection::open_in_memory().map_err(MemoryError::storage("open in-memory"))?;
        Self::init(conn)
    }

    fn init(conn: Connection) -> Result<Self, MemoryError> {
        conn.execute_batch(SCHEMA).map_err(MemoryError::storage("create schema"))?;
        Ok(Self {
            conn: Mutex::new(conn),
            decay_per_day: DEFAULT_DECAY_PER_DAY,
        })
    }

    pub fn with_decay(mut self, per_day: f64) -> Self {
        self.decay_per_day = per_day;
        self
    }

    pub fn decay_per_day(&self) -> f64 {
        self.decay_per_day
    }

    fn conn(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn register_agent(&self, agent_id: &str) -> Result<(), MemoryError> {
        self.conn()
            .execute("INSERT OR IGNORE INTO agents(agent_id) VALUES (?1)", params![agent_id])
            .map_err(MemoryError::storage("register agent"))?;
        Ok(())
    }

    pub fn is_registered(&self, agent_id: &str) -> Result<bool, MemoryError> {
        let conn = self.conn();
        Self::agent_exists(&conn, agent_id)
    }

    fn agent_exists(conn: &Connection, agent_id: &str) -> Result<bool, MemoryError> {
        conn.query_row("SELECT 1 FROM agents WHERE agent_id = ?1", params![agent_id], |_| Ok(()))
            .optional()
            .map(|r| r.is_some())
            .map_err(MemoryError::storage("lookup agent"))
    }

    fn require_agent(conn: &Connection, agent_id: &str) -> Result<(), MemoryError> {
        if Self::agent_exists(conn, agent_id)? {
            Ok(())
        } else {
            Err(MemoryError::UnknownAgent(agent_id.to_owned()))
        }
    }

    /// Resolves the id to insert under: the given one, or the next free
    /// `<agent>:<kind>:<n>` when empty.
    fn resolve_id(
        conn: &Connection,
        table: &'static str,
        key: &str,
        agent_id: &str,
        kind: &str,
        given: &str,
    ) -> Result<String, MemoryError> {
        let exists = |id: &str| -> Result<bool, MemoryError> {
            conn.query_row(&format!("SELECT 1 FROM {table} WHERE {key} = ?1"), params![id], |_| Ok(()))
                .optional()
                .map(|r| r.is_some())
                .map_err(MemoryError::storage(format!("lookup {table}")))
        };
        if !given.is_empty() {
            if exists(given)? {
                return Err(MemoryError::DuplicateId {
                    table,
                    id: given.to_owned(),
                });
            }
            return Ok(given.to_owned());
        }
        let count: i64 = conn
            .query_row(&format!("SELECT COUNT(*) FROM {table} WHERE agent_id = ?1"), params![agent_id], |r| r.get(0))
            .map_err(MemoryError::storage(format!("count {table}")))?;
        let mut n = count + 1;
        loop {
            let id = format!("{agent_id}:{kind}:{n:06}");
            if !exists(&id)? {
                return Ok(id);
            }
            n += 1;
        }
    }

    pub fn store_episode(&self, rec: &EpisodicRecord) -> Result<String, MemoryError> {
        rec.validate()?;
        let conn = self.conn();
        Self::require_agent(&conn, &rec.agent_id)?;
        let id = Self::resolve_id(&conn, "episodic_memory", "memory_id", &rec.agent_id, "ep", &rec.memory_id)?;
        conn.execute(
            &format!("INSERT INTO episodic_memory ({EPISODE_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)"),
            params![
                id,
                rec.agent_id,
                rec.event_type,
                fmt_ts(&rec.event_time),
                rec.content,
                rec.emotional_valence,
                rec.importance,
                serde_json::to_string(&rec.metadata).expect("metadata serializes"),
            ],
        )
        .map_err(MemoryError::storage("insert episodic_memory"))?;
        Ok(id)
    }

    pub fn store_fact(&self, rec: &SemanticRecord) -> Result<String, MemoryError> {
        rec.validate()?;
        let conn = self.conn();
        Self::require_agent(&conn, &rec.agent_id)?;
        let id = Self::resolve_id(&conn, "semantic_memory", "fact_id", &rec.agent_id, "fact", &rec.fact_id)?;
        conn.execute(
            &format!("INSERT INTO semantic_memory ({FACT_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)"),
            params![
                id,
                rec.agent_id,
                rec.category,
                rec.content,
                rec.confidence,
                rec.source,
                fmt_ts(&rec.updated_at)
            ],
        )
        .map_err(MemoryError::storage("insert semantic_memory"))?;
        Ok(id)
    }

    pub fn log_belief_update(&self, rec: &BeliefUpdateRecord) -> Result<String, MemoryError> {
        let conn = self.conn();
        Self::require_agent(&conn, &rec.agent_id)?;
        let id = Self::resolve_id(&conn, "belief_updates", "update_id", &rec.agent_id, "bu", &rec.update_id)?;
        conn.execute(
            &format!("INSERT INTO belief_updates ({UPDATE_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)"),
            params![
                id,
                rec.agent_id,
                rec.belief_level.as_str(),
                rec.belief_type,
                rec.old_value,
                rec.new_value,
                rec.trigger_event,
                fmt_ts(&rec.timestamp)
            ],
        )
        .map_err(MemoryError::storage("insert belief_updates"))?;
        Ok(id)
    }

    pub fn store_summary(&self, s: &DialogueSummary) -> Result<String, MemoryError> {
        let conn = self.conn();
        Self::require_agent(&conn, &s.agent_id)?;
        let id = Self::resolve_id(&conn, "dialogue_summaries", "summary_id", &s.agent_id, "sum", &s.summary_id)?;
        conn.execute(
            &format!("INSERT INTO dialogue_summaries ({SUMMARY_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)"),
            params![
                id,
                s.session_id,
                s.agent_id,
                s.summary,
                serde_json::to_string(&s.key_topics).expect("topics serialize"),
                serde_json::to_string(&s.emotional_trajectory).expect("trajectory serializes"),
                fmt_ts(&s.created_at)
            ],
        )
        .map_err(MemoryError::storage("insert dialogue_summaries"))?;
        Ok(id)
    }

    pub fn fetch_episode(&self, memory_id: &str) -> Result<Option<EpisodicRecord>, MemoryError> {
        self.conn()
            .query_row(
                &format!("SELECT {EPISODE_COLS} FROM episodic_memory WHERE memory_id = ?1"),
                params![memory_id],
                episode_from_row,
            )
            .optional()
            .map_err(MemoryError::storage("fetch episodic_memory"))
    }

    pub fn fetch_fact(&self, fact_id: &str) -> Result<Option<SemanticRecord>, MemoryError> {
        self.conn()
            .query_row(
                &format!("SELECT {FACT_COLS} FROM semantic_memory WHERE fact_id = ?1"),
                params![fact_id],
                fact_from_row,
            )
            .optional()
            .map_err(MemoryError::storage("fetch semantic_memory"))
    }

    pub fn fetch_belief_update(&self, update_id: &str) -> Result<Option<BeliefUpdateRecord>, MemoryError> {
        self.conn()
            .query_row(
                &format!("SELECT {UPDATE_COLS} FROM belief_updates WHERE update_id = ?1"),
                params![update_id],
                update_from_row,
            )
            .optional()
            .map_err(MemoryError::storage("fetch belief_updates"))
    }

    pub fn fetch_summary(&self, summary_id: &str) -> Result<Option<DialogueSummary>, MemoryError> {
        self.conn()
            .query_row(
                &format!("SELECT {SUMMARY_COLS} FROM dialogue_summaries WHERE summary_id = ?1"),
                params![summary_id],
                summary_from_row,
            )
            .optional()
            .map_err(MemoryError::storage("fetch dialogue_summaries"))
    }

    fn query_agent<T>(
        &self,
        sql: &str,
        agent_id: &str,
        map: fn(&Row<'_>) -> rusqlite::Result<T>,
    ) -> Result<Vec<T>, MemoryError> {
        let conn = self.conn();
        Self::require_agent(&conn, agent_id)?;
        let mut stmt = conn.prepare(sql).map_err(MemoryError::storage("prepare"))?;
        let rows = stmt
            .query_map(params![agent_id], map)
            .map_err(MemoryError::storage("query"))?;
        rows.collect::<Result<Vec<_>, _>>().map_err(MemoryError::storage("read rows"))
    }

    pub fn episodes(&self, agent_id: &str) -> Result<Vec<EpisodicRecord>, MemoryError> {
        self.query_agent(
            &format!("SELECT {EPISODE_COLS} FROM episodic_memory WHERE agent_id = ?1 ORDER BY memory_id"),
            agent_id,
            episode_from_row,
        )
    }

    pub fn facts(&self, agent_id: &str) -> Result<Vec<SemanticRecord>, MemoryError> {
        self.query_agent(
            &format!("SELECT {FACT_COLS} FROM semantic_memory WHERE agent_id = ?1 ORDER BY fact_id"),
            agent_id,
            fact_from_row,
        )
    }

    pub fn belief_updates(&self, agent_id: &str) -> Result<Vec<BeliefUpdateRecord>, MemoryError> {
        self.query_agent(
            &format!("SELECT {UPDATE_COLS} FROM belief_updates WHERE agent_id = ?1 ORDER BY timestamp, update_id"),
            agent_id,
            update_from_row,
        )
    }

    pub fn summaries(&self, agent_id: &str) -> Result<Vec<DialogueSummary>, MemoryError> {
        self.query_agent(
            &format!("SELECT {SUMMARY_COLS} FROM dialogue_summaries WHERE agent_id = ?1 ORDER BY created_at, summary_id"),
            agent_id,
            summary_from_row,
        )
    }

    /// Episodic score: `importance · exp(−λ · age_days)`. Events dated after
    /// `now` count as age zero.
    pub fn episode_score(&self, rec: &EpisodicRecord, now: DateTime<Utc>) -> f64 {
        let age_days = ((now - rec.event_time).num_milliseconds() as f64 / 86_400_000.0).max(0.0);
        rec.importance * (-self.decay_per_day * age_days).exp()
    }

    /// Ranked context for one agent.
    ///
    /// Episodes: top `k` by decayed importance, ties newest first then by id.
    /// Facts: categories matching `scenario_tags` (all categories when none
    /// match), top `k` by confidence with the same tie-break on `updated_at`.
    /// The latest dialogue summary is attached regardless of `k`.
    pub fn retrieve_context(
        &self,
        agent_id: &str,
        scenario_tags: &BTreeSet<String>,
        now: DateTime<Utc>,
        k: usize,
    ) -> Result<MemoryBundle, MemoryError> {
        let mut episodic: Vec<_> = self
            .episodes(agent_id)?
            .into_iter()
            .map(|r| Scored {
                score: self.episode_score(&r, now),
                record: r,
            })
            .collect();
        episodic.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.record.event_time.cmp(&a.record.event_time))
                .then(a.record.memory_id.cmp(&b.record.memory_id))
        });
        episodic.truncate(k);

        let facts = self.facts(agent_id)?;
        let matching = facts.iter().any(|f| scenario_tags.contains(&f.category));
        let mut semantic: Vec<_> = facts
            .into_iter()
            .filter(|f| !matching || scenario_tags.contains(&f.category))
            .map(|r| Scored {
                score: r.confidence,
                record: r,
            })
            .collect();
        semantic.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.record.updated_at.cmp(&a.record.updated_at))
                .then(a.record.fact_id.cmp(&b.record.fact_id))
        });
        semantic.truncate(k);

        let latest_summary = self
            .summaries(agent_id)?
            .into_iter()
            .max_by(|a, b| a.created_at.cmp(&b.created_at).then(b.summary_id.cmp(&a.summary_id)));

        Ok(MemoryBundle {
            episodic,
            semantic,
            latest_summary,
        })
    }

    pub fn dump_agent(&self, agent_id: &str) -> Result<MemoryDump, MemoryError> {
        Ok(MemoryDump {
            agent_id: agent_id.to_owned(),
            episodic: self.episodes(agent_id)?,
            semantic: self.facts(agent_id)?,
            belief_updates: self.belief_updates(agent_id)?,
            summaries: self.summaries(agent_id)?,
        })
    }

    /// Registers the dump's agent and inserts every record.
    pub fn load_dump(&self, dump: &MemoryDump) -> Result<(), MemoryError> {
        self.register_agent(&dump.agent_id)?;
        for r in &dump.episodic {
            self.store_episode(r)?;
        }
        for r in &dump.semantic {
            self.store_fact(r)?;
        }
        for r in &dump.belief_updates {
            self.log_belief_update(r)?;
        }
        for r in &dump.summaries {
            self.store_summary(r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use std::collections::BTreeMap;

    fn now() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn episode(id: &str, importance: f64, age_days: i64) -> EpisodicRecord {
        EpisodicRecord {
            memory_id: id.into(),
            agent_id: "a".into(),
            event_type: "event".into(),
            event_time: now() - Duration::days(age_days),
            content: format!("episode {id}"),
            emotional_valence: 0.0,
            importance,
            metadata: BTreeMap::new(),
        }
    }

    fn store() -> MemoryStore {
        let s = MemoryStore::open_in_memory().unwrap();
        s.register_agent("a").unwrap();
        s
    }

    #[test]
    fn pneumonia_episode_round_trips() {
        let s = store();
        let mut rec = episode("", 0.9, 1000);
        rec.content = "Hospitalized for pneumonia (2021-11); felt fearful; importance=0.9".into();
        rec.emotional_valence = -0.8;
        let id = s.store_episode(&rec).unwrap();
        assert_eq!(id, "a:ep:000001");
        let back = s.fetch_episode(&id).unwrap().unwrap();
        assert_eq!(back.content, rec.content);
        assert_eq!(back.event_time, rec.event_time);
    }

    #[test]
    fn invalid_importance_not_persisted() {
        let s = store();
        assert!(matches!(s.store_episode(&episode("x", 1.5, 0)), Err(MemoryError::Invalid { .. })));
        assert!(s.fetch_episode("x").unwrap().is_none());
    }

    #[test]
    fn unknown_agent_and_duplicates() {
        let s = store();
        let mut rec = episode("x", 0.5, 0);
        rec.agent_id = "ghost".into();
        assert!(matches!(s.store_episode(&rec), Err(MemoryError::UnknownAgent(_))));
        s.store_episode(&episode("x", 0.5, 0)).unwrap();
        assert!(matches!(s.store_episode(&episode("x", 0.5, 0)), Err(MemoryError::DuplicateId { .. })));
        assert!(matches!(
            s.retrieve_context("ghost", &BTreeSet::new(), now(), 5),
            Err(MemoryError::UnknownAgent(_))
        ));
    }

    #[test]
    fn recency_beats_stale_importance() {
        let s = store();
        s.store_episode(&episode("old", 0.9, 100)).unwrap();
        s.store_episode(&episode("new", 0.5, 0)).unwrap();
        let b = s.retrieve_context("a", &BTreeSet::new(), now(), 5).unwrap();
        assert_eq!(b.episodic[0].record.memory_id, "new");
        assert!((b.episodic[0].score - 0.5).abs() < 1e-12);
        assert!((b.episodic[1].score - 0.9 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((b.episodic[1].score - 0.331).abs() < 1e-3);
    }

    #[test]
    fn ties_prefer_newer_then_id() {
        let s = MemoryStore::open_in_memory().unwrap().with_decay(0.0);
        s.register_agent("a").unwrap();
        s.store_episode(&episode("b", 0.5, 10)).unwrap();
        s.store_episode(&episode("c", 0.5, 1)).unwrap();
        s.store_episode(&episode("a", 0.5, 1)).unwrap();
        let b = s.retrieve_context("a", &BTreeSet::new(), now(), 5).unwrap();
        let ids: Vec<_> = b.episodic.iter().map(|e| e.record.memory_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
    }

    #[test]
    fn k_zero_keeps_summary() {
        let s = store();
        s.store_episode(&episode("x", 0.5, 0)).unwrap();
        s.store_summary(&DialogueSummary {
            summary_id: String::new(),
            session_id: "s1".into(),
            agent_id: "a".into(),
            summary: "talked".into(),
            key_topics: vec!["medication".into()],
            emotional_trajectory: vec![],
            created_at: now(),
        })
        .unwrap();
        let b = s.retrieve_context("a", &BTreeSet::new(), now(), 0).unwrap();
        assert!(b.episodic.is_empty() && b.semantic.is_empty());
        assert_eq!(b.latest_summary.unwrap().summary, "talked");
    }

    #[test]
    fn semantic_filter_falls_back_to_all() {
        let s = store();
        for (id, cat, conf) in [("f1", "health_belief", 0.7), ("f2", "routine", 0.9), ("f3", "health_belief", 0.4)] {
            s.store_fact(&SemanticRecord {
                fact_id: id.into(),
                agent_id: "a".into(),
                category: cat.into(),
                content: format!("fact {id}"),
                confidence: conf,
                source: "caregiver".into(),
                updated_at: now(),
            })
            .unwrap();
        }
        let tags: BTreeSet<String> = ["health_belief".to_string()].into();
        let b = s.retrieve_context("a", &tags, now(), 5).unwrap();
        let ids: Vec<_> = b.semantic.iter().map(|f| f.record.fact_id.as_str()).collect();
        assert_eq!(ids, ["f1", "f3"]);
        let tags: BTreeSet<String> = ["finance".to_string()].into();
        let b = s.retrieve_context("a", &tags, now(), 2).unwrap();
        let ids: Vec<_> = b.semantic.iter().map(|f| f.record.fact_id.as_str()).collect();
        assert_eq!(ids, ["f2", "f1"]);
    }

    #[test]
    fn dump_round_trip() {
        let s = store();
        s.store_episode(&episode("x", 0.5, 3)).unwrap();
        let dump = s.dump_agent("a").unwrap();
        let other = MemoryStore::open_in_memory().unwrap();
        other.load_dump(&MemoryDump::from_json(&dump.to_json()).unwrap()).unwrap();
        assert_eq!(other.dump_agent("a").unwrap(), dump);
    }
}
