//! Shared fixtures and property checks for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use personasim::ablation::RunConfig;
use personasim::ccd::EmotionVector;
use personasim::memory::{
    BeliefLevel, BeliefUpdateRecord, DialogueSummary, DialogueTurn, EpisodicRecord, MemoryStore, SemanticRecord,
    ShortTermMemory,
};
use personasim::persona::Roster;
use proptest::prelude::*;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn roster() -> Roster {
    Roster::load_dir(&fixtures().join("profiles")).expect("fixture roster loads")
}

/// Scripted run over the fixture roster with CCD and memory inputs.
pub fn scripted_config(output_dir: &Path) -> RunConfig {
    let f = fixtures();
    let mut c = RunConfig::scripted(f.join("profiles"), output_dir);
    c.ccd_dir = Some(f.join("ccd"));
    c.memory_dir = Some(f.join("memory"));
    c
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

// ---------------------------------------------------------------------------
// Memory properties. Each check returns a description of the first violation.

fn turns(importances: &[f64]) -> Vec<DialogueTurn> {
    importances
        .iter()
        .enumerate()
        .map(|(i, &imp)| DialogueTurn::new("a", format!("turn {i}"), t0() + Duration::seconds(i as i64), imp))
        .collect()
}

/// Size bound plus the eviction rule traced against a reference model.
pub fn check_short_term(capacity: usize, importances: &[f64]) -> Result<(), String> {
    let mut stm = ShortTermMemory::with_capacity(capacity);
    let mut model: Vec<(usize, f64)> = Vec::new();
    for (i, turn) in turns(importances).into_iter().enumerate() {
        let max_prior = model.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let min_prior = model.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        model.push((i, turn.importance));
        let evicted = stm.append_turn(turn).map_err(|e| e.to_string())?;
        if stm.len() > capacity {
            return Err(format!("{} turns held with capacity {capacity}", stm.len()));
        }
        let expected = if model.len() > capacity {
            let prior = &model[..model.len() - 1];
            let min = prior.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            let pos = prior.iter().position(|m| m.1 == min).unwrap();
            Some(model.remove(pos))
        } else {
            None
        };
        match (&evicted, expected) {
            (None, None) => {}
            (Some(got), Some((idx, imp))) => {
                if got.text != format!("turn {idx}") {
                    return Err(format!("evicted `{}`, expected turn {idx}", got.text));
                }
                if idx == i {
                    return Err("evicted the turn just added".into());
                }
                if imp == max_prior && min_prior < max_prior {
                    return Err("evicted a maximum-importance turn".into());
                }
            }
            (got, want) => return Err(format!("eviction mismatch: got {got:?}, expected {want:?}")),
        }
        let held: Vec<String> = stm.turns().iter().map(|t| t.text.clone()).collect();
        let want: Vec<String> = model.iter().map(|(i, _)| format!("turn {i}")).collect();
        if held != want {
            return Err(format!("window {held:?} != model {want:?}"));
        }
    }
    Ok(())
}

/// Records for one agent; field values come from `values` so callers can
/// drive them from a generator.
pub struct MemoryCase {
    pub episodes: Vec<EpisodicRecord>,
    pub facts: Vec<SemanticRecord>,
    pub updates: Vec<BeliefUpdateRecord>,
    pub summaries: Vec<DialogueSummary>,
}

pub const AGENT: &str = "agent_x";
const CATEGORIES: [&str; 3] = ["health", "family", "finance"];

impl MemoryCase {
    /// `items` are `(importance or confidence, age in minutes, valence)`.
    pub fn build(episodes: &[(f64, i64, f64)], facts: &[(f64, i64, usize)], n_updates: usize, trajectories: &[Vec<f64>]) -> Self {
        let now = t0() + Duration::days(400);
        let episodes = episodes
            .iter()
            .enumerate()
            .map(|(i, &(imp, age, val))| EpisodicRecord {
                memory_id: format!("ep{i:04}"),
                agent_id: AGENT.into(),
                event_type: "event".into(),
                event_time: now - Duration::minutes(age),
                content: format!("episode {i} with \"quotes\" and ünïcode"),
                emotional_valence: val,
                importance: imp,
                metadata: [("k".to_string(), i.to_string())].into(),
            })
            .collect();
        let facts = facts
            .iter()
            .enumerate()
            .map(|(i, &(conf, age, cat))| SemanticRecord {
                fact_id: format!("f{i:04}"),
                agent_id: AGENT.into(),
                category: CATEGORIES[cat % 3].into(),
                content: format!("fact {i}"),
                confidence: conf,
                source: "self_report".into(),
                updated_at: now - Duration::minutes(age),
            })
            .collect();
        let updates = (0..n_updates)
            .map(|i| BeliefUpdateRecord {
                update_id: format!("u{i:04}"),
                agent_id: AGENT.into(),
                belief_level: if i % 2 == 0 { BeliefLevel::Core } else { BeliefLevel::Intermediate },
                belief_type: "helplessness".into(),
                old_value: format!("old {i}"),
                new_value: format!("new {i}"),
                trigger_event: "round".into(),
                timestamp: now + Duration::milliseconds(i as i64 * 1500),
            })
            .collect();
        let summaries = trajectories
            .iter()
            .enumerate()
            .map(|(i, traj)| DialogueSummary {
                summary_id: format!("s{i:04}"),
                session_id: format!("session-{i}"),
                agent_id: AGENT.into(),
                summary: format!("summary {i}"),
                key_topics: vec!["health".into(), format!("topic{i}")],
                emotional_trajectory: traj
                    .iter()
                    .map(|&v| EmotionVector {
                        anxiety: v,
                        sadness: 1.0 - v,
                        ..EmotionVector::default()
                    })
                    .collect(),
                created_at: now + Duration::seconds(i as i64),
            })
            .collect();
        Self {
            episodes,
            facts,
            updates,
            summaries,
        }
    }

    pub fn now() -> DateTime<Utc> {
        t0() + Duration::days(400)
    }

    pub fn load_into(&self, store: &MemoryStore) -> Result<(), String> {
        store.register_agent(AGENT).map_err(|e| e.to_string())?;
        for r in &self.episodes {
            store.store_episode(r).map_err(|e| e.to_string())?;
        }
        for r in &self.facts {
            store.store_fact(r).map_err(|e| e.to_string())?;
        }
        for r in &self.updates {
            store.log_belief_update(r).map_err(|e| e.to_string())?;
        }
        for r in &self.summaries {
            store.store_summary(r).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub fn importance() -> impl Strategy<Value = f64> {
    // Coarse values make ties common, which is where the eviction rule bites.
    prop_oneof![(0u8..=10).prop_map(|v| v as f64 / 10.0), 0.0f64..=1.0]
}

pub fn memory_case() -> impl Strategy<Value = MemoryCase> {
    (
        prop::collection::vec((importance(), 0i64..200_000, -1.0f64..=1.0), 0..12),
        prop::collection::vec((importance(), 0i64..200_000, 0usize..3), 0..10),
        0usize..4,
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 0..4), 0..3),
    )
        .prop_map(|(e, f, u, s)| MemoryCase::build(&e, &f, u, &s))
}

impl std::fmt::Debug for MemoryCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} episodes, {} facts", self.episodes.len(), self.facts.len())
    }
}

/// Writes to an on-disk store, reopens it and compares every family.
pub fn check_persistence(case: &MemoryCase) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.sqlite");
    {
        let store = MemoryStore::open(&path).map_err(|e| e.to_string())?;
        case.load_into(&store)?;
    }
    let store = MemoryStore::open(&path).map_err(|e| e.to_string())?;
    let err = |e: personasim::memory::MemoryError| e.to_string();
    for r in &case.episodes {
        if store.fetch_episode(&r.memory_id).map_err(err)?.as_ref() != Some(r) {
            return Err(format!("episode {} changed", r.memory_id));
        }
    }
    for r in &case.facts {
        if store.fetch_fact(&r.fact_id).map_err(err)?.as_ref() != Some(r) {
            return Err(format!("fact {} changed", r.fact_id));
        }
    }
    for r in &case.updates {
        if store.fetch_belief_update(&r.update_id).map_err(err)?.as_ref() != Some(r) {
            return Err(format!("belief update {} changed", r.update_id));
        }
    }
    for r in &case.summaries {
        if store.fetch_summary(&r.summary_id).map_err(err)?.as_ref() != Some(r) {
            return Err(format!("summary {} changed", r.summary_id));
        }
    }
    Ok(())
}

fn rank_of(store: &MemoryStore, id: &str, tags: &BTreeSet<String>, n: usize) -> Result<usize, String> {
    let b = store.retrieve_context(AGENT, tags, MemoryCase::now(), n).map_err(|e| e.to_string())?;
    b.episodic
        .iter()
        .position(|s| s.record.memory_id == id)
        .ok_or_else(|| format!("{id} missing from full retrieval"))
}

/// Determinism, ordering, size bound, and rank monotonicity when the
/// episode at `bump` has its importance raised to `raised`.
pub fn check_retrieval(case: &MemoryCase, k: usize, tags: &[&str], bump: usize, raised: f64) -> Result<(), String> {
    let store = MemoryStore::open_in_memory().map_err(|e| e.to_string())?;
    case.load_into(&store)?;
    let tags: BTreeSet<String> = tags.iter().map(|s| s.to_string()).collect();
    let a = store.retrieve_context(AGENT, &tags, MemoryCase::now(), k).map_err(|e| e.to_string())?;
    let b = store.retrieve_context(AGENT, &tags, MemoryCase::now(), k).map_err(|e| e.to_string())?;
    if a != b {
        return Err("retrieval is not deterministic".into());
    }
    if a.episodic.len() > k || a.semantic.len() > k {
        return Err(format!("bundle exceeds k = {k}"));
    }
    if a.episodic.windows(2).any(|w| w[0].score < w[1].score) || a.semantic.windows(2).any(|w| w[0].score < w[1].score) {
        return Err("scores increase down a list".into());
    }
    if case.episodes.is_empty() {
        return Ok(());
    }
    let bump = bump % case.episodes.len();
    let target = &case.episodes[bump];
    if raised < target.importance {
        return Ok(());
    }
    let n = case.episodes.len();
    let before = rank_of(&store, &target.memory_id, &tags, n)?;
    let mut bumped = MemoryCase {
        episodes: case.episodes.clone(),
        facts: case.facts.clone(),
        updates: Vec::new(),
        summaries: Vec::new(),
    };
    bumped.episodes[bump].importance = raised;
    let store2 = MemoryStore::open_in_memory().map_err(|e| e.to_string())?;
    bumped.load_into(&store2)?;
    let after = rank_of(&store2, &target.memory_id, &tags, n)?;
    if after > before {
        return Err(format!("raising importance moved {} from rank {before} to {after}", target.memory_id));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Minimal HTTP server for exercising the chat-completions client.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    /// Raw request heads and bodies, in arrival order.
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

impl Stub {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

pub fn completion(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"completion_tokens": 7}
    })
    .to_string()
}

/// Serves each request with `respond(n, body)`, where `n` counts from 0.
pub fn stub_server<F>(respond: F) -> Stub
where
    F: Fn(usize, &str) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let respond = Arc::new(respond);
    let (h, r) = (hits.clone(), requests.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, r, respond) = (h.clone(), r.clone(), respond.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    let end = line == "\r\n";
                    head.push_str(&line);
                    if end {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body = String::from_utf8(body).unwrap();
                let n = h.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = respond(n, &body);
                r.lock().unwrap().push((head, body));
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
            });
        }
    });
    Stub { url, hits, requests }
}

/// An address nothing listens on.
pub fn closed_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/v1")
}
