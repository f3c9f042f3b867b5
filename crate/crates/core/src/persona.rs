//! Agent identities: OCEAN trait vectors, agent profiles and role templates.
//!
//! Profiles are authored as JSON documents with a closed schema. Loading is
//! strict: unknown fields are rejected and every range invariant is checked
//! before a profile is handed out. `save_profile` emits a canonical form so
//! that `load_profile(save_profile(p)) == p` and equal profiles serialize to
//! equal bytes.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRAIT_MIN: f64 = 1.0;
pub const TRAIT_MAX: f64 = 5.0;
pub const TRAIT_MIDPOINT: f64 = 3.0;

/// Template value for a trait described as "low".
pub const TEMPLATE_LOW: f64 = 2.0;
/// Template value for a trait described as "high".
pub const TEMPLATE_HIGH: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("`{field}` out of range: {message}")]
    Range { field: String, message: String },
    #[error("unknown role {category}/{subtype}")]
    UnknownRole { category: String, subtype: String },
}

impl ProfileError {
    /// Field path the error refers to, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ProfileError::Schema { field, .. } | ProfileError::Range { field, .. } => Some(field),
            _ => None,
        }
    }

    pub(crate) fn from_json(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => {
                let message = inner.to_string();
                // Missing/unknown field messages carry the field name in backticks.
                let named = message
                    .split('`')
                    .nth(1)
                    .filter(|_| message.contains("field `"))
                    .map(str::to_owned);
                // Unknown fields already end the path; missing ones do not.
                let field = match (path.as_str(), named) {
                    (".", Some(name)) => name,
                    (p, Some(name)) if message.starts_with("missing") && !p.ends_with(&name) => {
                        format!("{p}.{name}")
                    }
                    (p, _) => p.to_owned(),
                };
                ProfileError::Schema { field, message }
            }
            _ => ProfileError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            },
        }
    }
}

/// One of the five OCEAN dimensions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Openness,
        Dimension::Conscientiousness,
        Dimension::Extraversion,
        Dimension::Agreeableness,
        Dimension::Neuroticism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Openness => "openness",
            Dimension::Conscientiousness => "conscientiousness",
            Dimension::Extraversion => "extraversion",
            Dimension::Agreeableness => "agreeableness",
            Dimension::Neuroticism => "neuroticism",
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Dimension::Openness => "O",
            Dimension::Conscientiousness => "C",
            Dimension::Extraversion => "E",
            Dimension::Agreeableness => "A",
            Dimension::Neuroticism => "N",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(name) || d.letter().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Big Five trait scores on the 1–5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OceanVector {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl OceanVector {
    /// Builds a vector and checks every component is finite and within [1, 5].
    pub fn new(
        openness: f64,
        conscientiousness: f64,
        extraversion: f64,
        agreeableness: f64,
        neuroticism: f64,
    ) -> Result<Self, ProfileError> {
        let v = Self {
            openness,
            conscientiousness,
            extraversion,
            agreeableness,
            neuroticism,
        };
        v.validate("")?;
        Ok(v)
    }

    pub fn from_array(values: [f64; 5]) -> Result<Self, ProfileError> {
        Self::new(values[0], values[1], values[2], values[3], values[4])
    }

    pub fn uniform(value: f64) -> Result<Self, ProfileError> {
        Self::from_array([value; 5])
    }

    pub fn neutral() -> Self {
        Self::uniform(TRAIT_MIDPOINT).expect("midpoint is in range")
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        self.to_array()[dim.index()]
    }

    pub fn with(mut self, dim: Dimension, value: f64) -> Self {
        match dim {
            Dimension::Openness => self.openness = value,
            Dimension::Conscientiousness => self.conscientiousness = value,
            Dimension::Extraversion => self.extraversion = value,
            Dimension::Agreeableness => self.agreeableness = value,
            Dimension::Neuroticism => self.neuroticism = value,
        }
        self
    }

    /// `prefix` is prepended to the field name in errors (e.g. `personality.`).
    pub fn validate(&self, prefix: &str) -> Result<(), ProfileError> {
        for dim in Dimension::ALL {
            let v = self.get(dim);
            if !v.is_finite() || !(TRAIT_MIN..=TRAIT_MAX).contains(&v) {
                return Err(ProfileError::Range {
                    field: format!("{prefix}{}", dim.name()),
                    message: format!("{v} is outside [{TRAIT_MIN}, {TRAIT_MAX}]"),
                });
            }
        }
        Ok(())
    }
}

/// Euclidean distance between two trait vectors.
pub fn ocean_distance(a: &OceanVector, b: &OceanVector) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographics {
    pub name: String,
    pub age: i64,
    pub gender: String,
    pub education: String,
    pub occupation: String,
    pub living_situation: String,
    pub marital_status: String,
    pub children: i64,
    pub income_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthStatus {
    pub chronic_conditions: Vec<String>,
    pub cognitive_status: String,
    pub functional_status: String,
    pub medication_adherence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocialContext {
    pub family_support: String,
    pub community_engagement: String,
    pub discrimination_history: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleCategory {
    OlderAdult,
    HealthcareProvider,
    FamilyMember,
    Community,
    Institutional,
}

impl RoleCategory {
    pub const ALL: [RoleCategory; 5] = [
        RoleCategory::OlderAdult,
        RoleCategory::HealthcareProvider,
        RoleCategory::FamilyMember,
        RoleCategory::Community,
        RoleCategory::Institutional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleCategory::OlderAdult => "older_adult",
            RoleCategory::HealthcareProvider => "healthcare_provider",
            RoleCategory::FamilyMember => "family_member",
            RoleCategory::Community => "community",
            RoleCategory::Institutional => "institutional",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for RoleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleType {
    pub category: RoleCategory,
    pub subtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typical_ocean: Option<OceanVector>,
}

/// A fully validated agent identity.
///
/// Demographics and personality are the stable part of the identity; health
/// status and social context may be overridden per scenario through
/// [`AgentProfile::with_overrides`], which returns a new profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub agent_id: String,
    pub demographics: Demographics,
    pub health_status: HealthStatus,
    pub personality: OceanVector,
    pub social_context: SocialContext,
    pub behavior_constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_type: Option<RoleType>,
}

/// Scenario-level replacements for the context-sensitive profile blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub health_status: Option<HealthStatus>,
    pub social_context: Option<SocialContext>,
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.agent_id.trim().is_empty() {
            return Err(ProfileError::Schema {
                field: "agent_id".into(),
                message: "must be non-empty".into(),
            });
        }
        if self.demographics.age < 0 {
            return Err(ProfileError::Range {
                field: "demographics.age".into(),
                message: format!("{} is negative", self.demographics.age),
            });
        }
        if self.demographics.children < 0 {
            return Err(ProfileError::Range {
                field: "demographics.children".into(),
                message: format!("{} is negative", self.demographics.children),
            });
        }
        if let Some(i) = self.behavior_constraints.iter().position(|c| c.trim().is_empty()) {
            return Err(ProfileError::Schema {
                field: format!("behavior_constraints[{i}]"),
                message: "empty constraint string".into(),
            });
        }
        self.personality.validate("personality.")?;
        if let Some(role) = &self.role_type {
            if let Some(t) = &role.typical_ocean {
                t.validate("role_type.typical_ocean.")?;
            }
        }
        Ok(())
    }

    pub fn with_overrides(&self, overrides: &ScenarioOverrides) -> AgentProfile {
        let mut p = self.clone();
        if let Some(h) = &overrides.health_status {
            p.health_status = h.clone();
        }
        if let Some(s) = &overrides.social_context {
            p.social_context = s.clone();
        }
        p
    }
}

/// Parses and validates a profile document.
pub fn load_profile(document: &str) -> Result<AgentProfile, ProfileError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let profile: AgentProfile =
        serde_path_to_error::deserialize(de).map_err(ProfileError::from_json)?;
    profile.validate()?;
    Ok(profile)
}

/// Canonical serialization: declaration-order keys, two-space indent,
/// trailing newline.
pub fn save_profile(profile: &AgentProfile) -> String {
    let mut out = serde_json::to_string_pretty(profile).expect("profile serializes");
    out.push('\n');
    out
}

struct RoleEntry {
    category: RoleCategory,
    subtypes: &'static [&'static str],
    high: &'static [Dimension],
    low: &'static [Dimension],
}

const ROLE_TABLE: &[RoleEntry] = &[
    RoleEntry {
        category: RoleCategory::OlderAdult,
        subtypes: &[
            "solitary older adult",
            "chronic disease adult",
            "cognitive impairment adult",
        ],
        high: &[Dimension::Neuroticism],
        low: &[Dimension::Extraversion],
    },
    RoleEntry {
        category: RoleCategory::HealthcareProvider,
        subtypes: &["geriatrician", "nurse", "rehabilitation therapist"],
        high: &[Dimension::Conscientiousness, Dimension::Agreeableness],
        low: &[],
    },
    RoleEntry {
        category: RoleCategory::FamilyMember,
        subtypes: &["supportive child", "neglectful child", "discriminatory child", "spouse"],
        high: &[],
        low: &[],
    },
    RoleEntry {
        category: RoleCategory::Community,
        subtypes: &["social worker", "neighbor", "stranger"],
        high: &[],
        low: &[],
    },
    RoleEntry {
        category: RoleCategory::Institutional,
        subtypes: &["nursing home staff", "social services"],
        high: &[Dimension::Conscientiousness],
        low: &[],
    },
];

/// Registered subtypes for a role category.
pub fn role_subtypes(category: RoleCategory) -> &'static [&'static str] {
    ROLE_TABLE
        .iter()
        .find(|e| e.category == category)
        .map(|e| e.subtypes)
        .unwrap_or(&[])
}

/// Typical trait vector for a role category: low → 2.0, high → 4.0, anything
/// unspecified → 3.0.
pub fn typical_ocean(category: RoleCategory) -> OceanVector {
    let entry = ROLE_TABLE
        .iter()
        .find(|e| e.category == category)
        .expect("every category has a table entry");
    let mut v = OceanVector::neutral();
    for &d in entry.high {
        v = v.with(d, TEMPLATE_HIGH);
    }
    for &d in entry.low {
        v = v.with(d, TEMPLATE_LOW);
    }
    v
}

/// Skeleton profile for a registered role.
pub fn role_template(category: RoleCategory, subtype: &str) -> Result<AgentProfile, ProfileError> {
    let canonical = role_subtypes(category)
        .iter()
        .find(|s| s.eq_ignore_ascii_case(subtype.trim()))
        .ok_or_else(|| ProfileError::UnknownRole {
            category: category.to_string(),
            subtype: subtype.to_owned(),
        })?;
    let ocean = typical_ocean(category);
    let slug = canonical.replace(' ', "_");
    Ok(AgentProfile {
        agent_id: format!("{}_{slug}", category.as_str()),
        demographics: Demographics {
            name: String::new(),
            age: 0,
            gender: String::new(),
            education: String::new(),
            occupation: String::new(),
            living_situation: String::new(),
            marital_status: String::new(),
            children: 0,
            income_level: String::new(),
        },
        health_status: HealthStatus {
            chronic_conditions: Vec::new(),
            cognitive_status: String::new(),
            functional_status: String::new(),
            medication_adherence: String::new(),
        },
        personality: ocean,
        social_context: SocialContext {
            family_support: String::new(),
            community_engagement: String::new(),
            discrimination_history: Vec::new(),
        },
        behavior_constraints: Vec::new(),
        role_type: Some(RoleType {
            category,
            subtype: (*canonical).to_owned(),
            typical_ocean: Some(ocean),
        }),
    })
}

#[derive(Debug, Error)]
pub enum RosterError {
    #[error("{path}: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: ProfileError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate agent_id `{0}` in roster")]
    DuplicateAgent(String),
    #[error("roster is empty")]
    Empty,
}

/// Ordered set of agent profiles with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Roster {
    profiles: Vec<AgentProfile>,
}

impl Roster {
    pub fn new(profiles: Vec<AgentProfile>) -> Result<Self, RosterError> {
        if profiles.is_empty() {
            return Err(RosterError::Empty);
        }
        let mut seen = BTreeSet::new();
        for p in &profiles {
            if !seen.insert(p.agent_id.clone()) {
                return Err(RosterError::DuplicateAgent(p.agent_id.clone()));
            }
        }
        Ok(Self { profiles })
    }

    /// Loads every `*.json` file of a directory, ordered by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, RosterError> {
        let mut paths = json_files(dir).map_err(|source| RosterError::Io {
            path: dir.to_owned(),
            source,
        })?;
        paths.sort();
        Self::load_files(&paths)
    }

    pub fn load_files(paths: &[PathBuf]) -> Result<Self, RosterError> {
        let mut profiles = Vec::with_capacity(paths.len());
        for path in paths {
            let text = std::fs::read_to_string(path).map_err(|source| RosterError::Io {
                path: path.clone(),
                source,
            })?;
            let profile = load_profile(&text).map_err(|source| RosterError::Profile {
                path: path.clone(),
                source,
            })?;
            profiles.push(profile);
        }
        Self::new(profiles)
    }

    pub fn profiles(&self) -> &[AgentProfile] {
        &self.profiles
    }

    pub fn get(&self, agent_id: &str) -> Option<&AgentProfile> {
        self.profiles.iter().find(|p| p.agent_id == agent_id)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.profiles.iter().map(|p| p.agent_id.as_str())
    }
}

pub(crate) fn json_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(out)
}

fn level_word(v: f64) -> &'static str {
    match v {
        v if v >= 4.5 => "very high",
        v if v >= 3.5 => "high",
        v if v > 2.5 => "moderate",
        v if v > 1.5 => "low",
        _ => "very low",
    }
}

/// Persona section of the generation context.
pub fn render_persona_block(profile: &AgentProfile) -> String {
    use std::fmt::Write;
    let d = &profile.demographics;
    let h = &profile.health_status;
    let s = &profile.social_context;
    let mut out = String::new();
    let _ = writeln!(out, "## Persona");
    let _ = writeln!(out, "You are {} (agent id {}).", d.name, profile.agent_id);
    if let Some(role) = &profile.role_type {
        let _ = writeln!(out, "Role: {} ({}).", role.subtype, role.category);
    }
    let _ = writeln!(
        out,
        "Demographics: age {}, {}, education {}, occupation {}, {}, {}, {} children, income {}.",
        d.age,
        d.gender,
        d.education,
        d.occupation,
        d.living_situation,
        d.marital_status,
        d.children,
        d.income_level
    );
    let _ = writeln!(
        out,
        "Health: chronic conditions [{}]; cognitive status {}; functional status {}; medication adherence {}.",
        h.chronic_conditions.join(", "),
        h.cognitive_status,
        h.functional_status,
        h.medication_adherence
    );
    let _ = writeln!(
        out,
        "Social context: family support {}; community engagement {}; discrimination history [{}].",
        s.family_support,
        s.community_engagement,
        s.discrimination_history.join(", ")
    );
    let _ = writeln!(out, "Personality targets (1-5 scale):");
    for dim in Dimension::ALL {
        let v = profile.personality.get(dim);
        let _ = writeln!(out, "- {}: {:.1} ({})", dim.name(), v, level_word(v));
    }
    if !profile.behavior_constraints.is_empty() {
        let _ = writeln!(out, "Behavioral constraints:");
        for c in &profile.behavior_constraints {
            let _ = writeln!(out, "- {c}");
        }
    }
    out
}
