//! Deterministic offline responder.
//!
//! For each trait dimension it samples an expressed value
//! `t = clamp(profile + σ·z, 1, 5)` with `z` standard normal, then writes
//! `round(2·|t − 3|)` indicator phrases of the matching polarity. The noise
//! draws depend only on `(agent, scenario, repetition, seed)`, so two
//! backends with different σ see the same `z` for the same administration.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{count_tokens, Backend, BackendError, GenerationRequest, GenerationResponse};
use crate::lexicon::{Lexicon, Polarity};
use crate::persona::{AgentProfile, Dimension, OceanVector, TRAIT_MAX, TRAIT_MIDPOINT, TRAIT_MIN};
use crate::seeding::rng_for;

const TRAILER_PREFIX: &str = "[expressed";

const TEMPLATES: &[&str] = &[
    "Honestly, I would say I am {} about this.",
    "People who know me say I am {}.",
    "In moments like these I tend to be {}.",
    "My family would call me {}.",
    "I guess you could describe me as {} here.",
    "When this comes up I usually end up {}.",
];

const OPENERS: &[&str] = &[
    "Let me think about {}.",
    "About {}, here is how it goes for me.",
    "You asked about {}.",
];

fn indicator_count(expressed: f64) -> usize {
    (2.0 * (expressed - TRAIT_MIDPOINT).abs()).round() as usize
}

/// One scripted administration.
pub fn scripted_respond(
    profile: &AgentProfile,
    sigma: f64,
    scenario_id: &str,
    repetition: u32,
    seed: u64,
    lexicon: &Lexicon,
) -> GenerationResponse {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be a finite non-negative number");
    let rep = repetition.to_string();
    let seed_s = seed.to_string();
    let mut rng = rng_for(&["scripted", &profile.agent_id, scenario_id, &rep, &seed_s]);

    let z: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let target = profile.personality.to_array();
    let expressed: [f64; 5] = std::array::from_fn(|d| (target[d] + sigma * z[d]).clamp(TRAIT_MIN, TRAIT_MAX));

    let mut sentences = Vec::new();
    for dim in Dimension::ALL {
        let t = expressed[dim.index()];
        let n = indicator_count(t);
        if n == 0 {
            continue;
        }
        let polarity = if t >= TRAIT_MIDPOINT { Polarity::High } else { Polarity::Low };
        let phrases = lexicon.phrases(dim, polarity);
        let offset = rng.random_range(0..phrases.len());
        for i in 0..n {
            let phrase = phrases[(offset + i) % phrases.len()];
            let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
            sentences.push(template.replace("{}", phrase));
        }
    }
    sentences.shuffle(&mut rng);

    let opener = OPENERS[rng.random_range(0..OPENERS.len())].replace("{}", scenario_id);
    let mut text = opener;
    for s in &sentences {
        text.push(' ');
        text.push_str(s);
    }
    text.push('\n');
    text.push_str(&format!(
        "{TRAILER_PREFIX} O={:.6} C={:.6} E={:.6} A={:.6} N={:.6}]",
        expressed[0], expressed[1], expressed[2], expressed[3], expressed[4]
    ));

    GenerationResponse {
        token_count: count_tokens(&text),
        text,
        latency_ms: 0,
        backend_id: format!("scripted(sigma={sigma})"),
    }
}

/// Recovers the sampled trait vector from a scripted response.
pub fn parse_trailer(text: &str) -> Option<OceanVector> {
    let line = text.lines().rev().find(|l| l.starts_with(TRAILER_PREFIX))?;
    let body = line.strip_prefix(TRAILER_PREFIX)?.trim().strip_suffix(']')?;
    let mut values = [f64::NAN; 5];
    for part in body.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        let dim = Dimension::from_name(k)?;
        values[dim.index()] = v.parse().ok()?;
    }
    OceanVector::from_array(values).ok()
}

/// Backend answering every request from the speaking agent's profile.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    profiles: HashMap<String, AgentProfile>,
    sigma: f64,
    seed: u64,
    lexicon: Arc<Lexicon>,
}

impl ScriptedBackend {
    pub fn new<'a>(profiles: impl IntoIterator<Item = &'a AgentProfile>, sigma: f64, seed: u64) -> Self {
        Self::with_lexicon(profiles, sigma, seed, Arc::new(Lexicon::builtin()))
    }

    pub fn with_lexicon<'a>(
        profiles: impl IntoIterator<Item = &'a AgentProfile>,
        sigma: f64,
        seed: u64,
        lexicon: Arc<Lexicon>,
    ) -> Self {
        assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be a finite non-negative number");
        Self {
            profiles: profiles.into_iter().map(|p| (p.agent_id.clone(), p.clone())).collect(),
            sigma,
            seed,
            lexicon,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        format!("scripted(sigma={})", self.sigma)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let subject = request
            .subject
            .as_ref()
            .ok_or_else(|| BackendError::InvalidRequest("scripted backend needs a request subject".into()))?;
        let profile = self
            .profiles
            .get(&subject.agent_id)
            .ok_or_else(|| BackendError::InvalidRequest(format!("no profile for agent `{}`", subject.agent_id)))?;
        Ok(scripted_respond(
            profile,
            self.sigma,
            &subject.scenario_id,
            subject.repetition,
            self.seed,
            &self.lexicon,
        ))
    }
}
