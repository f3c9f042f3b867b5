//! Administer the ten-scenario battery five times to one agent (50
//! administrations), score with the lexical scorer and show per-scenario means.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use personasim::backend::{GenerationConfig, ScriptedBackend};
use personasim::battery::{administer_battery, build_score_matrix, builtin_scenarios, Layout, LexicalScorer};
use personasim::condition::ConditionId;
use personasim::lexicon::Lexicon;
use personasim::memory::DEFAULT_RETRIEVAL_K;
use personasim::persona::{load_profile, Dimension};
use personasim::workflow::AssessmentSetup;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/profiles/elderly_patient_003.json");
    let profile = load_profile(&std::fs::read_to_string(path)?)?;
    let scenarios = builtin_scenarios();
    let backend = ScriptedBackend::new([&profile], 0.5, 2025);
    let ccds = HashMap::new();
    let setup = AssessmentSetup {
        backend: &backend,
        config: GenerationConfig::default(),
        condition: ConditionId::Baseline,
        flags: ConditionId::Baseline.flags(),
        store: None,
        ccds: &ccds,
        global_seed: 2025,
        now: Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap(),
        retrieval_k: DEFAULT_RETRIEVAL_K,
    };
    let scorer = LexicalScorer::new(Arc::new(Lexicon::builtin()));
    let records = administer_battery(&setup, std::slice::from_ref(&profile), &scenarios, 5, &scorer, 2)?;
    println!("{} administrations for {}", records.len(), profile.agent_id);

    let layout = Layout::new(std::slice::from_ref(&profile), &scenarios, 5);
    let sm = build_score_matrix(&records, &layout)?;
    println!("profile: {:?}", profile.personality.to_array());
    for (s, scenario) in scenarios.iter().enumerate() {
        let means: Vec<String> = Dimension::ALL
            .iter()
            .map(|d| {
                let m = (0..5).map(|r| sm.value(*d, 0, s, r)).sum::<f64>() / 5.0;
                format!("{}={m:.2}", d.letter())
            })
            .collect();
        println!("  {:<4} {:<40} {}", scenario.scenario_id, scenario.name, means.join(" "));
    }
    Ok(())
}
