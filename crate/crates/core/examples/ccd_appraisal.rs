//! Appraise two situations against a fixture CCD and apply a belief update.

use std::path::Path;

use chrono::{TimeZone, Utc};
use personasim::ccd::{appraise, apply_belief_update, render_ccd_block, CcdModel, EmotionVector, SituationTrigger};
use personasim::memory::BeliefLevel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ccd/elderly_patient_001.json");
    let ccd = CcdModel::from_json(&std::fs::read_to_string(path)?)?;

    let quiet = SituationTrigger::new("A neighbour waves from across the street.", ["social"], 0.3);
    let hard = SituationTrigger::new(
        "Your son cancels his visit again and says he is too busy this month.",
        ["family", "loneliness", "burden"],
        0.9,
    );
    for trigger in [&quiet, &hard] {
        let outcome = appraise(&ccd, trigger, &EmotionVector::default());
        println!("{}", render_ccd_block(&ccd, &outcome));
    }

    let at = Utc.with_ymd_and_hms(2025, 6, 1, 10, 0, 0).unwrap();
    let (updated, record) = apply_belief_update(
        &ccd,
        BeliefLevel::Intermediate,
        "ib2",
        "If my children do not call, they may simply be busy",
        "therapy round 4",
        at,
    )?;
    println!("update {}: `{}` -> `{}`", record.update_id, record.old_value, record.new_value);
    println!("ib2 now reads: {}", updated.intermediate_belief("ib2").unwrap().statement);
    Ok(())
}
