//! The three conversational workflows under the scripted backend: a dual
//! dialogue, a social simulation driven by an event schedule, and a short
//! intervention course whose round summaries land in long-term memory.

use std::path::Path;

use chrono::{TimeZone, Utc};
use personasim::backend::ScriptedBackend;
use personasim::ccd::CcdModel;
use personasim::condition::ConditionId;
use personasim::memory::MemoryStore;
use personasim::persona::Roster;
use personasim::workflow::{
    load_event_schedule, run_dual_dialogue, run_intervention, run_social_simulation, InterventionProtocol, Participant,
    Simulation, Situation,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let roster = Roster::load_dir(&fixtures.join("profiles"))?;
    let participant = |id: &str| -> Result<Participant, Box<dyn std::error::Error>> {
        let ccd = CcdModel::from_json(&std::fs::read_to_string(fixtures.join(format!("ccd/{id}.json")))?)?;
        Ok(Participant::new(roster.get(id).expect("fixture agent").clone()).with_ccd(ccd))
    };

    let backend = ScriptedBackend::new(roster.profiles(), 0.35, 1);
    let store = MemoryStore::open_in_memory()?;
    let start = Utc.with_ymd_and_hms(2025, 6, 2, 10, 0, 0).unwrap();
    let sim = Simulation::new(&backend, ConditionId::PlusCcd.flags(), start).with_store(&store);

    let mut a = participant("elderly_patient_002")?;
    let mut b = participant("provider_002")?;
    let opening = Situation::new("You meet at the clinic for a routine check on blood pressure.", ["health"]);
    let dialogue = run_dual_dialogue(&sim, &mut a, &mut b, &opening, 4, 11)?;
    println!("dual dialogue {}: speakers {:?}", dialogue.session_id, dialogue.speakers());

    let schedule = load_event_schedule(&std::fs::read_to_string(fixtures.join("workflows/community_events.json"))?)?;
    let mut group: Vec<Participant> = roster.ids().map(participant).collect::<Result<_, _>>()?;
    let social = run_social_simulation(&sim, &mut group, &schedule, 12)?;
    println!("social simulation: {} turns across {} events", social.turns.len(), schedule.len());

    let protocol = InterventionProtocol::load(&fixtures.join("workflows/cbt_short.json"))?;
    let mut client = participant("elderly_patient_001")?;
    let mut therapist = participant("provider_003")?;
    let rounds = run_intervention(&sim, &mut client, &mut therapist, &protocol, 13)?;
    for t in &rounds {
        println!("  {} : {} turns", t.session_id, t.turns.len());
    }
    let summaries = store.summaries(client.id())?;
    println!("{} round summaries stored for {}", summaries.len(), client.id());
    if let Some(last) = summaries.last() {
        println!("latest summary: {}", last.summary);
    }
    Ok(())
}
