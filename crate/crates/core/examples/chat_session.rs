//! Drive a chat session from code: a scripted agent with memory and CCD
//! enabled answers three lines, and the transcript is printed as JSONL.

use std::io::Cursor;
use std::path::Path;

use chrono::{TimeZone, Utc};
use personasim::backend::ScriptedBackend;
use personasim::ccd::CcdModel;
use personasim::chat::{run_repl, ChatSession};
use personasim::condition::ConditionId;
use personasim::memory::{MemoryDump, MemoryStore};
use personasim::persona::load_profile;
use personasim::workflow::{Participant, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let read = |p: &str| std::fs::read_to_string(fixtures.join(p));
    let profile = load_profile(&read("profiles/elderly_patient_002.json")?)?;
    let ccd = CcdModel::from_json(&read("ccd/elderly_patient_002.json")?)?;
    let store = MemoryStore::open_in_memory()?;
    store.load_dump(&MemoryDump::from_json(&read("memory/elderly_patient_002.json")?)?)?;

    let backend = ScriptedBackend::new([&profile], 0.35, 5);
    let start = Utc.with_ymd_and_hms(2025, 6, 3, 15, 0, 0).unwrap();
    let sim = Simulation::new(&backend, ConditionId::PlusCcd.flags(), start).with_store(&store);
    let mut session = ChatSession::new(sim, Participant::new(profile).with_ccd(ccd), ["family", "health"], 5);

    let script = "How are you feeling today?\nDid the new medication help?\n/quit\n";
    run_repl(&mut session, Cursor::new(script), &mut std::io::stdout(), false)?;
    print!("\n{}", session.finish().to_jsonl());
    Ok(())
}
