//! Short-term buffer eviction, long-term storage and ranked retrieval, and a
//! dump round trip through a fresh store.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use personasim::memory::{render_memory_block, DialogueTurn, MemoryDump, MemoryStore, ShortTermMemory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t0 = Utc.with_ymd_and_hms(2025, 6, 1, 9, 0, 0).unwrap();

    let mut stm = ShortTermMemory::with_capacity(3);
    for (i, imp) in [0.9, 0.2, 0.5, 0.7].into_iter().enumerate() {
        let turn = DialogueTurn::new("user", format!("turn {i}"), t0 + Duration::minutes(i as i64), imp);
        if let Some(evicted) = stm.append_turn(turn)? {
            println!("evicted `{}` (importance {})", evicted.text, evicted.importance);
        }
    }
    println!("kept: {:?}", stm.turns().iter().map(|t| t.text.as_str()).collect::<Vec<_>>());

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/memory/elderly_patient_002.json");
    let dump = MemoryDump::from_json(&std::fs::read_to_string(path)?)?;
    let store = MemoryStore::open_in_memory()?;
    store.load_dump(&dump)?;

    let tags: BTreeSet<String> = ["health".to_owned()].into();
    let bundle = store.retrieve_context(&dump.agent_id, &tags, t0, 3)?;
    println!("\n{}", render_memory_block(&bundle));

    let again = MemoryStore::open_in_memory()?;
    again.load_dump(&store.dump_agent(&dump.agent_id)?)?;
    let same = again.retrieve_context(&dump.agent_id, &tags, t0, 3)? == bundle;
    println!("round trip preserves retrieval: {same}");
    Ok(())
}
