mod common;

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use personasim::backend::{GenerationConfig, ScriptedBackend};
use personasim::battery::{
    administer_battery, build_score_matrix, builtin_scenarios, records_per_agent, Layout, LexicalScorer, Scorer,
};
use personasim::ccd::CcdModel;
use personasim::condition::ConditionId;
use personasim::lexicon::Lexicon;
use personasim::memory::{MemoryDump, MemoryStore, DEFAULT_RETRIEVAL_K};
use personasim::persona::Roster;
use personasim::workflow::{
    load_event_schedule, run_assessment, run_dual_dialogue, run_intervention, run_social_simulation,
    AssessmentSetup, InterventionProtocol, Participant, Simulation, Situation, Transcript,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn ccds() -> HashMap<String, CcdModel> {
    common::roster()
        .ids()
        .map(|id| {
            let text = std::fs::read_to_string(common::fixtures().join(format!("ccd/{id}.json"))).unwrap();
            (id.to_string(), CcdModel::from_json(&text).unwrap())
        })
        .collect()
}

fn loaded_store() -> MemoryStore {
    let store = MemoryStore::open_in_memory().unwrap();
    for id in common::roster().ids() {
        let text = std::fs::read_to_string(common::fixtures().join(format!("memory/{id}.json"))).unwrap();
        store.load_dump(&MemoryDump::from_json(&text).unwrap()).unwrap();
    }
    store
}

fn participant(roster: &Roster, ccds: &HashMap<String, CcdModel>, id: &str) -> Participant {
    Participant::new(roster.get(id).unwrap().clone()).with_ccd(ccds[id].clone())
}

fn start() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 6, 2, 9, 0, 0).unwrap()
}

fn dual(seed: u64) -> Transcript {
    let roster = common::roster();
    let ccds = ccds();
    let store = loaded_store();
    let backend = ScriptedBackend::new(roster.profiles(), 0.35, 4);
    let sim = Simulation::new(&backend, ConditionId::PlusCcd.flags(), start()).with_store(&store);
    let mut a = participant(&roster, &ccds, "elderly_patient_001");
    let mut b = participant(&roster, &ccds, "provider_003");
    let opening = Situation::new("A check-up visit.", ["health"]);
    run_dual_dialogue(&sim, &mut a, &mut b, &opening, 7, seed).unwrap()
}

#[test]
fn dual_dialogue_alternates_and_is_deterministic() {
    let t = dual(5);
    assert!(t.complete);
    assert_eq!(t.turns.len(), 7);
    for (i, turn) in t.turns.iter().enumerate() {
        let want = if i % 2 == 0 { "elderly_patient_001" } else { "provider_003" };
        assert_eq!(turn.speaker, want);
        assert_eq!(turn.index, i);
    }
    assert!(t.turns.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    assert_eq!(t, dual(5));
    assert_ne!(t.to_jsonl(), dual(6).to_jsonl());
}

#[test]
fn social_simulation_emits_one_turn_per_addressed_agent() {
    let roster = common::roster();
    let ccds = ccds();
    let backend = ScriptedBackend::new(roster.profiles(), 0.35, 4);
    let sim = Simulation::new(&backend, ConditionId::PlusMemory.flags(), start());
    let text = std::fs::read_to_string(common::fixtures().join("workflows/community_events.json")).unwrap();
    let schedule = load_event_schedule(&text).unwrap();
    let run = || {
        let mut group: Vec<Participant> = roster.ids().map(|id| participant(&roster, &ccds, id)).collect();
        run_social_simulation(&sim, &mut group, &schedule, 3).unwrap()
    };
    let t = run();
    let expected: usize = schedule.iter().map(|e| e.addressed.len()).sum();
    assert_eq!(t.turns.len(), expected);
    // Within an event, addressed agents answer in roster order.
    let order: Vec<&str> = schedule
        .iter()
        .flat_map(|e| roster.ids().filter(|id| e.addressed.iter().any(|a| a == id)))
        .collect();
    assert_eq!(t.speakers(), order);
    assert_eq!(t, run());
}

#[test]
fn intervention_stores_a_summary_per_round() {
    let roster = common::roster();
    let ccds = ccds();
    let store = loaded_store();
    let backend = ScriptedBackend::new(roster.profiles(), 0.35, 4);
    let sim = Simulation::new(&backend, ConditionId::PlusCcd.flags(), start()).with_store(&store);
    let protocol = InterventionProtocol::load(&common::fixtures().join("workflows/cbt_short.json")).unwrap();
    let before = store.summaries("elderly_patient_002").unwrap().len();
    let mut client = participant(&roster, &ccds, "elderly_patient_002");
    let mut therapist = participant(&roster, &ccds, "provider_003");
    let rounds = run_intervention(&sim, &mut client, &mut therapist, &protocol, 8).unwrap();
    assert_eq!(rounds.len(), protocol.rounds.len());
    for (t, spec) in rounds.iter().zip(&protocol.rounds) {
        assert_eq!(t.turns[0].speaker, "provider_003");
        assert!(t.turns.len() <= 2 * spec.max_exchanges);
    }
    let after = store.summaries("elderly_patient_002").unwrap();
    assert_eq!(after.len() - before, protocol.rounds.len());
    assert!(protocol.validate().is_ok());
    assert!(InterventionProtocol::from_json("{\"rounds\": []}").is_err());
}

#[test]
fn assessment_order_does_not_matter() {
    let roster = common::roster();
    let ccds = ccds();
    let store = loaded_store();
    let scenarios = builtin_scenarios();
    let backend = ScriptedBackend::new(roster.profiles(), 0.35, 77);
    let setup = AssessmentSetup {
        backend: &backend,
        config: GenerationConfig::default(),
        condition: ConditionId::PlusCcd,
        flags: ConditionId::PlusCcd.flags(),
        store: Some(&store),
        ccds: &ccds,
        global_seed: 77,
        now: start(),
        retrieval_k: DEFAULT_RETRIEVAL_K,
    };
    let scorer = LexicalScorer::default();
    let mut batch = administer_battery(&setup, roster.profiles(), &scenarios, 2, &scorer, 0).unwrap();
    assert_eq!(batch.len(), roster.len() * scenarios.len() * 2);
    assert!(records_per_agent(&batch).values().all(|&n| n == 20));

    let mut jobs: Vec<(usize, usize, u32)> = (0..roster.len())
        .flat_map(|a| (0..scenarios.len()).flat_map(move |s| [(a, s, 1), (a, s, 2)]))
        .collect();
    jobs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
    let mut serial: Vec<_> = jobs
        .iter()
        .map(|&(a, s, r)| {
            let rec = run_assessment(&setup, &roster.profiles()[a], &scenarios[s], r).unwrap();
            personasim::battery::score_response(&rec, &scorer).unwrap()
        })
        .collect();
    batch.sort_by_key(|r| r.key());
    serial.sort_by_key(|r| r.key());
    assert_eq!(batch, serial);

    let layout = Layout::new(roster.profiles(), &scenarios, 2);
    let again = administer_battery(&setup, roster.profiles(), &scenarios, 2, &scorer, 0).unwrap();
    assert_eq!(build_score_matrix(&batch, &layout).unwrap(), build_score_matrix(&again, &layout).unwrap());
}

#[test]
fn lexical_scorer_ignores_sentence_order() {
    let scorer = LexicalScorer::new(Arc::new(Lexicon::builtin()));
    let lex = Lexicon::builtin();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for p in common::roster().profiles() {
        for rep in 1..=5 {
            let r = personasim::backend::scripted_respond(p, 0.6, "S2", rep, 11, &lex);
            let body = r.text.lines().next().unwrap();
            let mut sentences: Vec<&str> = body.split(". ").collect();
            let base = scorer.score_text(body).unwrap();
            assert_eq!(base, scorer.score_text(body).unwrap());
            for _ in 0..5 {
                sentences.shuffle(&mut rng);
                let shuffled = sentences.join(". ");
                assert_eq!(scorer.score_text(&shuffled).unwrap(), base, "{shuffled}");
            }
        }
    }
}
