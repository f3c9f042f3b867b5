mod common;

use std::time::Duration;

use common::{closed_url, completion, stub_server};
use personasim::backend::{
    assemble_context, generate, parse_trailer, scripted_respond, BackendError, BlockKind, GenerationConfig,
    GenerationRequest, HistoryTurn, HttpBackend, RetryPolicy, Role, Subject,
};
use personasim::lexicon::Lexicon;
use proptest::prelude::*;

fn request(config: GenerationConfig) -> GenerationRequest {
    assemble_context("## Persona\nYou are X.", Some("## Memory\n- none"), None, "How are you?", &[], &config).unwrap()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        initial_backoff: Duration::from_millis(5),
        multiplier: 2.0,
    }
}

#[test]
fn scripted_zero_noise_is_exact_for_every_fixture_agent() {
    let lex = Lexicon::builtin();
    for p in common::roster().profiles() {
        for s in 1..=10 {
            let r = scripted_respond(p, 0.0, &format!("S{s}"), 1, 3, &lex);
            assert_eq!(parse_trailer(&r.text).unwrap(), p.personality);
        }
    }
}

proptest! {
    #[test]
    fn scripted_is_a_pure_function(agent in 0usize..6, sigma in 0.0f64..2.0, rep in 1u32..6, seed in any::<u64>(), sc in 1usize..11) {
        let roster = common::roster();
        let p = &roster.profiles()[agent];
        let lex = Lexicon::builtin();
        let sid = format!("S{sc}");
        let a = scripted_respond(p, sigma, &sid, rep, seed, &lex);
        prop_assert_eq!(&a, &scripted_respond(p, sigma, &sid, rep, seed, &lex));
        let v = parse_trailer(&a.text).unwrap().to_array();
        for (d, x) in v.iter().enumerate() {
            prop_assert!((1.0..=5.0).contains(x));
            // Noise shrinks with sigma.
            prop_assert!((x - p.personality.to_array()[d]).abs() <= sigma * 8.0 + 1e-6);
        }
    }

    #[test]
    fn assembly_keeps_order_and_scenario(
        with_memory in any::<bool>(),
        with_ccd in any::<bool>(),
        history in prop::collection::vec(1usize..40, 0..30),
        window in 60usize..400,
    ) {
        let config = GenerationConfig { context_window: window, max_tokens: 50, ..GenerationConfig::default() };
        let turns: Vec<HistoryTurn> = history.iter().enumerate().map(|(i, &w)| HistoryTurn {
            speaker: "u".into(),
            role: if i % 2 == 0 { Role::User } else { Role::Assistant },
            text: format!("h{i} {}", "w ".repeat(w)),
        }).collect();
        let r = assemble_context(
            "persona words here",
            with_memory.then_some("memory words"),
            with_ccd.then_some("ccd words"),
            "the scenario prompt",
            &turns,
            &config,
        ).unwrap();
        let kinds: Vec<BlockKind> = r.system_context.iter().map(|b| b.kind).collect();
        let mut sorted = kinds.clone();
        sorted.sort();
        prop_assert_eq!(&kinds, &sorted);
        prop_assert_eq!(r.block(BlockKind::Scenario).unwrap().text.as_str(), "the scenario prompt");
        prop_assert!(r.prompt_tokens() <= config.prompt_budget());
        // What survives is a suffix of the history.
        prop_assert_eq!(&turns[turns.len() - r.history.len()..], &r.history[..]);
    }
}

#[test]
fn http_success_is_sent_once() {
    let stub = stub_server(|_, _| (200, completion("I feel fine today.")));
    let backend = HttpBackend::new(Some(stub.url.clone()), Some("secret".into())).with_retry(fast_retry());
    let config = GenerationConfig {
        seed: Some(9),
        ..GenerationConfig::default()
    };
    let r = generate(&backend, &request(config)).unwrap();
    assert_eq!(r.text, "I feel fine today.");
    assert_eq!(r.token_count, 7);
    assert_eq!(stub.hits(), 1);
    let (head, body) = stub.requests.lock().unwrap()[0].clone();
    assert!(head.starts_with("POST /v1/chat/completions"), "{head}");
    assert!(head.to_ascii_lowercase().contains("authorization: bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["top_p"], 0.9);
    assert_eq!(body["max_tokens"], 512);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "How are you?");
}

#[test]
fn http_error_status_is_not_retried() {
    let stub = stub_server(|_, _| (503, "{\"error\":\"overloaded\"}".into()));
    let backend = HttpBackend::new(Some(stub.url.clone()), None).with_retry(fast_retry());
    let err = generate(&backend, &request(GenerationConfig::default())).unwrap_err();
    assert!(matches!(err, BackendError::Rejected { status: 503, .. }), "{err}");
    assert!(!err.is_retryable());
    assert_eq!(stub.hits(), 1);
}

#[test]
fn http_malformed_reply() {
    let stub = stub_server(|_, _| (200, "{\"choices\": []}".into()));
    let backend = HttpBackend::new(Some(stub.url.clone()), None).with_retry(fast_retry());
    let err = generate(&backend, &request(GenerationConfig::default())).unwrap_err();
    assert!(matches!(err, BackendError::Malformed(_)), "{err}");
}

#[test]
fn http_unreachable_retries_then_fails() {
    let backend = HttpBackend::new(Some(closed_url()), None).with_retry(fast_retry());
    let err = generate(&backend, &request(GenerationConfig::default())).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable { attempts: 3, .. }), "{err}");
    assert!(err.is_retryable());
}

#[test]
fn http_without_endpoint_is_invalid() {
    let backend = HttpBackend::new(None, None);
    let err = generate(&backend, &request(GenerationConfig::default())).unwrap_err();
    assert!(matches!(err, BackendError::InvalidRequest(_)), "{err}");
}

#[test]
fn request_endpoint_used_when_backend_has_none() {
    let stub = stub_server(|_, _| (200, completion("ok")));
    let config = GenerationConfig {
        endpoint_url: Some(format!("{}/chat/completions", stub.url)),
        ..GenerationConfig::default()
    };
    generate(&HttpBackend::new(None, None), &request(config)).unwrap();
    assert_eq!(stub.hits(), 1);
}

#[test]
fn scripted_backend_needs_subject() {
    let roster = common::roster();
    let b = personasim::backend::ScriptedBackend::new(roster.profiles(), 0.2, 1);
    let req = request(GenerationConfig::default());
    assert!(matches!(generate(&b, &req), Err(BackendError::InvalidRequest(_))));
    let req = req.with_subject(Subject {
        agent_id: "provider_001".into(),
        scenario_id: "S1".into(),
        repetition: 1,
    });
    assert!(generate(&b, &req).is_ok());
}
