//! Assemble a prompt, answer it with the scripted backend, and show the chat
//! completion body the HTTP backend would send. With PERSONASIM_ENDPOINT set
//! the request is also sent to that server.

use std::path::Path;

use personasim::backend::{
    assemble_context, build_chat_body, generate, parse_trailer, Backend, GenerationConfig, HttpBackend, ScriptedBackend,
    Subject, ENDPOINT_ENV,
};
use personasim::battery::builtin_scenarios;
use personasim::persona::{load_profile, render_persona_block};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/profiles/provider_002.json");
    let profile = load_profile(&std::fs::read_to_string(path)?)?;
    let scenario = &builtin_scenarios()[3];

    let config = GenerationConfig {
        seed: Some(7),
        ..GenerationConfig::default()
    };
    let request = assemble_context(&render_persona_block(&profile), None, None, &scenario.prompt_text, &[], &config)?
        .with_subject(Subject {
            agent_id: profile.agent_id.clone(),
            scenario_id: scenario.scenario_id.clone(),
            repetition: 1,
        });

    let scripted = ScriptedBackend::new([&profile], 0.35, 42);
    let reply = generate(&scripted, &request)?;
    println!("{} answered {} tokens:\n{}\n", scripted.id(), reply.token_count, reply.text);
    println!("expressed vector: {:?}\n", parse_trailer(&reply.text).map(|v| v.to_array()));

    println!("{}", serde_json::to_string_pretty(&build_chat_body(&request))?);

    if std::env::var(ENDPOINT_ENV).is_ok() {
        let http = HttpBackend::from_env();
        match generate(&http, &request) {
            Ok(r) => println!("\n{} replied in {} ms:\n{}", r.backend_id, r.latency_ms, r.text),
            Err(e) => println!("\nhttp backend failed: {e}"),
        }
    }
    Ok(())
}
