//! Full four-condition ablation under the scripted backend, written to a
//! temporary run directory. Prints the summary table and timing.

use std::path::Path;
use std::time::Instant;

use personasim::ablation::{Ablation, Inputs, RunConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::temp_dir().join("personasim-ablation-example");
    let mut config = RunConfig::scripted(fixtures.join("profiles"), &out);
    config.ccd_dir = Some(fixtures.join("ccd"));
    config.memory_dir = Some(fixtures.join("memory"));

    let inputs = Inputs::load(&config)?;
    let ablation = Ablation::new(config, inputs);
    let start = Instant::now();
    let outcome = ablation.run(RunOptions { resume: false, force: true }, &mut |_| {})?;
    println!("{} records generated in {:.2?}", outcome.generated, start.elapsed());
    println!("run directory: {}", outcome.run_dir.display());
    for name in ["ablation_summary", "test_retest", "internal_consistency"] {
        print!("\n{}", outcome.report.table(name).expect("table exists").to_markdown());
    }
    Ok(())
}
