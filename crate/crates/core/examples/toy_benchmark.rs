//! Write the toy sim/real benchmark and run the full pipeline on it.
//!
//! `cargo run --release --example toy_benchmark [seed]`

use scanmix::config::PipelineConfig;
use scanmix::pipeline::{make_toy_benchmark, run_pipeline, ToyBenchmarkConfig};

fn main() -> scanmix::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("scanmix-toy-{seed}"));
    let bench = make_toy_benchmark(&dir, seed, &ToyBenchmarkConfig::default())?;
    let config = PipelineConfig::load(&bench.config)?;
    let report = run_pipeline(&config)?;
    print!("{}", report.to_text());
    println!("outputs in {}", config.out_dir.display());
    Ok(())
}
