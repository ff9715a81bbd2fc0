//! Pretrain the reference segmenter with and without the virtual scan and
//! evaluate both on scanned target rooms.

use scanmix::pipeline::{evaluate, stage_source_only, stage_vss, toy_benchmark_scenes, toy_pipeline_config, ToyBenchmarkConfig};

fn main() -> scanmix::Result<()> {
    let config = toy_pipeline_config(0);
    let bench = ToyBenchmarkConfig { n_source: 10, n_target: 10, ..ToyBenchmarkConfig::default() };
    let (sources, targets) = toy_benchmark_scenes(&bench, 0)?;

    for (name, trained) in [
        ("source only", stage_source_only(&sources.clouds, &config)?),
        ("virtual scan", stage_vss(&sources.clouds, &config)?),
    ] {
        let (_, iou) = evaluate(&trained.model, &targets.clouds, &config.features)?;
        println!(
            "{name:<12} final loss {:.4}  target mIoU {:.1}",
            trained.losses.last().copied().unwrap_or(f64::NAN),
            100.0 * iou.miou
        );
    }
    Ok(())
}
