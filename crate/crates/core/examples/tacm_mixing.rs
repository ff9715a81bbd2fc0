//! Compose intermediate-domain scenes and watch the tail queue fill up.

use scanmix::pipeline::generate_scenes;
use scanmix::prelude::*;
use scanmix::pseudo::class_ratio;
use scanmix::tacm::{tacm_compose, tail_classes, Provenance, TacmConfig, TailCuboidQueue};

fn main() -> Result<()> {
    let mut rng = RandomStream::new(11);
    let templates = [SceneTemplate::TailHeavy, SceneTemplate::Cluttered];
    let sources = generate_scenes(6, &templates, 80.0, "src", &mut rng)?;
    let targets = generate_scenes(6, &templates, 80.0, "tgt", &mut rng)?;

    let labels: Vec<Label> = targets.clouds.iter().flat_map(|c| c.labels().iter().copied()).collect();
    let ratios = class_ratio(&labels, &targets.clouds[0].taxonomy().clone());
    let config = TacmConfig::default();
    println!("tail classes: {:?}", tail_classes(&ratios, config.n_tail_classes));

    let mut queue = TailCuboidQueue::new(config.queue_capacity);
    for k in 0..6 {
        let mixed = tacm_compose(&sources.clouds[k], &targets.clouds[(k + 1) % 6], &ratios, &config, &mut queue, &mut rng)?;
        println!(
            "scene {k}: {} points, slots source={} target={} queue={}, queue length {}",
            mixed.cloud.len(),
            mixed.count(Provenance::Source),
            mixed.count(Provenance::Target),
            mixed.count(Provenance::Queue),
            queue.len()
        );
    }
    Ok(())
}
