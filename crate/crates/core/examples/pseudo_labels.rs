//! Threshold a score matrix with the global and per-class rules.

use scanmix::prelude::*;
use scanmix::pseudo::{generate_pseudo_labels, per_class_thresholds, PseudoLabelConfig, PseudoLabelMode};
use scanmix::segmenter::softmax_rows;

fn main() {
    let mut rng = RandomStream::new(5);
    let classes = 4;
    let logits: Vec<f64> = (0..2000 * classes).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    let scores = softmax_rows(&logits, classes);

    for threshold in [0.4, 0.6, 0.8] {
        let cfg = PseudoLabelConfig { mode: PseudoLabelMode::GlobalThreshold, threshold, ..Default::default() };
        let kept = generate_pseudo_labels(&scores, &cfg).iter().filter(|&&l| l != IGNORE_LABEL).count();
        println!("global threshold {threshold}: kept {kept} of {}", scores.rows());
    }

    let fraction = 0.3;
    println!("per-class thresholds at {fraction}: {:.3?}", per_class_thresholds(&scores, fraction));
    let cfg = PseudoLabelConfig { mode: PseudoLabelMode::PerClassFraction, fraction, ..Default::default() };
    let labels = generate_pseudo_labels(&scores, &cfg);
    for c in 0..classes {
        let kept = labels.iter().filter(|&&l| l as usize == c).count();
        println!("class {c}: kept {kept}");
    }
}
