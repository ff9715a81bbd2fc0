//! Acceptance run: one pass/fail line per criterion.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use scanmix::config::PipelineConfig;
use scanmix::io::{decode_points, encode_points, FileFormat};
use scanmix::pipeline::{make_toy_benchmark, run_pipeline, ToyBenchmarkConfig};
use scanmix::prelude::*;
use scanmix::pseudo::{generate_pseudo_labels, per_class_thresholds, PseudoLabelConfig, PseudoLabelMode, ScoreMatrix};
use scanmix::segmenter::{cross_entropy, forward_scores, softmax_rows, FeatureMatrix, SegmenterModel};
use scanmix::tacm::{
    apply_permutation, mix_cuboids, partition_cuboids, permute_cuboids, tacm_compose, Provenance, TacmConfig,
    TailCuboidQueue,
};
use scanmix::vss::{compute_free_space_bev, sample_camera_poses, visible_union, OcclusionConfig};

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn taxonomy() -> Arc<ClassTaxonomy> {
    Arc::new(ClassTaxonomy::toy_indoor())
}

fn scene(template: SceneTemplate, density: f64, seed: u64) -> LabeledPointCloud {
    let mut rng = RandomStream::new(seed);
    let spec = template.randomized(&mut rng).with_density(density);
    generate_scene(&spec, &mut rng).unwrap()
}

fn poses(cloud: &LabeledPointCloud, n: usize, seed: u64) -> Vec<CameraPose> {
    let s = StructuralClasses::from_taxonomy(cloud.taxonomy()).unwrap();
    let bev = compute_free_space_bev(cloud, 0.25, &s).unwrap();
    sample_camera_poses(cloud, &bev, n, 0.1, &s, &mut RandomStream::new(seed)).unwrap()
}

fn occlusion() -> Outcome {
    let mut lines = Vec::new();
    let mut worst_time: f64 = 0.0;
    for template in [SceneTemplate::OneOccluder, SceneTemplate::Cluttered] {
        let (mut agree, mut total) = (0usize, 0usize);
        let mut min_points = usize::MAX;
        for k in 0..10 {
            let cloud = generate_scene(&template.canonical().with_density(1250.0), &mut RandomStream::new(k)).unwrap();
            min_points = min_points.min(cloud.len());
            let pose = poses(&cloud, 1, 100 + k)[0];
            let fov = FovConfig::default();
            let t = Instant::now();
            let fast = visible_points(&cloud, &pose, &fov, &OcclusionConfig::default()).unwrap();
            worst_time = worst_time.max(t.elapsed().as_secs_f64());
            let exact = visibility_oracle(&cloud, &pose, &fov, 0.02).unwrap();
            let in_range = visible_range_mask(&cloud, &pose, &fov).unwrap();
            for i in 0..cloud.len() {
                if in_range[i] {
                    total += 1;
                    agree += usize::from(fast[i] == exact[i]);
                }
            }
        }
        let rate = agree as f64 / total as f64;
        check(min_points >= 20_000, || format!("{} has only {min_points} points", template.name()))?;
        check(rate >= 0.95, || format!("{} agreement {:.2}%", template.name(), rate * 100.0))?;
        lines.push(format!("{} {:.2}%", template.name(), rate * 100.0));
    }
    check(worst_time < 10.0, || format!("slowest scene {worst_time:.2}s"))?;
    Ok(format!("in-range agreement {}; slowest {:.3}s", lines.join(", "), worst_time))
}

fn vss_invariants() -> Outcome {
    let mut rng = RandomStream::new(2);
    for case in 0..50 {
        let template = SceneTemplate::ALL[rng.below(SceneTemplate::ALL.len())];
        let seed = rng.next_u64();
        let c = scene(template, 120.0, seed);
        let s = StructuralClasses::from_taxonomy(c.taxonomy()).unwrap();
        let cfg = VssConfig::default();

        let scan = simulate_scan(&c, &cfg, &s, &mut RandomStream::new(seed ^ 1)).unwrap();
        for (k, &i) in scan.kept.iter().enumerate() {
            check(scan.cloud.positions()[k] == c.positions()[i] && scan.cloud.labels()[k] == c.labels()[i], || {
                format!("case {case}: scan point {k} is not input point {i}")
            })?;
        }

        let ps = poses(&c, 4, seed ^ 2);
        let mut prev = vec![false; c.len()];
        for n in 1..=4 {
            let u = visible_union(&c, &ps[..n], &cfg.fov, &cfg.occlusion).unwrap();
            check(prev.iter().zip(&u).all(|(&a, &b)| !a || b), || format!("case {case}: {n} cameras lose points"))?;
            prev = u;
        }

        for mode in [ViewingMode::Fixed, ViewingMode::Perspective, ViewingMode::Parallel] {
            let wide = FovConfig { mode, ..FovConfig::default() };
            let narrow_h = FovConfig { horizontal_deg: wide.horizontal_deg * 0.6, ..wide };
            let narrow_v = FovConfig { vertical_deg: wide.vertical_deg * 0.6, ..wide };
            let m = visible_range_mask(&c, &ps[0], &wide).unwrap();
            for narrow in [narrow_h, narrow_v] {
                let n = visible_range_mask(&c, &ps[0], &narrow).unwrap();
                check(m.iter().zip(&n).all(|(&a, &b)| a || !b), || format!("case {case}: narrower {mode:?} adds points"))?;
            }
        }

        let j = jitter_points(&c, 0.01, &mut RandomStream::new(seed ^ 3));
        let max = c.positions().iter().zip(j.positions()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        check(max <= 0.01, || format!("case {case}: displacement {max}"))?;
        check(jitter_points(&c, 0.0, &mut RandomStream::new(seed)) == c, || format!("case {case}: zero jitter moved points"))?;
    }
    Ok("50 cases: subset, camera monotonicity, FOV nesting (3 modes), jitter bound, zero jitter identity".into())
}

fn random_cloud(n: usize, extent: [f64; 3], rng: &mut RandomStream) -> LabeledPointCloud {
    let pts = (0..n)
        .map(|_| Vec3::new(rng.uniform() * extent[0], rng.uniform() * extent[1], rng.uniform() * extent[2]))
        .collect();
    let labels = (0..n).map(|_| rng.below(7) as Label).collect();
    LabeledPointCloud::new(pts, labels, taxonomy()).unwrap()
}

fn tacm_invariants() -> Outcome {
    let mut rng = RandomStream::new(3);
    let listed = [[1, 1, 1], [2, 2, 1], [3, 3, 1], [1, 1, 2]];
    for case in 0..100 {
        let shape = if case < 40 { listed[case % 4] } else { [1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2)] };
        let cfg = TacmConfig { partitions: shape, ..TacmConfig::default() };
        let cloud = random_cloud(600, [4.0, 3.5, 2.6], &mut rng);
        let set = partition_cuboids(&cloud, Provenance::Source, &cfg, &mut rng).unwrap();
        let mut seen = vec![0u32; cloud.len()];
        for cub in set.cuboids() {
            for &m in &cub.members {
                seen[m] += 1;
                let p = cloud.positions()[m];
                let inside = (0..3).all(|a| {
                    let last = cub.cell[a] + 1 == shape[a];
                    p[a] >= cub.bounds.min[a] && (p[a] < cub.bounds.max[a] || (last && p[a] <= cub.bounds.max[a]))
                });
                check(inside, || format!("case {case}: point {m} outside its cuboid"))?;
            }
        }
        check(seen.iter().all(|&s| s == 1), || format!("case {case} {shape:?}: cover not disjoint-exhaustive"))?;

        let perm = rng.permutation(set.n_cells());
        let moved = apply_permutation(set.clone(), &perm);
        for cub in moved.cuboids() {
            let m = &cub.members;
            for w in m.windows(2).take(20) {
                let d0 = (cloud.positions()[w[0]] - cloud.positions()[w[1]]).norm();
                let d1 = (moved.cloud().positions()[w[0]] - moved.cloud().positions()[w[1]]).norm();
                check((d0 - d1).abs() <= 1e-9 * d0.max(1.0), || format!("case {case}: distance {d0} became {d1}"))?;
            }
        }

        let other = random_cloud(500, [4.0, 3.5, 2.6], &mut rng);
        let tgt = partition_cuboids(&other, Provenance::Target, &cfg, &mut rng).unwrap();
        let none = mix_cuboids(&set, &tgt, 0.0, &mut rng).unwrap();
        let expect: Vec<usize> = tgt.cuboids().iter().flat_map(|c| c.members.iter().copied()).collect();
        let same = none.cloud.len() == expect.len()
            && expect.iter().enumerate().all(|(k, &i)| {
                none.cloud.positions()[k] == other.positions()[i] && none.cloud.labels()[k] == other.labels()[i]
            });
        check(same, || format!("case {case}: rho_m=0 is not the target"))?;
        let all = mix_cuboids(&set, &tgt, 1.0, &mut rng).unwrap();
        check(all.count(Provenance::Source) == set.n_cells() && all.cloud.len() == cloud.len(), || {
            format!("case {case}: rho_m=1 did not take every source cuboid")
        })?;
    }

    let mut q = TailCuboidQueue::new(5);
    let mut replay = TailCuboidQueue::new(5);
    for k in 0..23 {
        let pts = vec![Vec3::new(k as f64, 0.0, 0.0)];
        q.push(Vec3::new(1.0, 1.0, 1.0), pts.clone(), vec![5]);
        replay.push(Vec3::new(1.0, 1.0, 1.0), pts, vec![5]);
    }
    let serials: Vec<u64> = q.iter().map(|c| c.serial).collect();
    check(serials == (18..23).collect::<Vec<u64>>(), || format!("queue holds {serials:?}"))?;
    check(q.iter().zip(replay.iter()).all(|(a, b)| a == b), || "replayed queue differs".into())?;
    Ok("100 partition cases incl. (1,1,1) (2,2,1) (3,3,1) (1,1,2); rigid moves; rho_m extremes; FIFO replay".into())
}

fn statistical_knobs() -> Outcome {
    let mut rng = RandomStream::new(4);
    let cfg = TacmConfig::default();
    let src = random_cloud(300, [4.0, 3.0, 2.5], &mut rng);
    let tgt = random_cloud(300, [4.0, 3.0, 2.5], &mut rng);
    let (mut permuted, mut replaced) = (0usize, 0usize);
    let n = 1000;
    for seed in 0..n {
        let mut r = RandomStream::new(seed);
        let s = partition_cuboids(&src, Provenance::Source, &cfg, &mut r).unwrap();
        let t = partition_cuboids(&tgt, Provenance::Target, &cfg, &mut r).unwrap();
        let s = permute_cuboids(s, 0.5, &mut r);
        permuted += usize::from(s.permutation().is_some());
        replaced += mix_cuboids(&s, &t, 0.5, &mut r).unwrap().count(Provenance::Source);
    }
    let rate = permuted as f64 / n as f64;
    let mean = replaced as f64 / n as f64;
    check((rate - 0.5).abs() <= 0.05, || format!("permutation rate {rate}"))?;
    check((mean - 2.0).abs() <= 0.15, || format!("mean replaced cells {mean}"))?;
    Ok(format!("permutation rate {rate:.3}, mean replaced cells {mean:.3}"))
}

fn tail_oversampling() -> Outcome {
    let sources: Vec<_> = (0..10).map(|k| scene(SceneTemplate::TailHeavy, 60.0, 500 + k)).collect();
    let targets: Vec<_> = (0..10).map(|k| scene(SceneTemplate::TailHeavy, 60.0, 600 + k)).collect();
    let labels: Vec<Label> = targets.iter().flat_map(|c| c.labels().iter().copied()).collect();
    let ratios = scanmix::pseudo::class_ratio(&labels, &taxonomy());
    let tails = scanmix::tacm::tail_classes(&ratios, 2);
    let fraction = |u: usize| {
        let cfg = TacmConfig { min_tail_cuboids: u, ..TacmConfig::default() };
        let mut q = TailCuboidQueue::new(cfg.queue_capacity);
        let mut rng = RandomStream::new(5);
        let mut sum = 0.0;
        let n = 200;
        for k in 0..n {
            let m = tacm_compose(&sources[k % 10], &targets[(k * 3) % 10], &ratios, &cfg, &mut q, &mut rng).unwrap();
            let hits = m.cloud.labels().iter().filter(|l| tails.contains(l)).count();
            sum += hits as f64 / m.cloud.len() as f64;
        }
        sum / n as f64
    };
    let (with, without) = (fraction(2), fraction(0));
    check(with > without, || format!("u=2 {with:.4} vs u=0 {without:.4}"))?;
    Ok(format!("tail classes {tails:?}: point fraction u=2 {with:.4} > u=0 {without:.4} over 200 scenes"))
}

fn random_scores(rows: usize, classes: usize, rng: &mut RandomStream) -> ScoreMatrix {
    let logits: Vec<f64> = (0..rows * classes).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    softmax_rows(&logits, classes)
}

fn pseudo_contracts() -> Outcome {
    let mut rng = RandomStream::new(6);
    for case in 0..50 {
        let s = random_scores(200 + rng.below(300), 2 + rng.below(6), &mut rng);
        let t = rng.uniform_range(0.2, 0.8);
        let cfg = PseudoLabelConfig { mode: PseudoLabelMode::GlobalThreshold, threshold: t, ..Default::default() };
        let got = generate_pseudo_labels(&s, &cfg);
        for (i, row) in s.iter_rows().enumerate() {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            let want = if row[best] > t { best as Label } else { IGNORE_LABEL };
            check(got[i] == want, || format!("case {case} row {i}: {} vs {want}", got[i]))?;
        }
        let higher = generate_pseudo_labels(&s, &PseudoLabelConfig { threshold: t + 0.1, ..cfg.clone() });
        check(higher.iter().zip(&got).all(|(h, g)| *h == IGNORE_LABEL || h == g), || {
            format!("case {case}: raising the threshold kept a new point")
        })?;

        let frac = PseudoLabelConfig { mode: PseudoLabelMode::PerClassFraction, fraction: 0.3, ..Default::default() };
        let kept = generate_pseudo_labels(&s, &frac);
        let preds = s.predictions();
        let th = per_class_thresholds(&s, 0.3);
        for c in 0..s.classes() {
            let n = preds.iter().filter(|&&p| p as usize == c).count();
            let k = kept.iter().filter(|&&p| p as usize == c).count();
            let want = (0.3 * n as f64).ceil() as usize;
            check(k == want.min(n), || format!("case {case} class {c}: kept {k} of {n}, want {want}"))?;
            for (i, &l) in kept.iter().enumerate() {
                if l as usize == c {
                    check(s.top(i).1 > th[c], || format!("case {case}: retained point {i} fails its threshold"))?;
                }
            }
        }
    }
    Ok("50 random matrices: strict rule by row scan, nearest-rank 30% counts, threshold monotonicity".into())
}

fn model_loss(model: &SegmenterModel, x: &FeatureMatrix, y: &[Label]) -> f64 {
    cross_entropy(&forward_scores(model, x).unwrap(), y).unwrap().0
}

fn numerical_training() -> Outcome {
    let mut rng = RandomStream::new(7);
    let tax = taxonomy();
    let (d, c) = (7, tax.len());
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let rows = 5 + rng.below(20);
        let x = FeatureMatrix { rows, dim: d, data: (0..rows * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect() };
        let y: Vec<Label> = (0..rows).map(|_| rng.below(c) as Label).collect();
        let w: Vec<f64> = (0..c * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let model = SegmenterModel::from_parts(tax.clone(), d, w.clone(), b.clone()).unwrap();
        let (_, g) = cross_entropy(&forward_scores(&model, &x).unwrap(), &y).unwrap();
        let (gw, gb) = model.param_gradient(&x, &g);
        let analytic: Vec<f64> = gw.iter().chain(&gb).copied().collect();
        let h = 1e-5;
        let mut numeric = Vec::with_capacity(analytic.len());
        for p in 0..analytic.len() {
            let at = |delta: f64| {
                let (mut w, mut b) = (w.clone(), b.clone());
                if p < w.len() {
                    w[p] += delta;
                } else {
                    b[p - w.len()] += delta;
                }
                model_loss(&SegmenterModel::from_parts(tax.clone(), d, w, b).unwrap(), &x, &y)
            };
            numeric.push((at(h) - at(-h)) / (2.0 * h));
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
        check(diff / scale <= 1e-4, || format!("case {case}: relative gradient error {}", diff / scale))?;
    }

    let s = random_scores(1000, 7, &mut rng);
    let row_err = s.iter_rows().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    check(row_err <= 1e-6, || format!("row sum error {row_err}"))?;

    let cloud = scene(SceneTemplate::Cluttered, 100.0, 8);
    let x = scanmix::segmenter::extract_features(&cloud, &Default::default()).unwrap();
    let mut model = SegmenterModel::zeros(tax.clone(), d);
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (l, g) = cross_entropy(&forward_scores(&model, &x).unwrap(), cloud.labels()).unwrap();
        losses.push(l);
        model.step(&x, &g, 0.1);
    }
    let smooth: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    check(smooth.windows(2).all(|w| w[1] <= w[0] + 1e-12), || "smoothed loss increased".into())?;
    check(losses[199] < losses[0], || "final loss not below initial".into())?;
    Ok(format!(
        "worst gradient error {worst:.2e}; row sums within {row_err:.1e}; loss {:.4} -> {:.4}",
        losses[0], losses[199]
    ))
}

fn toy_benchmark(dir: &Path) -> Outcome {
    let start = Instant::now();
    let (mut gap_vss, mut gap_doda) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in 0..3 {
        let root = dir.join(format!("seed{seed}"));
        let b = make_toy_benchmark(&root, seed, &ToyBenchmarkConfig::default()).map_err(|e| e.to_string())?;
        let cfg = PipelineConfig::load(&b.config).map_err(|e| e.to_string())?;
        let r = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let (so, vss, doda) = (r.source_only.value().unwrap(), r.vss.value().unwrap(), r.doda.value().unwrap());
        gap_vss += (vss - so) * 100.0 / 3.0;
        gap_doda += (doda - vss) * 100.0 / 3.0;
        per_seed.push(format!("{:.1}/{:.1}/{:.1}", so * 100.0, vss * 100.0, doda * 100.0));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "mIoU src/vss/doda per seed {}; mean gains +{gap_vss:.2} and +{gap_doda:.2} points; {secs:.0}s",
        per_seed.join(", ")
    );
    check(gap_vss >= 1.0 && gap_doda >= 1.0, || detail.clone())?;
    check(secs < 300.0, || detail.clone())?;
    Ok(detail)
}

fn determinism(dir: &Path) -> Outcome {
    let exe = env!("CARGO_BIN_EXE_scanmix");
    let bench = dir.join("bench");
    let run = |args: &[&str]| {
        let out = Command::new(exe).args(args).output().map_err(|e| e.to_string())?;
        check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let b = bench.to_str().unwrap();
    run(&["make-toy-benchmark", "--out", b, "--seed", "9", "--n-source", "6", "--n-target", "6", "--density", "120"])?;
    let cfg = bench.join("toy.cfg");
    let c = cfg.to_str().unwrap();
    let (a, bb) = (dir.join("run_a"), dir.join("run_b"));
    run(&["run-all", "--config", c, "--out", a.to_str().unwrap()])?;
    run(&["run-all", "--config", c, "--out", bb.to_str().unwrap()])?;
    let mut files = vec!["report.txt".to_string()];
    for m in ["source_only", "vss", "doda"] {
        files.push(format!("checkpoints/{m}.segmodel"));
    }
    for f in &files {
        let x = std::fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(bb.join(f)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{f} differs"))?;
    }
    Ok(format!("two run-all invocations: {} files byte-identical", files.len()))
}

fn io_round_trip() -> Outcome {
    let mut rng = RandomStream::new(10);
    let n = 10_000;
    let tax = taxonomy();
    for format in FileFormat::ALL {
        let exact = format == FileFormat::PlyBinaryLe;
        let pts: Vec<Vec3> = (0..n)
            .map(|_| {
                let v = [0, 1, 2].map(|_| rng.uniform_range(-50.0, 50.0));
                if exact {
                    Vec3::new(v[0] as f32 as f64, v[1] as f32 as f64, v[2] as f32 as f64)
                } else {
                    Vec3::new(v[0], v[1], v[2])
                }
            })
            .collect();
        let mut labels: Vec<Label> = (0..n).map(|_| rng.below(tax.len()) as Label).collect();
        labels[0] = tax.ignore_index();
        let cloud = LabeledPointCloud::new(pts, labels, tax.clone()).unwrap();
        let bytes = encode_points(&cloud, format);
        let back = decode_points(&bytes, format, tax.clone(), "memory").map_err(|e| e.to_string())?;
        check(back.labels() == cloud.labels(), || format!("{format}: labels differ"))?;
        if exact {
            check(back == cloud, || format!("{format}: not bit-exact"))?;
            check(encode_points(&back, format) == bytes, || format!("{format}: re-encoding differs"))?;
        } else {
            let err = cloud.positions().iter().zip(back.positions()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
            check(err <= 1e-6, || format!("{format}: error {err}"))?;
        }
    }
    Ok("10k-point clouds: ply_binary_le bit-exact, ply_ascii and xyzl_text within 1e-6".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("occlusion correctness", Box::new(occlusion)),
        ("VSS invariants", Box::new(vss_invariants)),
        ("TACM invariants", Box::new(tacm_invariants)),
        ("statistical knobs", Box::new(statistical_knobs)),
        ("tail oversampling", Box::new(tail_oversampling)),
        ("pseudo-label contracts", Box::new(pseudo_contracts)),
        ("numerical training", Box::new(numerical_training)),
        ("toy benchmark", Box::new(|| toy_benchmark(&dir.path().join("toy")))),
        ("determinism", Box::new(|| determinism(&dir.path().join("det")))),
        ("I/O round trip", Box::new(io_round_trip)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
