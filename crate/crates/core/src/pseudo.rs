//! Confidence-filtered pseudo labels and class ratios.

use std::fmt;
use std::str::FromStr;

use crate::cloud::{ClassTaxonomy, Label, LabeledPointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};

/// Per-point class probabilities, row-major `rows x classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    /// Rows must be probability vectors (entries in `[0, 1]`, sums within
    /// 1e-6 of one).
    pub fn new(rows: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("score matrix needs at least one class".into()));
        }
        if data.len() != rows * classes {
            return Err(Error::Dimension {
                expected: rows * classes,
                actual: data.len(),
            });
        }
        for (i, row) in data.chunks_exact(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!("row {i} is not a probability vector: {row:?}")));
            }
        }
        Ok(Self { rows, classes, data })
    }

    pub(crate) fn from_raw(rows: usize, classes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * classes);
        Self { rows, classes, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }

    /// `(argmax, max)` of row `i`; ties go to the lower class.
    pub fn top(&self, i: usize) -> (Label, f64) {
        argmax(self.row(i))
    }

    /// Argmax of every row.
    pub fn predictions(&self) -> Vec<Label> {
        self.iter_rows().map(|r| argmax(r).0).collect()
    }
}

fn argmax(row: &[f64]) -> (Label, f64) {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    (best as Label, row[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoLabelMode {
    /// Keep the argmax when the top score exceeds a fixed threshold.
    GlobalThreshold,
    /// Keep the most confident fraction of each predicted class.
    PerClassFraction,
}

impl PseudoLabelMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PseudoLabelMode::GlobalThreshold => "global_threshold",
            PseudoLabelMode::PerClassFraction => "per_class_fraction",
        }
    }
}

impl fmt::Display for PseudoLabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PseudoLabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_threshold" => Ok(PseudoLabelMode::GlobalThreshold),
            "per_class_fraction" => Ok(PseudoLabelMode::PerClassFraction),
            other => Err(Error::Config(format!("unknown pseudo-label mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelConfig {
    pub mode: PseudoLabelMode,
    /// Global confidence threshold `T`.
    pub threshold: f64,
    /// Retained fraction per class.
    pub fraction: f64,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            mode: PseudoLabelMode::GlobalThreshold,
            threshold: 0.7,
            fraction: 0.3,
        }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        Ok(())
    }
}

/// Threshold per class such that, by nearest rank, `ceil(fraction * n_j)`
/// of the `n_j` points predicted as class `j` have a top score strictly
/// above it. The threshold is the next score down the sorted list, or 0
/// when every point is kept; tied scores at the cut are all dropped. A
/// class nobody predicts gets 1.0.
pub fn per_class_thresholds(scores: &ScoreMatrix, fraction: f64) -> Vec<f64> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    let mut conf: Vec<Vec<f64>> = vec![Vec::new(); scores.classes()];
    for r in scores.iter_rows() {
        let (j, m) = argmax(r);
        conf[j as usize].push(m);
    }
    conf.into_iter()
        .map(|mut c| {
            if c.is_empty() {
                return 1.0;
            }
            c.sort_by(|a, b| b.total_cmp(a));
            let k = (fraction * c.len() as f64).ceil() as usize;
            if k >= c.len() {
                0.0
            } else {
                c[k]
            }
        })
        .collect()
}

/// Argmax labels where confident, [`IGNORE_LABEL`] elsewhere. A point is
/// kept only when its top score is strictly above the threshold of its
/// predicted class (the global `T` or the per-class cut).
pub fn generate_pseudo_labels(scores: &ScoreMatrix, config: &PseudoLabelConfig) -> Vec<Label> {
    let thresholds = match config.mode {
        PseudoLabelMode::GlobalThreshold => vec![config.threshold; scores.classes()],
        PseudoLabelMode::PerClassFraction => per_class_thresholds(scores, config.fraction),
    };
    scores
        .iter_rows()
        .map(|r| {
            let (j, m) = argmax(r);
            if m > thresholds[j as usize] {
                j
            } else {
                IGNORE_LABEL
            }
        })
        .collect()
}

/// The cloud relabeled with its pseudo labels, filtered points taking the
/// taxonomy's ignore index.
pub fn pseudo_label_cloud(cloud: &LabeledPointCloud, scores: &ScoreMatrix, config: &PseudoLabelConfig) -> Result<LabeledPointCloud> {
    let ignore = cloud.taxonomy().ignore_index();
    let labels = generate_pseudo_labels(scores, config)
        .into_iter()
        .map(|l| if l == IGNORE_LABEL { ignore } else { l })
        .collect();
    cloud.with_labels(labels)
}

/// Fraction of the non-ignored labels held by each class. All-ignored input
/// gives zeros.
pub fn class_ratio(labels: &[Label], taxonomy: &ClassTaxonomy) -> Vec<f64> {
    let mut counts = vec![0usize; taxonomy.len()];
    for &l in labels {
        if let Some(c) = counts.get_mut(l as usize) {
            *c += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.into_iter().map(|c| c as f64 / total as f64).collect()
}
