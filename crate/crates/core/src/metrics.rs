//! Confusion matrices, per-class IoU and mIoU.

use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::cloud::{ClassTaxonomy, Label};
use crate::error::{Error, Result};

/// `counts[g * c + p]` = points of ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Dimension {
                expected: classes * classes,
                actual: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add one count per point whose ground truth is a class; ground-truth
    /// labels outside the class range (the ignore index) are skipped.
    pub fn accumulate(&mut self, predictions: &[Label], ground_truth: &[Label]) -> Result<()> {
        if predictions.len() != ground_truth.len() {
            return Err(Error::Dimension {
                expected: ground_truth.len(),
                actual: predictions.len(),
            });
        }
        for (&p, &g) in predictions.iter().zip(ground_truth) {
            let (p, g) = (p as usize, g as usize);
            if g >= self.classes {
                continue;
            }
            if p >= self.classes {
                return Err(Error::unknown_label(p as Label));
            }
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.classes, rhs.classes, "confusion matrices of different sizes");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

/// Functional form of [`ConfusionMatrix::accumulate`].
pub fn accumulate_confusion(mut matrix: ConfusionMatrix, predictions: &[Label], ground_truth: &[Label]) -> Result<ConfusionMatrix> {
    matrix.accumulate(predictions, ground_truth)?;
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// `None` where the class has no ground truth and no predictions.
    pub per_class: Vec<Option<f64>>,
    /// Mean over the defined classes.
    pub miou: f64,
}

impl IouReport {
    /// `class,iou` rows, undefined classes written as `undefined`, then a
    /// final `mIoU` row.
    pub fn to_csv(&self, taxonomy: &ClassTaxonomy) -> String {
        let mut s = String::from("class,iou\n");
        for (name, iou) in taxonomy.names().iter().zip(&self.per_class) {
            match iou {
                Some(v) => writeln!(s, "{name},{v:.6}").unwrap(),
                None => writeln!(s, "{name},undefined").unwrap(),
            }
        }
        writeln!(s, "mIoU,{:.6}", self.miou).unwrap();
        s
    }
}

/// `IoU_j = TP / (TP + FP + FN)`. Classes with a zero denominator are left
/// out of the mean.
pub fn compute_iou(matrix: &ConfusionMatrix) -> Result<IouReport> {
    let c = matrix.classes;
    let per_class: Vec<Option<f64>> = (0..c)
        .map(|j| {
            let tp = matrix.get(j, j);
            let fn_: u64 = (0..c).map(|p| matrix.get(j, p)).sum::<u64>() - tp;
            let fp: u64 = (0..c).map(|g| matrix.get(g, j)).sum::<u64>() - tp;
            let den = tp + fp + fn_;
            (den > 0).then(|| tp as f64 / den as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoEvaluatedClasses);
    }
    let miou = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(IouReport { per_class, miou })
}
