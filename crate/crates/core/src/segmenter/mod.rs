//! Reference per-point segmenter: handcrafted geometric features and a
//! linear softmax classifier trained by plain gradient descent.

mod features;
mod train;

pub use features::{extract_features, FeatureConfig, FeatureMatrix, FEATURE_DIM, FEATURE_NAMES};
pub use train::{train_pretrain, train_selftrain, write_loss_trace, SelfTrainData, TrainConfig, TrainOutput};

use std::path::Path;
use std::sync::Arc;

use crate::cloud::{ClassTaxonomy, Label};
use crate::error::{Error, ParseLocation, Result};
use crate::pseudo::ScoreMatrix;

/// Linear softmax model: `scores = softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterModel {
    taxonomy: Arc<ClassTaxonomy>,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SegmenterModel {
    pub fn zeros(taxonomy: Arc<ClassTaxonomy>, dim: usize) -> Self {
        let c = taxonomy.len();
        Self {
            taxonomy,
            dim,
            weights: vec![0.0; c * dim],
            bias: vec![0.0; c],
        }
    }

    pub fn from_parts(taxonomy: Arc<ClassTaxonomy>, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let c = taxonomy.len();
        if weights.len() != c * dim {
            return Err(Error::Dimension { expected: c * dim, actual: weights.len() });
        }
        if bias.len() != c {
            return Err(Error::Dimension { expected: c, actual: bias.len() });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(Self { taxonomy, dim, weights, bias })
    }

    pub fn taxonomy(&self) -> &Arc<ClassTaxonomy> {
        &self.taxonomy
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-softmax scores, row-major `rows x classes`.
    pub fn logits(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.dim != self.dim {
            return Err(Error::Dimension { expected: self.dim, actual: features.dim });
        }
        let c = self.classes();
        let mut out = Vec::with_capacity(features.rows * c);
        for i in 0..features.rows {
            let x = features.row(i);
            for j in 0..c {
                let w = &self.weights[j * self.dim..(j + 1) * self.dim];
                out.push(self.bias[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Ok(out)
    }

    /// `W -= lr * sum_i g_i x_i^T`, `b -= lr * sum_i g_i`, where `grad` is
    /// the loss gradient with respect to the logits.
    pub fn step(&mut self, features: &FeatureMatrix, grad: &[f64], lr: f64) {
        let (gw, gb) = self.param_gradient(features, grad);
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }

    /// Gradients of the weights and bias from the logit gradient.
    pub fn param_gradient(&self, features: &FeatureMatrix, grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.classes();
        assert_eq!(grad.len(), features.rows * c, "gradient shape");
        let mut gw = vec![0.0; c * self.dim];
        let mut gb = vec![0.0; c];
        for i in 0..features.rows {
            let x = features.row(i);
            for j in 0..c {
                let g = grad[i * c + j];
                if g == 0.0 {
                    continue;
                }
                gb[j] += g;
                for (w, xv) in gw[j * self.dim..(j + 1) * self.dim].iter_mut().zip(x) {
                    *w += g * xv;
                }
            }
        }
        (gw, gb)
    }

    /// Checkpoint bytes: `SEGMODEL d=<d> c=<c> taxonomy=<name>\n` followed
    /// by the weights row-major and the bias as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("SEGMODEL d={} c={} taxonomy={}\n", self.dim, self.classes(), self.taxonomy.name()).into_bytes();
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse a checkpoint written for `taxonomy`.
    pub fn from_bytes(bytes: &[u8], taxonomy: Arc<ClassTaxonomy>, source: &str) -> Result<Self> {
        let err = |loc, msg: &str| Error::Parse {
            source_name: source.to_string(),
            location: loc,
            message: msg.to_string(),
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(ParseLocation::Line(1), "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| err(ParseLocation::Line(1), "header is not UTF-8"))?;
        let mut words = header.split(' ');
        if words.next() != Some("SEGMODEL") {
            return Err(err(ParseLocation::Line(1), "not a model checkpoint"));
        }
        let (mut d, mut c, mut name) = (None, None, None);
        for w in words {
            match w.split_once('=') {
                Some(("d", v)) => d = v.parse::<usize>().ok(),
                Some(("c", v)) => c = v.parse::<usize>().ok(),
                Some(("taxonomy", v)) => name = Some(v),
                _ => return Err(err(ParseLocation::Line(1), "unexpected header field")),
            }
        }
        let (Some(d), Some(c), Some(name)) = (d, c, name) else {
            return Err(err(ParseLocation::Line(1), "header needs d, c and taxonomy"));
        };
        if name != taxonomy.name() || c != taxonomy.len() {
            return Err(Error::InvalidTaxonomy(format!(
                "checkpoint is for `{name}` with {c} classes, expected `{}` with {}",
                taxonomy.name(),
                taxonomy.len()
            )));
        }
        let body = &bytes[nl + 1..];
        let want = (c * d + c) * 8;
        if body.len() != want {
            return Err(err(
                ParseLocation::Byte((nl + 1 + body.len().min(want)) as u64),
                &format!("expected {want} parameter bytes, found {}", body.len()),
            ));
        }
        let vals: Vec<f64> = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let bias = vals[c * d..].to_vec();
        let mut weights = vals;
        weights.truncate(c * d);
        Self::from_parts(taxonomy, d, weights, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: Arc<ClassTaxonomy>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, taxonomy, &path.display().to_string())
    }
}

/// Row-wise softmax of `rows x classes` logits, max-subtracted.
pub fn softmax_rows(logits: &[f64], classes: usize) -> ScoreMatrix {
    let mut data = logits.to_vec();
    for row in data.chunks_exact_mut(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    ScoreMatrix::from_raw(logits.len() / classes, classes, data)
}

/// Class probabilities for every feature row.
pub fn forward_scores(model: &SegmenterModel, features: &FeatureMatrix) -> Result<ScoreMatrix> {
    Ok(softmax_rows(&model.logits(features)?, model.classes()))
}

/// Mean negative log-likelihood over rows whose label is a class, with
/// probabilities clamped at 1e-12, and its gradient with respect to the
/// logits: `(S - onehot) / n` on those rows, zero on the others.
pub fn cross_entropy(scores: &ScoreMatrix, labels: &[Label]) -> Result<(f64, Vec<f64>)> {
    if labels.len() != scores.rows() {
        return Err(Error::Dimension { expected: scores.rows(), actual: labels.len() });
    }
    let c = scores.classes();
    let n = labels.iter().filter(|&&l| (l as usize) < c).count();
    if n == 0 {
        return Err(Error::NoSupervision);
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.as_slice().len()];
    for (i, &l) in labels.iter().enumerate() {
        let l = l as usize;
        if l >= c {
            continue;
        }
        let row = scores.row(i);
        loss -= row[l].max(1e-12).ln();
        for j in 0..c {
            grad[i * c + j] = (row[j] - if j == l { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Argmax class of every point of a cloud.
pub fn predict(model: &SegmenterModel, cloud: &crate::cloud::LabeledPointCloud, features: &FeatureConfig) -> Result<Vec<Label>> {
    Ok(forward_scores(model, &extract_features(cloud, features)?)?.predictions())
}
