//! Regression quality measures.

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Predictor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// MAE and RMSE in target units; `mae_pct = 100 * mae / mean(targets)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mae: f64,
    pub mae_pct: f64,
    pub rmse: f64,
    pub n_test: usize,
}

impl QualityReport {
    /// Single-line JSON record `{"mae":..,"mae_pct":..,"rmse":..,"n_test":..}`.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

pub fn quality<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<QualityReport> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty test set".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let (mut abs, mut sq, mut sum) = (0.0, 0.0, 0.0);
    for (p, y) in predictions.iter().zip(targets) {
        let (p, y) = (p.as_f64(), y.as_f64());
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        sum += y;
    }
    let mae = abs / n;
    let mean = sum / n;
    Ok(QualityReport { mae, mae_pct: 100.0 * mae / mean, rmse: (sq / n).sqrt(), n_test: targets.len() })
}

pub fn evaluate<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    features: &FeatureMatrix<T>,
    targets: &[T],
) -> Result<QualityReport> {
    if features.n_rows() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} targets",
            features.n_rows(),
            targets.len()
        )));
    }
    let preds = model.predict_matrix(features)?;
    quality(&preds, targets)
}

/// Average ranks (1-based, ties share the mean rank).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length series of ≥ 2 values".into()));
    }
    let ra = ranks(&a.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    let rb = ranks(&b.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}
