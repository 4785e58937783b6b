//! Regression-tree ensembles used as surrogate performance models.

mod forest;
mod gbdt;
mod metrics;
mod model_file;
mod tree;
mod tuning;

pub use forest::RandomForestModel;
pub use gbdt::GbdtModel;
pub use metrics::{evaluate, quality, spearman, QualityReport};
pub use model_file::{ModelFile, MODEL_FORMAT};
pub use tree::{Node, RegressionTree};
pub use tuning::{hyperparameter_grid, tune_hyperparameters, TrialResult, TuningOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Vec<T>,
    n_rows: usize,
    n_cols: usize,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn with_capacity(n_cols: usize, rows: usize) -> Self {
        FeatureMatrix { data: Vec::with_capacity(n_cols * rows), n_rows: 0, n_cols }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut m = FeatureMatrix::with_capacity(n_cols, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::WidthMismatch { expected: self.n_cols, actual: row.len() });
        }
        self.data.extend_from_slice(row);
        self.n_rows += 1;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// Rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut m = FeatureMatrix::with_capacity(self.n_cols, indices.len());
        for &i in indices {
            m.data.extend_from_slice(self.row(i));
            m.n_rows += 1;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "gbdt")]
    Gbdt,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(Algorithm::RandomForest),
            "gbdt" => Ok(Algorithm::Gbdt),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm {s:?} (rf|gbdt)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RandomForest => "rf",
            Algorithm::Gbdt => "gbdt",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fit-time settings for both ensemble kinds. Fields that do not apply to
/// an algorithm are ignored by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub algorithm: Algorithm,
    /// `None` grows trees until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub n_trees: usize,
    /// Features considered per split (random forest). `None` means `ceil(d/3)`.
    pub max_features: Option<usize>,
    /// Draw a bootstrap sample per tree (random forest). Disabling it is a diagnostic.
    pub bootstrap: bool,
    pub learning_rate: f64,
    /// Fraction of rows sampled without replacement per boosting round.
    pub subsample: f64,
    pub seed: u64,
}

impl HyperParams {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::RandomForest => HyperParams {
                algorithm,
                max_depth: None,
                min_samples_leaf: 1,
                min_samples_split: 2,
                n_trees: 200,
                max_features: None,
                bootstrap: true,
                learning_rate: 1.0,
                subsample: 1.0,
                seed: 0,
            },
            Algorithm::Gbdt => HyperParams {
                algorithm,
                max_depth: Some(4),
                min_samples_leaf: 5,
                min_samples_split: 2,
                n_trees: 400,
                max_features: None,
                bootstrap: false,
                learning_rate: 0.1,
                subsample: 1.0,
                seed: 0,
            },
        }
    }

    /// A single deep tree over all `d` features: no bootstrap, unlimited
    /// depth, one sample per leaf.
    pub fn single_tree(d: usize) -> Self {
        HyperParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(d),
            ..HyperParams::default_for(Algorithm::RandomForest)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Features tried per split for `d` input columns.
    pub fn features_per_split(&self, d: usize) -> usize {
        match self.algorithm {
            Algorithm::Gbdt => d,
            Algorithm::RandomForest => self.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1)),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.min_samples_leaf < 1 || self.min_samples_split < 1 {
            return bad("min_samples_leaf and min_samples_split must be ≥ 1".into());
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be ≥ 1 (or unlimited)".into());
        }
        match self.algorithm {
            Algorithm::RandomForest => {
                if self.n_trees < 1 {
                    return bad("a random forest needs at least one tree".into());
                }
                if let Some(m) = self.max_features {
                    if m < 1 || m > d {
                        return bad(format!("max_features {m} outside 1..={d}"));
                    }
                }
            }
            Algorithm::Gbdt => {
                if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
                    return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
                }
                if !(self.subsample > 0.0 && self.subsample <= 1.0) {
                    return bad(format!("subsample {} outside (0, 1]", self.subsample));
                }
            }
        }
        Ok(())
    }
}

/// Anything that maps a feature vector to a prediction.
pub trait Predictor<T: Scalar> {
    fn n_features(&self) -> usize;

    /// Prediction for a row that is known to have the right width.
    fn predict_unchecked(&self, x: &[T]) -> T;

    fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), actual: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_matrix(&self, m: &FeatureMatrix<T>) -> Result<Vec<T>> {
        if m.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), actual: m.n_cols() });
        }
        Ok(m.rows().map(|r| self.predict_unchecked(r)).collect())
    }
}

/// A fitted surrogate of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
pub enum Surrogate<T> {
    RandomForest(RandomForestModel<T>),
    Gbdt(GbdtModel<T>),
}

impl<T: Scalar> Surrogate<T> {
    pub fn fit(features: &FeatureMatrix<T>, targets: &[T], params: &HyperParams) -> Result<Self> {
        Ok(match params.algorithm {
            Algorithm::RandomForest => Surrogate::RandomForest(RandomForestModel::fit(features, targets, params)?),
            Algorithm::Gbdt => Surrogate::Gbdt(GbdtModel::fit(features, targets, params)?),
        })
    }

    pub fn hyperparams(&self) -> &HyperParams {
        match self {
            Surrogate::RandomForest(m) => m.hyperparams(),
            Surrogate::Gbdt(m) => m.hyperparams(),
        }
    }
}

impl<T: Scalar> Predictor<T> for Surrogate<T> {
    fn n_features(&self) -> usize {
        match self {
            Surrogate::RandomForest(m) => m.n_features(),
            Surrogate::Gbdt(m) => m.n_features(),
        }
    }

    fn predict_unchecked(&self, x: &[T]) -> T {
        match self {
            Surrogate::RandomForest(m) => m.predict_unchecked(x),
            Surrogate::Gbdt(m) => m.predict_unchecked(x),
        }
    }
}

fn check_training_input<T: Scalar>(features: &FeatureMatrix<T>, targets: &[T]) -> Result<()> {
    if features.n_rows() == 0 {
        return Err(Error::InvalidArgument("cannot fit on an empty training set".into()));
    }
    if features.n_rows() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} targets",
            features.n_rows(),
            targets.len()
        )));
    }
    if features.n_cols() == 0 {
        return Err(Error::InvalidArgument("feature rows are empty".into()));
    }
    if features.data.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training data contains non-finite values".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_basics() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.select(&[1, 1]).row(0), &[3.0, 4.0]);
        assert!(FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        let rf = HyperParams::default_for(Algorithm::RandomForest);
        assert!(rf.validate(11).is_ok());
        assert_eq!(rf.features_per_split(11), 4);
        assert_eq!(rf.features_per_split(7), 3);
        assert!(HyperParams { n_trees: 0, ..rf }.validate(11).is_err());
        assert!(HyperParams { max_features: Some(12), ..rf }.validate(11).is_err());
        assert!(HyperParams { min_samples_leaf: 0, ..rf }.validate(11).is_err());

        let gb = HyperParams::default_for(Algorithm::Gbdt);
        assert!(gb.validate(11).is_ok());
        assert!(HyperParams { n_trees: 0, ..gb }.validate(11).is_ok());
        assert!(HyperParams { learning_rate: 0.0, ..gb }.validate(11).is_err());
        assert!(HyperParams { learning_rate: 1.5, ..gb }.validate(11).is_err());
        assert!(HyperParams { subsample: 0.0, ..gb }.validate(11).is_err());
    }

    #[test]
    fn rejects_bad_training_input() {
        let empty: FeatureMatrix<f64> = FeatureMatrix::with_capacity(3, 0);
        let p = HyperParams::default_for(Algorithm::Gbdt);
        assert!(Surrogate::fit(&empty, &[], &p).is_err());
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        assert!(Surrogate::fit(&m, &[1.0, 2.0], &p).is_err());
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Surrogate::fit(&m, &[1.0], &p).is_err());
    }
}
