//! Gradient-boosted regression trees under squared-error loss.
//!
//! Start from the mean target; each round fits a tree to the current
//! residuals (the negative gradient) and adds it scaled by the learning rate.

use serde::{Deserialize, Serialize};

use super::tree::{grow_all_features, BinnedMatrix, GrowSettings};
use super::{check_training_input, Algorithm, FeatureMatrix, HyperParams, Predictor, RegressionTree};
use crate::error::Result;
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GbdtModel<T> {
    params: HyperParams,
    n_features: usize,
    init_value: T,
    learning_rate: T,
    trees: Vec<RegressionTree<T>>,
}

impl<T: Scalar> GbdtModel<T> {
    pub fn fit(features: &FeatureMatrix<T>, targets: &[T], params: &HyperParams) -> Result<Self> {
        Ok(Self::fit_with_history(features, targets, params)?.0)
    }

    /// Also returns the training MSE before the first round and after each round.
    pub fn fit_with_history(features: &FeatureMatrix<T>, targets: &[T], params: &HyperParams) -> Result<(Self, Vec<T>)> {
        check_training_input(features, targets)?;
        let d = features.n_cols();
        let params = HyperParams { algorithm: Algorithm::Gbdt, ..*params };
        params.validate(d)?;
        let n = features.n_rows();
        let n_t = T::from_usize_lossy(n);
        let binned = BinnedMatrix::new(features);
        let settings = GrowSettings::new(&params, d);
        let nu = T::from_f64_lossy(params.learning_rate);
        let init = targets.iter().copied().sum::<T>() / n_t;
        let mut pred = vec![init; n];
        let mut residual = vec![T::zero(); n];
        let mse = |pred: &[T]| pred.iter().zip(targets).map(|(p, y)| (*y - *p) * (*y - *p)).sum::<T>() / n_t;
        let mut history = vec![mse(&pred)];
        let mut trees = Vec::with_capacity(params.n_trees);
        let n_sample = ((params.subsample * n as f64).round() as usize).clamp(1, n);

        for round in 0..params.n_trees {
            for i in 0..n {
                residual[i] = targets[i] - pred[i];
            }
            let mut rng = SplitMix64::new(derive_seed(params.seed, round as u64));
            let rows = if n_sample < n {
                let mut perm = rng.permutation(n);
                perm.truncate(n_sample);
                perm.sort_unstable();
                perm
            } else {
                (0..n).collect()
            };
            let tree = grow_all_features(&binned, &residual, rows, &settings);
            for (i, p) in pred.iter_mut().enumerate() {
                *p += nu * tree.predict_unchecked(features.row(i));
            }
            history.push(mse(&pred));
            trees.push(tree);
        }

        Ok((GbdtModel { params, n_features: d, init_value: init, learning_rate: nu, trees }, history))
    }

    pub fn init_value(&self) -> T {
        self.init_value
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.params
    }

    pub(crate) fn structurally_valid(&self) -> bool {
        self.init_value.is_finite()
            && self.trees.iter().all(|t| t.n_features() == self.n_features && t.structurally_valid())
    }
}

impl<T: Scalar> Predictor<T> for GbdtModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    // Same accumulation order as training so in-sample predictions match bit for bit.
    fn predict_unchecked(&self, x: &[T]) -> T {
        let mut acc = self.init_value;
        for t in &self.trees {
            acc += self.learning_rate * t.predict_unchecked(x);
        }
        acc
    }
}
