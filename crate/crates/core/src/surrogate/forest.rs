//! Bagged regression trees with per-node random feature subsets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, BinnedMatrix, GrowSettings};
use super::{check_training_input, FeatureMatrix, HyperParams, Predictor, RegressionTree};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForestModel<T> {
    params: HyperParams,
    max_features: usize,
    n_features: usize,
    trees: Vec<RegressionTree<T>>,
}

impl<T: Scalar> RandomForestModel<T> {
    /// Tree `t` draws its bootstrap sample and feature subsets from the
    /// stream `derive_seed(seed, t)`, so the result does not depend on how
    /// many threads fit the trees.
    pub fn fit(features: &FeatureMatrix<T>, targets: &[T], params: &HyperParams) -> Result<Self> {
        check_training_input(features, targets)?;
        let d = features.n_cols();
        params.validate(d)?;
        if params.n_trees < 1 {
            return Err(Error::InvalidArgument("a random forest needs at least one tree".into()));
        }
        let max_features = params.features_per_split(d);
        let settings = GrowSettings::new(params, max_features);
        let binned = BinnedMatrix::new(features);
        let n = features.n_rows();

        let trees = (0..params.n_trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = SplitMix64::new(derive_seed(params.seed, t));
                if params.bootstrap {
                    let mut weights = vec![0u32; n];
                    for _ in 0..n {
                        weights[rng.below(n)] += 1;
                    }
                    let rows = (0..n).filter(|&r| weights[r] > 0).collect();
                    grow(&binned, targets, rows, Some(&weights), &settings, &mut rng)
                } else {
                    grow(&binned, targets, (0..n).collect(), None, &settings, &mut rng)
                }
            })
            .collect();

        Ok(RandomForestModel { params: *params, max_features, n_features: d, trees })
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.params
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub(crate) fn structurally_valid(&self) -> bool {
        !self.trees.is_empty()
            && self.trees.iter().all(|t| t.n_features() == self.n_features && t.structurally_valid())
    }
}

impl<T: Scalar> Predictor<T> for RandomForestModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        sum / T::from_usize_lossy(self.trees.len())
    }
}
