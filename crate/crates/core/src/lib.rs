//! Surrogate-model auto-tuning for Cassandra-style key-value store configurations.
//!
//! The pipeline: describe the tuning domain ([`domain`]), collect training
//! examples from a benchmark backend ([`harness`], with [`oracle`] as a
//! closed-form stand-in for a cluster), fit a tree-ensemble surrogate
//! ([`surrogate`]) and search it for the best knob settings ([`optimizer`]).
//! [`experiments`] wires these into the learning-curve, subdomain, tuning
//! and comparison protocols.
//!
//! Models and searches are generic over the scalar type ([`Scalar`], `f32`
//! or `f64`); the aliases below fix it to `f64`, with `*32` variants for `f32`.

pub mod dataset;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod surrogate;

pub use dataset::{Dataset, DatasetSummary, TrainingExample};
pub use domain::{ConfigurationPoint, Param, Physical, SubdomainId, SubdomainSpec, TuningDomain, Workload};
pub use error::{Error, Result};
pub use oracle::{Metrics, OracleParams, SyntheticOracle, Target};
pub use rng::SplitMix64;
pub use scalar::Scalar;
pub use surrogate::{Algorithm, HyperParams, Predictor, QualityReport};

pub type Tree = surrogate::RegressionTree<f64>;
pub type RandomForest = surrogate::RandomForestModel<f64>;
pub type Gbdt = surrogate::GbdtModel<f64>;
pub type Model = surrogate::Surrogate<f64>;
pub type Model32 = surrogate::Surrogate<f32>;
pub type ModelFile = surrogate::ModelFile<f64>;
pub type ModelFile32 = surrogate::ModelFile<f32>;
pub type FeatureMatrix = surrogate::FeatureMatrix<f64>;
pub type FeatureMatrix32 = surrogate::FeatureMatrix<f32>;
pub type FeatureVector = domain::FeatureVector<f64>;
pub type TuningResult = optimizer::TuningResult<f64>;
