//! On-disk surrogate document: the fitted ensemble plus the metadata needed
//! to rebuild feature vectors and judge whether a request extrapolates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Predictor, QualityReport, Surrogate};
use crate::domain::{ConfigurationPoint, Physical, SubdomainSpec, TuningDomain, Workload};
use crate::error::{Error, Result};
use crate::oracle::Target;
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "kvtune-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelFile<T> {
    pub format: String,
    pub target: Target,
    pub subdomain: SubdomainSpec,
    /// Feature column names in vector order.
    pub columns: Vec<String>,
    pub disks: u32,
    pub heap_mb: u32,
    pub scalar: String,
    /// Every (workload, physical design) pair seen during fitting.
    pub training_contexts: Vec<(Workload, Physical)>,
    pub n_train: usize,
    /// Holdout quality recorded at training time, if any.
    pub validation: Option<QualityReport>,
    pub model: Surrogate<T>,
}

impl<T: Scalar> ModelFile<T> {
    pub fn new(
        domain: &TuningDomain,
        target: Target,
        subdomain: SubdomainSpec,
        training_contexts: impl IntoIterator<Item = (Workload, Physical)>,
        n_train: usize,
        validation: Option<QualityReport>,
        model: Surrogate<T>,
    ) -> Result<Self> {
        if model.n_features() != subdomain.width() {
            return Err(Error::WidthMismatch { expected: subdomain.width(), actual: model.n_features() });
        }
        let mut training_contexts: Vec<_> = training_contexts.into_iter().collect();
        training_contexts.sort();
        training_contexts.dedup();
        Ok(ModelFile {
            format: MODEL_FORMAT.to_string(),
            target,
            subdomain,
            columns: subdomain.columns().iter().map(|p| p.name().to_string()).collect(),
            disks: domain.disks(),
            heap_mb: domain.heap_mb(),
            scalar: scalar_name::<T>(),
            training_contexts,
            n_train,
            validation,
            model,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Peek at the tag first so a foreign document gets a useful message.
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("not JSON: {e}")))?;
        match raw.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => {}
            Some(other) => return Err(Error::ModelFormat(format!("unsupported format {other:?}"))),
            None => return Err(Error::ModelFormat("missing format tag".into())),
        }
        let file: ModelFile<T> = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ModelFormat(m));
        if self.scalar != scalar_name::<T>() {
            return bad(format!("stored as {}, loaded as {}", self.scalar, scalar_name::<T>()));
        }
        let expected: Vec<String> = self.subdomain.columns().iter().map(|p| p.name().to_string()).collect();
        if self.columns != expected {
            return bad(format!("column list {:?} does not match {}", self.columns, self.subdomain));
        }
        SubdomainSpec::new(self.subdomain.id, self.subdomain.fixed_workload, self.subdomain.fixed_physical)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        if self.model.n_features() != self.columns.len() {
            return bad(format!("model width {} but {} columns", self.model.n_features(), self.columns.len()));
        }
        if !self.model.structurally_valid() {
            return bad("malformed tree structure".into());
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<TuningDomain> {
        TuningDomain::cassandra(self.disks, self.heap_mb)
    }

    /// Predicts the target for a full configuration point admitted by the subdomain.
    pub fn predict_point(&self, domain: &TuningDomain, point: &ConfigurationPoint) -> Result<T> {
        let v = domain.encode::<T>(&self.subdomain, point)?;
        self.model.predict(v.as_slice())
    }

    /// True when this (workload, physical design) pair never occurred in training.
    pub fn is_extrapolation(&self, workload: Workload, physical: Physical) -> bool {
        self.training_contexts.binary_search(&(workload, physical)).is_err()
    }
}

impl<T: Scalar> Surrogate<T> {
    pub(crate) fn structurally_valid(&self) -> bool {
        match self {
            Surrogate::RandomForest(m) => m.structurally_valid(),
            Surrogate::Gbdt(m) => m.structurally_valid(),
        }
    }
}

fn scalar_name<T: Scalar>() -> String {
    std::any::type_name::<T>().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::harness::{generate_dataset, SamplingPlan, SyntheticBackend};
    use crate::oracle::OracleParams;
    use crate::surrogate::{Algorithm, HyperParams};

    fn fixture(alg: Algorithm) -> (TuningDomain, Dataset, ModelFile<f64>) {
        let d = TuningDomain::cassandra(1, 8192).unwrap();
        let backend = SyntheticBackend::new(d.clone(), OracleParams::default()).unwrap();
        let plan = SamplingPlan::reference(10, 3);
        let data = generate_dataset(&backend, &d, &plan).unwrap().dataset;
        let sub = SubdomainSpec::td1();
        let x = data.features::<f64>(&sub).unwrap();
        let y = data.targets::<f64>(Target::ReadLatency);
        let params = HyperParams { n_trees: 20, ..HyperParams::default_for(alg) }.with_seed(9);
        let model = Surrogate::fit(&x, &y, &params).unwrap();
        let file = ModelFile::new(&d, Target::ReadLatency, sub, data.contexts(), data.len(), None, model).unwrap();
        (d, data, file)
    }

    #[test]
    fn json_round_trip_is_exact() {
        for alg in [Algorithm::RandomForest, Algorithm::Gbdt] {
            let (d, data, file) = fixture(alg);
            let back = ModelFile::<f64>::from_json(&file.to_json()).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_json(), file.to_json());
            for e in data.examples() {
                let a = file.predict_point(&d, &e.point).unwrap();
                let b = back.predict_point(&d, &e.point).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn metadata_and_extrapolation() {
        let (_, _, file) = fixture(Algorithm::Gbdt);
        assert_eq!(file.columns.len(), 11);
        assert_eq!(file.columns[0], "wl_read_pct");
        assert_eq!(file.training_contexts.len(), 24);
        assert!(!file.is_extrapolation(Workload::READWRITE, Physical::new(4, 3).unwrap()));
        assert!(file.is_extrapolation(Workload::new(25, 75).unwrap(), Physical::new(4, 3).unwrap()));
        assert!(file.is_extrapolation(Workload::READWRITE, Physical::new(2, 1).unwrap()));
    }

    #[test]
    fn rejects_foreign_or_corrupt_documents() {
        let (_, _, file) = fixture(Algorithm::Gbdt);
        let json = file.to_json();
        assert!(ModelFile::<f64>::from_json("{}").is_err());
        assert!(ModelFile::<f64>::from_json(&json.replace(MODEL_FORMAT, "other/9")).is_err());
        assert!(ModelFile::<f32>::from_json(&json).is_err());
        // the first split now points at a column that does not exist
        assert!(ModelFile::<f64>::from_json(&json.replacen("\"feature\": ", "\"feature\": 99", 1)).is_err());
    }
}
