//! Empirical populations: distinct observed feature vectors with their
//! counts and synthetic mean potential outcomes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureValue;
use crate::population::{make_population, CovariatePoint, PopulationModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalUnit {
    pub features: Vec<FeatureValue>,
    pub count: u64,
    pub mu0: f64,
    pub mu1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPopulation {
    pub feature_names: Vec<String>,
    pub units: Vec<EmpiricalUnit>,
}

impl EmpiricalPopulation {
    /// Groups identical feature vectors, keeping first-appearance order and
    /// summing counts. Rows sharing a feature vector must share outcomes.
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: impl IntoIterator<Item = (Vec<FeatureValue>, f64, f64)>,
    ) -> Result<Self> {
        let mut index: HashMap<Vec<FeatureValue>, usize> = HashMap::new();
        let mut units: Vec<EmpiricalUnit> = Vec::new();
        for (features, mu0, mu1) in rows {
            if features.len() != feature_names.len() {
                return Err(Error::LengthMismatch {
                    what: "feature vector",
                    expected: feature_names.len(),
                    got: features.len(),
                });
            }
            match index.get(&features) {
                Some(&i) => units[i].count += 1,
                None => {
                    index.insert(features.clone(), units.len());
                    units.push(EmpiricalUnit {
                        features,
                        count: 1,
                        mu0,
                        mu1,
                    });
                }
            }
        }
        if units.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            feature_names,
            units,
        })
    }

    pub fn total(&self) -> u64 {
        self.units.iter().map(|u| u.count).sum()
    }

    fn probs(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.units.iter().map(|u| u.count as f64 / n).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Full-information model: every distinct feature vector is its own
    /// observed covariate value.
    pub fn to_population_model(&self) -> Result<PopulationModel> {
        PopulationModel::from_x_table(
            self.probs(),
            self.units.iter().map(|u| u.mu0).collect(),
            self.units.iter().map(|u| u.mu1).collect(),
            self.total(),
        )
    }

    /// Joint model in which the principal observes only the `known`
    /// features. The observed value is the projection onto `known`; the
    /// agent's extra information is the identity of the full vector.
    pub fn joint_model(&self, known: &[usize]) -> Result<PopulationModel> {
        for &k in known {
            if k >= self.feature_names.len() {
                return Err(Error::MissingFeature(format!("#{k}")));
            }
        }
        let mut x_index: HashMap<Vec<&FeatureValue>, usize> = HashMap::new();
        let mut support = Vec::with_capacity(self.units.len());
        for (u_id, unit) in self.units.iter().enumerate() {
            let key: Vec<&FeatureValue> = known.iter().map(|&k| &unit.features[k]).collect();
            let next = x_index.len();
            let x_id = *x_index.entry(key).or_insert(next);
            support.push(CovariatePoint::xu(x_id, u_id));
        }
        make_population(
            support,
            self.probs(),
            self.units.iter().map(|u| u.mu0).collect(),
            self.units.iter().map(|u| u.mu1).collect(),
            self.total(),
        )
    }
}
