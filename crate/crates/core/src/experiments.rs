//! End-to-end clinical pipelines: fit an outcome model, treat its
//! predictions as the true potential outcomes, and compare reward
//! functions on the resulting empirical population.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymmetry::{
    asym_regret, feature_curve, importance_order, marginalize_mu0, single_feature_scores,
    CurvePoint, FeatureScore,
};
use crate::datasets::{
    build_empirical_population, load_horse_colic, load_ist, validate_ist_cohort, Dataset,
    ImputationStrategy,
};
use crate::empirical::EmpiricalPopulation;
use crate::error::{Error, Result};
use crate::glm::{fit_linear, fit_logistic, one_hot_encode, Diagnostics, FitResult};
use crate::population::{Mu0Estimator, PolicyClass};
use crate::response::regret;
use crate::rewards::{RewardKind, RewardSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    HorseColic,
    Ist,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::HorseColic => "horse-colic",
            DatasetKind::Ist => "ist",
        }
    }

    /// Features the principal conditions on in the demographic row.
    pub fn demographic_features(self) -> &'static [&'static str] {
        match self {
            DatasetKind::HorseColic => &["age"],
            DatasetKind::Ist => &["AGE", "SEX"],
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "horse-colic" => Some(DatasetKind::HorseColic),
            "ist" => Some(DatasetKind::Ist),
            _ => None,
        }
    }
}

/// Environment variable naming the directory that holds the raw data files.
pub const DATA_DIR_ENV: &str = "METRIC_FORGE_DATA_DIR";

impl DatasetKind {
    pub fn file_name(self) -> &'static str {
        match self {
            DatasetKind::HorseColic => "horse-colic.data",
            DatasetKind::Ist => "IST_corrected.csv",
        }
    }

    /// `$METRIC_FORGE_DATA_DIR/<file>`, falling back to `./data/<file>`.
    pub fn default_path(self) -> PathBuf {
        let dir = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        dir.join(self.file_name())
    }
}

/// Loads a raw dataset. Trial extracts are checked against the expected
/// cohort unless `check_cohort` is off.
pub fn load_dataset(
    kind: DatasetKind,
    path: &Path,
    imputation: ImputationStrategy,
    check_cohort: bool,
) -> Result<Dataset> {
    match kind {
        DatasetKind::HorseColic => load_horse_colic(path, imputation),
        DatasetKind::Ist => {
            let ds = load_ist(path, imputation)?;
            if check_cohort {
                validate_ist_cohort(&ds)?;
            }
            Ok(ds)
        }
    }
}

/// A fitted outcome model together with the population it induces. This is
/// what `fit` writes and `evaluate` can read back without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub dataset: DatasetKind,
    pub imputation: ImputationStrategy,
    pub ridge: f64,
    pub rows: usize,
    pub treatment_rate: f64,
    pub fit: FitResult,
    pub population: EmpiricalPopulation,
}

/// Fits the dataset's outcome model (logistic for the ±1 Horse Colic
/// outcome, linear for the composite stroke score) and builds the
/// full-information population.
pub fn fit_pipeline(
    kind: DatasetKind,
    data: &Dataset,
    imputation: ImputationStrategy,
    ridge: f64,
) -> Result<ModelArtifact> {
    let design = one_hot_encode(&data.rows, &data.schema)?;
    let t = data.treatments();
    let y = data.outcomes();
    let fit = match kind {
        DatasetKind::HorseColic => fit_logistic(&design, &t, &y, ridge)?,
        DatasetKind::Ist => fit_linear(&design, &t, &y)?,
    };
    let population = build_empirical_population(&data.rows, &fit)?;
    Ok(ModelArtifact {
        dataset: kind,
        imputation,
        ridge,
        rows: data.rows.len(),
        treatment_rate: data.treatment_rate(),
        fit,
        population,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTableRow {
    pub reward: String,
    pub utility: f64,
    pub regret: f64,
    pub treat_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub dataset: DatasetKind,
    pub rows_in_data: usize,
    pub treatment_rate_in_data: f64,
    /// Units whose fitted effect is positive.
    pub benefiting: u64,
    pub optimal_utility: f64,
    pub diagnostics: Diagnostics,
    pub fit_converged: bool,
    pub table: Vec<RewardTableRow>,
}

impl RewardTable {
    pub fn row(&self, reward: &str) -> Option<&RewardTableRow> {
        self.table.iter().find(|r| r.reward == reward)
    }
}

pub const NO_INFO_ROW: &str = "TT (no info)";
pub const DEMOGRAPHIC_ROW: &str = "TT (demographic info)";

fn feature_indices(pop: &EmpiricalPopulation, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            pop.feature_index(n)
                .ok_or_else(|| Error::MissingFeature(n.to_string()))
        })
        .collect()
}

/// Utility, regret and treatment rate of the agent's best response for
/// each reward, plus total effect with a coarser untreated estimate.
pub fn reward_table(
    pop: &EmpiricalPopulation,
    demographic: &[usize],
) -> Result<Vec<RewardTableRow>> {
    let model = pop.to_population_model()?;
    let exact = Mu0Estimator::auxiliary(model.mu0().to_vec())?;
    let class = PolicyClass::Unconstrained;
    let mut rows = Vec::new();
    for kind in [
        RewardKind::Ato,
        RewardKind::Att,
        RewardKind::To,
        RewardKind::Tt,
    ] {
        let spec = RewardSpec::new(kind, kind.needs_estimator().then(|| exact.clone()), None)?;
        let r = regret(&spec, &model, &class)?;
        rows.push(RewardTableRow {
            reward: kind.label().to_string(),
            utility: r.utility,
            regret: r.regret,
            treat_rate: r.best_response.treated_mass(&model),
        });
    }
    for (label, known) in [(NO_INFO_ROW, &[][..]), (DEMOGRAPHIC_ROW, demographic)] {
        let joint = pop.joint_model(known)?;
        let r = asym_regret(&joint, &marginalize_mu0(&joint)?)?;
        rows.push(RewardTableRow {
            reward: label.to_string(),
            utility: r.utility,
            regret: r.regret,
            treat_rate: r.treat_rate,
        });
    }
    Ok(rows)
}

pub fn evaluate(artifact: &ModelArtifact) -> Result<RewardTable> {
    let pop = &artifact.population;
    let demographic = feature_indices(pop, artifact.dataset.demographic_features())?;
    let table = reward_table(pop, &demographic)?;
    let benefiting = pop
        .units
        .iter()
        .filter(|u| u.mu1 - u.mu0 > 0.0)
        .map(|u| u.count)
        .sum();
    let optimal_utility = pop
        .units
        .iter()
        .map(|u| (u.mu1 - u.mu0).max(0.0) * u.count as f64)
        .sum::<f64>()
        / pop.total() as f64;
    Ok(RewardTable {
        dataset: artifact.dataset,
        rows_in_data: artifact.rows,
        treatment_rate_in_data: artifact.treatment_rate,
        benefiting,
        optimal_utility,
        diagnostics: artifact.fit.diagnostics,
        fit_converged: artifact.fit.converged,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub dataset: DatasetKind,
    pub single_feature: Vec<FeatureScore>,
    /// Feature names, most important first.
    pub order: Vec<String>,
    pub curve: Vec<CurvePoint>,
    /// Curve point at half the features.
    pub half: CurvePoint,
}

impl CurveReport {
    pub fn no_info_regret(&self) -> f64 {
        self.curve[0].regret
    }

    /// Single features that leave the principal worse off than knowing
    /// nothing.
    pub fn amplifying_features(&self) -> Vec<&FeatureScore> {
        let base = self.no_info_regret();
        self.single_feature
            .iter()
            .filter(|s| s.regret > base)
            .collect()
    }
}

pub fn curve(artifact: &ModelArtifact) -> Result<CurveReport> {
    let pop = &artifact.population;
    let single = single_feature_scores(pop)?;
    let order = importance_order(&single);
    let curve = feature_curve(pop, &order)?;
    let half = curve[order.len() / 2].clone();
    Ok(CurveReport {
        dataset: artifact.dataset,
        order: order
            .iter()
            .map(|&k| pop.feature_names[k].clone())
            .collect(),
        single_feature: single,
        curve,
        half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::ClinicalRow;
    use crate::features::{FeatureSpec, FeatureValue};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = (0..400)
            .map(|_| {
                let age = rng.gen_range(20.0..90.0f64).round();
                let sex = if rng.gen::<bool>() { "M" } else { "F" };
                let grade = ["a", "b", "c"][rng.gen_range(0..3)];
                let t = rng.gen::<f64>() < 0.33;
                let effect = if grade == "a" { 1.0 } else { -0.5 };
                let y = 0.02 * age + if t { effect } else { 0.0 } + rng.gen::<f64>();
                ClinicalRow {
                    features: [
                        ("AGE".to_string(), FeatureValue::Number(age)),
                        ("SEX".to_string(), FeatureValue::category(sex)),
                        ("GRADE".to_string(), FeatureValue::category(grade)),
                    ]
                    .into_iter()
                    .collect(),
                    treatment: t,
                    outcome: y,
                }
            })
            .collect();
        Dataset {
            name: "synthetic".into(),
            schema: vec![
                FeatureSpec::numeric("AGE"),
                FeatureSpec::categorical("SEX"),
                FeatureSpec::categorical("GRADE"),
            ],
            rows,
            stats: Default::default(),
        }
    }

    #[test]
    fn table_structure_on_synthetic_trial() {
        let data = synthetic();
        let art = fit_pipeline(DatasetKind::Ist, &data, ImputationStrategy::Median, 0.0).unwrap();
        let rep = evaluate(&art).unwrap();
        assert_eq!(rep.table.len(), 6);
        let tt = rep.row("TT").unwrap();
        assert_eq!(tt.regret, 0.0);
        assert!((tt.utility - rep.optimal_utility).abs() < 1e-12);
        let ato = rep.row("ATO").unwrap();
        assert!(ato.regret >= tt.regret);
        for r in &rep.table {
            assert!(r.regret >= -1e-12, "{r:?}");
            assert!((-1e-12..=1.0 + 1e-12).contains(&r.treat_rate));
        }

        let json = serde_json::to_string(&art).unwrap();
        let back: ModelArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(evaluate(&back).unwrap(), rep);
    }

    #[test]
    fn curve_ends_at_zero_regret() {
        let art = fit_pipeline(
            DatasetKind::Ist,
            &synthetic(),
            ImputationStrategy::Median,
            0.0,
        )
        .unwrap();
        let c = curve(&art).unwrap();
        assert_eq!(c.curve.len(), 4);
        assert_eq!(c.curve.last().unwrap().regret, 0.0);
        assert_eq!(c.curve.last().unwrap().gamma_marg, 0.0);
        assert_eq!(c.half.prefix_size, 1);
    }
}
