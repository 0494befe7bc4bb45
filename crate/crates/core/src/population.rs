//! Finite treatment populations.
//!
//! A [`PopulationModel`] is a probability table over covariate cells together
//! with the mean untreated and treated outcomes in each cell. Cells are indexed
//! by an observed covariate `x_id` and, in the information-asymmetry setting,
//! an additional `u_id` that only the agent sees.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance within which raw probabilities are accepted and renormalized.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CovariatePoint {
    pub x_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_id: Option<usize>,
}

impl CovariatePoint {
    pub fn x(x_id: usize) -> Self {
        Self { x_id, u_id: None }
    }

    pub fn xu(x_id: usize, u_id: usize) -> Self {
        Self {
            x_id,
            u_id: Some(u_id),
        }
    }
}

impl fmt::Display for CovariatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.u_id {
            Some(u) => write!(f, "(x{}, u{})", self.x_id, u),
            None => write!(f, "x{}", self.x_id),
        }
    }
}

/// Immutable population: covariate cells, their probabilities and mean
/// potential outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationDoc", into = "PopulationDoc")]
pub struct PopulationModel {
    support: Vec<CovariatePoint>,
    probs: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    n: u64,
    x_count: usize,
    u_count: Option<usize>,
    x_labels: Option<Vec<String>>,
    u_labels: Option<Vec<String>>,
    index: HashMap<CovariatePoint, usize>,
}

/// Wire form of a [`PopulationModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PopulationDoc {
    support: Vec<CovariatePoint>,
    probs: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_support: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u_support: Option<Vec<String>>,
}

impl TryFrom<PopulationDoc> for PopulationModel {
    type Error = Error;

    fn try_from(doc: PopulationDoc) -> Result<Self> {
        let model = make_population(doc.support, doc.probs, doc.mu0, doc.mu1, doc.n)?;
        model.with_labels(doc.x_support, doc.u_support)
    }
}

impl From<PopulationModel> for PopulationDoc {
    fn from(m: PopulationModel) -> Self {
        PopulationDoc {
            support: m.support,
            probs: m.probs,
            mu0: m.mu0,
            mu1: m.mu1,
            n: m.n,
            x_support: m.x_labels,
            u_support: m.u_labels,
        }
    }
}

/// Validates and builds a population model.
///
/// Probabilities summing to within [`PROB_SUM_TOLERANCE`] of one are
/// renormalized; anything further off is rejected. Sums already within
/// rounding error of one are kept as given so that loading is idempotent.
pub fn make_population(
    support: Vec<CovariatePoint>,
    probs: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    n: u64,
) -> Result<PopulationModel> {
    let len = support.len();
    if len == 0 {
        return Err(Error::EmptyDataset);
    }
    for (what, v) in [("probs", &probs), ("mu0", &mu0), ("mu1", &mu1)] {
        if v.len() != len {
            return Err(Error::LengthMismatch {
                what,
                expected: len,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
    }
    if n == 0 {
        return Err(Error::NonPositiveN);
    }
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, p)| **p < 0.0) {
        return Err(Error::NegativeProbability { index, value });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::ProbabilitySumOutOfTolerance { sum });
    }
    let rounding = 4.0 * f64::EPSILON * len as f64;
    let probs: Vec<f64> = if (sum - 1.0).abs() <= rounding {
        probs
    } else {
        probs.iter().map(|p| p / sum).collect()
    };

    let has_u = support[0].u_id.is_some();
    if support.iter().any(|p| p.u_id.is_some() != has_u) {
        return Err(Error::InconsistentSupport);
    }
    let mut index = HashMap::with_capacity(len);
    for (i, p) in support.iter().enumerate() {
        if index.insert(*p, i).is_some() {
            return Err(Error::DuplicatePoint(p.to_string()));
        }
    }
    let x_count = support.iter().map(|p| p.x_id).max().unwrap_or(0) + 1;
    let u_count = if has_u {
        support.iter().filter_map(|p| p.u_id).max().map(|m| m + 1)
    } else {
        None
    };

    Ok(PopulationModel {
        support,
        probs,
        mu0,
        mu1,
        n,
        x_count,
        u_count,
        x_labels: None,
        u_labels: None,
        index,
    })
}

impl PopulationModel {
    /// Builds an observed-covariates-only model with one cell per `x_id`.
    pub fn from_x_table(probs: Vec<f64>, mu0: Vec<f64>, mu1: Vec<f64>, n: u64) -> Result<Self> {
        let support = (0..probs.len()).map(CovariatePoint::x).collect();
        make_population(support, probs, mu0, mu1, n)
    }

    /// Attaches display labels for the X and U levels.
    pub fn with_labels(
        mut self,
        x_labels: Option<Vec<String>>,
        u_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(l) = &x_labels {
            if l.len() < self.x_count {
                return Err(Error::LengthMismatch {
                    what: "x_support",
                    expected: self.x_count,
                    got: l.len(),
                });
            }
            self.x_count = l.len();
        }
        if let Some(l) = &u_labels {
            let needed = self.u_count.ok_or(Error::InconsistentSupport)?;
            if l.len() < needed {
                return Err(Error::LengthMismatch {
                    what: "u_support",
                    expected: needed,
                    got: l.len(),
                });
            }
            self.u_count = Some(l.len());
        }
        self.x_labels = x_labels;
        self.u_labels = u_labels;
        Ok(self)
    }

    pub fn support(&self) -> &[CovariatePoint] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Number of observed covariate values (`max x_id + 1`, or the label count).
    pub fn x_count(&self) -> usize {
        self.x_count
    }

    pub fn u_count(&self) -> Option<usize> {
        self.u_count
    }

    pub fn has_unobserved(&self) -> bool {
        self.u_count.is_some()
    }

    pub fn x_labels(&self) -> Option<&[String]> {
        self.x_labels.as_deref()
    }

    pub fn index_of(&self, point: CovariatePoint) -> Option<usize> {
        self.index.get(&point).copied()
    }

    pub fn tau_at(&self, i: usize) -> f64 {
        self.mu1[i] - self.mu0[i]
    }

    pub fn taus(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect()
    }

    /// Same support and probabilities with new outcome tables.
    pub fn with_outcomes(&self, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        let mut m = make_population(self.support.clone(), self.probs.clone(), mu0, mu1, self.n)?;
        m.x_count = self.x_count;
        m.u_count = self.u_count;
        m.x_labels = self.x_labels.clone();
        m.u_labels = self.u_labels.clone();
        Ok(m)
    }

    /// Same model with a different population size.
    pub fn with_n(&self, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::NonPositiveN);
        }
        let mut m = self.clone();
        m.n = n;
        Ok(m)
    }

    /// Treated and untreated outcomes exchanged.
    pub fn swapped(&self) -> Self {
        let mut m = self.clone();
        std::mem::swap(&mut m.mu0, &mut m.mu1);
        m
    }
}

/// Conditional average treatment effect at a support point.
pub fn tau(model: &PopulationModel, point: CovariatePoint) -> Result<f64> {
    model
        .index_of(point)
        .map(|i| model.tau_at(i))
        .ok_or_else(|| Error::UnknownPoint(point.to_string()))
}

/// Marginal distribution of the observed covariate, `P(x) = Σ_u P(x, u)`.
pub fn marginal_x_distribution(model: &PopulationModel) -> Vec<f64> {
    let mut px = vec![0.0; model.x_count()];
    for (p, &w) in model.support().iter().zip(model.probs()) {
        px[p.x_id] += w;
    }
    px
}

/// Feasible set of treatment rules available to an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyClass {
    /// Every rule into `[0, 1]`.
    Unconstrained,
    /// Every cell is treated with probability at least `epsilon`.
    PositivityConstrained { epsilon: f64 },
    /// Every cell is left untreated with probability at least `epsilon`,
    /// i.e. `π ≤ 1 − epsilon`.
    UntreatedPositivity { epsilon: f64 },
    /// An explicit finite menu of rules.
    ExplicitSet { policies: Vec<Policy> },
}

impl PolicyClass {
    pub fn positivity(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(PolicyClass::PositivityConstrained { epsilon })
    }

    pub fn untreated_positivity(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(PolicyClass::UntreatedPositivity { epsilon })
    }

    pub fn explicit(policies: Vec<Policy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidClass("explicit set is empty".into()));
        }
        Ok(PolicyClass::ExplicitSet { policies })
    }

    /// Per-cell bounds `[lo, hi]` for box-shaped classes.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            PolicyClass::Unconstrained => Some((0.0, 1.0)),
            PolicyClass::PositivityConstrained { epsilon } => Some((*epsilon, 1.0)),
            PolicyClass::UntreatedPositivity { epsilon } => Some((0.0, 1.0 - epsilon)),
            PolicyClass::ExplicitSet { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyClass::Unconstrained => "unconstrained",
            PolicyClass::PositivityConstrained { .. } => "positivity_constrained",
            PolicyClass::UntreatedPositivity { .. } => "untreated_positivity",
            PolicyClass::ExplicitSet { .. } => "explicit_set",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PolicyClass::PositivityConstrained { epsilon }
            | PolicyClass::UntreatedPositivity { epsilon } => check_epsilon(*epsilon),
            PolicyClass::ExplicitSet { policies } if policies.is_empty() => {
                Err(Error::InvalidClass("explicit set is empty".into()))
            }
            _ => Ok(()),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidClass(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

/// Treatment probabilities per support cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDoc", into = "PolicyDoc")]
pub struct Policy {
    treat_prob: Vec<f64>,
    class: PolicyClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyDoc {
    treat_prob: Vec<f64>,
    #[serde(default = "default_class")]
    class: PolicyClass,
}

fn default_class() -> PolicyClass {
    PolicyClass::Unconstrained
}

impl TryFrom<PolicyDoc> for Policy {
    type Error = Error;
    fn try_from(d: PolicyDoc) -> Result<Self> {
        Policy::new(d.treat_prob, d.class)
    }
}

impl From<Policy> for PolicyDoc {
    fn from(p: Policy) -> Self {
        PolicyDoc {
            treat_prob: p.treat_prob,
            class: p.class,
        }
    }
}

impl Policy {
    pub fn new(treat_prob: Vec<f64>, class: PolicyClass) -> Result<Self> {
        class.validate()?;
        let (lo, hi) = class.bounds().unwrap_or((0.0, 1.0));
        for (index, &value) in treat_prob.iter().enumerate() {
            if !(value >= lo && value <= hi) {
                return Err(Error::TreatProbOutOfRange {
                    index,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { treat_prob, class })
    }

    pub fn unconstrained(treat_prob: Vec<f64>) -> Result<Self> {
        Self::new(treat_prob, PolicyClass::Unconstrained)
    }

    /// Deterministic rule treating exactly the flagged cells.
    pub fn from_indicator(treated: &[bool]) -> Self {
        Self {
            treat_prob: treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
            class: PolicyClass::Unconstrained,
        }
    }

    /// Treats nobody.
    pub fn none(len: usize) -> Self {
        Self::from_indicator(&vec![false; len])
    }

    /// Treats everybody.
    pub fn all(len: usize) -> Self {
        Self::from_indicator(&vec![true; len])
    }

    pub(crate) fn from_parts_unchecked(treat_prob: Vec<f64>, class: PolicyClass) -> Self {
        Self { treat_prob, class }
    }

    pub fn treat_prob(&self) -> &[f64] {
        &self.treat_prob
    }

    pub fn class(&self) -> &PolicyClass {
        &self.class
    }

    pub fn len(&self) -> usize {
        self.treat_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treat_prob.is_empty()
    }

    /// Indices of cells with positive treatment probability.
    pub fn treated_cells(&self) -> Vec<usize> {
        self.treat_prob
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `P(T = 1) = Σ π(p) P(p)` under `model`.
    pub fn treated_mass(&self, model: &PopulationModel) -> f64 {
        self.treat_prob
            .iter()
            .zip(model.probs())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub(crate) fn check_len(&self, model: &PopulationModel) -> Result<()> {
        if self.len() != model.len() {
            return Err(Error::LengthMismatch {
                what: "policy",
                expected: model.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Where the principal's untreated-outcome estimate comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mu0Source {
    /// Unbiased estimate from auxiliary untreated data.
    AuxiliaryUnbiased,
    /// Mean outcome of the agent's own untreated units under `policy`.
    AgentUntreated { policy: Policy },
}

impl Mu0Source {
    pub fn tag(&self) -> &'static str {
        match self {
            Mu0Source::AuxiliaryUnbiased => "auxiliary_unbiased",
            Mu0Source::AgentUntreated { .. } => "agent_untreated",
        }
    }
}

/// Principal's estimate of the mean untreated outcome, per observed covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mu0Estimator {
    estimates: Vec<f64>,
    source: Mu0Source,
}

impl Mu0Estimator {
    /// Estimate taken from auxiliary data (assumed unbiased).
    pub fn auxiliary(estimates: Vec<f64>) -> Result<Self> {
        if estimates.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mu0_hat"));
        }
        Ok(Self {
            estimates,
            source: Mu0Source::AuxiliaryUnbiased,
        })
    }

    pub(crate) fn agent_untreated(estimates: Vec<f64>, policy: Policy) -> Self {
        Self {
            estimates,
            source: Mu0Source::AgentUntreated { policy },
        }
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn source(&self) -> &Mu0Source {
        &self.source
    }

    pub fn get(&self, x_id: usize) -> f64 {
        self.estimates[x_id]
    }

    pub(crate) fn check_covers(&self, model: &PopulationModel) -> Result<()> {
        if self.estimates.len() < model.x_count() {
            return Err(Error::EstimatorSupportGap {
                expected: model.x_count(),
                got: self.estimates.len(),
            });
        }
        Ok(())
    }

    /// Multiplies every estimate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            estimates: self.estimates.iter().map(|v| v * factor).collect(),
            source: self.source.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> PopulationModel {
        PopulationModel::from_x_table(vec![0.5, 0.5], vec![-2.0, 0.0], vec![0.0, 1.0], 100).unwrap()
    }

    #[test]
    fn fixture_taus() {
        let m = m1();
        assert_eq!(m.taus(), vec![2.0, 1.0]);
        assert_eq!(tau(&m, CovariatePoint::x(0)).unwrap(), 2.0);
    }

    #[test]
    fn tau_examples() {
        let m = PopulationModel::from_x_table(vec![0.5, 0.5], vec![3.0, 4.0], vec![1.0, 4.0], 1)
            .unwrap();
        assert_eq!(tau(&m, CovariatePoint::x(0)).unwrap(), -2.0);
        assert_eq!(tau(&m, CovariatePoint::x(1)).unwrap(), 0.0);
        assert!(matches!(
            tau(&m, CovariatePoint::x(7)),
            Err(Error::UnknownPoint(_))
        ));
    }

    #[test]
    fn rejects_bad_sum() {
        let err = PopulationModel::from_x_table(vec![0.3, 0.6], vec![0.0; 2], vec![0.0; 2], 1)
            .unwrap_err();
        assert!(matches!(err, Error::ProbabilitySumOutOfTolerance { .. }));
    }

    #[test]
    fn renormalizes_float_noise() {
        let m =
            PopulationModel::from_x_table(vec![0.5 + 4e-10, 0.5], vec![0.0; 2], vec![0.0; 2], 1)
                .unwrap();
        let s: f64 = m.probs().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            PopulationModel::from_x_table(vec![1.0], vec![0.0, 1.0], vec![0.0], 1),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            PopulationModel::from_x_table(vec![1.5, -0.5], vec![0.0; 2], vec![0.0; 2], 1),
            Err(Error::NegativeProbability { .. })
        ));
        assert!(matches!(
            PopulationModel::from_x_table(vec![1.0], vec![0.0], vec![0.0], 0),
            Err(Error::NonPositiveN)
        ));
        assert!(matches!(
            make_population(
                vec![CovariatePoint::x(0), CovariatePoint::x(0)],
                vec![0.5, 0.5],
                vec![0.0; 2],
                vec![0.0; 2],
                1
            ),
            Err(Error::DuplicatePoint(_))
        ));
        assert!(matches!(
            make_population(
                vec![CovariatePoint::x(0), CovariatePoint::xu(1, 0)],
                vec![0.5, 0.5],
                vec![0.0; 2],
                vec![0.0; 2],
                1
            ),
            Err(Error::InconsistentSupport)
        ));
    }

    #[test]
    fn degenerate_single_point() {
        let m = PopulationModel::from_x_table(vec![1.0], vec![0.0], vec![0.0], 1).unwrap();
        assert_eq!(m.taus(), vec![0.0]);
    }

    #[test]
    fn marginals() {
        let joint = make_population(
            vec![
                CovariatePoint::xu(0, 0),
                CovariatePoint::xu(0, 1),
                CovariatePoint::xu(1, 0),
            ],
            vec![0.4, 0.1, 0.5],
            vec![0.0; 3],
            vec![0.0; 3],
            1,
        )
        .unwrap();
        let px = marginal_x_distribution(&joint);
        assert!((px[0] - 0.5).abs() < 1e-15 && (px[1] - 0.5).abs() < 1e-15);

        let uniform = make_population(
            vec![
                CovariatePoint::xu(0, 0),
                CovariatePoint::xu(0, 1),
                CovariatePoint::xu(1, 0),
                CovariatePoint::xu(1, 1),
            ],
            vec![0.25; 4],
            vec![0.0; 4],
            vec![0.0; 4],
            1,
        )
        .unwrap();
        assert_eq!(marginal_x_distribution(&uniform), vec![0.5, 0.5]);
        assert_eq!(marginal_x_distribution(&m1()), vec![0.5, 0.5]);
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::unconstrained(vec![0.0, 1.0, 0.3]).is_ok());
        assert!(matches!(
            Policy::unconstrained(vec![1.2]),
            Err(Error::TreatProbOutOfRange { .. })
        ));
        let cls = PolicyClass::positivity(0.1).unwrap();
        assert!(Policy::new(vec![0.05], cls.clone()).is_err());
        assert!(Policy::new(vec![0.1, 1.0], cls).is_ok());
        assert!(PolicyClass::positivity(0.0).is_err());
        assert!(PolicyClass::positivity(1.0).is_err());
        let up = PolicyClass::untreated_positivity(0.2).unwrap();
        assert!(Policy::new(vec![1.0], up.clone()).is_err());
        assert!(Policy::new(vec![0.8, 0.0], up).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let joint = make_population(
            vec![CovariatePoint::xu(0, 0), CovariatePoint::xu(0, 1)],
            vec![0.25, 0.75],
            vec![1.0, -1.0],
            vec![0.5, 0.25],
            12,
        )
        .unwrap()
        .with_labels(None, Some(vec!["lo".into(), "hi".into()]))
        .unwrap();
        let s = serde_json::to_string(&joint).unwrap();
        let back: PopulationModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, joint);

        let bad = r#"{"support":[{"x_id":0}],"probs":[0.5],"mu0":[0],"mu1":[0],"n":1}"#;
        assert!(serde_json::from_str::<PopulationModel>(bad).is_err());
    }
}
