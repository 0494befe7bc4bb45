//! The five reward functions a principal can publish, their exact expected
//! values under a policy, and their literal finite-sample forms.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Mu0Estimator, Policy, PopulationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    /// Average treated outcome.
    #[serde(rename = "ATO")]
    Ato,
    /// Average treatment effect on the treated.
    #[serde(rename = "ATT")]
    Att,
    /// Total treated outcome.
    #[serde(rename = "TO")]
    To,
    /// Total treatment effect.
    #[serde(rename = "TT")]
    Tt,
    /// Covariate-weighted total treatment effect.
    #[serde(rename = "WeightedTT")]
    WeightedTt,
}

impl RewardKind {
    pub const ALL: [RewardKind; 5] = [
        RewardKind::Ato,
        RewardKind::Att,
        RewardKind::To,
        RewardKind::Tt,
        RewardKind::WeightedTt,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RewardKind::Ato => "ATO",
            RewardKind::Att => "ATT",
            RewardKind::To => "TO",
            RewardKind::Tt => "TT",
            RewardKind::WeightedTt => "WeightedTT",
        }
    }

    /// Averages divide by the treated count; totals do not.
    pub fn is_average(self) -> bool {
        matches!(self, RewardKind::Ato | RewardKind::Att)
    }

    pub fn needs_estimator(self) -> bool {
        matches!(
            self,
            RewardKind::Att | RewardKind::Tt | RewardKind::WeightedTt
        )
    }
}

/// A reward function together with the inputs it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardDoc", into = "RewardDoc")]
pub struct RewardSpec {
    kind: RewardKind,
    mu0_hat: Option<Mu0Estimator>,
    g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RewardDoc {
    kind: RewardKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu0_hat: Option<Mu0Estimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<Vec<f64>>,
}

impl TryFrom<RewardDoc> for RewardSpec {
    type Error = Error;
    fn try_from(d: RewardDoc) -> Result<Self> {
        RewardSpec::new(d.kind, d.mu0_hat, d.g)
    }
}

impl From<RewardSpec> for RewardDoc {
    fn from(s: RewardSpec) -> Self {
        RewardDoc {
            kind: s.kind,
            mu0_hat: s.mu0_hat,
            g: s.g,
        }
    }
}

impl RewardSpec {
    pub fn new(
        kind: RewardKind,
        mu0_hat: Option<Mu0Estimator>,
        g: Option<Vec<f64>>,
    ) -> Result<Self> {
        match kind {
            RewardKind::Ato | RewardKind::To => Ok(Self {
                kind,
                mu0_hat: None,
                g: None,
            }),
            RewardKind::Att | RewardKind::Tt => {
                let est = mu0_hat.ok_or(Error::MissingEstimator(kind.label()))?;
                Ok(Self {
                    kind,
                    mu0_hat: Some(est),
                    g: None,
                })
            }
            RewardKind::WeightedTt => {
                let est = mu0_hat.ok_or(Error::MissingEstimator(kind.label()))?;
                let g = g.ok_or(Error::MissingWeight)?;
                if let Some((x_id, &value)) = g
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v > 0.0))
                {
                    return Err(Error::NonPositiveWeight { x_id, value });
                }
                Ok(Self {
                    kind,
                    mu0_hat: Some(est),
                    g: Some(g),
                })
            }
        }
    }

    pub fn ato() -> Self {
        Self {
            kind: RewardKind::Ato,
            mu0_hat: None,
            g: None,
        }
    }

    pub fn to() -> Self {
        Self {
            kind: RewardKind::To,
            mu0_hat: None,
            g: None,
        }
    }

    pub fn att(mu0_hat: Mu0Estimator) -> Self {
        Self {
            kind: RewardKind::Att,
            mu0_hat: Some(mu0_hat),
            g: None,
        }
    }

    pub fn tt(mu0_hat: Mu0Estimator) -> Self {
        Self {
            kind: RewardKind::Tt,
            mu0_hat: Some(mu0_hat),
            g: None,
        }
    }

    pub fn weighted_tt(mu0_hat: Mu0Estimator, g: Vec<f64>) -> Result<Self> {
        Self::new(RewardKind::WeightedTt, Some(mu0_hat), Some(g))
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn mu0_hat(&self) -> Option<&Mu0Estimator> {
        self.mu0_hat.as_ref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.g.as_deref()
    }

    fn weight(&self, x_id: usize) -> f64 {
        self.g.as_ref().map_or(1.0, |g| g[x_id])
    }

    fn check_covers(&self, model: &PopulationModel) -> Result<()> {
        if let Some(est) = &self.mu0_hat {
            est.check_covers(model)?;
        }
        if let Some(g) = &self.g {
            if g.len() < model.x_count() {
                return Err(Error::LengthMismatch {
                    what: "g",
                    expected: model.x_count(),
                    got: g.len(),
                });
            }
        }
        Ok(())
    }
}

/// Per-cell payoff the reward attaches to treating one unit in that cell.
///
/// The expected reward is `n Σ a(p) π(p) P(p)` for totals and
/// `Σ a(p) π(p) P(p) / Σ π(p) P(p)` for averages. Outcome terms use the
/// cell's own means; the estimator only ever sees the observed covariate.
pub fn cell_payoffs(spec: &RewardSpec, model: &PopulationModel) -> Result<Vec<f64>> {
    spec.check_covers(model)?;
    let pts = model.support();
    let mu1 = model.mu1();
    let out = match spec.kind {
        RewardKind::Ato | RewardKind::To => mu1.to_vec(),
        RewardKind::Att | RewardKind::Tt | RewardKind::WeightedTt => {
            let est = spec
                .mu0_hat
                .as_ref()
                .ok_or(Error::MissingEstimator(spec.kind.label()))?;
            pts.iter()
                .zip(mu1)
                .map(|(p, m1)| spec.weight(p.x_id) * (m1 - est.get(p.x_id)))
                .collect()
        }
    };
    Ok(out)
}

/// Expected value of the reward when the agent plays `policy`.
///
/// Averages use the ratio of expectations and return 0 when no mass is
/// treated.
pub fn expected_reward(spec: &RewardSpec, model: &PopulationModel, policy: &Policy) -> Result<f64> {
    policy.check_len(model)?;
    let payoffs = cell_payoffs(spec, model)?;
    Ok(reward_from_payoffs(
        spec.kind,
        model,
        &payoffs,
        policy.treat_prob(),
    ))
}

pub(crate) fn reward_from_payoffs(
    kind: RewardKind,
    model: &PopulationModel,
    payoffs: &[f64],
    treat_prob: &[f64],
) -> f64 {
    let mut num = 0.0;
    let mut mass = 0.0;
    for ((a, pi), p) in payoffs.iter().zip(treat_prob).zip(model.probs()) {
        let w = pi * p;
        num += a * w;
        mass += w;
    }
    if kind.is_average() {
        if mass > 0.0 {
            num / mass
        } else {
            0.0
        }
    } else {
        model.n() as f64 * num
    }
}

/// One observed unit: covariate, realized treatment and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x_id: usize,
    pub treated: bool,
    pub outcome: f64,
}

/// The literal finite-sample reward statistic over observed rows.
pub fn realized_reward(spec: &RewardSpec, rows: &[Observation]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let est = spec.mu0_hat.as_ref();
    let mut total = 0.0;
    let mut treated = 0usize;
    for r in rows.iter().filter(|r| r.treated) {
        treated += 1;
        let term = match spec.kind {
            RewardKind::Ato | RewardKind::To => r.outcome,
            RewardKind::Att | RewardKind::Tt | RewardKind::WeightedTt => {
                let est = est.ok_or(Error::MissingEstimator(spec.kind.label()))?;
                if r.x_id >= est.estimates().len() {
                    return Err(Error::EstimatorSupportGap {
                        expected: r.x_id + 1,
                        got: est.estimates().len(),
                    });
                }
                spec.weight(r.x_id) * (r.outcome - est.get(r.x_id))
            }
        };
        total += term;
    }
    if spec.kind.is_average() {
        Ok(if treated > 0 {
            total / treated as f64
        } else {
            0.0
        })
    } else {
        Ok(total)
    }
}

/// Draws a population of `model.n()` units, assigns treatment by `policy`
/// and realizes outcomes as the cell mean plus Gaussian noise.
pub fn simulate_observations<R: Rng + ?Sized>(
    model: &PopulationModel,
    policy: &Policy,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    policy.check_len(model)?;
    let cells = WeightedIndex::new(model.probs()).map_err(|e| Error::Numerical(e.to_string()))?;
    let pts = model.support();
    let size = model.n() as usize;
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let i = cells.sample(rng);
        let treated = rng.gen::<f64>() < policy.treat_prob()[i];
        let mean = if treated {
            model.mu1()[i]
        } else {
            model.mu0()[i]
        };
        let eps: f64 = rng.sample(StandardNormal);
        out.push(Observation {
            x_id: pts[i].x_id,
            treated,
            outcome: mean + noise_sd * eps,
        });
    }
    Ok(out)
}
