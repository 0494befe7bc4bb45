//! Ranking several agents by their best-response scores, with optional
//! reweighting of each agent's population to a shared reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{marginal_x_distribution, Mu0Estimator, PolicyClass, PopulationModel};
use crate::response::best_response;
use crate::rewards::{expected_reward, RewardSpec};

/// Slack allowed before a score inversion counts as a violation.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: String,
    pub model: PopulationModel,
    #[serde(default = "unconstrained")]
    pub class: PolicyClass,
}

fn unconstrained() -> PolicyClass {
    PolicyClass::Unconstrained
}

impl AgentProfile {
    pub fn new(id: impl Into<String>, model: PopulationModel) -> Self {
        Self {
            id: id.into(),
            model,
            class: PolicyClass::Unconstrained,
        }
    }

    pub fn n(&self) -> u64 {
        self.model.n()
    }

    /// `τ` per observed covariate value.
    pub fn taus_by_x(&self) -> Vec<f64> {
        per_x(&self.model, &self.model.taus())
    }

    fn mu0_by_x(&self) -> Vec<f64> {
        per_x(&self.model, self.model.mu0())
    }
}

/// Probability-weighted mean of a cell table within each observed covariate.
fn per_x(model: &PopulationModel, values: &[f64]) -> Vec<f64> {
    let px = marginal_x_distribution(model);
    let mut acc = vec![0.0; model.x_count()];
    for ((p, w), v) in model.support().iter().zip(model.probs()).zip(values) {
        acc[p.x_id] += w * v;
    }
    acc.iter()
        .zip(&px)
        .map(|(s, m)| if *m > 0.0 { s / m } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Pointwise-better agent scored lower.
    Uniform,
    /// Better agent on the reference population scored lower.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// The agent that should have ranked at least as high.
    pub better: String,
    pub worse: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Applicable,
    /// Some agent has a negative effect somewhere, so the relative property
    /// is not expected to hold.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScore {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub reweighted: bool,
    pub scores: Vec<AgentScore>,
    /// Agent ids, best first; equal scores ordered by id.
    pub ordering: Vec<String>,
    pub violations: Vec<Violation>,
    pub relative_audit: AuditStatus,
}

impl RankingReport {
    pub fn has_violation(&self, id: &str, kind: ViolationKind) -> bool {
        self.violations
            .iter()
            .any(|v| v.kind == kind && (v.better == id || v.worse == id))
    }
}

/// Normalized density ratio `g_k(x) = P_ref(x) / (n_k P_k(x))`.
pub fn reweight_g(reference: &[f64], agent: &AgentProfile) -> Result<Vec<f64>> {
    let px = marginal_x_distribution(&agent.model);
    if reference.len() != px.len() {
        return Err(Error::LengthMismatch {
            what: "reference",
            expected: px.len(),
            got: reference.len(),
        });
    }
    let n = agent.n() as f64;
    reference
        .iter()
        .zip(&px)
        .enumerate()
        .map(|(x_id, (&r, &p))| {
            if r > 0.0 && p <= 0.0 {
                Err(Error::AbsoluteContinuityViolation { x_id })
            } else if p > 0.0 {
                Ok(r / (n * p))
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// Expected reward of the agent's best response.
pub fn agent_score(agent: &AgentProfile, spec: &RewardSpec) -> Result<f64> {
    let policy = best_response(spec, &agent.model, &agent.class)?;
    expected_reward(spec, &agent.model, &policy)
}

/// Scores every agent and lists the ordered pairs where a better agent
/// scored strictly lower.
pub fn audit_rankings(
    agents: &[AgentProfile],
    reference: &[f64],
    use_reweighting: bool,
) -> Result<RankingReport> {
    if agents.len() < 2 {
        return Err(Error::InsufficientAgents(agents.len()));
    }
    let x_count = agents[0].model.x_count();
    let baseline = agents[0].mu0_by_x();
    for a in agents {
        if a.model.x_count() != x_count {
            return Err(Error::LengthMismatch {
                what: "agent covariate support",
                expected: x_count,
                got: a.model.x_count(),
            });
        }
        for (x_id, (m, b)) in a.mu0_by_x().iter().zip(&baseline).enumerate() {
            if (m - b).abs() > 1e-9 * b.abs().max(1.0) {
                return Err(Error::SharedBaselineMismatch { x_id });
            }
        }
    }
    if reference.len() != x_count {
        return Err(Error::LengthMismatch {
            what: "reference",
            expected: x_count,
            got: reference.len(),
        });
    }

    let mu0_hat = Mu0Estimator::auxiliary(baseline)?;
    let mut raw = Vec::with_capacity(agents.len());
    for a in agents {
        let spec = if use_reweighting {
            RewardSpec::weighted_tt(mu0_hat.clone(), reweight_g(reference, a)?)?
        } else {
            RewardSpec::tt(mu0_hat.clone())
        };
        raw.push(agent_score(a, &spec)?);
    }

    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b]
            .total_cmp(&raw[a])
            .then_with(|| agents[a].id.cmp(&agents[b].id))
    });
    let mut rank = vec![0; agents.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }

    let taus: Vec<Vec<f64>> = agents.iter().map(AgentProfile::taus_by_x).collect();
    let relative_audit = if taus.iter().flatten().all(|&t| t >= 0.0) {
        AuditStatus::Applicable
    } else {
        AuditStatus::NotApplicable
    };
    let ref_effect: Vec<f64> = taus
        .iter()
        .map(|t| t.iter().zip(reference).map(|(a, b)| a * b).sum())
        .collect();

    let mut violations = Vec::new();
    for j in 0..agents.len() {
        for k in 0..agents.len() {
            if j == k || raw[j] >= raw[k] - RANK_TOLERANCE {
                continue;
            }
            if taus[j].iter().zip(&taus[k]).all(|(a, b)| a >= b) {
                violations.push(Violation {
                    better: agents[j].id.clone(),
                    worse: agents[k].id.clone(),
                    kind: ViolationKind::Uniform,
                });
            }
            if relative_audit == AuditStatus::Applicable && ref_effect[j] >= ref_effect[k] {
                violations.push(Violation {
                    better: agents[j].id.clone(),
                    worse: agents[k].id.clone(),
                    kind: ViolationKind::Relative,
                });
            }
        }
    }

    Ok(RankingReport {
        reweighted: use_reweighting,
        scores: agents
            .iter()
            .zip(&raw)
            .zip(&rank)
            .map(|((a, &score), &rank)| AgentScore {
                id: a.id.clone(),
                score,
                rank,
            })
            .collect(),
        ordering: order.iter().map(|&i| agents[i].id.clone()).collect(),
        violations,
        relative_audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: &str, probs: Vec<f64>, tau: Vec<f64>, n: u64) -> AgentProfile {
        let k = probs.len();
        AgentProfile::new(
            id,
            PopulationModel::from_x_table(probs, vec![0.0; k], tau, n).unwrap(),
        )
    }

    #[test]
    fn density_ratio_weights() {
        let a = agent("a", vec![0.5, 0.5], vec![1.0, 1.0], 10);
        let g = reweight_g(&[0.5, 0.5], &a).unwrap();
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15);

        let b = agent("b", vec![0.3, 0.7], vec![1.0, 1.0], 1);
        let g = reweight_g(&[0.3, 0.7], &b).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-15));

        let c = agent("c", vec![0.0, 1.0], vec![1.0, 1.0], 1);
        assert!(matches!(
            reweight_g(&[1.0, 0.0], &c),
            Err(Error::AbsoluteContinuityViolation { x_id: 0 })
        ));
    }

    #[test]
    fn scores() {
        let a = agent("a", vec![0.5, 0.5], vec![1.0, 1.0], 7);
        let g = reweight_g(&[0.5, 0.5], &a).unwrap();
        let est = Mu0Estimator::auxiliary(vec![0.0, 0.0]).unwrap();
        let spec = RewardSpec::weighted_tt(est.clone(), g).unwrap();
        assert!((agent_score(&a, &spec).unwrap() - 1.0).abs() < 1e-12);

        let b = agent("b", vec![0.5, 0.5], vec![2.0, 0.0], 1);
        assert!((agent_score(&b, &RewardSpec::tt(est.clone())).unwrap() - 1.0).abs() < 1e-12);

        let c = agent("c", vec![0.5, 0.5], vec![-1.0, 0.0], 4);
        assert_eq!(agent_score(&c, &RewardSpec::tt(est)).unwrap(), 0.0);
    }

    #[test]
    fn population_size_inverts_unweighted_scores() {
        let j = agent("j", vec![0.5, 0.5], vec![1.0, 1.0], 10);
        let k = agent("k", vec![0.5, 0.5], vec![1.0, 1.0], 20);
        let reference = [0.5, 0.5];

        let off = audit_rankings(&[j.clone(), k.clone()], &reference, false).unwrap();
        assert!((off.scores[0].score - 10.0).abs() < 1e-12);
        assert!((off.scores[1].score - 20.0).abs() < 1e-12);
        assert!(off.violations.contains(&Violation {
            better: "j".into(),
            worse: "k".into(),
            kind: ViolationKind::Uniform
        }));
        assert_eq!(off.ordering, vec!["k", "j"]);

        let on = audit_rankings(&[j, k], &reference, true).unwrap();
        assert!((on.scores[0].score - 1.0).abs() < 1e-12);
        assert!((on.scores[1].score - 1.0).abs() < 1e-12);
        assert!(on.violations.is_empty());
        assert_eq!(on.ordering, vec!["j", "k"]);
    }

    #[test]
    fn relative_holds_without_uniform_premise() {
        let j = agent("j", vec![0.5, 0.5], vec![2.0, 0.0], 3);
        let k = agent("k", vec![0.5, 0.5], vec![0.5, 0.5], 9);
        let r = audit_rankings(&[j, k], &[0.5, 0.5], true).unwrap();
        assert!((r.scores[0].score - 1.0).abs() < 1e-12);
        assert!((r.scores[1].score - 0.5).abs() < 1e-12);
        assert_eq!(r.relative_audit, AuditStatus::Applicable);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn relative_audit_skipped_with_negative_effects() {
        let j = agent("j", vec![0.5, 0.5], vec![2.0, -1.0], 3);
        let k = agent("k", vec![0.5, 0.5], vec![0.5, 0.5], 9);
        let r = audit_rankings(&[j, k], &[0.5, 0.5], true).unwrap();
        assert_eq!(r.relative_audit, AuditStatus::NotApplicable);
    }

    #[test]
    fn audit_errors() {
        let j = agent("j", vec![0.5, 0.5], vec![1.0, 1.0], 10);
        assert!(matches!(
            audit_rankings(std::slice::from_ref(&j), &[0.5, 0.5], false),
            Err(Error::InsufficientAgents(1))
        ));
        let other = AgentProfile::new(
            "o",
            PopulationModel::from_x_table(vec![0.5, 0.5], vec![1.0, 0.0], vec![1.0, 1.0], 1)
                .unwrap(),
        );
        assert!(matches!(
            audit_rankings(&[j, other], &[0.5, 0.5], false),
            Err(Error::SharedBaselineMismatch { x_id: 0 })
        ));
    }
}
