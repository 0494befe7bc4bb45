//! Information asymmetry: the agent sees an extra covariate `u` the
//! principal cannot condition on.
//!
//! The principal's estimate of the untreated outcome is a function of the
//! observed covariate only. It either comes from auxiliary data (the true
//! conditional mean given `x`) or from the agent's own untreated units, in
//! which case it depends on the agent's rule.

use serde::{Deserialize, Serialize};

use crate::empirical::EmpiricalPopulation;
use crate::error::{Error, Result};
use crate::population::{
    make_population, marginal_x_distribution, CovariatePoint, Mu0Estimator, Mu0Source, Policy,
    PolicyClass, PopulationModel,
};
use crate::response::{best_response, optimal_policy, utility};
use crate::rewards::RewardSpec;

/// Iteration cap for the agent-data estimator's fixed point.
pub const MAX_FIXED_POINT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointInfo {
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub gamma_marg: f64,
    pub gamma_max: f64,
    pub regret: f64,
    pub bound_marg: f64,
    pub bound_max: f64,
    pub slack_marg: f64,
    pub slack_max: f64,
    pub estimator_source: String,
    pub utility: f64,
    pub optimal_utility: f64,
    pub treat_rate: f64,
    /// Present only for the agent-data estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<FixedPointInfo>,
}

/// `E[μ0(x,U) | x]` per observed covariate, `None` where `x` has no mass.
/// A covariate with a single support point returns its value exactly.
fn conditional_mu0(model: &PopulationModel) -> Vec<Option<f64>> {
    let mut num = vec![0.0; model.x_count()];
    let mut cells = vec![0usize; model.x_count()];
    let mut last = vec![0.0; model.x_count()];
    for ((p, w), m) in model.support().iter().zip(model.probs()).zip(model.mu0()) {
        num[p.x_id] += w * m;
        cells[p.x_id] += 1;
        last[p.x_id] = *m;
    }
    let px = marginal_x_distribution(model);
    (0..num.len())
        .map(|x| {
            if px[x] <= 0.0 {
                None
            } else if cells[x] == 1 {
                Some(last[x])
            } else {
                Some(num[x] / px[x])
            }
        })
        .collect()
}

/// Untreated mean given the observed covariate, `μ0(x) = E[μ0(x,U) | x]`.
pub fn marginalize_mu0(model: &PopulationModel) -> Result<Mu0Estimator> {
    let est = conditional_mu0(model)
        .into_iter()
        .enumerate()
        .map(|(x_id, m)| m.ok_or(Error::ZeroMassCovariate { x_id }))
        .collect::<Result<Vec<f64>>>()?;
    Mu0Estimator::auxiliary(est)
}

/// `E|μ0(X) − μ0(X,U)|`, the smallest valid bounded-marginal-error constant.
pub fn gamma_marg(model: &PopulationModel) -> f64 {
    let cond = conditional_mu0(model);
    model
        .support()
        .iter()
        .zip(model.probs())
        .zip(model.mu0())
        .filter_map(|((p, w), m)| cond[p.x_id].map(|c| w * (c - m).abs()))
        .sum()
}

fn mu0_range_by_x(model: &PopulationModel) -> Vec<(f64, f64)> {
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); model.x_count()];
    for (p, &m) in model.support().iter().zip(model.mu0()) {
        let r = &mut range[p.x_id];
        r.0 = r.0.min(m);
        r.1 = r.1.max(m);
    }
    range
}

/// `E[Δ(X,U)]` with `Δ(x,u) = max_ũ |μ0(x,u) − μ0(x,ũ)|`.
pub fn gamma_max(model: &PopulationModel) -> f64 {
    let range = mu0_range_by_x(model);
    model
        .support()
        .iter()
        .zip(model.probs())
        .zip(model.mu0())
        .map(|((p, w), &m)| {
            let (lo, hi) = range[p.x_id];
            w * (m - lo).max(hi - m)
        })
        .sum()
}

/// Mean untreated outcome among the agent's untreated units at each `x`.
pub fn confounded_mu0_hat(model: &PopulationModel, policy: &Policy) -> Result<Mu0Estimator> {
    policy.check_len(model)?;
    let mut num = vec![0.0; model.x_count()];
    let mut den = vec![0.0; model.x_count()];
    for (i, p) in model.support().iter().enumerate() {
        let w = (1.0 - policy.treat_prob()[i]) * model.probs()[i];
        num[p.x_id] += w * model.mu0()[i];
        den[p.x_id] += w;
    }
    let est = num
        .iter()
        .zip(&den)
        .enumerate()
        .map(|(x_id, (s, d))| {
            if *d > 0.0 {
                Ok(s / d)
            } else {
                Err(Error::PositivityViolation { x_id })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Mu0Estimator::agent_untreated(est, policy.clone()))
}

/// Regret of the agent's best response to the total-treatment-effect reward
/// built on `mu0_hat`, measured against the full-information optimum.
///
/// An agent-data estimator is iterated to a fixed point: the agent best
/// responds to the current estimate, the estimate is recomputed from the
/// resulting untreated pool, and so on until the treated set repeats or the
/// iteration cap is hit.
pub fn asym_regret(model: &PopulationModel, mu0_hat: &Mu0Estimator) -> Result<AsymmetryReport> {
    let (policy, class, fixed_point) = match mu0_hat.source() {
        Mu0Source::AuxiliaryUnbiased => {
            let class = PolicyClass::Unconstrained;
            let pi = best_response(&RewardSpec::tt(mu0_hat.clone()), model, &class)?;
            (pi, class, None)
        }
        Mu0Source::AgentUntreated { policy } => {
            let class = policy.class().clone();
            if class.bounds().is_none() {
                return Err(Error::UnsupportedClass("explicit_set"));
            }
            let mut previous = policy.clone();
            let mut current = mu0_hat.clone();
            let mut info = FixedPointInfo {
                converged: false,
                iterations: 0,
            };
            let mut pi = previous.clone();
            for it in 1..=MAX_FIXED_POINT_ITERATIONS {
                info.iterations = it;
                pi = best_response(&RewardSpec::tt(current.clone()), model, &class)?;
                if pi.treat_prob() == previous.treat_prob() {
                    info.converged = true;
                    break;
                }
                current = confounded_mu0_hat(model, &pi)?;
                previous = pi.clone();
            }
            (pi, class, Some(info))
        }
    };

    let optimal = optimal_policy(model, &class)?;
    let u = utility(model, &policy);
    let opt = utility(model, &optimal);
    let regret = opt - u;
    let gm = gamma_marg(model);
    let gx = gamma_max(model);
    Ok(AsymmetryReport {
        gamma_marg: gm,
        gamma_max: gx,
        regret,
        bound_marg: 2.0 * gm,
        bound_max: 2.0 * gx,
        slack_marg: 2.0 * gm - regret,
        slack_max: 2.0 * gx - regret,
        estimator_source: mu0_hat.source().tag().to_string(),
        utility: u,
        optimal_utility: opt,
        treat_rate: policy.treated_mass(model),
        fixed_point,
    })
}

/// Agent-data regret starting from the best response to the marginal
/// untreated mean, with rules restricted to `class`.
pub fn agent_data_regret(model: &PopulationModel, class: &PolicyClass) -> Result<AsymmetryReport> {
    if class.bounds().is_none() {
        return Err(Error::UnsupportedClass("explicit_set"));
    }
    let start = best_response(&RewardSpec::tt(marginalize_mu0(model)?), model, class)?;
    let est = confounded_mu0_hat(model, &start)?;
    asym_regret(model, &est)
}

/// Two-type construction where the regret bound is nearly attained: one
/// observed value, `U` uniform on `{0, 1}`, `μ1 = (β, 0)` and
/// `μ0 = (α, −α)` for `u = (0, 1)`.
pub fn tightness_model(alpha: f64, beta: f64) -> Result<PopulationModel> {
    if !(alpha > 0.0 && beta > 0.0 && beta < alpha) {
        return Err(Error::ParameterOrderViolation { alpha, beta });
    }
    make_population(
        vec![CovariatePoint::xu(0, 0), CovariatePoint::xu(0, 1)],
        vec![0.5, 0.5],
        vec![alpha, -alpha],
        vec![beta, 0.0],
        1,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub gamma_marg: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub prefix_size: usize,
    /// Feature added at this step; empty for the empty prefix.
    pub feature_name: String,
    pub gamma_marg: f64,
    pub regret: f64,
}

fn auxiliary_report(pop: &EmpiricalPopulation, known: &[usize]) -> Result<AsymmetryReport> {
    let joint = pop.joint_model(known)?;
    asym_regret(&joint, &marginalize_mu0(&joint)?)
}

/// `γ_marg` and regret when the principal knows a single feature.
pub fn single_feature_scores(pop: &EmpiricalPopulation) -> Result<Vec<FeatureScore>> {
    (0..pop.feature_names.len())
        .map(|k| {
            let r = auxiliary_report(pop, &[k])?;
            Ok(FeatureScore {
                feature: pop.feature_names[k].clone(),
                gamma_marg: r.gamma_marg,
                regret: r.regret,
            })
        })
        .collect()
}

/// Feature indices by descending single-feature `γ_marg`.
pub fn importance_order(scores: &[FeatureScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .gamma_marg
            .total_cmp(&scores[a].gamma_marg)
            .then(a.cmp(&b))
    });
    order
}

/// Regret as the principal learns features in `feature_order`, one prefix
/// at a time, starting from the empty prefix.
pub fn feature_curve(
    pop: &EmpiricalPopulation,
    feature_order: &[usize],
) -> Result<Vec<CurvePoint>> {
    if pop.units.is_empty() {
        return Err(Error::EmptyDataset);
    }
    (0..=feature_order.len())
        .map(|k| {
            let r = auxiliary_report(pop, &feature_order[..k])?;
            Ok(CurvePoint {
                prefix_size: k,
                feature_name: if k == 0 {
                    String::new()
                } else {
                    pop.feature_names[feature_order[k - 1]].clone()
                },
                gamma_marg: r.gamma_marg,
                regret: r.regret,
            })
        })
        .collect()
}
