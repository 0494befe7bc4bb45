//! Seeded property suite over random models. Each check reports the worst
//! value it saw rather than stopping at the first failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymmetry::{
    agent_data_regret, asym_regret, confounded_mu0_hat, gamma_marg, gamma_max, marginalize_mu0,
    tightness_model,
};
use crate::datasets::{composite_outcome, OutcomeIndicators};
use crate::error::Result;
use crate::population::{Mu0Estimator, PolicyClass, PopulationModel};
use crate::ranking::{audit_rankings, AgentProfile, ViolationKind};
use crate::response::{best_response, brute_force_best_response, regret};
use crate::rewards::{expected_reward, RewardKind, RewardSpec};
use crate::sampling::{
    random_agent_pair, random_class, random_distribution, random_estimator, random_joint_model,
    random_model, random_outcome, random_policy, random_weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub seed: u64,
    pub models: usize,
    pub joint_models: usize,
    pub agent_pairs: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            models: 1000,
            joint_models: 1000,
            agent_pairs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed violation measure; at most the tolerance on a pass.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn from_worst(name: &str, cases: usize, worst: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: worst <= tolerance,
            cases,
            worst,
            tolerance,
            detail,
        }
    }
}

fn rng(cfg: &CheckConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

/// The shared set of random observed-covariate models.
pub fn random_models(cfg: &CheckConfig) -> Vec<PopulationModel> {
    let mut r = rng(cfg, 0);
    (0..cfg.models)
        .map(|_| random_model(&mut r, 6, 5.0))
        .collect()
}

fn spec_for<R: Rng + ?Sized>(
    kind: RewardKind,
    rng: &mut R,
    model: &PopulationModel,
) -> Result<RewardSpec> {
    let est = kind.needs_estimator().then(|| random_estimator(rng, model));
    let g = (kind == RewardKind::WeightedTt).then(|| random_weights(rng, model.x_count()));
    RewardSpec::new(kind, est, g)
}

/// Closed-form best responses earn exactly what exhaustive search earns.
pub fn oracle_equivalence(cfg: &CheckConfig) -> Result<CheckResult> {
    let models = random_models(cfg);
    let mut r = rng(cfg, 1);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for model in &models {
        let class = random_class(&mut r);
        for kind in RewardKind::ALL {
            let spec = spec_for(kind, &mut r, model)?;
            let fast = expected_reward(&spec, model, &best_response(&spec, model, &class)?)?;
            let slow = expected_reward(
                &spec,
                model,
                &brute_force_best_response(&spec, model, &class)?,
            )?;
            worst = worst.max((fast - slow).abs());
            cases += 1;
        }
    }
    Ok(CheckResult::from_worst(
        "oracle_equivalence",
        cases,
        worst,
        1e-9,
        "max |reward(closed form) - reward(enumeration)|".into(),
    ))
}

fn exact(model: &PopulationModel) -> Result<Mu0Estimator> {
    Mu0Estimator::auxiliary(model.mu0().to_vec())
}

/// Total effect and its positively weighted variant leave no regret.
pub fn tt_zero_regret(cfg: &CheckConfig) -> Result<CheckResult> {
    let models = random_models(cfg);
    let mut r = rng(cfg, 2);
    let mut worst: f64 = 0.0;
    for model in &models {
        let class = random_class(&mut r);
        let tt = regret(&RewardSpec::tt(exact(model)?), model, &class)?;
        let g = random_weights(&mut r, model.x_count());
        let wtt = regret(&RewardSpec::weighted_tt(exact(model)?, g)?, model, &class)?;
        worst = worst.max(tt.regret.abs()).max(wtt.regret.abs());
    }
    Ok(CheckResult::from_worst(
        "tt_zero_regret",
        2 * cfg.models,
        worst,
        1e-12,
        "max |regret| over TT and WeightedTT".into(),
    ))
}

/// Average effect on the treated never loses more than the optimum.
pub fn att_ceiling(cfg: &CheckConfig) -> Result<CheckResult> {
    let models = random_models(cfg);
    let mut worst = f64::NEG_INFINITY;
    for model in &models {
        let rep = regret(
            &RewardSpec::att(exact(model)?),
            model,
            &PolicyClass::Unconstrained,
        )?;
        worst = worst.max(rep.regret - rep.optimal_utility);
    }
    Ok(CheckResult::from_worst(
        "att_ceiling",
        cfg.models,
        worst.max(0.0),
        1e-12,
        format!("max regret - optimal utility = {worst:e}"),
    ))
}

/// Two-cell family where the treated-outcome average ignores a cell whose
/// effect grows without bound: regret is `-α(1-p)`.
pub fn ato_unbounded_family() -> Result<CheckResult> {
    let p = 0.5;
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for alpha in [-1.0, -10.0, -100.0] {
        let model =
            PopulationModel::from_x_table(vec![1.0 - p, p], vec![alpha, 0.0], vec![0.0, 1.0], 1)?;
        let rep = regret(&RewardSpec::ato(), &model, &PolicyClass::Unconstrained)?;
        worst = worst.max((rep.regret - (-alpha * (1.0 - p))).abs());
        got.push(rep.regret);
    }
    Ok(CheckResult::from_worst(
        "ato_unbounded_family",
        3,
        worst,
        0.0,
        format!("regrets {got:?} for alpha = -1, -10, -100"),
    ))
}

/// Regret under hidden covariates stays within twice the relevant bias
/// statistic, and the agent-data estimate stays inside the range of the
/// hidden-cell means.
pub fn asymmetry_bounds(cfg: &CheckConfig) -> Result<Vec<CheckResult>> {
    let mut r = rng(cfg, 4);
    let (mut aux, mut agent, mut interval, mut order) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut not_converged = 0;
    for _ in 0..cfg.joint_models {
        let model = random_joint_model(&mut r, 4, 4, 5.0);
        let a = asym_regret(&model, &marginalize_mu0(&model)?)?;
        aux = aux.max(a.regret - a.bound_marg);

        let class = PolicyClass::untreated_positivity(r.gen_range(0.01..0.5))?;
        let b = agent_data_regret(&model, &class)?;
        agent = agent.max(b.regret - b.bound_max);
        if !b.fixed_point.map(|f| f.converged).unwrap_or(true) {
            not_converged += 1;
        }

        let policy = random_policy(&mut r, model.len(), &class);
        let est = confounded_mu0_hat(&model, &policy)?;
        let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); model.x_count()];
        for (p, &m) in model.support().iter().zip(model.mu0()) {
            range[p.x_id].0 = range[p.x_id].0.min(m);
            range[p.x_id].1 = range[p.x_id].1.max(m);
        }
        for (x, (lo, hi)) in range.iter().enumerate() {
            let v = est.get(x);
            interval = interval.max(lo - v).max(v - hi);
        }
        order = order.max(gamma_marg(&model) - gamma_max(&model));
    }
    let n = cfg.joint_models;
    Ok(vec![
        CheckResult::from_worst(
            "asymmetry_bound_auxiliary",
            n,
            aux.max(0.0),
            1e-9,
            format!("max regret - 2 gamma_marg = {aux:e}"),
        ),
        CheckResult::from_worst(
            "asymmetry_bound_agent_data",
            n,
            agent.max(0.0),
            1e-9,
            format!("max regret - 2 gamma_max = {agent:e}; {not_converged} fixed points hit the iteration cap"),
        ),
        CheckResult::from_worst(
            "interval_lemma",
            n,
            interval,
            1e-12,
            "max distance of the agent-data estimate outside [min_u mu0, max_u mu0]".into(),
        ),
        CheckResult::from_worst(
            "gamma_ordering",
            n,
            order.max(0.0),
            1e-12,
            "max gamma_marg - gamma_max".into(),
        ),
    ])
}

/// Regret of the two-type construction is `α − β/2` on a grid, and comes
/// within `0.005α` of `γ_marg` when `β = 0.01α`.
pub fn tightness() -> Result<Vec<CheckResult>> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for alpha in [0.5, 1.0, 2.0, 4.0] {
        for beta in [alpha / 4.0, alpha / 2.0, 0.99 * alpha] {
            let m = tightness_model(alpha, beta)?;
            let rep = asym_regret(&m, &marginalize_mu0(&m)?)?;
            worst = worst.max((rep.regret - (alpha - beta / 2.0)).abs());
            cases += 1;
        }
    }
    let mut near: f64 = f64::NEG_INFINITY;
    for alpha in [0.5, 1.0, 2.0, 4.0] {
        let m = tightness_model(alpha, 0.01 * alpha)?;
        let rep = asym_regret(&m, &marginalize_mu0(&m)?)?;
        // slack of regret >= gamma_marg - 0.005 alpha, which holds with
        // equality in exact arithmetic
        near = near.max((rep.gamma_marg - 0.005 * alpha) - rep.regret);
    }
    Ok(vec![
        CheckResult::from_worst(
            "tightness_grid",
            cases,
            worst,
            1e-12,
            "max |regret - (alpha - beta/2)|".into(),
        ),
        CheckResult::from_worst(
            "tightness_near_limit",
            4,
            near.max(0.0),
            1e-12,
            format!("max (gamma_marg - 0.005 alpha) - regret = {near:e}"),
        ),
    ])
}

/// Reweighted scores respect pointwise and reference-average dominance;
/// unweighted totals reward sheer size.
pub fn ranking(cfg: &CheckConfig) -> Result<Vec<CheckResult>> {
    let mut r = rng(cfg, 5);
    let (mut uniform, mut relative) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut flagged = 0;
    for i in 0..cfg.agent_pairs {
        let nonneg = i % 2 == 0;
        let (j, k, reference) = random_agent_pair(&mut r, 6, true, nonneg);
        let rep = audit_rankings(&[j.clone(), k.clone()], &reference, true)?;
        uniform = uniform.max(rep.scores[1].score - rep.scores[0].score);
        flagged += rep.violations.len();

        let (a, b, reference) = random_agent_pair(&mut r, 6, false, true);
        let rep = audit_rankings(&[a.clone(), b.clone()], &reference, true)?;
        let effect = |p: &AgentProfile| -> f64 {
            p.taus_by_x()
                .iter()
                .zip(&reference)
                .map(|(t, w)| t * w)
                .sum()
        };
        let (better, worse) = if effect(&a) >= effect(&b) {
            (0, 1)
        } else {
            (1, 0)
        };
        relative = relative.max(rep.scores[worse].score - rep.scores[better].score);
        flagged += rep.violations.len();
    }

    let mut missed = 0;
    for _ in 0..cfg.agent_pairs {
        let m = r.gen_range(1..=6);
        let probs = random_distribution(&mut r, m, false);
        let mu0: Vec<f64> = (0..m).map(|_| random_outcome(&mut r, 5.0)).collect();
        let mut tau: Vec<f64> = (0..m).map(|_| random_outcome(&mut r, 5.0)).collect();
        let pos = r.gen_range(0..m);
        tau[pos] = tau[pos].abs().max(0.5);
        let mu1: Vec<f64> = mu0.iter().zip(&tau).map(|(a, t)| a + t).collect();
        let n_j = r.gen_range(1..=500);
        let j = AgentProfile::new(
            "j",
            PopulationModel::from_x_table(probs.clone(), mu0.clone(), mu1.clone(), n_j)?,
        );
        let k = AgentProfile::new(
            "k",
            PopulationModel::from_x_table(probs.clone(), mu0, mu1, 2 * n_j)?,
        );
        let rep = audit_rankings(&[j, k], &probs, false)?;
        if !rep.has_violation("j", ViolationKind::Uniform) {
            missed += 1;
        }
    }

    Ok(vec![
        CheckResult::from_worst(
            "ranking_uniform_preserved",
            cfg.agent_pairs,
            uniform.max(0.0),
            1e-12,
            format!("max score(worse) - score(better) = {uniform:e}"),
        ),
        CheckResult::from_worst(
            "ranking_relative_preserved",
            cfg.agent_pairs,
            relative.max(0.0),
            1e-12,
            format!("max score(worse) - score(better) = {relative:e}; {flagged} audit violations"),
        ),
        CheckResult::from_worst(
            "ranking_size_violation",
            cfg.agent_pairs,
            missed as f64,
            0.0,
            format!("{missed} equal-effect pairs with doubled size showed no uniform violation"),
        ),
    ])
}

/// Every combination of stroke-outcome indicators scores within `[-4, 3]`
/// and equals the weighted sum term by term.
pub fn composite_range() -> CheckResult {
    let weights = [-2.0, -1.0, -0.5, -0.5, 2.0, 1.0];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for i in OutcomeIndicators::all_combinations() {
        let flags = [
            i.death,
            i.recurrent_stroke,
            i.pe_or_intracranial_bleed,
            i.other_side_effects,
            i.full_recovery,
            i.discharged_within_14_days,
        ];
        let expected: f64 = flags
            .iter()
            .zip(weights)
            .filter(|(f, _)| **f)
            .map(|(_, w)| w)
            .sum();
        let v = composite_outcome(&i);
        let outside = (-4.0 - v).max(v - 3.0).max(0.0);
        worst = worst.max((v - expected).abs()).max(outside);
        cases += 1;
    }
    CheckResult::from_worst(
        "composite_outcome",
        cases,
        worst,
        0.0,
        "max |score - weighted sum| or distance outside [-4, 3]".into(),
    )
}

/// Runs every check in a fixed order.
pub fn run_all(cfg: &CheckConfig) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        oracle_equivalence(cfg)?,
        tt_zero_regret(cfg)?,
        att_ceiling(cfg)?,
        ato_unbounded_family()?,
    ];
    out.extend(asymmetry_bounds(cfg)?);
    out.extend(tightness()?);
    out.extend(ranking(cfg)?);
    out.push(composite_range());
    Ok(out)
}
