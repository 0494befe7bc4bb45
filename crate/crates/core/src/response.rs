//! Agent best responses, welfare and regret.
//!
//! Best responses are computed in closed form for box-shaped policy classes.
//! [`brute_force_best_response`] enumerates every deterministic rule instead
//! and serves as an independent check on the closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Policy, PolicyClass, PopulationModel};
use crate::rewards::{cell_payoffs, reward_from_payoffs, RewardKind, RewardSpec};

/// Cells whose payoff is within this distance of the maximum count as
/// maximizers.
pub const ARGMAX_TOLERANCE: f64 = 1e-12;

/// Largest support the enumeration oracle accepts.
pub const BRUTE_FORCE_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub best_response: Policy,
    pub utility: f64,
    pub optimal_utility: f64,
    pub regret: f64,
    pub optimal_policy: Policy,
}

/// Welfare of `policy`: `V(π) = Σ τ(p) π(p) P(p)`.
pub fn utility(model: &PopulationModel, policy: &Policy) -> f64 {
    model
        .support()
        .iter()
        .enumerate()
        .map(|(i, _)| model.tau_at(i) * policy.treat_prob()[i] * model.probs()[i])
        .sum()
}

/// Welfare-maximizing rule: treat exactly the cells with `τ > 0`.
pub fn optimal_policy(model: &PopulationModel, class: &PolicyClass) -> Result<Policy> {
    let (lo, hi) = class
        .bounds()
        .ok_or(Error::UnsupportedClass("explicit_set"))?;
    let probs = (0..model.len())
        .map(|i| if model.tau_at(i) > 0.0 { hi } else { lo })
        .collect();
    Ok(Policy::from_parts_unchecked(probs, class.clone()))
}

/// The agent's reward-maximizing rule within `class`.
pub fn best_response(
    spec: &RewardSpec,
    model: &PopulationModel,
    class: &PolicyClass,
) -> Result<Policy> {
    let Some((lo, hi)) = class.bounds() else {
        return brute_force_best_response(spec, model, class);
    };
    let payoffs = cell_payoffs(spec, model)?;
    let probs = if spec.kind().is_average() {
        average_best_response(spec.kind(), model, &payoffs, lo, hi)
    } else {
        payoffs
            .iter()
            .map(|&a| if a > 0.0 { hi } else { lo })
            .collect()
    };
    Ok(Policy::from_parts_unchecked(probs, class.clone()))
}

/// Averages reward the payoff of the treated pool. With no lower bound the
/// agent treats only the top-payoff cells, and only when that payoff is
/// positive. With a forced minimum treatment the optimum is still a
/// threshold rule over payoff order, so it is found by scanning prefixes.
fn average_best_response(
    kind: RewardKind,
    model: &PopulationModel,
    payoffs: &[f64],
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    let mut order: Vec<usize> = (0..payoffs.len())
        .filter(|&i| model.probs()[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| payoffs[b].total_cmp(&payoffs[a]).then(a.cmp(&b)));
    let mut probs = vec![lo; payoffs.len()];
    let Some(&top) = order.first() else {
        return probs;
    };
    let max = payoffs[top];

    if lo == 0.0 {
        if max > 0.0 {
            for &i in order
                .iter()
                .take_while(|&&i| payoffs[i] >= max - ARGMAX_TOLERANCE)
            {
                probs[i] = hi;
            }
        }
        return probs;
    }

    let mut best_value = reward_from_payoffs(kind, model, payoffs, &probs);
    let mut best_len = 0;
    let mut trial = probs.clone();
    let mut k = 0;
    while k < order.len() {
        let leader = payoffs[order[k]];
        while k < order.len() && payoffs[order[k]] >= leader - ARGMAX_TOLERANCE {
            trial[order[k]] = hi;
            k += 1;
        }
        let v = reward_from_payoffs(kind, model, payoffs, &trial);
        if v > best_value + ARGMAX_TOLERANCE * best_value.abs().max(1.0) {
            best_value = v;
            best_len = k;
        }
    }
    for &i in &order[..best_len] {
        probs[i] = hi;
    }
    probs
}

fn improves(v: f64, best: f64) -> bool {
    v > best + ARGMAX_TOLERANCE * best.abs().max(1.0)
}

/// Exhaustive search over deterministic rules.
///
/// Box classes are searched over all `2^|support|` vertex rules; explicit
/// sets over their members. Candidates are visited by number of treated
/// cells and then lexicographically by treated set, and only a strict
/// improvement replaces the incumbent, so ties resolve toward the smallest
/// treated set.
pub fn brute_force_best_response(
    spec: &RewardSpec,
    model: &PopulationModel,
    class: &PolicyClass,
) -> Result<Policy> {
    let payoffs = cell_payoffs(spec, model)?;
    let score = |probs: &[f64]| reward_from_payoffs(spec.kind(), model, &payoffs, probs);
    match class {
        PolicyClass::ExplicitSet { policies } => {
            best_member(policies, model, |p| score(p.treat_prob())).cloned()
        }
        _ => {
            let (lo, hi) = class.bounds().expect("box class");
            let probs = best_vertex(model.len(), lo, hi, score)?;
            Ok(Policy::from_parts_unchecked(probs, class.clone()))
        }
    }
}

fn best_vertex<F: Fn(&[f64]) -> f64>(m: usize, lo: f64, hi: f64, score: F) -> Result<Vec<f64>> {
    if m > BRUTE_FORCE_CAP {
        return Err(Error::SupportTooLarge {
            size: m,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let mut probs = vec![lo; m];
    let mut best = probs.clone();
    let mut best_value = score(&probs);
    for k in 1..=m {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            probs.iter_mut().for_each(|p| *p = lo);
            for &i in &idx {
                probs[i] = hi;
            }
            let v = score(&probs);
            if improves(v, best_value) {
                best_value = v;
                best.copy_from_slice(&probs);
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    Ok(best)
}

/// Advances `idx` to the next k-subset of `0..m` in lexicographic order.
fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn best_member<'a, F: Fn(&Policy) -> f64>(
    policies: &'a [Policy],
    model: &PopulationModel,
    score: F,
) -> Result<&'a Policy> {
    for p in policies {
        p.check_len(model)?;
    }
    let mut order: Vec<usize> = (0..policies.len()).collect();
    order.sort_by_key(|&i| {
        let cells = policies[i].treated_cells();
        (cells.len(), cells)
    });
    let mut best = order[0];
    let mut best_value = score(&policies[best]);
    for &i in &order[1..] {
        let v = score(&policies[i]);
        if improves(v, best_value) {
            best = i;
            best_value = v;
        }
    }
    Ok(&policies[best])
}

/// Best welfare attainable within `class`.
pub fn optimal_in_class(model: &PopulationModel, class: &PolicyClass) -> Result<Policy> {
    match class {
        PolicyClass::ExplicitSet { policies } => {
            best_member(policies, model, |p| utility(model, p)).cloned()
        }
        _ => optimal_policy(model, class),
    }
}

/// Regret of the agent's best response to `spec`.
pub fn regret(
    spec: &RewardSpec,
    model: &PopulationModel,
    class: &PolicyClass,
) -> Result<RegretReport> {
    let best_response = best_response(spec, model, class)?;
    let optimal_policy = optimal_in_class(model, class)?;
    let u = utility(model, &best_response);
    let opt = utility(model, &optimal_policy);
    Ok(RegretReport {
        best_response,
        utility: u,
        optimal_utility: opt,
        regret: opt - u,
        optimal_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Mu0Estimator;
    use crate::rewards::expected_reward;

    fn m1() -> PopulationModel {
        PopulationModel::from_x_table(vec![0.5, 0.5], vec![-2.0, 0.0], vec![0.0, 1.0], 100).unwrap()
    }

    fn exact(model: &PopulationModel) -> Mu0Estimator {
        Mu0Estimator::auxiliary(model.mu0().to_vec()).unwrap()
    }

    #[test]
    fn optimal_rule() {
        let u = PolicyClass::Unconstrained;
        assert_eq!(optimal_policy(&m1(), &u).unwrap().treat_prob(), &[1.0, 1.0]);
        let m = PopulationModel::from_x_table(vec![0.5, 0.5], vec![0.0, 2.0], vec![1.0, 0.0], 1)
            .unwrap();
        assert_eq!(optimal_policy(&m, &u).unwrap().treat_prob(), &[1.0, 0.0]);
        let flat = PopulationModel::from_x_table(vec![1.0], vec![3.0], vec![3.0], 1).unwrap();
        assert_eq!(optimal_policy(&flat, &u).unwrap().treat_prob(), &[0.0]);
        let pos = PolicyClass::positivity(0.1).unwrap();
        assert_eq!(optimal_policy(&m, &pos).unwrap().treat_prob(), &[1.0, 0.1]);
        let explicit = PolicyClass::explicit(vec![Policy::none(2)]).unwrap();
        assert!(matches!(
            optimal_policy(&m, &explicit),
            Err(Error::UnsupportedClass(_))
        ));
    }

    #[test]
    fn fixture_best_responses() {
        let m = m1();
        let u = PolicyClass::Unconstrained;
        let ato = best_response(&RewardSpec::ato(), &m, &u).unwrap();
        assert_eq!(ato.treat_prob(), &[0.0, 1.0]);
        let att = best_response(&RewardSpec::att(exact(&m)), &m, &u).unwrap();
        assert_eq!(att.treat_prob(), &[1.0, 0.0]);
        let tt = best_response(&RewardSpec::tt(exact(&m)), &m, &u).unwrap();
        assert_eq!(tt.treat_prob(), &[1.0, 1.0]);
    }

    #[test]
    fn fixture_brute_force() {
        let m = m1();
        let u = PolicyClass::Unconstrained;
        let tt = RewardSpec::tt(exact(&m));
        let bf = brute_force_best_response(&tt, &m, &u).unwrap();
        assert!((expected_reward(&tt, &m, &bf).unwrap() - 150.0).abs() < 1e-12);
        let bf = brute_force_best_response(&RewardSpec::ato(), &m, &u).unwrap();
        assert_eq!(expected_reward(&RewardSpec::ato(), &m, &bf).unwrap(), 1.0);
        assert_eq!(bf.treat_prob(), &[0.0, 1.0]);

        let single = PopulationModel::from_x_table(vec![1.0], vec![0.5], vec![2.0], 3).unwrap();
        for spec in [
            RewardSpec::ato(),
            RewardSpec::att(exact(&single)),
            RewardSpec::to(),
            RewardSpec::tt(exact(&single)),
        ] {
            let bf = brute_force_best_response(&spec, &single, &u).unwrap();
            assert_eq!(bf.treat_prob(), &[1.0]);
        }
    }

    #[test]
    fn brute_force_tie_break_prefers_smaller_sets() {
        // Two equal-payoff cells: ATO is indifferent, the oracle takes {x0}.
        let m =
            PopulationModel::from_x_table(vec![0.5, 0.5], vec![0.0; 2], vec![1.0, 1.0], 1).unwrap();
        let bf =
            brute_force_best_response(&RewardSpec::ato(), &m, &PolicyClass::Unconstrained).unwrap();
        assert_eq!(bf.treat_prob(), &[1.0, 0.0]);
        let br = best_response(&RewardSpec::ato(), &m, &PolicyClass::Unconstrained).unwrap();
        assert_eq!(br.treat_prob(), &[1.0, 1.0]);
    }

    #[test]
    fn support_cap() {
        let k = BRUTE_FORCE_CAP + 1;
        let m =
            PopulationModel::from_x_table(vec![1.0 / k as f64; k], vec![0.0; k], vec![0.0; k], 1)
                .unwrap();
        assert!(matches!(
            brute_force_best_response(&RewardSpec::to(), &m, &PolicyClass::Unconstrained),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn utilities() {
        let m = m1();
        assert!((utility(&m, &Policy::all(2)) - 1.5).abs() < 1e-15);
        assert_eq!(utility(&m, &Policy::none(2)), 0.0);
        assert!((utility(&m, &Policy::from_indicator(&[false, true])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fixture_regrets() {
        let m = m1();
        let u = PolicyClass::Unconstrained;
        let r = regret(&RewardSpec::ato(), &m, &u).unwrap();
        assert!((r.regret - 1.0).abs() < 1e-12);
        let r = regret(&RewardSpec::tt(exact(&m)), &m, &u).unwrap();
        assert_eq!(r.regret, 0.0);
        let r = regret(&RewardSpec::att(exact(&m)), &m, &u).unwrap();
        assert!((r.regret - 0.5).abs() < 1e-12);
        assert!(r.regret <= r.optimal_utility);
    }

    #[test]
    fn second_ato_failure_mode_by_direct_computation() {
        // alpha = -1, beta > 1: ATO still treats x1 although tau(x1) = 1 - beta < 0.
        let p = 0.5;
        for beta in [2.0, 5.0, 50.0] {
            let m = PopulationModel::from_x_table(
                vec![1.0 - p, p],
                vec![-1.0, beta],
                vec![0.0, 1.0],
                1,
            )
            .unwrap();
            let r = regret(&RewardSpec::ato(), &m, &PolicyClass::Unconstrained).unwrap();
            let direct = (1.0 - p) + p * (beta - 1.0);
            assert!((r.regret - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_set_classes() {
        let m = m1();
        let menu = vec![
            Policy::from_indicator(&[true, false]),
            Policy::from_indicator(&[false, true]),
        ];
        let class = PolicyClass::explicit(menu).unwrap();
        let spec = RewardSpec::tt(exact(&m));
        let br = best_response(&spec, &m, &class).unwrap();
        assert_eq!(br.treat_prob(), &[1.0, 0.0]);
        let r = regret(&spec, &m, &class).unwrap();
        assert_eq!(r.regret, 0.0);
        assert!((r.optimal_utility - 1.0).abs() < 1e-15);
    }

    #[test]
    fn positivity_average_scan_matches_enumeration() {
        let m = PopulationModel::from_x_table(
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.0; 4],
            vec![3.0, 1.0, -0.5, 2.0],
            5,
        )
        .unwrap();
        let class = PolicyClass::positivity(0.2).unwrap();
        let spec = RewardSpec::ato();
        let a = best_response(&spec, &m, &class).unwrap();
        let b = brute_force_best_response(&spec, &m, &class).unwrap();
        let va = expected_reward(&spec, &m, &a).unwrap();
        let vb = expected_reward(&spec, &m, &b).unwrap();
        assert!((va - vb).abs() < 1e-12, "{va} vs {vb}");
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
