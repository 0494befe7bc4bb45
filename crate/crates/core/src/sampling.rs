//! Seeded generators of random models, estimators, policies and agent
//! pairs for property checks.

use rand::Rng;

use crate::population::{
    make_population, CovariatePoint, Mu0Estimator, Policy, PolicyClass, PopulationModel,
};
use crate::ranking::AgentProfile;

/// Random weights summing to one. With `allow_zero`, some cells may get no
/// mass (at least one always keeps some).
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, len: usize, allow_zero: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len)
        .map(|_| {
            if allow_zero && rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.gen_range(0..len)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// A value in `[-bound, bound]`, rounded to a half-integer 30% of the time
/// so that ties appear.
pub fn random_outcome<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    let v = rng.gen_range(-bound..=bound);
    if rng.gen_bool(0.3) {
        (v * 2.0).round() / 2.0
    } else {
        v
    }
}

/// Observed-covariate model with `1..=max_support` cells and outcomes in
/// `[-bound, bound]`.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    max_support: usize,
    bound: f64,
) -> PopulationModel {
    let m = rng.gen_range(1..=max_support);
    let probs = random_distribution(rng, m, true);
    let mu0 = (0..m).map(|_| random_outcome(rng, bound)).collect();
    let mu1 = (0..m).map(|_| random_outcome(rng, bound)).collect();
    let n = rng.gen_range(1..=1000);
    PopulationModel::from_x_table(probs, mu0, mu1, n).expect("generated model is valid")
}

/// Joint model with `1..=max_x` observed values, each with `1..=max_u`
/// hidden values, all of positive mass.
pub fn random_joint_model<R: Rng + ?Sized>(
    rng: &mut R,
    max_x: usize,
    max_u: usize,
    bound: f64,
) -> PopulationModel {
    let xs = rng.gen_range(1..=max_x);
    let mut support = Vec::new();
    for x in 0..xs {
        for u in 0..rng.gen_range(1..=max_u) {
            support.push(CovariatePoint::xu(x, u));
        }
    }
    let m = support.len();
    let probs = random_distribution(rng, m, false);
    let mu0 = (0..m).map(|_| random_outcome(rng, bound)).collect();
    let mu1 = (0..m).map(|_| random_outcome(rng, bound)).collect();
    make_population(support, probs, mu0, mu1, rng.gen_range(1..=1000))
        .expect("generated model is valid")
}

/// The true untreated mean 30% of the time, otherwise a perturbation of it.
pub fn random_estimator<R: Rng + ?Sized>(rng: &mut R, model: &PopulationModel) -> Mu0Estimator {
    let exact = rng.gen_bool(0.3);
    let est = model
        .mu0()
        .iter()
        .map(|m| {
            if exact {
                *m
            } else {
                m + random_outcome(rng, 1.0)
            }
        })
        .collect();
    Mu0Estimator::auxiliary(est).expect("finite estimates")
}

pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.1..10.0)).collect()
}

/// Unconstrained half the time, otherwise a positivity-restricted box.
pub fn random_class<R: Rng + ?Sized>(rng: &mut R) -> PolicyClass {
    match rng.gen_range(0..4) {
        0 | 1 => PolicyClass::Unconstrained,
        2 => PolicyClass::positivity(rng.gen_range(0.01..0.5)).expect("valid epsilon"),
        _ => PolicyClass::untreated_positivity(rng.gen_range(0.01..0.5)).expect("valid epsilon"),
    }
}

/// Policy with every probability drawn inside the class bounds.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, len: usize, class: &PolicyClass) -> Policy {
    let (lo, hi) = class.bounds().unwrap_or((0.0, 1.0));
    let probs = (0..len).map(|_| rng.gen_range(lo..=hi)).collect();
    Policy::new(probs, class.clone()).expect("probabilities within bounds")
}

/// Two agents sharing an untreated baseline on a common support, with a
/// reference distribution. When `dominating`, the first agent's effect is
/// at least the second's at every covariate value. With `nonnegative`,
/// every effect is `≥ 0`.
pub fn random_agent_pair<R: Rng + ?Sized>(
    rng: &mut R,
    max_support: usize,
    dominating: bool,
    nonnegative: bool,
) -> (AgentProfile, AgentProfile, Vec<f64>) {
    let m = rng.gen_range(1..=max_support);
    let mu0: Vec<f64> = (0..m).map(|_| random_outcome(rng, 5.0)).collect();
    let effect = |rng: &mut R| {
        let t = random_outcome(rng, 5.0);
        if nonnegative {
            t.abs()
        } else {
            t
        }
    };
    let tau_k: Vec<f64> = (0..m).map(|_| effect(rng)).collect();
    let tau_j: Vec<f64> = if dominating {
        tau_k
            .iter()
            .map(|t| {
                if rng.gen_bool(0.3) {
                    *t
                } else {
                    t + rng.gen_range(0.0..3.0)
                }
            })
            .collect()
    } else {
        (0..m).map(|_| effect(rng)).collect()
    };
    let agent = |rng: &mut R, id: &str, tau: &[f64]| {
        let probs = random_distribution(rng, m, false);
        let mu1 = mu0.iter().zip(tau).map(|(a, t)| a + t).collect();
        let n = rng.gen_range(1..=1000);
        AgentProfile::new(
            id,
            PopulationModel::from_x_table(probs, mu0.clone(), mu1, n).expect("valid agent"),
        )
    };
    let j = agent(rng, "j", &tau_j);
    let k = agent(rng, "k", &tau_k);
    let reference = random_distribution(rng, m, false);
    (j, k, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_respect_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = random_model(&mut rng, 6, 5.0);
            assert!((1..=6).contains(&m.len()));
            assert!(m.mu0().iter().chain(m.mu1()).all(|v| v.abs() <= 5.0));
            let j = random_joint_model(&mut rng, 4, 4, 5.0);
            assert!(j.x_count() <= 4 && j.u_count().unwrap() <= 4);
            assert!(j.probs().iter().all(|&p| p > 0.0));
            let class = random_class(&mut rng);
            let p = random_policy(&mut rng, j.len(), &class);
            assert_eq!(p.len(), j.len());
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = random_model(&mut ChaCha8Rng::seed_from_u64(9), 6, 5.0);
        let b = random_model(&mut ChaCha8Rng::seed_from_u64(9), 6, 5.0);
        assert_eq!(a, b);
    }
}
