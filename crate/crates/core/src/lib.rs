//! Accountability metrics for principal-agent treatment settings.
//!
//! A principal publishes a reward over observed data; an agent picks the
//! treatment policy that maximizes it. This crate computes those best
//! responses, the welfare regret they cause, how rankings of several
//! agents behave under reweighting, and how much regret hidden covariates
//! can induce.

pub mod asymmetry;
pub mod checks;
pub mod datasets;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod features;
pub mod glm;
pub mod population;
pub mod ranking;
pub mod response;
pub mod rewards;
pub mod sampling;

pub use error::{Error, Result};
pub use population::{
    CovariatePoint, Mu0Estimator, Mu0Source, Policy, PolicyClass, PopulationModel,
};
pub use response::{best_response, brute_force_best_response, regret, utility, RegretReport};
pub use rewards::{expected_reward, RewardKind, RewardSpec};
