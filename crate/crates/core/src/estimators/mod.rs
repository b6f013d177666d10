//! Private CVaR estimators and learners.

mod convex;
mod finite;
mod scalar;

pub use convex::{
    nonprivate_convex_cvar, private_convex_cvar, ConvexLearnerConfig, ConvexOutput, ConvexProblem,
    StepSizeRule,
};
pub use finite::{empirical_risk_minimizer, private_finite_class, FiniteClass};
pub use scalar::private_scalar_cvar;

use crate::mechanisms::PrivacyBudget;

/// What a learner released, and what it spent to release it.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerReport<T> {
    pub output: T,
    /// Budget consumed; equals the requested budget. `None` for the
    /// non-private reference runs used by the harness.
    pub budget: Option<PrivacyBudget>,
    /// Noise scales used (Laplace scale, Gaussian sigma, or the exponential
    /// mechanism's score sensitivity).
    pub noise_scales: Vec<f64>,
    pub iterations: usize,
}
