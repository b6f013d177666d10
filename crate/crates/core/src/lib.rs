//! Differentially private estimation and learning under the conditional
//! value-at-risk (CVaR) objective, together with the hard instances and the
//! Monte Carlo harness used to measure empirical rates.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod instances;
pub mod mechanisms;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
pub use mechanisms::{PrivacyBudget, SensitivityValue};
pub use risk::{
    BoundedLossVector, DiscreteDistribution, Envelope, LiftedPoint, LossBound, TailMass,
};
pub use rng::RandomStream;
