use super::check_constant;
use crate::error::{Error, Result};
use crate::mechanisms::PrivacyBudget;
use crate::risk::{DiscreteDistribution, LossBound, TailMass};

/// Which two-point lower-bound construction a pair realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarPairKind {
    /// `P0 = δ_0`, `P1` puts mass `p = c1·min{τ, 1/(εn)}` at `B`.
    Privacy,
    /// Both distributions put tail mass near `τ/2` at `B`, separated by
    /// `~sqrt(τ/n)`; this is the sampling-error pair.
    Statistical,
}

/// Two distributions on `{0, B}` whose CVaRs differ by a known gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarHardPair {
    pub kind: ScalarPairKind,
    pub p0: DiscreteDistribution,
    pub p1: DiscreteDistribution,
    /// Mass at `B` under `p1` (privacy pair) or the mass difference (statistical pair).
    pub p: f64,
    /// `ρ(P1) − ρ(P0)`.
    pub gap: f64,
    pub tau: TailMass,
    pub bound: LossBound,
}

impl ScalarHardPair {
    /// Exact CVaR of the two distributions.
    pub fn cvars(&self) -> (f64, f64) {
        let b = self.bound.value();
        let t = self.tau.value();
        let tail = |d: &DiscreteDistribution| {
            let mass_at_b: f64 = d
                .atoms()
                .iter()
                .filter(|(v, _)| *v == b)
                .map(|(_, p)| p)
                .sum();
            b * mass_at_b.min(t) / t
        };
        (tail(&self.p0), tail(&self.p1))
    }

    pub fn distributions(&self) -> [&DiscreteDistribution; 2] {
        [&self.p0, &self.p1]
    }

    /// The privacy pair with `p = c1·min{τ, 1/(εn)}` and gap `pB/τ`.
    pub fn privacy(
        n: usize,
        tau: TailMass,
        budget: PrivacyBudget,
        bound: LossBound,
        c1: f64,
    ) -> Result<Self> {
        check_constant("c1", c1)?;
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let t = tau.value();
        let b = bound.value();
        let p = c1 * t.min(1.0 / (budget.epsilon() * n as f64));
        Ok(ScalarHardPair {
            kind: ScalarPairKind::Privacy,
            p0: DiscreteDistribution::point_mass(0.0)?,
            p1: DiscreteDistribution::scaled_bernoulli(b, p)?,
            p,
            gap: p * b / t,
            tau,
            bound,
        })
    }

    /// The sampling-error pair: masses `τ/2` and `min{τ, τ/2 + c·sqrt(τ/n)}` at `B`.
    pub fn statistical(n: usize, tau: TailMass, bound: LossBound, c: f64) -> Result<Self> {
        check_constant("c", c)?;
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let t = tau.value();
        let b = bound.value();
        let q0 = 0.5 * t;
        let q1 = t.min(q0 + c * (t / n as f64).sqrt());
        Ok(ScalarHardPair {
            kind: ScalarPairKind::Statistical,
            p0: DiscreteDistribution::scaled_bernoulli(b, q0)?,
            p1: DiscreteDistribution::scaled_bernoulli(b, q1)?,
            p: q1 - q0,
            gap: (q1 - q0) * b / t,
            tau,
            bound,
        })
    }
}

/// Convenience wrapper for the privacy pair.
pub fn make_scalar_pair(
    n: usize,
    tau: TailMass,
    budget: PrivacyBudget,
    bound: LossBound,
    c1: f64,
) -> Result<ScalarHardPair> {
    ScalarHardPair::privacy(n, tau, budget, bound, c1)
}
