use super::check_constant;
use crate::error::{Error, Result};
use crate::estimators::FiniteClass;
use crate::mechanisms::PrivacyBudget;
use crate::risk::{DiscreteDistribution, LossBound, TailMass};
use crate::rng::RandomStream;

/// Packing over `M` predictors.
///
/// Data points live in `{0, 1, …, M}` with `0` the null observation.
/// Predictor `r` (0-based) is wrong on every non-null point other than
/// `r + 1`. Hypothesis `j` puts mass `p` on `j + 1` and `1 − p` on `0`, so the
/// matching predictor has CVaR 0 and every other predictor has CVaR `pB/τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingInstance {
    m: usize,
    p: f64,
    tau: TailMass,
    bound: LossBound,
}

impl PackingInstance {
    /// `p = c0·min{τ, ln M/(εn)}`.
    pub fn new(
        m: usize,
        n: usize,
        tau: TailMass,
        budget: PrivacyBudget,
        bound: LossBound,
        c0: f64,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "packing needs M >= 2, got {m}"
            )));
        }
        if n == 0 {
            return Err(Error::EmptySample);
        }
        check_constant("c0", c0)?;
        let p = c0
            * tau
                .value()
                .min((m as f64).ln() / (budget.epsilon() * n as f64));
        Self::with_mass(m, p, tau, bound)
    }

    /// Packing with an explicit non-null mass `p ∈ [0, τ]`.
    pub fn with_mass(m: usize, p: f64, tau: TailMass, bound: LossBound) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "packing needs M >= 2, got {m}"
            )));
        }
        if !(p >= 0.0 && p <= tau.value()) {
            return Err(Error::InvalidParameter(format!(
                "packing mass {p} outside [0, tau]"
            )));
        }
        Ok(PackingInstance { m, p, tau, bound })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tau(&self) -> TailMass {
        self.tau
    }

    /// `pB/τ`: excess of any wrong predictor.
    pub fn gap(&self) -> f64 {
        self.p * self.bound.value() / self.tau.value()
    }

    /// Exact excess CVaR of predictor `r` under hypothesis `j`.
    pub fn excess(&self, r: usize, j: usize) -> f64 {
        if r == j {
            0.0
        } else {
            self.gap()
        }
    }

    /// Loss distribution of predictor `r` under hypothesis `j`.
    pub fn loss_distribution(&self, r: usize, j: usize) -> Result<DiscreteDistribution> {
        let mass = if r == j { 0.0 } else { self.p };
        DiscreteDistribution::scaled_bernoulli(self.bound.value(), mass)
    }

    /// One draw from hypothesis `j`.
    pub fn sample_point(&self, j: usize, rng: &mut RandomStream) -> usize {
        if rng.bernoulli(self.p) {
            j + 1
        } else {
            0
        }
    }

    pub fn sample(&self, j: usize, n: usize, rng: &mut RandomStream) -> Vec<usize> {
        (0..n).map(|_| self.sample_point(j, rng)).collect()
    }
}

impl FiniteClass for PackingInstance {
    type Point = usize;

    fn num_predictors(&self) -> usize {
        self.m
    }

    fn bound(&self) -> LossBound {
        self.bound
    }

    fn loss(&self, predictor: usize, z: &usize) -> f64 {
        if *z >= 1 && *z <= self.m && *z != predictor + 1 {
            self.bound.value()
        } else {
            0.0
        }
    }

    /// Counting form: a predictor's losses are `B` on `k` points and 0
    /// elsewhere, so its CVaR is `B·min{k, nτ}/(nτ)`.
    fn empirical_cvars(&self, sample: &[usize], tau: TailMass) -> Result<Vec<f64>> {
        let mut counts = vec![0usize; self.m + 1];
        for (index, &z) in sample.iter().enumerate() {
            if z > self.m {
                return Err(Error::InvalidParameter(format!(
                    "data point {z} at index {index} outside 0..={}",
                    self.m
                )));
            }
            counts[z] += 1;
        }
        let n = sample.len() as f64;
        let non_null = sample.len() - counts[0];
        let nt = n * tau.value();
        let b = self.bound.value();
        Ok((0..self.m)
            .map(|r| {
                let k = (non_null - counts[r + 1]) as f64;
                if nt >= n {
                    b * k / n
                } else {
                    b * k.min(nt) / nt
                }
            })
            .collect())
    }
}

/// Convenience wrapper matching [`PackingInstance::new`].
pub fn make_packing(
    m: usize,
    n: usize,
    tau: TailMass,
    budget: PrivacyBudget,
    bound: LossBound,
    c0: f64,
) -> Result<PackingInstance> {
    PackingInstance::new(m, n, tau, budget, bound, c0)
}
