//! Exact (non-private) CVaR functionals.
//!
//! Empirical CVaR at tail mass `tau` is the value of the dual program
//!
//! ```text
//! sup { (1/n) Σ q_i x_i : 0 ≤ q_i ≤ 1/tau, (1/n) Σ q_i = 1 }
//! ```
//!
//! whose optimum puts the capped weight `1/tau` on the largest losses, a
//! fractional weight on the next one, and zero elsewhere. That order-statistic
//! form is what [`empirical_cvar`] computes. The Rockafellar–Uryasev form
//! ([`ru_objective`]) is exposed separately and the two are tied together in
//! the tests.

use crate::error::{Error, Result};

/// Absolute tolerance used when validating user-provided probabilities.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Tail mass `tau` in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TailMass(f64);

impl TailMass {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau <= 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidTailMass(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Upper bound `B` on loss values.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LossBound(f64);

impl LossBound {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b >= 0.0 {
            Ok(Self(b))
        } else {
            Err(Error::InvalidLossBound(b))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn contains(self, x: f64) -> bool {
        (0.0..=self.0).contains(&x)
    }
}

/// A nonempty sample of losses, every value inside `[0, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedLossVector {
    values: Vec<f64>,
    bound: LossBound,
}

impl BoundedLossVector {
    pub fn new(values: Vec<f64>, bound: LossBound) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !bound.contains(**v))
        {
            return Err(Error::LossOutOfRange {
                index,
                value,
                bound: bound.value(),
            });
        }
        Ok(Self { values, bound })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> LossBound {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Replace one coordinate, keeping the bound invariant.
    pub fn with_value(&self, index: usize, value: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values[index] = value;
        Self::new(values, self.bound)
    }
}

/// A finite-support distribution over real values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    /// Atoms are `(value, probability)` pairs; probabilities must be
    /// nonnegative and sum to one within [`PROB_TOLERANCE`].
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let mut total = 0.0;
        for (i, &(v, p)) in atoms.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has non-finite value"
                )));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has invalid probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![(value, 1.0)])
    }

    /// `value` with probability `p`, zero otherwise.
    pub fn scaled_bernoulli(value: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "bernoulli mass {p} outside [0, 1]"
            )));
        }
        Self::new(vec![(value, p), (0.0, 1.0 - p)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    /// Inverse-CDF draw over the atom order.
    pub fn sample(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        // u landed in the rounding slack above the final cumulative sum
        self.atoms
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map(|(v, _)| *v)
            .unwrap_or(self.atoms[0].0)
    }
}

/// Dual envelope radius `kappa ≥ 1` of an envelope-bounded coherent risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope(f64);

impl Envelope {
    pub fn new(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa >= 1.0 {
            Ok(Self(kappa))
        } else {
            Err(Error::InvalidEnvelope(kappa))
        }
    }

    /// The CVaR envelope, `kappa = 1 / tau`.
    pub fn for_tail(tau: TailMass) -> Self {
        Self(1.0 / tau.value())
    }

    pub fn kappa(self) -> f64 {
        self.0
    }
}

/// Joint variable `(w, u)` of the scaled lifted problem; the threshold is
/// `eta = lambda * u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub w: Vec<f64>,
    pub u: f64,
}

impl LiftedPoint {
    pub fn new(w: Vec<f64>, u: f64) -> Self {
        Self { w, u }
    }

    pub fn threshold(&self, lambda: f64) -> f64 {
        lambda * self.u
    }
}

/// Empirical CVaR by the capped-weight order-statistic formula.
///
/// With `k = ⌊nτ⌋` and descending order statistics, returns
/// `(Σ_{i≤k} x_(i) + (nτ − k)·x_(k+1)) / (nτ)`; when `nτ ≥ n` every weight is
/// forced to one and the result is the plain mean.
pub fn empirical_cvar(sample: &BoundedLossVector, tau: TailMass) -> f64 {
    capped_top_average(sample.values(), tau.value())
}

/// Capped-weight tail average over raw values; callers guarantee bounds.
pub(crate) fn capped_top_average(values: &[f64], tau: f64) -> f64 {
    let n = values.len();
    let ntau = n as f64 * tau;
    if ntau >= n as f64 {
        return values.iter().sum::<f64>() / n as f64;
    }
    let k = ntau.floor() as usize;
    let mut buf = values.to_vec();
    // after selection, buf[..k] holds the k largest values and buf[k] is x_(k+1)
    let (top, kth, _) = buf.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let head: f64 = top.iter().sum();
    let frac = ntau - k as f64;
    ((head + frac * *kth) / ntau).max(0.0)
}

/// Rockafellar–Uryasev objective `eta + (1/(nτ)) Σ (x_i − eta)_+`.
pub fn ru_objective(eta: f64, sample: &BoundedLossVector, tau: TailMass) -> Result<f64> {
    let b = sample.bound().value();
    if !(0.0..=b).contains(&eta) {
        return Err(Error::ThresholdOutOfRange { eta, bound: b });
    }
    let ntau = sample.len() as f64 * tau.value();
    let excess: f64 = sample.values().iter().map(|x| (x - eta).max(0.0)).sum();
    Ok(eta + excess / ntau)
}

/// Exact CVaR of a finite-support distribution: mean of its worst `tau` mass.
pub fn population_cvar_discrete(dist: &DiscreteDistribution, tau: TailMass) -> f64 {
    let mut atoms: Vec<(f64, f64)> = dist.atoms().to_vec();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tau = tau.value();
    let mut remaining = tau;
    let mut acc = 0.0;
    for (v, p) in atoms {
        if remaining <= 0.0 {
            break;
        }
        let take = p.min(remaining);
        acc += v * take;
        remaining -= take;
    }
    // remaining > 0 only through probability rounding; the missing mass sits at
    // the smallest atom, already included
    acc / (tau - remaining.max(0.0)).max(f64::MIN_POSITIVE)
}

/// One-record sensitivity constants of empirical CVaR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarSensitivity {
    /// `B · min{1, 1/(nτ)}`: sensitivity of the minimized empirical CVaR.
    pub minimized: f64,
    /// `B / (nτ)`: sensitivity of the lifted objective at a fixed threshold.
    pub lifted_pointwise: f64,
}

pub fn cvar_sensitivity_bound(
    n: usize,
    tau: TailMass,
    bound: LossBound,
) -> Result<CvarSensitivity> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let ntau = n as f64 * tau.value();
    let b = bound.value();
    Ok(CvarSensitivity {
        minimized: b * (1.0 / ntau).min(1.0),
        lifted_pointwise: b / ntau,
    })
}

/// Empirical risk of the envelope-bounded coherent risk with radius `kappa`.
///
/// The empirical dual feasible set `{0 ≤ q_i ≤ kappa, mean q = 1}` is the
/// CVaR set at `tau = 1/kappa`.
pub fn envelope_empirical_risk(sample: &BoundedLossVector, env: Envelope) -> f64 {
    capped_top_average(sample.values(), 1.0 / env.kappa())
}

/// One-record sensitivity `B · min{1, kappa/n}` of the envelope risk.
pub fn envelope_sensitivity_bound(n: usize, env: Envelope, bound: LossBound) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok(bound.value() * (env.kappa() / n as f64).min(1.0))
}

fn check_lifted_inputs(
    point: &LiftedPoint,
    loss_value: f64,
    lambda: f64,
    bound: LossBound,
) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::NonPositiveScale(lambda));
    }
    if !bound.contains(loss_value) {
        return Err(Error::LossOutOfRange {
            index: 0,
            value: loss_value,
            bound: bound.value(),
        });
    }
    let u_max = bound.value() / lambda;
    if !(point.u >= 0.0 && point.u <= u_max * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "rescaled threshold {} outside [0, {u_max}]",
            point.u
        )));
    }
    Ok(())
}

/// Scaled lifted loss `λu + (1/τ)(ℓ − λu)_+`, in `[0, B/τ]`.
pub fn lifted_loss(
    point: &LiftedPoint,
    loss_value: f64,
    lambda: f64,
    tau: TailMass,
    bound: LossBound,
) -> Result<f64> {
    check_lifted_inputs(point, loss_value, lambda, bound)?;
    let eta = point.threshold(lambda);
    Ok(eta + (loss_value - eta).max(0.0) / tau.value())
}

/// Subgradient of the lifted loss with respect to `(w, u)`.
///
/// The positive-part slope is `s = 1` above the kink and `s = 0` at or below
/// it. Returns `(s/τ · ∂ℓ, λ(1 − s/τ))`.
pub fn lifted_subgradient(
    point: &LiftedPoint,
    loss_value: f64,
    loss_subgrad_w: &[f64],
    lambda: f64,
    tau: TailMass,
    bound: LossBound,
    lipschitz: f64,
) -> Result<(Vec<f64>, f64)> {
    check_lifted_inputs(point, loss_value, lambda, bound)?;
    let norm = loss_subgrad_w.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > lipschitz * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::SubgradientTooLarge {
            norm,
            bound: lipschitz,
        });
    }
    let active = loss_value - point.threshold(lambda) > 0.0;
    let s = if active { 1.0 } else { 0.0 };
    let t = tau.value();
    let gw = loss_subgrad_w.iter().map(|g| s * g / t).collect();
    Ok((gw, lambda * (1.0 - s / t)))
}

/// `sqrt(G² + λ²)/τ`: Lipschitz constant of the lifted loss.
pub fn lifted_lipschitz(lipschitz: f64, lambda: f64, tau: TailMass) -> f64 {
    (lipschitz * lipschitz + lambda * lambda).sqrt() / tau.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64], b: f64) -> BoundedLossVector {
        BoundedLossVector::new(v.to_vec(), LossBound::new(b).unwrap()).unwrap()
    }

    fn tau(t: f64) -> TailMass {
        TailMass::new(t).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = LossBound::new(1.0).unwrap();
        assert_eq!(BoundedLossVector::new(vec![], b), Err(Error::EmptySample));
        assert!(matches!(
            BoundedLossVector::new(vec![0.5, 1.5], b),
            Err(Error::LossOutOfRange { index: 1, .. })
        ));
        assert!(BoundedLossVector::new(vec![-0.0, 1.0], b).is_ok());
        assert!(TailMass::new(0.0).is_err());
        assert!(TailMass::new(1.0 + 1e-15).is_err());
        assert!(LossBound::new(-1.0).is_err());
        assert!(Envelope::new(0.99).is_err());
        assert!(DiscreteDistribution::new(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(DiscreteDistribution::new(vec![(0.0, -0.1), (1.0, 1.1)]).is_err());
    }

    #[test]
    fn empirical_cvar_examples() {
        assert_eq!(empirical_cvar(&sample(&[0.0; 4], 1.0), tau(0.3)), 0.0);
        let witness = sample(&[1.0, 0.0, 0.0, 0.0, 0.0], 1.0);
        assert!((empirical_cvar(&witness, tau(0.5)) - 0.4).abs() < 1e-12);
        let s = sample(&[1.0, 2.0, 3.0, 4.0], 4.0);
        assert!((empirical_cvar(&s, tau(0.5)) - 3.5).abs() < 1e-12);
        assert!((empirical_cvar(&s, tau(0.375)) - 11.0 / 3.0).abs() < 1e-12);
        assert!((empirical_cvar(&s, tau(1.0)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ru_objective_examples() {
        let s = sample(&[1.0, 2.0, 3.0, 4.0], 4.0);
        assert_eq!(ru_objective(4.0, &s, tau(0.3)).unwrap(), 4.0);
        assert!((ru_objective(0.0, &s, tau(1.0)).unwrap() - 2.5).abs() < 1e-12);
        assert!((ru_objective(2.0, &s, tau(0.5)).unwrap() - 3.5).abs() < 1e-12);
        assert!(matches!(
            ru_objective(4.5, &s, tau(0.5)),
            Err(Error::ThresholdOutOfRange { .. })
        ));
    }

    #[test]
    fn population_cvar_examples() {
        let pm = DiscreteDistribution::point_mass(0.7).unwrap();
        assert!((population_cvar_discrete(&pm, tau(0.13)) - 0.7).abs() < 1e-12);
        let bern = DiscreteDistribution::scaled_bernoulli(2.0, 0.05).unwrap();
        assert!((population_cvar_discrete(&bern, tau(0.2)) - 0.5).abs() < 1e-12);
        let d = DiscreteDistribution::new(vec![(0.0, 0.5), (1.0, 0.3), (2.0, 0.2)]).unwrap();
        assert!((population_cvar_discrete(&d, tau(0.25)) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_examples() {
        let one = LossBound::new(1.0).unwrap();
        assert_eq!(
            cvar_sensitivity_bound(1, tau(1.0), one).unwrap().minimized,
            1.0
        );
        let s = cvar_sensitivity_bound(5, tau(0.5), one).unwrap();
        assert!((s.minimized - 0.4).abs() < 1e-12);
        assert!((s.lifted_pointwise - 0.4).abs() < 1e-12);
        let two = LossBound::new(2.0).unwrap();
        assert!(
            (cvar_sensitivity_bound(100, tau(0.01), two)
                .unwrap()
                .minimized
                - 2.0)
                .abs()
                < 1e-12
        );
        assert_eq!(
            cvar_sensitivity_bound(0, tau(0.5), one),
            Err(Error::EmptySample)
        );
    }

    #[test]
    fn envelope_examples() {
        let s = sample(&[0.2, 0.9, 0.4], 1.0);
        let mean = s.mean();
        assert!((envelope_empirical_risk(&s, Envelope::new(1.0).unwrap()) - mean).abs() < 1e-12);
        let t = tau(0.4);
        assert_eq!(
            envelope_empirical_risk(&s, Envelope::for_tail(t)),
            empirical_cvar(&s, t)
        );
        let pair = sample(&[0.0, 1.0], 1.0);
        assert!((envelope_empirical_risk(&pair, Envelope::new(2.0).unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_loss_examples() {
        let b = LossBound::new(1.0).unwrap();
        let origin = LiftedPoint::new(vec![0.0], 0.0);
        assert_eq!(lifted_loss(&origin, 0.0, 1.0, tau(0.3), b).unwrap(), 0.0);
        assert!((lifted_loss(&origin, 1.0, 1.0, tau(0.25), b).unwrap() - 4.0).abs() < 1e-12);
        let p = LiftedPoint::new(vec![0.0], 0.1);
        assert!((lifted_loss(&p, 0.5, 2.0, tau(0.1), b).unwrap() - 3.2).abs() < 1e-12);
        assert!(matches!(
            lifted_loss(&p, 0.5, 0.0, tau(0.1), b),
            Err(Error::NonPositiveScale(_))
        ));
    }

    #[test]
    fn lifted_subgradient_branches() {
        let b = LossBound::new(1.0).unwrap();
        let p = LiftedPoint::new(vec![0.0, 0.0], 0.5);
        let (gw, gu) = lifted_subgradient(&p, 0.1, &[0.3, -0.4], 1.0, tau(0.5), b, 1.0).unwrap();
        assert_eq!(gw, vec![0.0, 0.0]);
        assert_eq!(gu, 1.0);
        let (gw, gu) = lifted_subgradient(&p, 0.9, &[0.3, -0.4], 1.0, tau(0.5), b, 1.0).unwrap();
        assert!((gw[0] - 0.6).abs() < 1e-12 && (gw[1] + 0.8).abs() < 1e-12);
        assert!((gu + 1.0).abs() < 1e-12);
        // kink: s = 0
        let (gw, gu) = lifted_subgradient(&p, 0.5, &[0.3, -0.4], 1.0, tau(0.5), b, 1.0).unwrap();
        assert_eq!(gw, vec![0.0, 0.0]);
        assert_eq!(gu, 1.0);
        assert!(matches!(
            lifted_subgradient(&p, 0.9, &[3.0, 4.0], 1.0, tau(0.5), b, 1.0),
            Err(Error::SubgradientTooLarge { .. })
        ));
    }

    #[test]
    fn discrete_sampling_covers_atoms() {
        let d = DiscreteDistribution::new(vec![(3.0, 0.25), (1.0, 0.75)]).unwrap();
        assert_eq!(d.sample(0.1), 3.0);
        assert_eq!(d.sample(0.3), 1.0);
        assert_eq!(d.sample(0.999_999_999_999), 1.0);
    }
}
