//! Primitive DP mechanisms with explicit sensitivities.
//!
//! Every mechanism draws from an explicit [`RandomStream`]; the same stream
//! and inputs reproduce the same output. Noise is generated with ordinary
//! floating point and is not hardened against floating-point side channels.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// An `(epsilon, delta)` privacy budget. `delta = 0` is pure DP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    /// Any positive epsilon, delta in `[0, 1)`.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidBudget(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidBudget(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    /// Budget restricted to `epsilon ∈ (0, 1]`, the range the rate theory covers.
    pub fn high_privacy(epsilon: f64, delta: f64) -> Result<Self> {
        let b = Self::new(epsilon, delta)?;
        if epsilon > 1.0 {
            return Err(Error::InvalidBudget(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        Ok(b)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// Sensitivity of a released statistic or score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityValue(f64);

impl SensitivityValue {
    pub fn new(delta_q: f64) -> Result<Self> {
        if delta_q.is_finite() && delta_q >= 0.0 {
            Ok(Self(delta_q))
        } else {
            Err(Error::InvalidSensitivity(delta_q))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Centered Laplace draw with the given scale, by inverse CDF from one uniform.
pub fn laplace_noise(scale: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::NonPositiveScale(scale));
    }
    let v = rng.open_unit() - 0.5;
    Ok(-scale * v.signum() * (1.0 - 2.0 * v.abs()).ln())
}

/// `dim` independent centered normal draws with standard deviation `sigma`.
pub fn gaussian_noise(sigma: f64, dim: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositiveScale(sigma));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    Ok((0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    Ok(())
}

/// Selection probabilities `softmax(ε·score/(2Δ_q))` of the exponential mechanism.
pub fn exponential_mechanism_probabilities(
    scores: &[f64],
    sensitivity: SensitivityValue,
    budget: PrivacyBudget,
) -> Result<Vec<f64>> {
    check_scores(scores)?;
    if !budget.is_pure() {
        return Err(Error::InvalidBudget(
            "the exponential mechanism is pure DP; delta must be 0".into(),
        ));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let all_equal = scores.iter().all(|s| *s == max);
    if all_equal {
        return Ok(vec![1.0 / scores.len() as f64; scores.len()]);
    }
    if sensitivity.value() == 0.0 {
        return Err(Error::InvalidSensitivity(0.0));
    }
    let rate = budget.epsilon() / (2.0 * sensitivity.value());
    let weights: Vec<f64> = scores.iter().map(|s| (rate * (s - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Exponential mechanism: index `i` with probability `∝ exp(ε·score_i/(2Δ_q))`.
///
/// One uniform draw, inverted through the cumulative weights after
/// max-subtraction.
pub fn exponential_mechanism(
    scores: &[f64],
    sensitivity: SensitivityValue,
    budget: PrivacyBudget,
    rng: &mut RandomStream,
) -> Result<usize> {
    let probs = exponential_mechanism_probabilities(scores, sensitivity, budget)?;
    let u = rng.unit();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1))
}

/// Classical single-release Gaussian calibration `Δ₂·sqrt(2 ln(1.25/δ))/ε`.
fn classical_gaussian_sigma(l2_sensitivity: f64, epsilon: f64, delta: f64) -> f64 {
    l2_sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon
}

/// Per-release noise so that `iterations` Gaussian releases are `(ε, δ)`-DP.
///
/// Takes the smaller of two valid per-step splits: basic composition
/// `(ε/T, δ/T)` and advanced composition
/// `ε₀ = ε/(2·sqrt(2T ln(2/δ)))`, `δ₀ = δ/(2T)`. For `T = 1` this is the
/// classical calibration.
pub fn gaussian_sigma_for_budget(
    l2_sensitivity: f64,
    budget: PrivacyBudget,
    iterations: usize,
) -> Result<f64> {
    if !(l2_sensitivity.is_finite() && l2_sensitivity >= 0.0) {
        return Err(Error::InvalidSensitivity(l2_sensitivity));
    }
    if budget.is_pure() {
        return Err(Error::InvalidBudget(
            "the Gaussian mechanism needs delta > 0".into(),
        ));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "iterations must be at least 1".into(),
        ));
    }
    let (eps, delta) = (budget.epsilon(), budget.delta());
    let t = iterations as f64;
    let basic = classical_gaussian_sigma(l2_sensitivity, eps / t, delta / t);
    let eps0 = eps / (2.0 * (2.0 * t * (2.0 / delta).ln()).sqrt());
    let advanced = classical_gaussian_sigma(l2_sensitivity, eps0, delta / (2.0 * t));
    Ok(basic.min(advanced))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure(eps: f64) -> PrivacyBudget {
        PrivacyBudget::pure(eps).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(5.0, 0.0).is_ok());
        assert!(PrivacyBudget::high_privacy(5.0, 0.0).is_err());
        assert!(PrivacyBudget::high_privacy(1.0, 1e-6).is_ok());
    }

    #[test]
    fn nonpositive_scales_rejected() {
        let mut r = RandomStream::new(0, 0);
        assert_eq!(
            laplace_noise(0.0, &mut r),
            Err(Error::NonPositiveScale(0.0))
        );
        assert_eq!(
            gaussian_noise(-1.0, 3, &mut r),
            Err(Error::NonPositiveScale(-1.0))
        );
    }

    #[test]
    fn laplace_tail_frequency() {
        let mut r = RandomStream::new(11, 0);
        let s = 0.7;
        let n = 1_000_000;
        let cut = s * 100f64.ln();
        let (mut abs_sum, mut nonpos, mut tail) = (0.0, 0usize, 0usize);
        for _ in 0..n {
            let x = laplace_noise(s, &mut r).unwrap();
            abs_sum += x.abs();
            nonpos += usize::from(x <= 0.0);
            tail += usize::from(x.abs() > cut);
        }
        assert!((abs_sum / n as f64 - s).abs() < 3.0 * s / 1e3);
        assert!((nonpos as f64 / n as f64 - 0.5).abs() < 0.002);
        assert!((tail as f64 / n as f64 - 0.01).abs() < 0.002);
    }

    #[test]
    fn gaussian_moments() {
        let mut r = RandomStream::new(12, 0);
        let sigma = 2.5;
        let xs = gaussian_noise(sigma, 1_000_000, &mut r).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let tail = xs.iter().filter(|x| x.abs() > 1.96 * sigma).count() as f64 / n;
        assert!(mean.abs() < 4.0 * sigma / 1e3);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.01);
        assert!((tail - 0.05).abs() < 0.003);
    }

    #[test]
    fn exponential_mechanism_two_point_odds() {
        // ε/(2Δ)·g = ln 3
        let eps = 0.5;
        let dq = SensitivityValue::new(0.25).unwrap();
        let g = 3f64.ln() * 2.0 * 0.25 / eps;
        let probs = exponential_mechanism_probabilities(&[0.0, -g], dq, pure(eps)).unwrap();
        assert!((probs[0] - 0.75).abs() < 1e-12);
        let mut r = RandomStream::new(5, 0);
        let hits = (0..100_000)
            .filter(|_| exponential_mechanism(&[0.0, -g], dq, pure(eps), &mut r).unwrap() == 0)
            .count();
        assert!((hits as f64 / 1e5 - 0.75).abs() < 0.01);
    }

    #[test]
    fn exponential_mechanism_uniform_when_scores_tie() {
        let dq = SensitivityValue::new(0.0).unwrap();
        let probs = exponential_mechanism_probabilities(&[2.0; 4], dq, pure(1.0)).unwrap();
        assert_eq!(probs, vec![0.25; 4]);
        let mut r = RandomStream::new(6, 0);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[exponential_mechanism(&[2.0; 4], dq, pure(1.0), &mut r).unwrap()] += 1;
        }
        let tv: f64 = counts
            .iter()
            .map(|c| (*c as f64 / 1e5 - 0.25).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01);
    }

    #[test]
    fn exponential_mechanism_errors() {
        let dq = SensitivityValue::new(1.0).unwrap();
        let mut r = RandomStream::new(0, 0);
        assert_eq!(
            exponential_mechanism(&[], dq, pure(1.0), &mut r),
            Err(Error::EmptyScores)
        );
        assert_eq!(
            exponential_mechanism(&[0.0, f64::NAN], dq, pure(1.0), &mut r),
            Err(Error::NonFiniteScore(1))
        );
        let approx = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert!(exponential_mechanism(&[0.0, 1.0], dq, approx, &mut r).is_err());
    }

    #[test]
    fn shift_invariance_is_exact_in_distribution() {
        let dq = SensitivityValue::new(0.3).unwrap();
        let scores = [0.1, -0.4, 0.9, 0.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 17.0).collect();
        let a = exponential_mechanism_probabilities(&scores, dq, pure(0.8)).unwrap();
        let b = exponential_mechanism_probabilities(&shifted, dq, pure(0.8)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_sigma_single_release_is_classical() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let s = gaussian_sigma_for_budget(0.3, b, 1).unwrap();
        let oracle = 0.3 * (2.0 * (1.25f64 / 1e-6).ln()).sqrt();
        assert!((s - oracle).abs() < 1e-12);
    }

    #[test]
    fn gaussian_sigma_scaling() {
        let b = PrivacyBudget::new(0.5, 1e-6).unwrap();
        let s1 = gaussian_sigma_for_budget(1.0, b, 10).unwrap();
        let s2 = gaussian_sigma_for_budget(2.0, b, 10).unwrap();
        assert!((s2 / s1 - 2.0).abs() < 1e-12);
        let t1 = gaussian_sigma_for_budget(1.0, b, 1).unwrap();
        let t4 = gaussian_sigma_for_budget(1.0, b, 4).unwrap();
        assert!(t4 / t1 >= 2.0);
        let loose = PrivacyBudget::new(0.9, 1e-6).unwrap();
        assert!(gaussian_sigma_for_budget(1.0, loose, 10).unwrap() < s1);
        let mut prev = 0.0;
        for t in [1, 2, 5, 50, 500, 5000] {
            let s = gaussian_sigma_for_budget(1.0, b, t).unwrap();
            assert!(s > prev);
            prev = s;
        }
        assert!(gaussian_sigma_for_budget(1.0, PrivacyBudget::pure(1.0).unwrap(), 3).is_err());
    }
}
