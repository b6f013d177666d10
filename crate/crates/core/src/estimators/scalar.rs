use super::LearnerReport;
use crate::error::{Error, Result};
use crate::mechanisms::{laplace_noise, PrivacyBudget};
use crate::risk::{cvar_sensitivity_bound, empirical_cvar, BoundedLossVector, TailMass};
use crate::rng::RandomStream;

/// Laplace plug-in: `clamp(ρ̂ + Lap(Δ_τ/ε), 0, B)` with `Δ_τ = B·min{1, 1/(nτ)}`.
pub fn private_scalar_cvar(
    sample: &BoundedLossVector,
    tau: TailMass,
    budget: PrivacyBudget,
    rng: &mut RandomStream,
) -> Result<LearnerReport<f64>> {
    if !budget.is_pure() {
        return Err(Error::InvalidBudget(
            "the scalar plug-in is pure DP; delta must be 0".into(),
        ));
    }
    let b = sample.bound().value();
    let estimate = empirical_cvar(sample, tau);
    let sensitivity = cvar_sensitivity_bound(sample.len(), tau, sample.bound())?.minimized;
    let scale = sensitivity / budget.epsilon();
    if scale == 0.0 {
        // B = 0: every dataset has CVaR 0
        return Ok(LearnerReport {
            output: estimate,
            budget: Some(budget),
            noise_scales: vec![0.0],
            iterations: 1,
        });
    }
    let noisy = estimate + laplace_noise(scale, rng)?;
    Ok(LearnerReport {
        output: noisy.clamp(0.0, b),
        budget: Some(budget),
        noise_scales: vec![scale],
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::LossBound;

    fn vec_of(v: Vec<f64>, b: f64) -> BoundedLossVector {
        BoundedLossVector::new(v, LossBound::new(b).unwrap()).unwrap()
    }

    #[test]
    fn output_stays_in_range_and_reports_scale() {
        let s = vec_of(vec![0.1, 0.9, 0.5, 0.3], 1.0);
        let t = TailMass::new(0.5).unwrap();
        let budget = PrivacyBudget::pure(0.3).unwrap();
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..1000 {
            let r = private_scalar_cvar(&s, t, budget, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&r.output));
            assert!((r.noise_scales[0] - 0.5 / 0.3).abs() < 1e-12);
            assert_eq!(r.budget, Some(budget));
        }
    }

    #[test]
    fn huge_epsilon_recovers_plugin() {
        let s = vec_of(vec![0.1, 0.9, 0.5, 0.3], 1.0);
        let t = TailMass::new(0.5).unwrap();
        let mut rng = RandomStream::new(4, 0);
        let r = private_scalar_cvar(&s, t, PrivacyBudget::pure(1e9).unwrap(), &mut rng).unwrap();
        assert!((r.output - 0.7).abs() < 1e-6);
    }

    #[test]
    fn zero_sample_projects_half_the_mass_to_zero() {
        let s = vec_of(vec![0.0; 10], 1.0);
        let t = TailMass::new(0.5).unwrap();
        let budget = PrivacyBudget::pure(1.0).unwrap();
        let mut rng = RandomStream::new(5, 0);
        let zeros = (0..20_000)
            .filter(|_| private_scalar_cvar(&s, t, budget, &mut rng).unwrap().output == 0.0)
            .count();
        assert!((zeros as f64 / 20_000.0 - 0.5).abs() < 0.015);
    }

    #[test]
    fn approximate_budget_rejected() {
        let s = vec_of(vec![0.5], 1.0);
        let mut rng = RandomStream::new(0, 0);
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        assert!(matches!(
            private_scalar_cvar(&s, TailMass::new(1.0).unwrap(), budget, &mut rng),
            Err(Error::InvalidBudget(_))
        ));
    }
}
