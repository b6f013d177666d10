use super::LearnerReport;
use crate::error::{Error, Result};
use crate::mechanisms::{exponential_mechanism, PrivacyBudget, SensitivityValue};
use crate::risk::{capped_top_average, LossBound, TailMass};
use crate::rng::RandomStream;

/// A finite predictor class `{f_0, …, f_{M-1}}` with losses in `[0, B]`.
pub trait FiniteClass {
    type Point;

    fn num_predictors(&self) -> usize;

    fn bound(&self) -> LossBound;

    fn loss(&self, predictor: usize, z: &Self::Point) -> f64;

    /// Empirical CVaR of every predictor on `sample`.
    ///
    /// The default evaluates all `M·n` losses; implementations with
    /// structure may override it but must return the same values.
    fn empirical_cvars(&self, sample: &[Self::Point], tau: TailMass) -> Result<Vec<f64>> {
        let b = self.bound();
        let mut losses = Vec::with_capacity(sample.len());
        (0..self.num_predictors())
            .map(|r| {
                losses.clear();
                for (index, z) in sample.iter().enumerate() {
                    let value = self.loss(r, z);
                    if !b.contains(value) {
                        return Err(Error::LossOutOfRange {
                            index,
                            value,
                            bound: b.value(),
                        });
                    }
                    losses.push(value);
                }
                Ok(capped_top_average(&losses, tau.value()))
            })
            .collect()
    }
}

/// Exponential mechanism over the class with score `−ρ̂` and sensitivity `B/(nτ)`.
pub fn private_finite_class<C: FiniteClass>(
    instance: &C,
    sample: &[C::Point],
    tau: TailMass,
    budget: PrivacyBudget,
    rng: &mut RandomStream,
) -> Result<LearnerReport<usize>> {
    if !budget.is_pure() {
        return Err(Error::InvalidBudget(
            "the finite-class learner is pure DP; delta must be 0".into(),
        ));
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if instance.num_predictors() == 0 {
        return Err(Error::InvalidParameter("empty predictor class".into()));
    }
    let risks = instance.empirical_cvars(sample, tau)?;
    let sensitivity = instance.bound().value() / (sample.len() as f64 * tau.value());
    let scores: Vec<f64> = risks.iter().map(|r| -r).collect();
    let chosen = exponential_mechanism(&scores, SensitivityValue::new(sensitivity)?, budget, rng)?;
    Ok(LearnerReport {
        output: chosen,
        budget: Some(budget),
        noise_scales: vec![sensitivity],
        iterations: 1,
    })
}

/// Non-private reference: empirical CVaR minimizer, ties broken uniformly.
pub fn empirical_risk_minimizer<C: FiniteClass>(
    instance: &C,
    sample: &[C::Point],
    tau: TailMass,
    rng: &mut RandomStream,
) -> Result<LearnerReport<usize>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let risks = instance.empirical_cvars(sample, tau)?;
    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..risks.len()).filter(|&r| risks[r] == best).collect();
    let chosen = ties[rng.index(ties.len())];
    Ok(LearnerReport {
        output: chosen,
        budget: None,
        noise_scales: vec![],
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Predictor r has loss `table[r][z]`.
    struct Table(Vec<Vec<f64>>);

    impl FiniteClass for Table {
        type Point = usize;
        fn num_predictors(&self) -> usize {
            self.0.len()
        }
        fn bound(&self) -> LossBound {
            LossBound::new(1.0).unwrap()
        }
        fn loss(&self, predictor: usize, z: &usize) -> f64 {
            self.0[predictor][*z]
        }
    }

    #[test]
    fn single_predictor_always_selected() {
        let t = Table(vec![vec![0.3, 0.8]]);
        let mut rng = RandomStream::new(1, 0);
        for _ in 0..100 {
            let r = private_finite_class(
                &t,
                &[0, 1, 1],
                TailMass::new(0.5).unwrap(),
                PrivacyBudget::pure(1.0).unwrap(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(r.output, 0);
        }
    }

    #[test]
    fn selection_odds_match_gap() {
        // predictor 0 has empirical CVaR 0, predictor 1 has CVaR g
        let t = Table(vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
        let sample: Vec<usize> = [vec![1; 3], vec![0; 17]].concat();
        let tau = TailMass::new(0.5).unwrap();
        let eps = 0.4;
        let risks = t.empirical_cvars(&sample, tau).unwrap();
        let gap = risks[1] - risks[0];
        let odds = (eps * 20.0 * 0.5 * gap / 2.0).exp();
        let mut rng = RandomStream::new(2, 0);
        let draws = 100_000;
        let zeros = (0..draws)
            .filter(|_| {
                private_finite_class(
                    &t,
                    &sample,
                    tau,
                    PrivacyBudget::pure(eps).unwrap(),
                    &mut rng,
                )
                .unwrap()
                .output
                    == 0
            })
            .count();
        let expected = odds / (1.0 + odds);
        assert!((zeros as f64 / draws as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn out_of_range_loss_is_reported() {
        let t = Table(vec![vec![0.0, 1.5]]);
        let mut rng = RandomStream::new(0, 0);
        let err = private_finite_class(
            &t,
            &[0, 1],
            TailMass::new(1.0).unwrap(),
            PrivacyBudget::pure(1.0).unwrap(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::LossOutOfRange { index: 1, .. }));
    }

    #[test]
    fn erm_breaks_ties_among_minimizers_only() {
        let t = Table(vec![vec![0.5], vec![0.2], vec![0.2]]);
        let mut rng = RandomStream::new(9, 0);
        let tau = TailMass::new(1.0).unwrap();
        let mut seen = [0usize; 3];
        for _ in 0..200 {
            seen[empirical_risk_minimizer(&t, &[0], tau, &mut rng)
                .unwrap()
                .output] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1] > 0 && seen[2] > 0);
    }
}
