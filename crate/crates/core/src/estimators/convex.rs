use std::collections::HashMap;
use std::hash::Hash;

use super::LearnerReport;
use crate::error::{Error, Result};
use crate::mechanisms::{gaussian_noise, gaussian_sigma_for_budget, PrivacyBudget};
use crate::risk::{lifted_lipschitz, LossBound, TailMass};
use crate::rng::RandomStream;

/// A convex, `G`-Lipschitz loss with values in `[0, B]` over a closed convex
/// domain of diameter `D` with a Euclidean projection.
pub trait ConvexProblem {
    type Point: Clone + Eq + Hash;

    fn dim(&self) -> usize;
    fn diameter(&self) -> f64;
    fn lipschitz(&self) -> f64;
    fn bound(&self) -> LossBound;

    /// Euclidean projection onto the domain, in place.
    fn project(&self, w: &mut [f64]);

    fn loss(&self, w: &[f64], z: &Self::Point) -> f64;

    /// Writes a subgradient of `loss(·, z)` at `w` into `out`.
    fn subgradient(&self, w: &[f64], z: &Self::Point, out: &mut [f64]);

    /// Starting iterate; the projection of the origin by default.
    fn initial_point(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dim()];
        self.project(&mut w);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeRule {
    /// `η = D_Θ / sqrt(T·(L² + (d+1)σ²))`.
    NoiseAware,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexLearnerConfig {
    /// Number of iterations; `None` means `T = n`.
    pub iterations: Option<usize>,
    pub step: StepSizeRule,
    /// Uniform average of the iterates if true, last iterate otherwise.
    pub averaging: bool,
}

impl Default for ConvexLearnerConfig {
    fn default() -> Self {
        ConvexLearnerConfig {
            iterations: None,
            step: StepSizeRule::NoiseAware,
            averaging: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexOutput {
    pub w: Vec<f64>,
    /// Released CVaR threshold `η = λ·u`.
    pub threshold: f64,
    pub lambda: f64,
    pub step_size: f64,
    pub sigma: f64,
}

/// Noisy projected subgradient descent on the rescaled lifted objective
/// `F(w, u) = λu + (1/τ)·mean (ℓ(w; z) − λu)_+`.
///
/// Requires `0 < δ ≤ n⁻²`. Each step adds `N(0, σ²I)` calibrated to the
/// per-step sensitivity `2L/n` under `T`-fold composition.
pub fn private_convex_cvar<P: ConvexProblem>(
    problem: &P,
    sample: &[P::Point],
    tau: TailMass,
    budget: PrivacyBudget,
    config: &ConvexLearnerConfig,
    rng: &mut RandomStream,
) -> Result<LearnerReport<ConvexOutput>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sample.len() as f64;
    if budget.is_pure() || budget.delta() > 1.0 / (n * n) {
        return Err(Error::InvalidBudget(format!(
            "delta must lie in (0, 1/n^2] = (0, {:e}], got {:e}",
            1.0 / (n * n),
            budget.delta()
        )));
    }
    let mut report = run(problem, sample, tau, config, Some(budget), rng)?;
    report.budget = Some(budget);
    Ok(report)
}

/// The same iteration with the noise switched off. Not private.
pub fn nonprivate_convex_cvar<P: ConvexProblem>(
    problem: &P,
    sample: &[P::Point],
    tau: TailMass,
    config: &ConvexLearnerConfig,
) -> Result<LearnerReport<ConvexOutput>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut unused = RandomStream::new(0, 0);
    run(problem, sample, tau, config, None, &mut unused)
}

fn run<P: ConvexProblem>(
    problem: &P,
    sample: &[P::Point],
    tau: TailMass,
    config: &ConvexLearnerConfig,
    budget: Option<PrivacyBudget>,
    rng: &mut RandomStream,
) -> Result<LearnerReport<ConvexOutput>> {
    let d = problem.dim();
    let diameter = problem.diameter();
    let g = problem.lipschitz();
    let b = problem.bound().value();
    let t_mass = tau.value();
    if d == 0 {
        return Err(Error::InvalidDomain("dimension must be at least 1".into()));
    }
    if !(diameter.is_finite() && diameter >= 0.0) {
        return Err(Error::InvalidDomain(format!("diameter {diameter}")));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidParameter(format!("Lipschitz constant {g}")));
    }
    probe_projection(problem)?;

    let w0 = problem.initial_point();
    if diameter == 0.0 {
        return Ok(LearnerReport {
            output: ConvexOutput {
                w: w0,
                threshold: 0.0,
                lambda: 1.0,
                step_size: 0.0,
                sigma: 0.0,
            },
            budget,
            noise_scales: vec![],
            iterations: 0,
        });
    }

    let lambda = if g > 0.0 && b > 0.0 {
        (g * b / diameter).sqrt()
    } else {
        1.0
    };
    let u_max = b / lambda;
    let lip = lifted_lipschitz(g, lambda, tau);
    let lifted_diameter = (diameter * diameter + u_max * u_max).sqrt();
    let n = sample.len();
    let iterations = config.iterations.unwrap_or(n);
    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "iterations must be at least 1".into(),
        ));
    }
    let sigma = match budget {
        Some(budget) => gaussian_sigma_for_budget(2.0 * lip / n as f64, budget, iterations)?,
        None => 0.0,
    };
    let step = match config.step {
        StepSizeRule::NoiseAware => {
            let t = iterations as f64;
            lifted_diameter / (t * (lip * lip + (d + 1) as f64 * sigma * sigma)).sqrt()
        }
        StepSizeRule::Constant(eta) if eta.is_finite() && eta > 0.0 => eta,
        StepSizeRule::Constant(eta) => {
            return Err(Error::InvalidParameter(format!("step size {eta}")))
        }
    };

    let groups = group_points(sample);
    let inv_n = 1.0 / n as f64;
    let mut w = w0;
    let mut u = 0.5 * u_max;
    let mut w_sum = vec![0.0; d];
    let mut u_sum = 0.0;
    let mut grad_w = vec![0.0; d];
    let mut sub = vec![0.0; d];

    for _ in 0..iterations {
        grad_w.iter_mut().for_each(|x| *x = 0.0);
        let eta_now = lambda * u;
        let mut active_weight = 0.0;
        for &(first, count) in &groups {
            let z = &sample[first];
            let value = problem.loss(&w, z);
            if !(value >= -1e-12 * b.max(1.0) && value <= b + 1e-12 * b.max(1.0)) {
                return Err(Error::LossOutOfRange {
                    index: first,
                    value,
                    bound: b,
                });
            }
            if value - eta_now > 0.0 {
                problem.subgradient(&w, z, &mut sub);
                let norm = sub.iter().map(|x| x * x).sum::<f64>().sqrt();
                // defensive clip so the per-record norm never exceeds L
                let scale = if norm > g && norm > 0.0 {
                    g / norm
                } else {
                    1.0
                };
                let coef = count as f64 * inv_n * scale / t_mass;
                for (acc, s) in grad_w.iter_mut().zip(&sub) {
                    *acc += coef * s;
                }
                active_weight += count as f64;
            }
        }
        let grad_u = lambda * (1.0 - active_weight * inv_n / t_mass);

        let noise = if sigma > 0.0 {
            Some(gaussian_noise(sigma, d + 1, rng)?)
        } else {
            None
        };
        for (k, wk) in w.iter_mut().enumerate() {
            let xi = noise.as_ref().map_or(0.0, |v| v[k]);
            *wk -= step * (grad_w[k] + xi);
        }
        let xi_u = noise.as_ref().map_or(0.0, |v| v[d]);
        u = (u - step * (grad_u + xi_u)).clamp(0.0, u_max);
        problem.project(&mut w);

        for (acc, wk) in w_sum.iter_mut().zip(&w) {
            *acc += wk;
        }
        u_sum += u;
    }

    let (mut w_out, u_out) = if config.averaging {
        let t = iterations as f64;
        (w_sum.into_iter().map(|x| x / t).collect(), u_sum / t)
    } else {
        (w, u)
    };
    problem.project(&mut w_out);
    Ok(LearnerReport {
        output: ConvexOutput {
            w: w_out,
            threshold: lambda * u_out,
            lambda,
            step_size: step,
            sigma,
        },
        budget,
        noise_scales: vec![sigma],
        iterations,
    })
}

/// `(index of first occurrence, multiplicity)` in order of first appearance.
fn group_points<T: Eq + Hash>(sample: &[T]) -> Vec<(usize, usize)> {
    let mut slot: HashMap<&T, usize> = HashMap::new();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (i, z) in sample.iter().enumerate() {
        match slot.get(z) {
            Some(&k) => groups[k].1 += 1,
            None => {
                slot.insert(z, groups.len());
                groups.push((i, 1));
            }
        }
    }
    groups
}

fn probe_projection<P: ConvexProblem>(problem: &P) -> Result<()> {
    let d = problem.dim();
    let reach = problem.diameter().max(1.0) * 3.0;
    let mut anchor = vec![0.0; d];
    problem.project(&mut anchor);
    for k in 0..4usize {
        let mut x: Vec<f64> = (0..d)
            .map(|i| ((i + k) % 3) as f64 - 1.0)
            .map(|s| s * reach * (k + 1) as f64 / 4.0)
            .collect();
        problem.project(&mut x);
        let mut again = x.clone();
        problem.project(&mut again);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let moved = x
            .iter()
            .zip(&again)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if !x.iter().all(|v| v.is_finite()) || moved > 1e-9 * (1.0 + norm) {
            return Err(Error::InvalidDomain("projection is not idempotent".into()));
        }
        let spread = x
            .iter()
            .zip(&anchor)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if spread > problem.diameter() * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InvalidDomain(format!(
                "projected points {spread} apart exceed the diameter {}",
                problem.diameter()
            )));
        }
    }
    Ok(())
}
