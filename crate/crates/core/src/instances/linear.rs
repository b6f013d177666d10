use super::embedding::{Slot, TailRecord};
use crate::error::{Error, Result};
use crate::estimators::ConvexProblem;
use crate::risk::{LossBound, PROB_TOLERANCE};
use crate::rng::RandomStream;

/// Shifted linear losses `a_v(w) = (G0/sqrt(d))·⟨v, w⟩ + R0/2` over the ball of
/// radius `D/2`, with sign vectors `v ∈ {−1, +1}^d`.
///
/// `G0 = min{G, B/D}` and `R0 = G0·D = min{B, GD}`, so every loss lies in
/// `[0, R0] ⊆ [0, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLowerFamily {
    d: usize,
    diameter: f64,
    lipschitz: f64,
    bound: LossBound,
    g0: f64,
    r0: f64,
}

impl LinearLowerFamily {
    pub fn new(d: usize, diameter: f64, lipschitz: f64, bound: LossBound) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if !(diameter.is_finite() && diameter > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "diameter must be positive, got {diameter}"
            )));
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        let g0 = lipschitz.min(bound.value() / diameter);
        Ok(LinearLowerFamily {
            d,
            diameter,
            lipschitz,
            bound,
            g0,
            r0: g0 * diameter,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn bound(&self) -> LossBound {
        self.bound
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    fn slope(&self) -> f64 {
        self.g0 / (self.d as f64).sqrt()
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn project(&self, w: &mut [f64]) {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = self.radius();
        if norm > r {
            let s = r / norm;
            w.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn loss(&self, w: &[f64], v: &[f64]) -> f64 {
        self.population_value(w, v)
    }

    /// `E a_v(w)` for mean sign vector `μ` (linear in `v`).
    pub fn population_value(&self, w: &[f64], mu: &[f64]) -> f64 {
        let dot: f64 = mu.iter().zip(w).map(|(m, x)| m * x).sum();
        self.slope() * dot + 0.5 * self.r0
    }

    /// Minimizer `−(D/2)·μ/‖μ‖` and value `R0/2 − (G0·D/(2·sqrt(d)))·‖μ‖`.
    pub fn optimum(&self, mu: &[f64]) -> (Vec<f64>, f64) {
        let norm = mu.iter().map(|m| m * m).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (vec![0.0; self.d], 0.5 * self.r0);
        }
        let w = mu.iter().map(|m| -self.radius() * m / norm).collect();
        let value = 0.5 * self.r0 - self.slope() * self.radius() * norm;
        (w, value)
    }

    pub fn excess(&self, w: &[f64], mu: &[f64]) -> f64 {
        self.population_value(w, mu) - self.optimum(mu).1
    }
}

/// A finite distribution over sign vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SignVectorSource {
    vectors: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl SignVectorSource {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let d = atoms.first().map(|(v, _)| v.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidDistribution(
                "empty sign-vector source".into(),
            ));
        }
        let mut total = 0.0;
        for (v, p) in &atoms {
            if v.len() != d || v.iter().any(|x| *x != 1.0 && *x != -1.0) {
                return Err(Error::InvalidDistribution(
                    "entries must be ±1 with equal length".into(),
                ));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "invalid probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        let (vectors, probs) = atoms.into_iter().unzip();
        Ok(SignVectorSource { vectors, probs })
    }

    /// `s` with probability `(1 + α)/2`, `−s` otherwise; mean `α·s`.
    pub fn antipodal(s: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        if alpha == 1.0 {
            return Self::new(vec![(s, 1.0)]);
        }
        Self::new(vec![(s, 0.5 * (1.0 + alpha)), (neg, 0.5 * (1.0 - alpha))])
    }

    /// Uniformly random sign vector.
    pub fn random_signs(d: usize, rng: &mut RandomStream) -> Vec<f64> {
        (0..d)
            .map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim()];
        for (v, p) in self.vectors.iter().zip(&self.probs) {
            for (m, x) in mu.iter_mut().zip(v) {
                *m += p * x;
            }
        }
        mu
    }

    /// Index of a sign vector drawn from the source.
    pub fn sample_index(&self, rng: &mut RandomStream) -> usize {
        let u = rng.unit();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// The linear family composed with the tail embedding, as a convex problem
/// over records `(T, index of v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedLinearProblem {
    pub family: LinearLowerFamily,
    pub source: SignVectorSource,
}

impl EmbeddedLinearProblem {
    pub fn new(family: LinearLowerFamily, source: SignVectorSource) -> Result<Self> {
        if family.dim() != source.dim() {
            return Err(Error::InvalidParameter(format!(
                "family dimension {} differs from sign vectors of length {}",
                family.dim(),
                source.dim()
            )));
        }
        Ok(EmbeddedLinearProblem { family, source })
    }

    pub fn sample(&self, n: usize, tau: f64, rng: &mut RandomStream) -> Vec<TailRecord<usize>> {
        (0..n)
            .map(|_| {
                if rng.bernoulli(tau) {
                    TailRecord {
                        active: true,
                        slot: Slot::Point(self.source.sample_index(rng)),
                    }
                } else {
                    TailRecord::inactive()
                }
            })
            .collect()
    }

    /// Exact population excess CVaR; by the embedding identity this is the
    /// excess mean risk of the base linear family.
    pub fn excess(&self, w: &[f64]) -> f64 {
        self.family.excess(w, &self.source.mean())
    }
}

impl ConvexProblem for EmbeddedLinearProblem {
    type Point = TailRecord<usize>;

    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn diameter(&self) -> f64 {
        self.family.diameter()
    }

    fn lipschitz(&self) -> f64 {
        self.family.g0()
    }

    fn bound(&self) -> LossBound {
        self.family.bound()
    }

    fn project(&self, w: &mut [f64]) {
        self.family.project(w)
    }

    fn loss(&self, w: &[f64], z: &TailRecord<usize>) -> f64 {
        z.loss(|&i| self.family.loss(w, &self.source.vectors()[i]))
    }

    fn subgradient(&self, _w: &[f64], z: &TailRecord<usize>, out: &mut [f64]) {
        match (z.active, &z.slot) {
            (true, Slot::Point(i)) => {
                let s = self.family.slope();
                for (o, v) in out.iter_mut().zip(&self.source.vectors()[*i]) {
                    *o = s * v;
                }
            }
            _ => out.fill(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g0_and_r0() {
        let f = LinearLowerFamily::new(3, 1.0, 2.0, LossBound::new(1.0).unwrap()).unwrap();
        assert_eq!(f.g0(), 1.0);
        assert_eq!(f.r0(), 1.0);
        let f = LinearLowerFamily::new(3, 2.0, 0.1, LossBound::new(1.0).unwrap()).unwrap();
        assert!((f.r0() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn optimum_beats_a_grid_in_two_dimensions() {
        let f = LinearLowerFamily::new(2, 1.0, 1.0, LossBound::new(1.0).unwrap()).unwrap();
        let mu = [0.3, -0.7];
        let (w_star, value) = f.optimum(&mu);
        assert!((f.population_value(&w_star, &mu) - value).abs() < 1e-12);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            let angle = i as f64 * std::f64::consts::TAU / 400.0;
            let w = [0.5 * angle.cos(), 0.5 * angle.sin()];
            best = best.min(f.population_value(&w, &mu));
        }
        assert!(value <= best + 1e-12);
        assert!(best - value < 1e-4);
    }

    #[test]
    fn losses_stay_in_range_on_the_ball() {
        let f = LinearLowerFamily::new(4, 3.0, 0.5, LossBound::new(1.0).unwrap()).unwrap();
        let mut rng = RandomStream::new(1, 0);
        for _ in 0..1000 {
            let mut w: Vec<f64> = (0..4).map(|_| 4.0 * rng.unit() - 2.0).collect();
            f.project(&mut w);
            let v = SignVectorSource::random_signs(4, &mut rng);
            let a = f.loss(&w, &v);
            assert!((-1e-12..=f.r0() + 1e-12).contains(&a));
        }
    }

    #[test]
    fn antipodal_mean() {
        let s = SignVectorSource::antipodal(vec![1.0, -1.0], 0.5).unwrap();
        assert_eq!(s.mean(), vec![0.5, -0.5]);
        let point = SignVectorSource::antipodal(vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(point.vectors().len(), 1);
    }

    #[test]
    fn embedded_subgradient_is_zero_off_the_tail() {
        let f = LinearLowerFamily::new(2, 1.0, 1.0, LossBound::new(1.0).unwrap()).unwrap();
        let p = EmbeddedLinearProblem::new(
            f,
            SignVectorSource::antipodal(vec![1.0, 1.0], 1.0).unwrap(),
        )
        .unwrap();
        let mut out = vec![1.0; 2];
        p.subgradient(&[0.0, 0.0], &TailRecord::inactive(), &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
        let active = TailRecord {
            active: true,
            slot: Slot::Point(0),
        };
        p.subgradient(&[0.0, 0.0], &active, &mut out);
        assert!((out[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.loss(&[0.0, 0.0], &TailRecord::inactive()), 0.0);
    }
}
