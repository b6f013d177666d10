//! Tail embedding: `Z = (T, Y)` with `T ~ Bernoulli(τ)`, loss `T·a(w; Y)`.
//!
//! The CVaR at level `τ` of the embedded loss equals the plain mean of `a`
//! under the base distribution, which turns mean-risk lower bounds into
//! CVaR lower bounds.

use crate::error::{Error, Result};
use crate::risk::{DiscreteDistribution, LossBound, TailMass};
use crate::rng::RandomStream;

/// A base point or the reserved dummy `x_⊥` with `a(·, x_⊥) ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot<X> {
    Point(X),
    Dummy,
}

/// One embedded record `(T, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TailRecord<X> {
    pub active: bool,
    pub slot: Slot<X>,
}

impl<X> TailRecord<X> {
    pub fn inactive() -> Self {
        TailRecord {
            active: false,
            slot: Slot::Dummy,
        }
    }

    /// Embedded loss `T·a(w; Y)` given the base loss of the slot.
    pub fn loss(&self, base: impl FnOnce(&X) -> f64) -> f64 {
        match (&self.slot, self.active) {
            (Slot::Point(x), true) => base(x),
            _ => 0.0,
        }
    }
}

/// Finite base distribution `Q` and a tail mass.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedInstance<X> {
    base: Vec<(X, f64)>,
    tau: TailMass,
}

impl<X: Clone> EmbeddedInstance<X> {
    pub fn new(base: Vec<(X, f64)>, tau: TailMass) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::InvalidDistribution("empty base distribution".into()));
        }
        let total: f64 = base.iter().map(|(_, p)| *p).sum();
        if base.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0))
            || (total - 1.0).abs() > crate::risk::PROB_TOLERANCE
        {
            return Err(Error::InvalidDistribution(format!(
                "base probabilities must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Ok(EmbeddedInstance { base, tau })
    }

    pub fn base(&self) -> &[(X, f64)] {
        &self.base
    }

    pub fn tau(&self) -> TailMass {
        self.tau
    }

    /// Draw `Y ~ Q`.
    pub fn sample_base(&self, rng: &mut RandomStream) -> X {
        let u = rng.unit();
        let mut acc = 0.0;
        for (x, p) in &self.base {
            acc += p;
            if u < acc {
                return x.clone();
            }
        }
        self.base
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .unwrap_or(&self.base[0])
            .0
            .clone()
    }

    /// Draw one embedded record.
    pub fn sample(&self, rng: &mut RandomStream) -> TailRecord<X> {
        if rng.bernoulli(self.tau.value()) {
            TailRecord {
                active: true,
                slot: Slot::Point(self.sample_base(rng)),
            }
        } else {
            TailRecord::inactive()
        }
    }

    /// Distribution of `T·a(w; Y)` given base losses `a(w; x)`.
    pub fn loss_distribution(
        &self,
        base_loss: impl Fn(&X) -> f64,
        bound: LossBound,
    ) -> Result<DiscreteDistribution> {
        let atoms: Vec<(f64, f64)> = self.base.iter().map(|(x, p)| (base_loss(x), *p)).collect();
        embedded_loss_distribution(&atoms, self.tau, bound)
    }

    /// `E_Q a(w; X)`.
    pub fn base_mean(&self, base_loss: impl Fn(&X) -> f64) -> f64 {
        self.base.iter().map(|(x, p)| p * base_loss(x)).sum()
    }
}

/// Distribution of the embedded loss: atoms `(a_x, τ·q_x)` plus `(0, 1 − τ)`.
pub fn embedded_loss_distribution(
    base: &[(f64, f64)],
    tau: TailMass,
    bound: LossBound,
) -> Result<DiscreteDistribution> {
    let t = tau.value();
    let mut atoms = Vec::with_capacity(base.len() + 1);
    for (index, &(a, q)) in base.iter().enumerate() {
        if !bound.contains(a) {
            return Err(Error::LossOutOfRange {
                index,
                value: a,
                bound: bound.value(),
            });
        }
        atoms.push((a, t * q));
    }
    atoms.push((0.0, 1.0 - t));
    DiscreteDistribution::new(atoms)
}

/// `m = ⌈4nτ⌉`, the number of ordinary samples the transfer consumes.
pub fn overflow_threshold(n: usize, tau: TailMass) -> usize {
    (4.0 * n as f64 * tau.value()).ceil() as usize
}

/// Synthetic CVaR sample of size `n` from ordinary samples.
///
/// Draws activations `T_i ~ Bernoulli(τ)` and delegates to
/// [`assign_synthetic_records`].
pub fn build_synthetic_cvar_sample<X: Clone>(
    ordinary: &[X],
    n: usize,
    tau: TailMass,
    rng: &mut RandomStream,
) -> Result<Vec<TailRecord<X>>> {
    if ordinary.is_empty() {
        return Err(Error::EmptySample);
    }
    let activations: Vec<bool> = (0..n).map(|_| rng.bernoulli(tau.value())).collect();
    Ok(assign_synthetic_records(ordinary, &activations))
}

/// Fill active slots with ordinary points in order; inactive slots and any
/// active slots beyond `ordinary.len()` get the dummy.
pub fn assign_synthetic_records<X: Clone>(
    ordinary: &[X],
    activations: &[bool],
) -> Vec<TailRecord<X>> {
    let mut next = ordinary.iter();
    activations
        .iter()
        .map(|&active| {
            if !active {
                return TailRecord::inactive();
            }
            let slot = next.next().map_or(Slot::Dummy, |x| Slot::Point(x.clone()));
            TailRecord { active: true, slot }
        })
        .collect()
}
