//! Hard instances with exactly known optimal values.
//!
//! Every generator here comes with closed-form population risks so the
//! harness can score excess risk without Monte Carlo error in the oracle.

mod embedding;
mod linear;
mod packing;
mod scalar;
pub mod text;

pub use embedding::{
    assign_synthetic_records, build_synthetic_cvar_sample, embedded_loss_distribution,
    overflow_threshold, EmbeddedInstance, Slot, TailRecord,
};
pub use linear::{EmbeddedLinearProblem, LinearLowerFamily, SignVectorSource};
pub use packing::{make_packing, PackingInstance};
pub use scalar::{make_scalar_pair, ScalarHardPair, ScalarPairKind};

/// Default universal constant for the scalar lower-bound pair.
pub const DEFAULT_C1: f64 = 0.125;
/// Default universal constant for the packing construction.
pub const DEFAULT_C0: f64 = 0.125;

/// Convenience constructor for [`LinearLowerFamily`].
pub fn make_linear_family(
    d: usize,
    diameter: f64,
    lipschitz: f64,
    bound: crate::risk::LossBound,
) -> crate::Result<LinearLowerFamily> {
    LinearLowerFamily::new(d, diameter, lipschitz, bound)
}

fn check_constant(name: &str, c: f64) -> crate::Result<()> {
    if c.is_finite() && c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(crate::Error::InvalidParameter(format!(
            "{name} must lie in (0, 1], got {c}"
        )))
    }
}
