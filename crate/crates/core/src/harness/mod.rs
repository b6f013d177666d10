//! Monte Carlo rate harness.
//!
//! Sweeps a grid of parameter cells, runs a learner on exactly scored hard
//! instances for a number of replicates per cell, and reports mean excess
//! risk with its standard error. Replicate `r` of a cell always draws from
//! the stream `stream_id_for(hash_key(cell), r)`, so results do not depend on
//! thread count or execution order.
//!
//! The harness checks exponents and ratio laws only; the rates it measures
//! hide universal constants that it makes no attempt to pin down.

mod audits;
mod config;
mod slope;
mod sweeps;
mod table;

pub use audits::{
    embed_check, mech_audit, run_audits, scalar_dp_audit, sensitivity_audit, transfer_audit,
    AuditReport, DpAuditSettings,
};
pub use config::{ExperimentKind, ScalarInstanceSet, SweepConfig};
pub use slope::{fit_loglog_slope, fit_power_law, slopes_csv, SlopeFit, SweepVariable};
pub use sweeps::{run_convex_sweep, run_finite_sweep, run_scalar_sweep, run_sweep};
pub use table::{RateRow, RateTable, Regime, CSV_HEADER};
