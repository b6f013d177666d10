use std::fmt::Write as _;
use std::time::Duration;

use crate::error::Result;
use crate::instances::text::fmt_f64;

pub const CSV_HEADER: &str = "kind,n,tau,eps,delta,M,d,B,G,D,reps,mean_excess,stderr,regime,seed";

/// Which term of the rate dominates a cell, judged from a paired noiseless
/// run on the same samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Private error at least three times the non-private error.
    Privacy,
    /// Private error at most 1.5 times the non-private error.
    Statistical,
    Mixed,
    /// `nτ < 1`: fewer than one expected tail observation.
    Capped,
    /// No reference run was made.
    Unlabeled,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Privacy => "privacy",
            Regime::Statistical => "statistical",
            Regime::Mixed => "mixed",
            Regime::Capped => "capped",
            Regime::Unlabeled => "unlabeled",
        }
    }

    pub fn classify(n: usize, tau: f64, private_mean: f64, reference_mean: Option<f64>) -> Self {
        if (n as f64) * tau < 1.0 {
            return Regime::Capped;
        }
        match reference_mean {
            None => Regime::Unlabeled,
            Some(r) if private_mean >= 3.0 * r => Regime::Privacy,
            Some(r) if private_mean <= 1.5 * r => Regime::Statistical,
            Some(_) => Regime::Mixed,
        }
    }
}

/// One parameter cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub kind: String,
    pub n: usize,
    pub tau: f64,
    pub eps: f64,
    pub delta: f64,
    pub m: usize,
    pub d: usize,
    pub b: f64,
    pub g: f64,
    pub diameter: f64,
    pub reps: usize,
    pub mean_excess: f64,
    pub stderr: f64,
    /// Mean excess of the noiseless reference learner, if run.
    pub reference_mean: Option<f64>,
    pub regime: Regime,
    pub seed: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// CSV with a header row; wall time is not part of the output so reruns
    /// are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.kind,
                r.n,
                fmt_f64(r.tau),
                fmt_f64(r.eps),
                fmt_f64(r.delta),
                r.m,
                r.d,
                fmt_f64(r.b),
                fmt_f64(r.g),
                fmt_f64(r.diameter),
                r.reps,
                fmt_f64(r.mean_excess),
                fmt_f64(r.stderr),
                r.regime.as_str(),
                r.seed
            );
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Mean and standard error `std/sqrt(k)` of `xs`, summed in order.
pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}
