use std::fmt::Write as _;

use super::table::{RateRow, RateTable};
use crate::error::{Error, Result};
use crate::instances::text::fmt_f64;

/// A swept parameter of a rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    N,
    Tau,
    Eps,
    Delta,
    M,
    D,
}

impl SweepVariable {
    pub const ALL: [SweepVariable; 6] = [
        SweepVariable::N,
        SweepVariable::Tau,
        SweepVariable::Eps,
        SweepVariable::Delta,
        SweepVariable::M,
        SweepVariable::D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::N => "n",
            SweepVariable::Tau => "tau",
            SweepVariable::Eps => "eps",
            SweepVariable::Delta => "delta",
            SweepVariable::M => "M",
            SweepVariable::D => "d",
        }
    }

    pub fn value(self, row: &RateRow) -> f64 {
        match self {
            SweepVariable::N => row.n as f64,
            SweepVariable::Tau => row.tau,
            SweepVariable::Eps => row.eps,
            SweepVariable::Delta => row.delta,
            SweepVariable::M => row.m as f64,
            SweepVariable::D => row.d as f64,
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVariable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep variable {s}")))
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub variable: String,
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Power-law fit `y ≈ e^intercept · x^exponent`.
pub fn fit_power_law(variable: &str, xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::TooFewRows(xs.len().min(ys.len())));
    }
    if let Some(y) = ys.iter().find(|y| y.is_nan() || **y <= 0.0) {
        return Err(Error::NonPositiveMean(*y));
    }
    if let Some(x) = xs.iter().find(|x| x.is_nan() || **x <= 0.0) {
        return Err(Error::InvalidConfig(format!("nonpositive sweep value {x}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig(format!("{variable} does not vary")));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        variable: variable.to_string(),
        exponent,
        intercept,
        r_squared,
        n_points: xs.len(),
    })
}

/// Fit mean excess against `variable` over the rows accepted by `keep`.
///
/// The kept rows must agree on every other swept parameter, except that
/// `δ = n⁻²` may accompany a fit against `n`.
pub fn fit_loglog_slope(
    table: &RateTable,
    variable: SweepVariable,
    keep: impl Fn(&RateRow) -> bool,
) -> Result<SlopeFit> {
    let rows: Vec<&RateRow> = table.rows.iter().filter(|r| keep(r)).collect();
    if rows.len() < 3 {
        return Err(Error::TooFewRows(rows.len()));
    }
    // δ = n⁻² moves with n by construction and does not count as a second variable
    let delta_tied_to_n = variable == SweepVariable::N
        && rows
            .iter()
            .all(|r| r.delta > 0.0 && r.delta == 1.0 / (r.n as f64).powi(2));
    for other in SweepVariable::ALL.into_iter().filter(|v| *v != variable) {
        if other == SweepVariable::Delta && delta_tied_to_n {
            continue;
        }
        let first = other.value(rows[0]);
        if rows.iter().any(|r| other.value(r) != first) {
            return Err(Error::InvalidConfig(format!(
                "rows vary in {} as well as {}",
                other.name(),
                variable.name()
            )));
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| variable.value(r)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_excess).collect();
    fit_power_law(variable.name(), &xs, &ys)
}

pub fn slopes_csv(fits: &[SlopeFit]) -> String {
    let mut out = String::from("variable,exponent,intercept,r2,n_points\n");
    for f in fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.variable,
            fmt_f64(f.exponent),
            fmt_f64(f.intercept),
            fmt_f64(f.r_squared),
            f.n_points
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn exact_inverse_law() {
        let xs = [1.0, 10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let f = fit_power_law("n", &xs, &ys).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_is_log_prefactor() {
        let xs = [2.0, 4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = fit_power_law("n", &xs, &ys).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noisy_law_recovered() {
        let mut rng = RandomStream::new(17, 0);
        let xs: Vec<f64> = (0..10).map(|i| 10f64.powf(1.0 + 0.4 * i as f64)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(-0.7) * (1.0 + 0.01 * (2.0 * rng.unit() - 1.0)))
            .collect();
        let f = fit_power_law("n", &xs, &ys).unwrap();
        assert!((f.exponent + 0.7).abs() < 0.05);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_power_law("n", &[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::TooFewRows(2))
        ));
        assert!(matches!(
            fit_power_law("n", &[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]),
            Err(Error::NonPositiveMean(_))
        ));
    }
}
