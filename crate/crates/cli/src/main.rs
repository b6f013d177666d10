//! `privcvar` command-line driver.
//!
//! Every subcommand ends its standard output with one `RESULT pass|fail ...`
//! line. Exit codes: 0 pass, 1 runtime failure, 2 usage error, 3 audit fail.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use privcvar::harness::{
    fit_loglog_slope, run_audits, run_sweep, slopes_csv, AuditReport, ExperimentKind, RateTable,
    Regime, ScalarInstanceSet, SlopeFit, SweepConfig, SweepVariable,
};
use privcvar::Error;

#[derive(Parser, Debug)]
#[command(
    name = "privcvar",
    version,
    about = "Private CVaR rate experiments and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scalar CVaR estimation error of the Laplace plug-in on the hard pairs.
    ///
    /// Checks the scalar rate B·(1/sqrt(nτ) + 1/(εnτ)): slope -1/2 in n when
    /// sampling error dominates and -1 in n and ε when privacy dominates.
    ScalarRate {
        #[command(flatten)]
        grids: ScalarArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Excess CVaR of private selection on the finite-class packing.
    ///
    /// Checks that the privacy term grows like ln(2M)/(εnτ) in the class size M.
    FiniteRate {
        #[command(flatten)]
        grids: ScalarArgs,
        /// Class sizes M (alias --M).
        #[arg(long = "M-grid", alias = "M", value_parser = grid::<usize>, default_value = "8")]
        m_grid: ::std::vec::Vec<usize>,
        /// Packing mass constant c0 in (0, 1].
        #[arg(long, default_value_t = privcvar::instances::DEFAULT_C0)]
        c0: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Excess CVaR of the private convex learner on embedded linear families.
    ///
    /// Checks the convex privacy term (GD+B)·sqrt(d·ln(1/δ))/(εnτ): exponent
    /// +1/2 in d and -1 in τ and n.
    ConvexRate {
        #[command(flatten)]
        grids: ScalarArgs,
        /// Dimensions d.
        #[arg(long = "d-grid", alias = "d", value_parser = grid::<usize>, default_value = "4")]
        d_grid: ::std::vec::Vec<usize>,
        /// δ values; defaults to δ = n⁻² per cell.
        #[arg(long, value_parser = grid::<f64>)]
        delta: Option<::std::vec::Vec<f64>>,
        /// Lipschitz constant G.
        #[arg(long = "G", default_value_t = 1.0)]
        g: f64,
        /// Domain diameter D.
        #[arg(long = "D", default_value_t = 1.0)]
        diameter: f64,
        /// Mean strength of the sign-vector source, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Learner iterations; defaults to T = n.
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exhaustive one-record sensitivity audit of empirical CVaR.
    ///
    /// Checks that the largest change from replacing one loss is exactly
    /// B·min{1, 1/(nτ)} and that the bound is attained.
    SensitivityAudit {
        /// Largest sample size (at most 8).
        #[arg(long = "n-max", default_value_t = 6)]
        n_max: usize,
        /// Tail masses τ.
        #[arg(long = "tau", alias = "tau-grid", value_parser = grid::<f64>, default_value = "0.2,0.5,1")]
        tau: ::std::vec::Vec<f64>,
        /// Loss bound B.
        #[arg(long = "B", default_value_t = 1.0)]
        b: f64,
        #[command(flatten)]
        audit: AuditArgs,
        /// Accepted for uniformity; the audit is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Distribution audit of the exponential and Laplace mechanisms.
    ///
    /// Checks the exponential mechanism against its analytic softmax (TV at
    /// most 0.02), its expected score shortfall against 2Δ(ln M + 1)/ε, and
    /// runs a binned likelihood-ratio falsification test of the scalar
    /// plug-in over all neighbouring datasets with n ≤ 4.
    MechAudit {
        /// Numbers of candidates M (alias --M-grid).
        #[arg(long = "M", alias = "M-grid", value_parser = grid::<usize>, default_value = "2,8,64")]
        m: ::std::vec::Vec<usize>,
        /// Privacy levels ε (alias --eps-grid).
        #[arg(long = "eps", alias = "eps-grid", value_parser = grid::<f64>, default_value = "0.5,1")]
        eps: ::std::vec::Vec<f64>,
        /// Draws per audited distribution.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Replicates of the shortfall check.
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[command(flatten)]
        audit: AuditArgs,
        #[arg(long, required = true)]
        seed: u64,
    },
    /// Tail-embedding identity and transfer-construction audit.
    ///
    /// Checks that the CVaR of an embedded loss equals the ordinary mean
    /// exactly, that the synthetic sample is one-record stable, and that its
    /// overflow frequency matches the binomial tail.
    EmbedCheck {
        /// Random finite instances per τ.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Tail masses τ.
        #[arg(long = "tau", alias = "tau-grid", value_parser = grid::<f64>, default_value = "0.05,0.3,1")]
        tau: ::std::vec::Vec<f64>,
        /// Loss bound B.
        #[arg(long = "B", default_value_t = 1.0)]
        b: f64,
        /// Synthetic samples drawn for the overflow check.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[command(flatten)]
        audit: AuditArgs,
        #[arg(long, required = true)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ScalarArgs {
    /// Sample sizes n.
    #[arg(long = "n-grid", alias = "n", value_parser = grid::<usize>, default_value = "1000")]
    n_grid: ::std::vec::Vec<usize>,
    /// Tail masses τ.
    #[arg(long = "tau-grid", alias = "tau", value_parser = grid::<f64>, default_value = "0.1")]
    tau_grid: ::std::vec::Vec<f64>,
    /// Privacy levels ε.
    #[arg(long = "eps-grid", alias = "eps", value_parser = grid::<f64>, default_value = "1")]
    eps_grid: ::std::vec::Vec<f64>,
    /// Loss bound B.
    #[arg(long = "B", default_value_t = 1.0)]
    b: f64,
    /// Scalar lower-bound constant c1 in (0, 1].
    #[arg(long, default_value_t = privcvar::instances::DEFAULT_C1)]
    c1: f64,
    /// Hard distributions for the scalar sweep: privacy, statistical or both.
    #[arg(long, default_value = "both", value_parser = ScalarInstanceSet::from_str)]
    instances: ScalarInstanceSet,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Monte Carlo replicates per cell.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Base seed; every random draw derives from it.
    #[arg(long, required = true)]
    seed: u64,
    /// Rate table CSV; the slope fits go to `<stem>.slopes.csv` beside it.
    #[arg(long, required = true)]
    out: PathBuf,
    /// Worker threads; the output does not depend on this.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Skip the noiseless reference runs that label each cell's regime.
    #[arg(long)]
    no_reference: bool,
    /// Flat `key = value` file of flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Optional file for the per-case audit details.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file of flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn grid<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|e| format!("bad grid entry {part:?}: {e}"))
        })
        .collect()
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidBudget(_) | Error::InvalidParameter(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Splice `--key value` pairs from a `--config` file in front of the explicit
/// flags so that the explicit ones override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let strs: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else { return Ok(args) };
    if args.len() < 2 {
        return Ok(args);
    }
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("cannot read config {path}: {e}")))?;
    let mut spliced = vec![];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "{path}:{}: expected key = value",
                lineno + 1
            )));
        };
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        if key == "config" {
            return Err(Failure::Usage(format!(
                "{path}:{}: config files do not nest",
                lineno + 1
            )));
        }
        match value {
            "true" => spliced.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                spliced.push(OsString::from(format!("--{key}")));
                spliced.push(OsString::from(value));
            }
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(spliced);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn sweep_config(kind: ExperimentKind, grids: &ScalarArgs, run: &RunArgs) -> SweepConfig {
    let mut c = SweepConfig::new(kind, run.seed);
    c.n_grid = grids.n_grid.clone();
    c.tau_grid = grids.tau_grid.clone();
    c.eps_grid = grids.eps_grid.clone();
    c.bound = grids.b;
    c.c1 = grids.c1;
    c.scalar_instances = grids.instances;
    c.replicates = run.reps;
    c.threads = run.threads;
    c.reference_runs = !run.no_reference;
    c
}

fn grid_len(config: &SweepConfig, v: SweepVariable) -> usize {
    match v {
        SweepVariable::N => config.n_grid.len(),
        SweepVariable::Tau => config.tau_grid.len(),
        SweepVariable::Eps => config.eps_grid.len(),
        SweepVariable::Delta => config.delta_grid.len(),
        SweepVariable::M => config.m_grid.len(),
        SweepVariable::D => config.d_grid.len(),
    }
}

/// Log-log fits for every swept variable with at least three grid points,
/// over all cells and over the privacy-dominated cells.
fn slope_fits(config: &SweepConfig, table: &RateTable) -> Vec<SlopeFit> {
    let mut fits = vec![];
    for v in SweepVariable::ALL {
        if grid_len(config, v) < 3 {
            continue;
        }
        if let Ok(f) = fit_loglog_slope(table, v, |_| true) {
            fits.push(f);
        }
        if let Ok(mut f) = fit_loglog_slope(table, v, |r| r.regime == Regime::Privacy) {
            f.variable = format!("{}[privacy]", v.name());
            fits.push(f);
        }
    }
    fits
}

fn slopes_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.slopes.csv"))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn sweep(config: SweepConfig, out: &Path) -> Result<bool, Failure> {
    let table = run_sweep(&config)?;
    write(out, &table.to_csv())?;
    let fits = slope_fits(&config, &table);
    let slopes = slopes_path(out);
    write(&slopes, &slopes_csv(&fits))?;
    for r in &table.rows {
        println!(
            "n={} tau={} eps={} M={} d={} mean_excess={:.6e} stderr={:.2e} regime={}",
            r.n,
            r.tau,
            r.eps,
            r.m,
            r.d,
            r.mean_excess,
            r.stderr,
            r.regime.as_str()
        );
    }
    let mut result = format!(
        "RESULT pass rows={} out={}",
        table.rows.len(),
        out.display()
    );
    for f in &fits {
        println!(
            "slope {} = {:.4} (r2 {:.4}, {} points)",
            f.variable, f.exponent, f.r_squared, f.n_points
        );
        result.push_str(&format!(" slope_{}={:.4}", f.variable, f.exponent));
    }
    println!("{result}");
    Ok(true)
}

fn audit(config: SweepConfig, args: &AuditArgs) -> Result<bool, Failure> {
    let report: AuditReport = run_audits(&config)?;
    if let Some(out) = &args.out {
        let mut text = report.details.join("\n");
        text.push('\n');
        write(out, &text)?;
    }
    if let Some(w) = &report.witness {
        println!("witness {w}");
    }
    if !report.pass {
        for d in &report.details {
            eprintln!("{d}");
        }
    }
    println!(
        "RESULT {} {}",
        if report.pass { "pass" } else { "fail" },
        report.summary
    );
    Ok(report.pass)
}

fn execute(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::ScalarRate { grids, run } => {
            sweep(sweep_config(ExperimentKind::Scalar, &grids, &run), &run.out)
        }
        Command::FiniteRate {
            grids,
            m_grid,
            c0,
            run,
        } => {
            let mut c = sweep_config(ExperimentKind::Finite, &grids, &run);
            c.m_grid = m_grid;
            c.c0 = c0;
            sweep(c, &run.out)
        }
        Command::ConvexRate {
            grids,
            d_grid,
            delta,
            g,
            diameter,
            alpha,
            iterations,
            run,
        } => {
            let mut c = sweep_config(ExperimentKind::Convex, &grids, &run);
            c.d_grid = d_grid;
            c.delta_grid = delta.unwrap_or_default();
            c.lipschitz = g;
            c.diameter = diameter;
            c.alpha = alpha;
            c.iterations = iterations;
            sweep(c, &run.out)
        }
        Command::SensitivityAudit {
            n_max,
            tau,
            b,
            audit: args,
            seed,
        } => {
            let mut c = SweepConfig::new(ExperimentKind::SensitivityAudit, seed.unwrap_or(0));
            c.n_max = n_max;
            c.tau_grid = tau;
            c.bound = b;
            audit(c, &args)
        }
        Command::MechAudit {
            m,
            eps,
            draws,
            reps,
            audit: args,
            seed,
        } => {
            let mut c = SweepConfig::new(ExperimentKind::MechAudit, seed);
            c.m_grid = m;
            c.eps_grid = eps;
            c.draws = draws;
            c.replicates = reps;
            audit(c, &args)
        }
        Command::EmbedCheck {
            trials,
            tau,
            b,
            draws,
            audit: args,
            seed,
        } => {
            let mut c = SweepConfig::new(ExperimentKind::EmbedCheck, seed);
            c.trials = trials;
            c.tau_grid = tau;
            c.bound = b;
            c.draws = draws;
            audit(c, &args)
        }
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(Failure::Usage(m) | Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
    };
    let command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let parsed = command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
