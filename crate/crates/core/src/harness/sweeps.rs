use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use super::config::{ExperimentKind, ScalarInstanceSet, SweepConfig};
use super::table::{mean_and_stderr, RateRow, RateTable, Regime};
use crate::error::{Error, Result};
use crate::estimators::{
    empirical_risk_minimizer, nonprivate_convex_cvar, private_convex_cvar, private_finite_class,
    private_scalar_cvar, ConvexLearnerConfig,
};
use crate::instances::{
    EmbeddedLinearProblem, LinearLowerFamily, PackingInstance, ScalarHardPair, SignVectorSource,
};
use crate::mechanisms::PrivacyBudget;
use crate::risk::{empirical_cvar, BoundedLossVector, DiscreteDistribution, LossBound, TailMass};
use crate::rng::{hash_key, stream_id_for, RandomStream};

/// Half-width constant of the statistical scalar pair.
const STATISTICAL_PAIR_C: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    n: usize,
    tau: f64,
    eps: f64,
    delta: f64,
    m: usize,
    d: usize,
}

impl Cell {
    fn key(&self, kind: ExperimentKind) -> u64 {
        hash_key(&format!(
            "{}|n={}|tau={:e}|eps={:e}|delta={:e}|M={}|d={}",
            kind.as_str(),
            self.n,
            self.tau,
            self.eps,
            self.delta,
            self.m,
            self.d
        ))
    }
}

fn cells(config: &SweepConfig) -> Vec<Cell> {
    let kind = config.kind;
    let ms: Vec<usize> = if kind == ExperimentKind::Finite {
        config.m_grid.clone()
    } else {
        vec![0]
    };
    let ds: Vec<usize> = if kind == ExperimentKind::Convex {
        config.d_grid.clone()
    } else {
        vec![0]
    };
    let mut out = vec![];
    for &n in &config.n_grid {
        let deltas: Vec<f64> = match kind {
            ExperimentKind::Convex if config.delta_grid.is_empty() => {
                vec![1.0 / (n as f64).powi(2)]
            }
            ExperimentKind::Convex => config.delta_grid.clone(),
            _ => vec![0.0],
        };
        for &tau in &config.tau_grid {
            for &eps in &config.eps_grid {
                for &delta in &deltas {
                    for &m in &ms {
                        for &d in &ds {
                            out.push(Cell {
                                n,
                                tau,
                                eps,
                                delta,
                                m,
                                d,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Runs `job(cell index, rng)` for every replicate of every cell, on up to
/// `threads` workers, and returns the per-cell results in replicate order.
fn run_replicates<T: Send>(
    config: &SweepConfig,
    cells: &[Cell],
    job: impl Fn(usize, &mut RandomStream) -> Result<T> + Sync,
) -> Result<Vec<(Vec<T>, Duration)>> {
    let reps = config.replicates;
    let keys: Vec<u64> = cells.iter().map(|c| c.key(config.kind)).collect();
    let total = cells.len() * reps;
    let next = AtomicUsize::new(0);
    let work = || -> Result<Vec<(usize, T, Duration)>> {
        let mut done = vec![];
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            if i >= total {
                return Ok(done);
            }
            let (c, r) = (i / reps, i % reps);
            let mut rng = RandomStream::new(config.seed, stream_id_for(keys[c], r as u64));
            let start = Instant::now();
            let value = job(c, &mut rng)?;
            done.push((i, value, start.elapsed()));
        }
    };
    let mut results: Vec<(usize, T, Duration)> = if config.threads <= 1 {
        work()?
    } else {
        let chunks: Vec<Result<Vec<_>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.threads).map(|_| s.spawn(work)).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let mut all = vec![];
        for chunk in chunks {
            all.extend(chunk?);
        }
        all
    };
    results.sort_by_key(|(i, _, _)| *i);
    let mut out: Vec<(Vec<T>, Duration)> = (0..cells.len())
        .map(|_| (Vec::with_capacity(reps), Duration::ZERO))
        .collect();
    for (i, value, elapsed) in results {
        let slot = &mut out[i / reps];
        slot.0.push(value);
        slot.1 += elapsed;
    }
    Ok(out)
}

fn row(
    config: &SweepConfig,
    cell: &Cell,
    mean: f64,
    stderr: f64,
    reference: Option<f64>,
    wall: Duration,
) -> RateRow {
    let (g, diameter) = if config.kind == ExperimentKind::Convex {
        (config.lipschitz, config.diameter)
    } else {
        (0.0, 0.0)
    };
    RateRow {
        kind: config.kind.as_str().to_string(),
        n: cell.n,
        tau: cell.tau,
        eps: cell.eps,
        delta: cell.delta,
        m: cell.m,
        d: cell.d,
        b: config.bound,
        g,
        diameter,
        reps: config.replicates,
        mean_excess: mean,
        stderr,
        reference_mean: reference,
        regime: Regime::classify(cell.n, cell.tau, mean, reference),
        seed: config.seed,
        wall_time: wall,
    }
}

fn expect_kind(config: &SweepConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.kind != kind {
        return Err(Error::InvalidConfig(format!(
            "expected a {} sweep, got {}",
            kind.as_str(),
            config.kind.as_str()
        )));
    }
    Ok(())
}

fn scalar_distributions(
    config: &SweepConfig,
    cell: &Cell,
) -> Result<Vec<(DiscreteDistribution, f64)>> {
    let tau = TailMass::new(cell.tau)?;
    let bound = LossBound::new(config.bound)?;
    let mut pairs = vec![];
    if config.scalar_instances != ScalarInstanceSet::Statistical {
        pairs.push(ScalarHardPair::privacy(
            cell.n,
            tau,
            PrivacyBudget::pure(cell.eps)?,
            bound,
            config.c1,
        )?);
    }
    if config.scalar_instances != ScalarInstanceSet::Privacy {
        pairs.push(ScalarHardPair::statistical(
            cell.n,
            tau,
            bound,
            STATISTICAL_PAIR_C,
        )?);
    }
    Ok(pairs
        .into_iter()
        .flat_map(|pair| {
            let (r0, r1) = pair.cvars();
            [(pair.p0, r0), (pair.p1, r1)]
        })
        .collect())
}

/// Scalar estimation error `|estimate − true CVaR|` on the hard pairs.
///
/// Every distribution of the selected pairs is evaluated in each replicate
/// and the cell reports the distribution with the largest mean error.
pub fn run_scalar_sweep(config: &SweepConfig) -> Result<RateTable> {
    expect_kind(config, ExperimentKind::Scalar)?;
    let cells = cells(config);
    let dists: Vec<Vec<(DiscreteDistribution, f64)>> = cells
        .iter()
        .map(|c| scalar_distributions(config, c))
        .collect::<Result<_>>()?;
    let bound = LossBound::new(config.bound)?;
    let results = run_replicates(config, &cells, |c, rng| {
        let cell = &cells[c];
        let tau = TailMass::new(cell.tau)?;
        let budget = PrivacyBudget::pure(cell.eps)?;
        let mut errors = vec![];
        for (dist, truth) in &dists[c] {
            let values: Vec<f64> = (0..cell.n).map(|_| dist.sample(rng.unit())).collect();
            let sample = BoundedLossVector::new(values, bound)?;
            let plug_in = empirical_cvar(&sample, tau);
            let private = private_scalar_cvar(&sample, tau, budget, rng)?.output;
            errors.push(((private - truth).abs(), (plug_in - truth).abs()));
        }
        Ok(errors)
    })?;
    let mut table = RateTable::default();
    for (cell, (reps, wall)) in cells.iter().zip(results) {
        let k = reps[0].len();
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..k {
            let private: Vec<f64> = reps.iter().map(|r| r[i].0).collect();
            let reference: Vec<f64> = reps.iter().map(|r| r[i].1).collect();
            let (mean, se) = mean_and_stderr(&private);
            let (ref_mean, _) = mean_and_stderr(&reference);
            if best.is_none_or(|(m, _, _)| mean > m) {
                best = Some((mean, se, ref_mean));
            }
        }
        let (mean, se, ref_mean) = best.expect("at least one distribution");
        let reference = config.reference_runs.then_some(ref_mean);
        table
            .rows
            .push(row(config, cell, mean, se, reference, wall));
    }
    Ok(table)
}

/// Exact excess CVaR of the exponential-mechanism learner on the packing.
pub fn run_finite_sweep(config: &SweepConfig) -> Result<RateTable> {
    expect_kind(config, ExperimentKind::Finite)?;
    let cells = cells(config);
    let bound = LossBound::new(config.bound)?;
    let results = run_replicates(config, &cells, |c, rng| {
        let cell = &cells[c];
        let tau = TailMass::new(cell.tau)?;
        let budget = PrivacyBudget::pure(cell.eps)?;
        let inst = PackingInstance::new(cell.m, cell.n, tau, budget, bound, config.c0)?;
        let j = rng.index(cell.m);
        let sample = inst.sample(j, cell.n, rng);
        let chosen = private_finite_class(&inst, &sample, tau, budget, rng)?.output;
        let reference = if config.reference_runs {
            inst.excess(
                empirical_risk_minimizer(&inst, &sample, tau, rng)?.output,
                j,
            )
        } else {
            0.0
        };
        Ok((inst.excess(chosen, j), reference))
    })?;
    let mut table = RateTable::default();
    for (cell, (reps, wall)) in cells.iter().zip(results) {
        let private: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let reference: Vec<f64> = reps.iter().map(|r| r.1).collect();
        let (mean, se) = mean_and_stderr(&private);
        let reference = config.reference_runs.then(|| mean_and_stderr(&reference).0);
        table
            .rows
            .push(row(config, cell, mean, se, reference, wall));
    }
    Ok(table)
}

/// Exact excess CVaR of the noisy subgradient learner on embedded linear
/// families with a fresh hidden sign vector per replicate.
pub fn run_convex_sweep(config: &SweepConfig) -> Result<RateTable> {
    expect_kind(config, ExperimentKind::Convex)?;
    let cells = cells(config);
    let bound = LossBound::new(config.bound)?;
    let learner = ConvexLearnerConfig {
        iterations: config.iterations,
        ..Default::default()
    };
    let results = run_replicates(config, &cells, |c, rng| {
        let cell = &cells[c];
        let tau = TailMass::new(cell.tau)?;
        let budget = PrivacyBudget::new(cell.eps, cell.delta)?;
        let family = LinearLowerFamily::new(cell.d, config.diameter, config.lipschitz, bound)?;
        let signs = SignVectorSource::random_signs(cell.d, rng);
        let problem =
            EmbeddedLinearProblem::new(family, SignVectorSource::antipodal(signs, config.alpha)?)?;
        let sample = problem.sample(cell.n, cell.tau, rng);
        let w = private_convex_cvar(&problem, &sample, tau, budget, &learner, rng)?
            .output
            .w;
        let reference = if config.reference_runs {
            problem.excess(
                &nonprivate_convex_cvar(&problem, &sample, tau, &learner)?
                    .output
                    .w,
            )
        } else {
            0.0
        };
        Ok((problem.excess(&w), reference))
    })?;
    let mut table = RateTable::default();
    for (cell, (reps, wall)) in cells.iter().zip(results) {
        let private: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let reference: Vec<f64> = reps.iter().map(|r| r.1).collect();
        let (mean, se) = mean_and_stderr(&private);
        let reference = config.reference_runs.then(|| mean_and_stderr(&reference).0);
        table
            .rows
            .push(row(config, cell, mean, se, reference, wall));
    }
    Ok(table)
}

/// Dispatch on the experiment kind for the three rate sweeps.
pub fn run_sweep(config: &SweepConfig) -> Result<RateTable> {
    match config.kind {
        ExperimentKind::Scalar => run_scalar_sweep(config),
        ExperimentKind::Finite => run_finite_sweep(config),
        ExperimentKind::Convex => run_convex_sweep(config),
        other => Err(Error::InvalidConfig(format!(
            "{} is an audit, not a sweep",
            other.as_str()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> SweepConfig {
        let mut c = SweepConfig::new(kind, 7);
        c.n_grid = vec![50, 100];
        c.tau_grid = vec![0.2];
        c.eps_grid = vec![0.5];
        c.replicates = 20;
        c
    }

    #[test]
    fn thread_count_does_not_change_results() {
        for kind in [
            ExperimentKind::Scalar,
            ExperimentKind::Finite,
            ExperimentKind::Convex,
        ] {
            let mut c = small(kind);
            let one = run_sweep(&c).unwrap().to_csv();
            c.threads = 3;
            assert_eq!(one, run_sweep(&c).unwrap().to_csv());
        }
    }

    #[test]
    fn cell_order_does_not_change_results() {
        let mut c = small(ExperimentKind::Scalar);
        let a = run_sweep(&c).unwrap();
        c.n_grid.reverse();
        let b = run_sweep(&c).unwrap();
        assert_eq!(a.rows[0].mean_excess, b.rows[1].mean_excess);
        assert_eq!(a.rows[1].mean_excess, b.rows[0].mean_excess);
    }

    #[test]
    fn finite_mean_is_gap_times_misselection_rate() {
        let c = small(ExperimentKind::Finite);
        let t = run_finite_sweep(&c).unwrap();
        for r in &t.rows {
            let inst = PackingInstance::new(
                r.m,
                r.n,
                TailMass::new(r.tau).unwrap(),
                PrivacyBudget::pure(r.eps).unwrap(),
                LossBound::new(r.b).unwrap(),
                c.c0,
            )
            .unwrap();
            let misses = r.mean_excess * r.reps as f64 / inst.gap();
            assert!((misses - misses.round()).abs() < 1e-9);
            assert!(r.mean_excess <= inst.gap() + 1e-15);
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = small(ExperimentKind::Finite);
        assert!(run_scalar_sweep(&c).is_err());
    }
}
