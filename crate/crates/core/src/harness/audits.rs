//! Exact and statistical audits of the building blocks.

use super::config::{ExperimentKind, SweepConfig};
use crate::error::{Error, Result};
use crate::estimators::{private_scalar_cvar, FiniteClass};
use crate::instances::{
    assign_synthetic_records, build_synthetic_cvar_sample, embedded_loss_distribution,
    overflow_threshold, PackingInstance, Slot,
};
use crate::mechanisms::{
    exponential_mechanism, exponential_mechanism_probabilities, PrivacyBudget, SensitivityValue,
};
use crate::risk::{
    capped_top_average, cvar_sensitivity_bound, population_cvar_discrete, BoundedLossVector,
    LossBound, TailMass,
};
use crate::rng::{hash_key, stream_id_for, RandomStream};

/// Outcome of one audit. `summary` is the single-line verdict detail; the
/// detail lines carry per-case measurements and `witness` the input that
/// attains (or violates) the audited bound.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub name: String,
    pub pass: bool,
    pub summary: String,
    pub details: Vec<String>,
    pub witness: Option<String>,
}

impl AuditReport {
    /// Conjunction of several audits.
    pub fn combine(name: &str, parts: Vec<AuditReport>) -> AuditReport {
        let pass = parts.iter().all(|p| p.pass);
        let summary = parts
            .iter()
            .map(|p| p.summary.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let witness = parts
            .iter()
            .find(|p| !p.pass)
            .and_then(|p| p.witness.clone());
        let details = parts
            .into_iter()
            .flat_map(|p| {
                let name = p.name;
                p.details.into_iter().map(move |d| format!("{name}: {d}"))
            })
            .collect();
        AuditReport {
            name: name.to_string(),
            pass,
            summary,
            details,
            witness,
        }
    }
}

fn stream(seed: u64, key: &str) -> RandomStream {
    RandomStream::new(seed, stream_id_for(hash_key(key), 0))
}

/// Exhaustive one-record sensitivity audit of empirical CVaR.
///
/// For every `n ≤ n_max` and every `τ`, enumerates all loss vectors over the
/// grid `{0, B/4, B/2, 3B/4, B}` and every single-coordinate replacement,
/// and checks that the largest change equals `B·min{1, 1/(nτ)}` to 1e-10.
pub fn sensitivity_audit(n_max: usize, taus: &[f64], bound: f64) -> Result<AuditReport> {
    let b = LossBound::new(bound)?;
    let grid: Vec<f64> = (0..5).map(|i| bound * i as f64 / 4.0).collect();
    let mut details = vec![];
    let mut pass = true;
    let mut headline = None;
    let mut failing_witness = None;
    for n in 1..=n_max {
        for &tau in taus {
            let t = TailMass::new(tau)?;
            let limit = cvar_sensitivity_bound(n, t, b)?.minimized;
            let mut max_change = 0.0f64;
            let mut witness = (vec![], vec![]);
            let mut x = vec![0.0; n];
            let mut y = vec![0.0; n];
            for code in 0..5usize.pow(n as u32) {
                let mut c = code;
                for xi in x.iter_mut() {
                    *xi = grid[c % 5];
                    c /= 5;
                }
                let base = capped_top_average(&x, tau);
                for i in 0..n {
                    for &v in &grid {
                        if v == x[i] {
                            continue;
                        }
                        y.copy_from_slice(&x);
                        y[i] = v;
                        let change = (capped_top_average(&y, tau) - base).abs();
                        if change > max_change {
                            max_change = change;
                            witness = (x.clone(), y.clone());
                        }
                    }
                }
            }
            let ok = (max_change - limit).abs() <= 1e-10;
            pass &= ok;
            let line = format!(
                "n={n} tau={tau} max_change={max_change:.12} bound={limit:.12} witness={:?}->{:?} {}",
                witness.0,
                witness.1,
                if ok { "ok" } else { "FAIL" }
            );
            if !ok && failing_witness.is_none() {
                failing_witness = Some(line.clone());
            }
            details.push(line);
            if n == n_max && headline.is_none() {
                headline = Some(format!("max_change={max_change:.6} bound={limit:.6}"));
            }
        }
    }
    Ok(AuditReport {
        name: "sensitivity".into(),
        pass,
        summary: headline.unwrap_or_default(),
        details,
        witness: failing_witness,
    })
}

fn total_variation(counts: &[usize], probs: &[f64], draws: usize) -> f64 {
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(c, p)| (*c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
}

/// Exponential mechanism audit.
///
/// For each `M` and `ε`: total variation between `draws` samples and the
/// analytic softmax on a random score vector and on packing scores, and the
/// mean score shortfall over `replicates` packing datasets against
/// `2Δ(ln M + 1)/ε`.
pub fn mech_audit(
    m_grid: &[usize],
    eps_grid: &[f64],
    draws: usize,
    replicates: usize,
    seed: u64,
) -> Result<AuditReport> {
    const TV_LIMIT: f64 = 0.02;
    let (n, tau) = (200usize, TailMass::new(0.1)?);
    let bound = LossBound::new(1.0)?;
    let mut details = vec![];
    let mut max_tv = 0.0f64;
    let mut max_shortfall_ratio = 0.0f64;
    let mut witness = None;
    for &m in m_grid {
        for &eps in eps_grid {
            let budget = PrivacyBudget::pure(eps)?;
            let packing = PackingInstance::new(m, n, tau, budget, bound, 0.125)?;
            let delta_q = bound.value() / (n as f64 * tau.value());

            let mut rng = stream(seed, &format!("mech|M={m}|eps={eps:e}|scores"));
            let random_scores: Vec<f64> = (0..m).map(|_| -rng.unit()).collect();
            let sample = packing.sample(rng.index(m), n, &mut rng);
            let packing_scores: Vec<f64> = packing
                .empirical_cvars(&sample, tau)?
                .into_iter()
                .map(|r| -r)
                .collect();
            for (label, scores, sens) in [
                ("random", random_scores, 0.25),
                ("packing", packing_scores, delta_q),
            ] {
                let sens = SensitivityValue::new(sens)?;
                let probs = exponential_mechanism_probabilities(&scores, sens, budget)?;
                let mut rng = stream(seed, &format!("mech|M={m}|eps={eps:e}|{label}"));
                let mut counts = vec![0usize; m];
                for _ in 0..draws {
                    counts[exponential_mechanism(&scores, sens, budget, &mut rng)?] += 1;
                }
                let tv = total_variation(&counts, &probs, draws);
                if tv > TV_LIMIT && witness.is_none() {
                    witness = Some(format!("M={m} eps={eps} scores={label} tv={tv}"));
                }
                max_tv = max_tv.max(tv);
                details.push(format!(
                    "M={m} eps={eps} scores={label} draws={draws} tv={tv:.6}"
                ));
            }

            let mut total = 0.0;
            for r in 0..replicates {
                let mut rng = RandomStream::new(
                    seed,
                    stream_id_for(
                        hash_key(&format!("mech|M={m}|eps={eps:e}|shortfall")),
                        r as u64,
                    ),
                );
                let sample = packing.sample(rng.index(m), n, &mut rng);
                let scores: Vec<f64> = packing
                    .empirical_cvars(&sample, tau)?
                    .into_iter()
                    .map(|r| -r)
                    .collect();
                let chosen = exponential_mechanism(
                    &scores,
                    SensitivityValue::new(delta_q)?,
                    budget,
                    &mut rng,
                )?;
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                total += best - scores[chosen];
            }
            let shortfall = total / replicates.max(1) as f64;
            let limit = 2.0 * delta_q * ((m as f64).ln() + 1.0) / eps;
            let ratio = shortfall / limit;
            if ratio > 1.0 && witness.is_none() {
                witness = Some(format!(
                    "M={m} eps={eps} shortfall={shortfall} limit={limit}"
                ));
            }
            max_shortfall_ratio = max_shortfall_ratio.max(ratio);
            details.push(format!(
                "M={m} eps={eps} replicates={replicates} shortfall={shortfall:.6} limit={limit:.6}"
            ));
        }
    }
    let pass = max_tv <= TV_LIMIT && max_shortfall_ratio <= 1.0;
    Ok(AuditReport {
        name: "exponential-mechanism".into(),
        pass,
        summary: format!(
            "max_tv<=0.02 observed_tv={max_tv:.6} shortfall/limit={max_shortfall_ratio:.4}"
        ),
        details,
        witness,
    })
}

/// Settings of the binned likelihood-ratio audit of the scalar estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DpAuditSettings {
    pub n_max: usize,
    /// Loss values the datasets are built from.
    pub grid: Vec<f64>,
    pub taus: Vec<f64>,
    pub eps: Vec<f64>,
    pub bound: f64,
    pub draws: usize,
    /// Interior histogram bins on `(0, B)`; the atoms at 0 and B get their own bins.
    pub bins: usize,
    pub seed: u64,
}

impl DpAuditSettings {
    pub fn new(seed: u64) -> Self {
        DpAuditSettings {
            n_max: 4,
            grid: vec![0.0, 0.5, 1.0],
            taus: vec![0.25, 0.5, 1.0],
            eps: vec![0.5, 1.0],
            bound: 1.0,
            draws: 100_000,
            bins: 20,
            seed,
        }
    }
}

/// Nondecreasing index vectors of length `n` over `0..k` (multisets).
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for rest in multisets(n - 1, k) {
        let start = rest.last().copied().unwrap_or(0);
        for v in start..k {
            let mut m = rest.clone();
            m.push(v);
            out.push(m);
        }
    }
    out
}

/// Falsification test of ε-DP for the Laplace scalar estimator.
///
/// For every pair of neighboring datasets of size `n ≤ n_max` over the value
/// grid, compares binned output histograms from `draws` runs each and flags
/// any bin whose probability ratio exceeds `e^ε·(1 + 5·se)`, where `se` is
/// the relative binomial standard error of the ratio. Bins with fewer than
/// 30 hits on either side are too noisy to test, except that a bin with 100
/// or more hits against zero on the other side is flagged outright.
pub fn scalar_dp_audit(settings: &DpAuditSettings) -> Result<AuditReport> {
    let b = LossBound::new(settings.bound)?;
    let bins = settings.bins + 2;
    let draws = settings.draws;
    let mut details = vec![];
    let mut worst = 0.0f64;
    let mut witness = None;
    let mut pairs_checked = 0usize;
    for &eps in &settings.eps {
        let budget = PrivacyBudget::pure(eps)?;
        for &tau in &settings.taus {
            let t = TailMass::new(tau)?;
            for n in 1..=settings.n_max {
                let datasets = multisets(n, settings.grid.len());
                let mut hist = Vec::with_capacity(datasets.len());
                for ds in &datasets {
                    let values: Vec<f64> = ds.iter().map(|&i| settings.grid[i]).collect();
                    let key = format!("dp|eps={eps:e}|tau={tau:e}|data={values:?}");
                    let mut rng = stream(settings.seed, &key);
                    let sample = BoundedLossVector::new(values, b)?;
                    let mut h = vec![0usize; bins];
                    for _ in 0..draws {
                        let y = private_scalar_cvar(&sample, t, budget, &mut rng)?.output;
                        let bin = if y <= 0.0 {
                            0
                        } else if y >= settings.bound {
                            bins - 1
                        } else {
                            1 + ((y / settings.bound * settings.bins as f64) as usize)
                                .min(settings.bins - 1)
                        };
                        h[bin] += 1;
                    }
                    hist.push(h);
                }
                let limit = eps.exp();
                for (i, a) in datasets.iter().enumerate() {
                    for (j, c) in datasets.iter().enumerate() {
                        if i == j || !neighbors(a, c) {
                            continue;
                        }
                        pairs_checked += 1;
                        for (k, (&x, &y)) in hist[i].iter().zip(&hist[j]).enumerate() {
                            let score = if x >= 100 && y == 0 {
                                f64::INFINITY
                            } else if x < 30 || y < 30 {
                                continue;
                            } else {
                                let (p, q) = (x as f64 / draws as f64, y as f64 / draws as f64);
                                let se = ((1.0 - p) / (draws as f64 * p)
                                    + (1.0 - q) / (draws as f64 * q))
                                    .sqrt();
                                (p / q) / (limit * (1.0 + 5.0 * se))
                            };
                            if score > worst {
                                worst = score;
                            }
                            if score > 1.0 && witness.is_none() {
                                witness = Some(format!(
                                    "eps={eps} tau={tau} S={a:?} S'={c:?} bin={k} counts={x}/{y}"
                                ));
                            }
                        }
                    }
                }
                details.push(format!(
                    "eps={eps} tau={tau} n={n} datasets={} draws={draws}",
                    datasets.len()
                ));
            }
        }
    }
    Ok(AuditReport {
        name: "dp-likelihood-ratio".into(),
        pass: worst <= 1.0,
        summary: format!("lr/limit={worst:.4} pairs={pairs_checked}"),
        details,
        witness,
    })
}

/// Sorted multisets differing in exactly one element.
fn neighbors(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    common + 1 == a.len()
}

/// Tail-embedding identity on random finite instances: the CVaR of the
/// embedded loss equals the base mean for every `τ`.
pub fn embed_check(taus: &[f64], trials: usize, bound: f64, seed: u64) -> Result<AuditReport> {
    const LIMIT: f64 = 1e-12;
    let b = LossBound::new(bound)?;
    let mut rng = stream(seed, "embed-check");
    let mut max_gap = 0.0f64;
    let mut witness = None;
    for trial in 0..trials {
        let k = 1 + rng.index(8);
        let weights: Vec<f64> = (0..k).map(|_| rng.open_unit()).collect();
        let total: f64 = weights.iter().sum();
        let base: Vec<(f64, f64)> = weights
            .iter()
            .map(|w| (bound * rng.unit(), w / total))
            .collect();
        let mean: f64 = base.iter().map(|(a, q)| a * q).sum();
        for &tau in taus {
            let t = TailMass::new(tau)?;
            let gap = (population_cvar_discrete(&embedded_loss_distribution(&base, t, b)?, t)
                - mean)
                .abs();
            if gap > max_gap {
                max_gap = gap;
                if gap > LIMIT {
                    witness = Some(format!("trial={trial} tau={tau} base={base:?} gap={gap:e}"));
                }
            }
        }
    }
    Ok(AuditReport {
        name: "embedding".into(),
        pass: max_gap <= LIMIT,
        summary: format!("max_abs_gap<=1e-12 observed={max_gap:.3e}"),
        details: vec![format!(
            "trials={trials} taus={taus:?} max_abs_gap={max_gap:e}"
        )],
        witness,
    })
}

/// `P(Bin(n, p) > m)`, summed in log space.
pub(crate) fn binomial_upper_tail(n: usize, p: f64, m: usize) -> f64 {
    if m >= n {
        return 0.0;
    }
    let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    ((m + 1)..=n)
        .map(|k| {
            (ln_fact(n) - ln_fact(k) - ln_fact(n - k) + k as f64 * lp + (n - k) as f64 * lq).exp()
        })
        .sum()
}

/// Transfer construction audit.
///
/// Exhaustive one-record stability of the synthetic sample for `n, m ≤ 6`
/// over every activation pattern and every single-point substitution, and
/// the overflow frequency at `n = 250`, `τ = 0.1` (so `nτ = 25`) against the
/// exact binomial tail.
pub fn transfer_audit(trials: usize, seed: u64) -> Result<AuditReport> {
    let mut unstable = None;
    let mut checked = 0usize;
    for n in 1..=6usize {
        for m in 1..=6usize {
            let ordinary: Vec<u32> = (1..=m as u32).collect();
            for pattern in 0..(1u32 << n) {
                let active: Vec<bool> = (0..n).map(|i| pattern >> i & 1 == 1).collect();
                let base = assign_synthetic_records(&ordinary, &active);
                for j in 0..m {
                    let mut changed = ordinary.clone();
                    changed[j] = 1000;
                    let other = assign_synthetic_records(&changed, &active);
                    let diff = base.iter().zip(&other).filter(|(a, b)| a != b).count();
                    checked += 1;
                    if diff > 1 && unstable.is_none() {
                        unstable =
                            Some(format!("n={n} m={m} pattern={pattern:b} j={j} diff={diff}"));
                    }
                }
            }
        }
    }

    let (n, tau) = (250usize, TailMass::new(0.1)?);
    let m = overflow_threshold(n, tau);
    let ordinary: Vec<u32> = (0..m as u32).collect();
    let mut rng = stream(seed, "transfer-overflow");
    let mut overflows = 0usize;
    for _ in 0..trials {
        let recs = build_synthetic_cvar_sample(&ordinary, n, tau, &mut rng)?;
        if recs.iter().any(|r| r.active && r.slot == Slot::Dummy) {
            overflows += 1;
        }
    }
    let freq = overflows as f64 / trials.max(1) as f64;
    let exact = binomial_upper_tail(n, tau.value(), m);
    let se = (exact * (1.0 - exact) / trials.max(1) as f64).sqrt();
    let agrees =
        (freq - exact).abs() <= 3.0 * se || overflows == 0 && exact * trials as f64 <= 1e-9;
    let pass = unstable.is_none() && freq <= 1e-3 && agrees;
    Ok(AuditReport {
        name: "transfer".into(),
        pass,
        summary: format!("overflow_freq={freq:.3e} exact_tail={exact:.3e}"),
        details: vec![
            format!(
                "stability checks={checked} max one slot changed: {}",
                unstable.is_none()
            ),
            format!(
                "n={n} tau=0.1 m={m} trials={trials} overflows={overflows} exact_tail={exact:e}"
            ),
        ],
        witness: unstable,
    })
}

/// Run the audit named by `config.kind`.
pub fn run_audits(config: &SweepConfig) -> Result<AuditReport> {
    config.validate()?;
    match config.kind {
        ExperimentKind::SensitivityAudit => {
            sensitivity_audit(config.n_max, &config.tau_grid, config.bound)
        }
        ExperimentKind::MechAudit => {
            let mech = mech_audit(
                &config.m_grid,
                &config.eps_grid,
                config.draws,
                config.replicates,
                config.seed,
            )?;
            let mut dp = DpAuditSettings::new(config.seed);
            dp.draws = config.draws;
            let dp = scalar_dp_audit(&dp)?;
            Ok(AuditReport::combine("mech-audit", vec![mech, dp]))
        }
        ExperimentKind::EmbedCheck => {
            let embed = embed_check(&config.tau_grid, config.trials, config.bound, config.seed)?;
            let transfer = transfer_audit(config.draws, config.seed)?;
            Ok(AuditReport::combine("embed-check", vec![embed, transfer]))
        }
        other => Err(Error::InvalidConfig(format!(
            "{} is a sweep, not an audit",
            other.as_str()
        ))),
    }
}
