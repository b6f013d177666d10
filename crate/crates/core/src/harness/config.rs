use crate::error::{Error, Result};
use crate::instances::{DEFAULT_C0, DEFAULT_C1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Scalar,
    Finite,
    Convex,
    EmbedCheck,
    SensitivityAudit,
    MechAudit,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Scalar => "scalar",
            ExperimentKind::Finite => "finite",
            ExperimentKind::Convex => "convex",
            ExperimentKind::EmbedCheck => "embed-check",
            ExperimentKind::SensitivityAudit => "sensitivity-audit",
            ExperimentKind::MechAudit => "mech-audit",
        }
    }
}

/// Which hard distributions the scalar sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarInstanceSet {
    /// The privacy lower-bound pair only.
    Privacy,
    /// The sampling-error pair only.
    Statistical,
    /// Both pairs; the cell reports the worst distribution.
    Both,
}

impl std::str::FromStr for ScalarInstanceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "privacy" => Ok(ScalarInstanceSet::Privacy),
            "statistical" => Ok(ScalarInstanceSet::Statistical),
            "both" => Ok(ScalarInstanceSet::Both),
            other => Err(Error::InvalidConfig(format!(
                "instance set must be privacy, statistical or both; got {other}"
            ))),
        }
    }
}

/// One experiment: grids, replicate count, seed and instance constants.
///
/// Grids that an experiment kind does not use are ignored. An empty
/// `delta_grid` means `δ = n⁻²` for the convex sweep and `δ = 0` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: ExperimentKind,
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub c0: f64,
    pub c1: f64,
    pub bound: f64,
    pub lipschitz: f64,
    pub diameter: f64,
    /// Mean-vector strength of the convex sweep's sign-vector source.
    pub alpha: f64,
    pub scalar_instances: ScalarInstanceSet,
    /// Convex learner iterations; `None` means `T = n`.
    pub iterations: Option<usize>,
    /// Also run the noiseless reference learner to label each cell's regime.
    pub reference_runs: bool,
    pub threads: usize,
    /// Draws per distribution in the mechanism audit.
    pub draws: usize,
    /// Random instances in the embedding check.
    pub trials: usize,
    /// Largest sample size in the sensitivity audit.
    pub n_max: usize,
}

impl SweepConfig {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        SweepConfig {
            kind,
            n_grid: vec![1000],
            tau_grid: vec![0.1],
            eps_grid: vec![1.0],
            delta_grid: vec![],
            m_grid: vec![8],
            d_grid: vec![4],
            replicates: 100,
            seed,
            c0: DEFAULT_C0,
            c1: DEFAULT_C1,
            bound: 1.0,
            lipschitz: 1.0,
            diameter: 1.0,
            alpha: 1.0,
            scalar_instances: ScalarInstanceSet::Both,
            iterations: None,
            reference_runs: true,
            threads: 1,
            draws: 100_000,
            trials: 100,
            n_max: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} grid is empty")));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} grid has invalid value {x}"
                )));
            }
            Ok(())
        };
        positive("tau", &self.tau_grid)?;
        if let Some(t) = self.tau_grid.iter().find(|t| **t > 1.0) {
            return bad(format!("tau grid has value {t} above 1"));
        }
        if has_duplicates(&self.n_grid)
            || has_duplicates(&self.tau_grid)
            || has_duplicates(&self.eps_grid)
            || has_duplicates(&self.delta_grid)
            || has_duplicates(&self.m_grid)
            || has_duplicates(&self.d_grid)
        {
            return bad("grids must not repeat a value".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return bad(format!("B must be positive, got {}", self.bound));
        }
        match self.kind {
            ExperimentKind::Scalar | ExperimentKind::Finite | ExperimentKind::Convex => {
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return bad("n grid must be nonempty with positive entries".into());
                }
                positive("eps", &self.eps_grid)?;
                let c = if self.kind == ExperimentKind::Finite {
                    self.c0
                } else {
                    self.c1
                };
                if !(c > 0.0 && c <= 1.0) {
                    return bad(format!("universal constant must lie in (0, 1], got {c}"));
                }
            }
            _ => {}
        }
        match self.kind {
            ExperimentKind::Finite | ExperimentKind::MechAudit => {
                if self.m_grid.is_empty() || self.m_grid.iter().any(|m| *m < 2) {
                    return bad("M grid must be nonempty with entries >= 2".into());
                }
            }
            ExperimentKind::Convex => {
                if self.d_grid.is_empty() || self.d_grid.contains(&0) {
                    return bad("d grid must be nonempty with positive entries".into());
                }
                if !(self.lipschitz > 0.0 && self.diameter > 0.0) {
                    return bad("G and D must be positive".into());
                }
                if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
                }
                if let Some(x) = self.delta_grid.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                    return bad(format!("delta grid has invalid value {x}"));
                }
                if self.iterations == Some(0) {
                    return bad("iterations must be at least 1".into());
                }
            }
            ExperimentKind::SensitivityAudit => {
                if self.n_max == 0 || self.n_max > 8 {
                    return bad("n-max must lie in 1..=8 for the exhaustive audit".into());
                }
            }
            ExperimentKind::EmbedCheck => {
                if self.trials == 0 {
                    return bad("trials must be at least 1".into());
                }
            }
            ExperimentKind::Scalar => {}
        }
        if self.kind == ExperimentKind::MechAudit {
            positive("eps", &self.eps_grid)?;
            if self.draws == 0 {
                return bad("draws must be at least 1".into());
            }
        }
        Ok(())
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, x)| v[..i].contains(x))
}
