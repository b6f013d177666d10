//! Python bindings for `privcvar`.

use privcvar::estimators::{self, ConvexLearnerConfig};
use privcvar::harness::{self, ExperimentKind, ScalarInstanceSet, SweepConfig};
use privcvar::instances::{self, EmbeddedLinearProblem, SignVectorSource};
use privcvar::mechanisms::{self, PrivacyBudget, SensitivityValue};
use privcvar::risk::{self, BoundedLossVector, DiscreteDistribution, LossBound, TailMass};
use privcvar::RandomStream;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: privcvar::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tail(tau: f64) -> PyResult<TailMass> {
    TailMass::new(tau).map_err(py_err)
}

fn loss_bound(b: f64) -> PyResult<LossBound> {
    LossBound::new(b).map_err(py_err)
}

fn losses(values: Vec<f64>, bound: f64) -> PyResult<BoundedLossVector> {
    BoundedLossVector::new(values, loss_bound(bound)?).map_err(py_err)
}

/// Empirical CVaR: average of the worst `tau` fraction of the losses.
#[pyfunction]
#[pyo3(signature = (values, tau, bound = 1.0))]
fn empirical_cvar(values: Vec<f64>, tau: f64, bound: f64) -> PyResult<f64> {
    Ok(risk::empirical_cvar(&losses(values, bound)?, tail(tau)?))
}

/// Rockafellar-Uryasev objective `eta + mean((x - eta)_+) / tau`.
#[pyfunction]
#[pyo3(signature = (eta, values, tau, bound = 1.0))]
fn ru_objective(eta: f64, values: Vec<f64>, tau: f64, bound: f64) -> PyResult<f64> {
    risk::ru_objective(eta, &losses(values, bound)?, tail(tau)?).map_err(py_err)
}

/// CVaR of a finite distribution given as `(value, probability)` pairs.
#[pyfunction]
fn population_cvar(atoms: Vec<(f64, f64)>, tau: f64) -> PyResult<f64> {
    let dist = DiscreteDistribution::new(atoms).map_err(py_err)?;
    Ok(risk::population_cvar_discrete(&dist, tail(tau)?))
}

/// One-record sensitivity `B·min{1, 1/(n·tau)}` of empirical CVaR.
#[pyfunction]
#[pyo3(signature = (n, tau, bound = 1.0))]
fn cvar_sensitivity(n: usize, tau: f64, bound: f64) -> PyResult<f64> {
    Ok(
        risk::cvar_sensitivity_bound(n, tail(tau)?, loss_bound(bound)?)
            .map_err(py_err)?
            .minimized,
    )
}

/// Laplace plug-in estimate of the empirical CVaR, clamped to `[0, B]`.
#[pyfunction]
#[pyo3(signature = (values, tau, epsilon, bound = 1.0, seed = 0, stream = 0))]
fn private_scalar_cvar(
    values: Vec<f64>,
    tau: f64,
    epsilon: f64,
    bound: f64,
    seed: u64,
    stream: u64,
) -> PyResult<f64> {
    let budget = PrivacyBudget::pure(epsilon).map_err(py_err)?;
    let mut rng = RandomStream::new(seed, stream);
    let report =
        estimators::private_scalar_cvar(&losses(values, bound)?, tail(tau)?, budget, &mut rng)
            .map_err(py_err)?;
    Ok(report.output)
}

/// Selection probabilities `∝ exp(epsilon·score / (2·sensitivity))`.
#[pyfunction]
fn exponential_mechanism_probabilities(
    scores: Vec<f64>,
    sensitivity: f64,
    epsilon: f64,
) -> PyResult<Vec<f64>> {
    mechanisms::exponential_mechanism_probabilities(
        &scores,
        SensitivityValue::new(sensitivity).map_err(py_err)?,
        PrivacyBudget::pure(epsilon).map_err(py_err)?,
    )
    .map_err(py_err)
}

/// Two-point lower-bound pair of scalar loss distributions.
#[pyclass(name = "ScalarHardPair", frozen)]
struct PyScalarHardPair {
    inner: instances::ScalarHardPair,
}

#[pymethods]
impl PyScalarHardPair {
    /// Pair separated by the privacy term: `p = c1·min{tau, 1/(epsilon·n)}`.
    #[staticmethod]
    #[pyo3(signature = (n, tau, epsilon, bound = 1.0, c1 = instances::DEFAULT_C1))]
    fn privacy(n: usize, tau: f64, epsilon: f64, bound: f64, c1: f64) -> PyResult<Self> {
        let budget = PrivacyBudget::pure(epsilon).map_err(py_err)?;
        let inner =
            instances::ScalarHardPair::privacy(n, tail(tau)?, budget, loss_bound(bound)?, c1)
                .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Pair separated by the sampling term, about `sqrt(tau/n)` apart in tail mass.
    #[staticmethod]
    #[pyo3(signature = (n, tau, bound = 1.0, c = 0.5))]
    fn statistical(n: usize, tau: f64, bound: f64, c: f64) -> PyResult<Self> {
        let inner = instances::ScalarHardPair::statistical(n, tail(tau)?, loss_bound(bound)?, c)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let inner = instances::ScalarHardPair::from_text(text).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap
    }

    /// Atoms of the two distributions as `(value, probability)` lists.
    fn distributions(&self) -> [Vec<(f64, f64)>; 2] {
        [
            self.inner.p0.atoms().to_vec(),
            self.inner.p1.atoms().to_vec(),
        ]
    }

    fn cvars(&self) -> (f64, f64) {
        self.inner.cvars()
    }
}

/// Packing of `M` point-mass distributions for the finite-class lower bound.
#[pyclass(name = "PackingInstance", frozen)]
struct PyPackingInstance {
    inner: instances::PackingInstance,
}

#[pymethods]
impl PyPackingInstance {
    #[new]
    #[pyo3(signature = (m, n, tau, epsilon, bound = 1.0, c0 = instances::DEFAULT_C0))]
    fn new(m: usize, n: usize, tau: f64, epsilon: f64, bound: f64, c0: f64) -> PyResult<Self> {
        let budget = PrivacyBudget::pure(epsilon).map_err(py_err)?;
        let inner =
            instances::PackingInstance::new(m, n, tail(tau)?, budget, loss_bound(bound)?, c0)
                .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap()
    }

    /// Population excess CVaR of predictor `r` under distribution `j`.
    fn excess(&self, r: usize, j: usize) -> f64 {
        self.inner.excess(r, j)
    }

    /// `n` observations from distribution `j`.
    #[pyo3(signature = (j, n, seed = 0, stream = 0))]
    fn sample(&self, j: usize, n: usize, seed: u64, stream: u64) -> Vec<usize> {
        self.inner
            .sample(j, n, &mut RandomStream::new(seed, stream))
    }

    /// Private selection by the exponential mechanism on empirical CVaR.
    #[pyo3(signature = (sample, epsilon, seed = 0, stream = 0))]
    fn select(&self, sample: Vec<usize>, epsilon: f64, seed: u64, stream: u64) -> PyResult<usize> {
        let budget = PrivacyBudget::pure(epsilon).map_err(py_err)?;
        let mut rng = RandomStream::new(seed, stream);
        estimators::private_finite_class(&self.inner, &sample, self.inner.tau(), budget, &mut rng)
            .map(|r| r.output)
            .map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

/// Tail-embedded linear family with an antipodal sign-vector source.
#[pyclass(name = "LinearProblem", frozen)]
struct PyLinearProblem {
    inner: EmbeddedLinearProblem,
}

#[pymethods]
impl PyLinearProblem {
    #[new]
    #[pyo3(signature = (d, diameter = 1.0, lipschitz = 1.0, bound = 1.0, alpha = 1.0, seed = 0))]
    fn new(
        d: usize,
        diameter: f64,
        lipschitz: f64,
        bound: f64,
        alpha: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let family = instances::make_linear_family(d, diameter, lipschitz, loss_bound(bound)?)
            .map_err(py_err)?;
        let signs = SignVectorSource::random_signs(d, &mut RandomStream::new(seed, 0));
        let source = SignVectorSource::antipodal(signs, alpha).map_err(py_err)?;
        let inner = EmbeddedLinearProblem::new(family, source).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Population excess CVaR of `w`.
    fn excess(&self, w: Vec<f64>) -> f64 {
        self.inner.excess(&w)
    }

    /// Draw `n` tail records and run the private convex learner with
    /// `delta = n⁻²` unless given. Returns `(w, threshold, excess)`.
    #[pyo3(signature = (n, tau, epsilon, delta = None, seed = 0, iterations = None))]
    fn fit_private(
        &self,
        n: usize,
        tau: f64,
        epsilon: f64,
        delta: Option<f64>,
        seed: u64,
        iterations: Option<usize>,
    ) -> PyResult<(Vec<f64>, f64, f64)> {
        let mut rng = RandomStream::new(seed, 0);
        let sample = self.inner.sample(n, tau, &mut rng);
        let delta = delta.unwrap_or(1.0 / (n as f64 * n as f64));
        let budget = PrivacyBudget::new(epsilon, delta).map_err(py_err)?;
        let config = ConvexLearnerConfig {
            iterations,
            ..Default::default()
        };
        let out = estimators::private_convex_cvar(
            &self.inner,
            &sample,
            tail(tau)?,
            budget,
            &config,
            &mut rng,
        )
        .map_err(py_err)?
        .output;
        let excess = self.inner.excess(&out.w);
        Ok((out.w, out.threshold, excess))
    }
}

fn kind_from_str(kind: &str) -> PyResult<ExperimentKind> {
    match kind {
        "scalar" => Ok(ExperimentKind::Scalar),
        "finite" => Ok(ExperimentKind::Finite),
        "convex" => Ok(ExperimentKind::Convex),
        "sensitivity-audit" => Ok(ExperimentKind::SensitivityAudit),
        "mech-audit" => Ok(ExperimentKind::MechAudit),
        "embed-check" => Ok(ExperimentKind::EmbedCheck),
        other => Err(PyValueError::new_err(format!(
            "unknown experiment kind {other}"
        ))),
    }
}

/// Run a rate sweep and return its CSV text.
#[pyfunction]
#[pyo3(signature = (
    kind, seed, n_grid, tau_grid, eps_grid, replicates = 100, m_grid = None, d_grid = None,
    instances = "both", threads = 1
))]
#[allow(clippy::too_many_arguments)]
fn run_sweep(
    kind: &str,
    seed: u64,
    n_grid: Vec<usize>,
    tau_grid: Vec<f64>,
    eps_grid: Vec<f64>,
    replicates: usize,
    m_grid: Option<Vec<usize>>,
    d_grid: Option<Vec<usize>>,
    instances: &str,
    threads: usize,
) -> PyResult<String> {
    let mut c = SweepConfig::new(kind_from_str(kind)?, seed);
    c.n_grid = n_grid;
    c.tau_grid = tau_grid;
    c.eps_grid = eps_grid;
    c.replicates = replicates;
    c.threads = threads;
    c.scalar_instances = instances.parse::<ScalarInstanceSet>().map_err(py_err)?;
    if let Some(m) = m_grid {
        c.m_grid = m;
    }
    if let Some(d) = d_grid {
        c.d_grid = d;
    }
    Ok(harness::run_sweep(&c).map_err(py_err)?.to_csv())
}

/// Run an audit with its default settings; returns `(passed, summary)`.
#[pyfunction]
#[pyo3(signature = (kind, seed = 0))]
fn run_audit(kind: &str, seed: u64) -> PyResult<(bool, String)> {
    let report =
        harness::run_audits(&SweepConfig::new(kind_from_str(kind)?, seed)).map_err(py_err)?;
    Ok((report.pass, report.summary))
}

/// Least-squares power law `y ≈ e^intercept·x^exponent`; returns
/// `(exponent, intercept, r_squared)`.
#[pyfunction]
fn fit_power_law(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = harness::fit_power_law("x", &xs, &ys).map_err(py_err)?;
    Ok((f.exponent, f.intercept, f.r_squared))
}

#[pymodule]
fn privcvar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(empirical_cvar, m)?)?;
    m.add_function(wrap_pyfunction!(ru_objective, m)?)?;
    m.add_function(wrap_pyfunction!(population_cvar, m)?)?;
    m.add_function(wrap_pyfunction!(cvar_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(private_scalar_cvar, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_mechanism_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_audit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_class::<PyScalarHardPair>()?;
    m.add_class::<PyPackingInstance>()?;
    m.add_class::<PyLinearProblem>()?;
    Ok(())
}
