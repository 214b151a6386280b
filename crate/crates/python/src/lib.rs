//! Python bindings: generators, linear systems, Lyapunov functionals, feedback
//! synthesis and the verification harness.

use iss_lyap::compfunc::{ComparisonFunction, KlFunction};
use iss_lyap::evolution::{InputSignal, SemilinearSystem, SolverConfig};
use iss_lyap::harness::{self, BoundForm, EquivalenceConfig, FalsifyBudget, FalsifyOutcome, IssOutcome};
use iss_lyap::lyap_linear::{self, DEFAULT_REL_TOL};
use iss_lyap::semigroup::{self, DecayConfig, NormKind, OperatorSpec, State};
use iss_lyap::wurs::{self, WursSynthesis};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

/// `(h, error)` pairs and the fitted order.
type ConvolutionErrors = (Vec<(f64, f64)>, Option<f64>);
/// `(roman, name, status, detail)`
type ItemRow = (String, String, String, String);

fn py_err(e: iss_lyap::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn state(x: Vec<f64>) -> State {
    State::from_vec(x)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(
            "matrix must be a non-empty rectangular list of rows",
        ));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Discretized generator of a strongly continuous semigroup.
#[pyclass(module = "isslyap", frozen)]
struct Generator(semigroup::GeneratorModel);

#[pymethods]
impl Generator {
    #[staticmethod]
    fn scalar(a: f64) -> PyResult<Self> {
        Self::build(&OperatorSpec::Scalar { a }, 1)
    }

    /// Dirichlet Laplacian on `(0, length)`, first `n` sine modes.
    #[staticmethod]
    #[pyo3(signature = (n, length = 1.0))]
    fn heat(n: usize, length: f64) -> PyResult<Self> {
        Self::build(&OperatorSpec::HeatDirichlet { length }, n)
    }

    #[staticmethod]
    #[pyo3(signature = (n, speed = 1.0, damping = 1.0))]
    fn transport(n: usize, speed: f64, damping: f64) -> PyResult<Self> {
        Self::build(&OperatorSpec::Transport { speed, damping }, n)
    }

    #[staticmethod]
    #[pyo3(signature = (lambda0 = -1.0, coupling = 10.0))]
    fn jordan2(lambda0: f64, coupling: f64) -> PyResult<Self> {
        Self::build(&OperatorSpec::Jordan2 { lambda0, coupling }, 2)
    }

    /// Explicit matrix under the Euclidean norm.
    #[staticmethod]
    fn explicit(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let a = matrix(rows)?;
        semigroup::GeneratorModel::explicit(a, NormKind::WeightedL2 { weight: 1.0 })
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_semigroup(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0
            .apply_semigroup(t, &state(x))
            .map(|y| y.as_slice().to_vec())
            .map_err(py_err)
    }

    fn operator_norm(&self, t: f64) -> f64 {
        self.0.operator_norm(t)
    }

    fn norm(&self, x: Vec<f64>) -> f64 {
        self.0.norm(&state(x))
    }

    /// `(M, λ)` with `‖T_t‖ ≤ M e^{−λt}` on the sampled window.
    fn certify_decay(&self) -> PyResult<(f64, f64)> {
        self.0
            .certify_decay(&DecayConfig::default())
            .map(|c| (c.m, c.lambda))
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Generator(dim={}, scheme={:?})", self.0.dim(), self.0.scheme())
    }
}

impl Generator {
    fn build(spec: &OperatorSpec, n: usize) -> PyResult<Self> {
        semigroup::GeneratorModel::discretize(spec, n).map(Self).map_err(py_err)
    }
}

/// Linear system `x' = Ax + Bu` with a decay certificate.
#[pyclass(module = "isslyap", frozen)]
struct LinearSystem(lyap_linear::LinearSystem);

#[pymethods]
impl LinearSystem {
    /// Certifies `(M, λ)` unless `certificate` is given; `b` defaults to the identity.
    #[new]
    #[pyo3(signature = (generator, b = None, certificate = None))]
    fn new(generator: &Generator, b: Option<Vec<Vec<f64>>>, certificate: Option<(f64, f64)>) -> PyResult<Self> {
        let n = generator.0.dim();
        let b = match b {
            Some(rows) => matrix(rows)?,
            None => DMatrix::identity(n, n),
        };
        let sys = match certificate {
            Some((m, lambda)) => semigroup::DecayCertificate::assumed(m, lambda)
                .and_then(|c| lyap_linear::LinearSystem::new(generator.0.clone(), b, c)),
            None => lyap_linear::LinearSystem::certified(generator.0.clone(), b, &DecayConfig::default()),
        };
        sys.map(Self).map_err(py_err)
    }

    #[getter]
    fn m(&self) -> f64 {
        self.0.m()
    }

    #[getter]
    fn decay_rate(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    /// `(value, error_bar)` of `∫₀^∞ ‖T_t x‖² dt`.
    #[pyo3(signature = (x, tol = DEFAULT_REL_TOL))]
    fn v_integral(&self, x: Vec<f64>, tol: f64) -> PyResult<(f64, f64)> {
        lyap_linear::v_integral(&self.0, &state(x), tol)
            .map(|v| (v.value, v.error_bar))
            .map_err(py_err)
    }

    /// `sup_{s ≥ 0} e^{γs} ‖T_s x‖`
    fn v_gamma(&self, gamma: f64, x: Vec<f64>) -> PyResult<f64> {
        lyap_linear::v_gamma(&self.0, gamma, &state(x)).map_err(py_err)
    }

    /// Dissipation check of the integral functional; `epsilon` defaults to `λ/M²`.
    #[pyo3(signature = (n_samples = 50, seed = 0, epsilon = None))]
    fn check_dissipation_integral<'py>(
        &self,
        py: Python<'py>,
        n_samples: usize,
        seed: u64,
        epsilon: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let samples = lyap_linear::dissipation_samples(&self.0, n_samples, seed);
        let eps = epsilon.unwrap_or_else(|| self.0.default_epsilon());
        let rep = lyap_linear::check_dissipation_integral(&self.0, &samples, eps).map_err(py_err)?;
        dissipation_dict(py, &rep)
    }

    #[pyo3(signature = (gamma, n_samples = 50, seed = 0))]
    fn check_dissipation_gamma<'py>(
        &self,
        py: Python<'py>,
        gamma: f64,
        n_samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let samples = lyap_linear::dissipation_samples(&self.0, n_samples, seed);
        let rep = lyap_linear::check_dissipation_gamma(&self.0, gamma, &samples).map_err(py_err)?;
        dissipation_dict(py, &rep)
    }

    #[pyo3(signature = (gamma, radius = 1.0, n_pairs = 200))]
    fn check_lipschitz<'py>(
        &self,
        py: Python<'py>,
        gamma: f64,
        radius: f64,
        n_pairs: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let rep = lyap_linear::check_lipschitz_constants(&self.0, radius, n_pairs, gamma).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("v_sup", rep.v_sup)?;
        d.set_item("v_bound", rep.v_bound)?;
        d.set_item("vg_sup", rep.vg_sup)?;
        d.set_item("vg_bound", rep.vg_bound)?;
        d.set_item("passed", rep.passed)?;
        Ok(d)
    }

    /// Error of the input average for the constant input `u` at each step in `h_seq`.
    fn convolution_check(&self, u: Vec<f64>, h_seq: Vec<f64>) -> PyResult<ConvolutionErrors> {
        harness::convolution_limit_check(&self.0, &InputSignal::constant(state(u)), &h_seq)
            .map(|r| (r.errors, r.order))
            .map_err(py_err)
    }

    /// Fits `(β̂, γ̂)` from constant and switched inputs at `levels`.
    ///
    /// Returns `None` when a sample fails to decay or escapes.
    #[pyo3(signature = (x0s, levels, horizon, n_switched = 2, switch_dt = 0.2, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn iss_estimate<'py>(
        &self,
        py: Python<'py>,
        x0s: Vec<Vec<f64>>,
        levels: Vec<f64>,
        horizon: f64,
        n_switched: usize,
        switch_dt: f64,
        seed: u64,
    ) -> PyResult<Option<Bound<'py, PyDict>>> {
        let plant = self.0.semilinear();
        let m = plant.input_dim();
        let mut inputs = harness::constant_inputs(m, &levels);
        inputs.extend(harness::switched_inputs(m, &levels, n_switched, switch_dt, horizon, seed).map_err(py_err)?);
        let x0s: Vec<State> = x0s.into_iter().map(state).collect();
        match harness::iss_estimate(&plant, &x0s, &inputs, horizon, &SolverConfig::default()).map_err(py_err)? {
            IssOutcome::NotIss(_) => Ok(None),
            IssOutcome::Estimate(est) => {
                let d = PyDict::new(py);
                d.set_item("m_hat", est.m_hat)?;
                d.set_item("lambda_hat", est.lambda_hat)?;
                d.set_item("gain_samples", est.gain_samples.clone())?;
                d.set_item("min_slack", est.min_slack())?;
                d.set_item("degenerate", est.degenerate)?;
                Ok(Some(d))
            }
        }
    }

    /// Searches for a violation of `‖x(t)‖ ≤ M‖x0‖e^{−λt} + c‖u‖∞^p`, or of the
    /// maximum of the two terms when `form = "max"`.
    ///
    /// Returns `None` when the pair survives, else `(input_label, t, norm, bound)`.
    #[pyo3(signature = (beta_m, beta_lambda, gain, power = 1.0, seed = 0, form = "sum"))]
    fn iss_falsify(
        &self,
        beta_m: f64,
        beta_lambda: f64,
        gain: f64,
        power: f64,
        seed: u64,
        form: &str,
    ) -> PyResult<Option<(String, f64, f64, f64)>> {
        let form = match form {
            "sum" => BoundForm::Sum,
            "max" => BoundForm::Max,
            other => {
                return Err(PyValueError::new_err(format!(
                    "form must be \"sum\" or \"max\", got {other:?}"
                )))
            }
        };
        let budget = FalsifyBudget {
            seed,
            form,
            ..Default::default()
        };
        let out = harness::iss_falsify(
            &self.0.semilinear(),
            &KlFunction::exp_family(beta_m, beta_lambda),
            &ComparisonFunction::power(gain, power),
            &budget,
            &SolverConfig::default(),
        )
        .map_err(py_err)?;
        Ok(match out {
            FalsifyOutcome::Pass { .. } => None,
            FalsifyOutcome::Counterexample(c) => Some((c.input_label.clone(), c.t, c.norm, c.bound)),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "LinearSystem(dim={}, M={}, lambda={})",
            self.0.dim(),
            self.0.m(),
            self.0.lambda()
        )
    }
}

fn dissipation_dict<'py>(py: Python<'py>, rep: &lyap_linear::DissipationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("passed", rep.passed)?;
    d.set_item("min_margin", rep.min_margin())?;
    d.set_item("worst_relative_margin", rep.worst_relative_margin())?;
    d.set_item("samples", rep.records.len())?;
    Ok(d)
}

/// Feedback gains synthesized from an exponential `β` and a power gain `γ`.
#[pyclass(module = "isslyap", frozen)]
struct Synthesis(WursSynthesis);

#[pymethods]
impl Synthesis {
    fn alpha(&self, r: f64) -> PyResult<f64> {
        self.0.alpha.eval(r).map_err(py_err)
    }

    fn sigma(&self, r: f64) -> f64 {
        self.0.sigma.eval_extended(r)
    }

    fn psi(&self, r: f64) -> f64 {
        self.0.psi.eval_extended(r)
    }

    fn chi(&self, r: f64) -> f64 {
        self.0.chi.eval_extended(r)
    }

    /// Slope of `σ` when it is linear.
    #[getter]
    fn sigma_slope(&self) -> Option<f64> {
        self.0.sigma.linear_slope()
    }
}

#[pyfunction]
#[pyo3(signature = (beta_m, beta_lambda, gain, power = 1.0))]
fn synthesize_feedback(beta_m: f64, beta_lambda: f64, gain: f64, power: f64) -> PyResult<Synthesis> {
    wurs::synthesize_feedback(
        &KlFunction::exp_family(beta_m, beta_lambda),
        &ComparisonFunction::power(gain, power),
    )
    .map(Synthesis)
    .map_err(py_err)
}

/// Runs the five-item chain; returns `(passed, items)` with
/// `items = [(roman, name, status, detail)]`.
#[pyfunction]
#[pyo3(signature = (generator, b = None, seed = 0))]
fn equivalence_experiment(
    generator: &Generator,
    b: Option<Vec<Vec<f64>>>,
    seed: u64,
) -> PyResult<(bool, Vec<ItemRow>)> {
    let n = generator.0.dim();
    let b = match b {
        Some(rows) => matrix(rows)?,
        None => DMatrix::identity(n, n),
    };
    let cfg = EquivalenceConfig {
        seed,
        ..Default::default()
    };
    let rep = harness::equivalence_experiment(&generator.0, &b, &cfg).map_err(py_err)?;
    let items = rep
        .items
        .iter()
        .map(|i| {
            (
                i.item.roman().to_string(),
                i.item.name().to_string(),
                i.status.as_str().to_string(),
                i.detail.clone(),
            )
        })
        .collect();
    Ok((rep.passed(), items))
}

/// Zero-input decay check of `x' = Ax` from the given initial states.
#[pyfunction]
fn zero_ugas_check(generator: &Generator, x0s: Vec<Vec<f64>>, horizon: f64) -> PyResult<(bool, f64, f64)> {
    let n = generator.0.dim();
    let plant = SemilinearSystem::linear(generator.0.clone(), DMatrix::zeros(n, 1));
    let x0s: Vec<State> = x0s.into_iter().map(state).collect();
    let rep = harness::zero_ugas_check(&plant, &x0s, horizon, &SolverConfig::default()).map_err(py_err)?;
    Ok((rep.passed(), rep.m_hat, rep.lambda_hat))
}

#[pymodule]
fn isslyap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Generator>()?;
    m.add_class::<LinearSystem>()?;
    m.add_class::<Synthesis>()?;
    m.add_function(wrap_pyfunction!(synthesize_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(zero_ugas_check, m)?)?;
    Ok(())
}
