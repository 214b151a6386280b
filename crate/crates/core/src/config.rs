//! Run configuration: one TOML file per run, resolved with defaults and
//! validated before dispatch.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{Nonlinearity, SemilinearSystem, SolverConfig, StepRule};
use crate::harness::BoundForm;
use crate::lyap_linear::DEFAULT_H_SEQ;
use crate::semigroup::{DecayCertificate, DecayConfig, GeneratorModel, NormKind, OperatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Simulate,
    CertifyDecay,
    BuildLyap,
    VerifyDissipation,
    SynthesizeWurs,
    VerifyUgas,
    EstimateIss,
    FalsifyIss,
    Equivalence,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::CertifyDecay => "certify-decay",
            Task::BuildLyap => "build-lyap",
            Task::VerifyDissipation => "verify-dissipation",
            Task::SynthesizeWurs => "synthesize-wurs",
            Task::VerifyUgas => "verify-ugas",
            Task::EstimateIss => "estimate-iss",
            Task::FalsifyIss => "falsify-iss",
            Task::Equivalence => "equivalence",
        }
    }

    fn uses_gamma(&self) -> bool {
        matches!(self, Task::BuildLyap | Task::VerifyDissipation | Task::Equivalence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exemplar {
    Scalar,
    Heat,
    Transport,
    Jordan2,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `f(x, u) = Bu`
    #[default]
    Linear,
    /// `f(x, u) = −k sin x + Bu`
    Sine,
    /// `f(x, u) = −k x³ + Bu`
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormChoice {
    #[default]
    L2,
    Sup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub exemplar: Exemplar,
    /// State dimension; fixed for `scalar` (1) and `jordan2` (2).
    pub dim: Option<usize>,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "one")]
    pub speed: f64,
    #[serde(default = "one")]
    pub damping: f64,
    #[serde(default = "default_a")]
    pub lambda0: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// Rows of `A` for `explicit`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Norm for `explicit`; exemplars carry their own.
    #[serde(default)]
    pub norm: NormChoice,
    /// Rows of `B`; the identity when absent.
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub nonlinearity: NonlinearityKind,
    #[serde(default = "one")]
    pub k: f64,
    /// Decay certificate `(M, λ)` used instead of certifying numerically.
    pub certificate: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Fixed-point tolerance of the mild-solution solver.
    pub solver_tol: f64,
    pub max_step: f64,
    /// Slack required of sampled decay-certificate bounds.
    pub decay_tol: f64,
    /// Absolute accuracy of adaptive `V` evaluations.
    pub v_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver_tol: 1e-12,
            max_step: 1e-2,
            decay_tol: 1e-9,
            v_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Simulation horizon; `10 / λ_guess` when absent.
    pub horizon: Option<f64>,
    /// Window `[0, t_max]` of the decay certificate; `10 / λ_guess` when absent.
    pub decay_t_max: Option<f64>,
    pub x0_radii: Vec<f64>,
    pub n_directions: usize,
    pub input_levels: Vec<f64>,
    pub h_seq: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub switch_dt: f64,
    pub n_random: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            horizon: None,
            decay_t_max: None,
            x0_radii: vec![0.5, 1.0, 2.0],
            n_directions: 4,
            input_levels: vec![0.25, 0.5, 1.0, 2.0],
            h_seq: DEFAULT_H_SEQ.to_vec(),
            r_grid: vec![0.5, 1.0, 2.0],
            eps_grid: vec![0.01, 0.1, 0.5],
            n_samples: 50,
            n_pairs: 200,
            switch_dt: 0.2,
            n_random: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Decay weight of `V^γ`; `λ/2` when absent.
    pub gamma: Option<f64>,
    /// Dissipation weight of `V`; `λ/M²` when absent.
    pub epsilon: Option<f64>,
}

/// Candidate ISS pair `β(r, t) = M r e^{−λt}`, `γ(s) = c s^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub beta_m: f64,
    pub beta_lambda: f64,
    pub gain: f64,
    #[serde(default = "one")]
    pub gain_power: f64,
    /// Falsifier bound `β + γ` or `max(β, γ)`.
    #[serde(default)]
    pub form: BoundForm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Initial state; the normalized first basis vector when absent.
    pub x0: Option<Vec<f64>>,
    /// Constant input; zero when absent.
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub trapezoid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Halvings of the synthesized feedback allowed after a failed UGAS check.
    #[serde(default)]
    pub resynthesize: u32,
    pub system: SystemConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    pub candidate: Option<CandidateConfig>,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn one() -> f64 {
    1.0
}

fn default_a() -> f64 {
    -1.0
}

fn default_coupling() -> f64 {
    10.0
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!(
            "system.{what}: rows must be nonempty and of equal length"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills defaults that depend on the system, then validates.
    pub fn resolve(mut self) -> Result<Self> {
        let sys = &mut self.system;
        let fixed = match sys.exemplar {
            Exemplar::Scalar => Some(1),
            Exemplar::Jordan2 => Some(2),
            Exemplar::Explicit => sys.matrix.as_ref().map(|m| m.len()),
            Exemplar::Heat | Exemplar::Transport => None,
        };
        sys.dim = match (fixed, sys.dim) {
            (Some(f), Some(d)) if f != d => {
                return Err(Error::Config(format!(
                    "system.dim = {d} conflicts with the exemplar dimension {f}"
                )))
            }
            (Some(f), _) => Some(f),
            (None, Some(d)) => Some(d),
            (None, None) => Some(16),
        };
        if self.grids.horizon.is_none() {
            self.grids.horizon = Some(self.generator()?.default_horizon());
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let t = &self.tolerances;
        positive("tolerances.solver_tol", t.solver_tol)?;
        positive("tolerances.max_step", t.max_step)?;
        positive("tolerances.decay_tol", t.decay_tol)?;
        positive("tolerances.v_tol", t.v_tol)?;
        let g = &self.grids;
        positive("grids.horizon", self.horizon())?;
        positive("grids.switch_dt", g.switch_dt)?;
        if let Some(t) = g.decay_t_max {
            positive("grids.decay_t_max", t)?;
        }
        for (name, v) in [
            ("grids.x0_radii", &g.x0_radii),
            ("grids.input_levels", &g.input_levels),
            ("grids.h_seq", &g.h_seq),
            ("grids.r_grid", &g.r_grid),
            ("grids.eps_grid", &g.eps_grid),
        ] {
            if v.is_empty() {
                return Err(Error::Config(format!("{name} must be nonempty")));
            }
            for x in v {
                positive(name, *x)?;
            }
        }
        if g.h_seq.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("grids.h_seq must be strictly decreasing".into()));
        }
        if g.n_samples == 0 || g.n_pairs == 0 || g.n_directions == 0 {
            return Err(Error::Config(
                "grids.n_samples, n_pairs and n_directions must be positive".into(),
            ));
        }
        if let Some([m, lambda]) = self.system.certificate {
            if !(m >= 1.0) || !(lambda > 0.0) {
                return Err(Error::Config(format!(
                    "system.certificate needs M >= 1 and lambda > 0, got [{m}, {lambda}]"
                )));
            }
        }
        if let Some(eps) = self.lyapunov.epsilon {
            positive("lyapunov.epsilon", eps)?;
        }
        if let Some(gamma) = self.lyapunov.gamma {
            positive("lyapunov.gamma", gamma)?;
            if self.task.uses_gamma() {
                let (lambda, source) = match self.system.certificate {
                    Some([_, l]) => (l, "the certificate decay rate"),
                    None => (self.generator()?.decay_rate_guess(), "the spectral decay rate of A"),
                };
                if gamma >= lambda {
                    return Err(Error::Config(format!(
                        "lyapunov.gamma = {gamma} must be strictly below {source} lambda = {lambda}; \
                         the weighted norm sup e^(gamma s) |T_s x| is finite only for gamma < lambda"
                    )));
                }
            }
        }
        if let Some(c) = &self.candidate {
            if !(c.beta_m >= 1.0) {
                return Err(Error::Config(format!(
                    "candidate.beta_m must be >= 1, got {}",
                    c.beta_m
                )));
            }
            positive("candidate.beta_lambda", c.beta_lambda)?;
            positive("candidate.gain_power", c.gain_power)?;
            if !(c.gain >= 0.0) {
                return Err(Error::Config(format!(
                    "candidate.gain must be nonnegative, got {}",
                    c.gain
                )));
            }
        }
        if matches!(self.task, Task::FalsifyIss) && self.candidate.is_none() {
            return Err(Error::Config("task falsify-iss needs a [candidate] table".into()));
        }
        let (n, m) = (self.dim(), self.b_matrix()?.ncols());
        if self.b_matrix()?.nrows() != n {
            return Err(Error::Config(format!("system.b needs {n} rows")));
        }
        if let Some(x0) = &self.simulate.x0 {
            if x0.len() != n {
                return Err(Error::Config(format!("simulate.x0 needs {n} entries")));
            }
        }
        if let Some(u) = &self.simulate.u {
            if u.len() != m {
                return Err(Error::Config(format!("simulate.u needs {m} entries")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.system.dim.unwrap_or(1)
    }

    pub fn horizon(&self) -> f64 {
        self.grids.horizon.unwrap_or(f64::NAN)
    }

    pub fn generator(&self) -> Result<GeneratorModel> {
        let s = &self.system;
        let n = self.dim();
        match s.exemplar {
            Exemplar::Scalar => GeneratorModel::discretize(&OperatorSpec::Scalar { a: s.a }, 1),
            Exemplar::Heat => GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: s.length }, n),
            Exemplar::Transport => GeneratorModel::discretize(
                &OperatorSpec::Transport {
                    speed: s.speed,
                    damping: s.damping,
                },
                n,
            ),
            Exemplar::Jordan2 => GeneratorModel::discretize(
                &OperatorSpec::Jordan2 {
                    lambda0: s.lambda0,
                    coupling: s.coupling,
                },
                2,
            ),
            Exemplar::Explicit => {
                let rows = s
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Config("system.matrix is required for the explicit exemplar".into()))?;
                let norm = match s.norm {
                    NormChoice::L2 => NormKind::WeightedL2 { weight: 1.0 },
                    NormChoice::Sup => NormKind::Sup,
                };
                GeneratorModel::explicit(rows_to_matrix(rows, "matrix")?, norm)
            }
        }
    }

    pub fn b_matrix(&self) -> Result<DMatrix<f64>> {
        match &self.system.b {
            Some(rows) => rows_to_matrix(rows, "b"),
            None => Ok(DMatrix::identity(self.dim(), self.dim())),
        }
    }

    pub fn plant(&self) -> Result<SemilinearSystem> {
        let gen = self.generator()?;
        let b = self.b_matrix()?;
        let m = b.ncols();
        let norm = gen.norm_kind();
        let k = self.system.k;
        Ok(match self.system.nonlinearity {
            NonlinearityKind::Linear => SemilinearSystem::linear(gen, b),
            NonlinearityKind::Sine => SemilinearSystem::new(gen, Nonlinearity::sine(k, b, norm), m),
            NonlinearityKind::Cubic => SemilinearSystem::new(gen, Nonlinearity::cubic(k, b, norm), m),
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tolerances.solver_tol,
            max_step: self.tolerances.max_step,
            rule: if self.simulate.trapezoid {
                StepRule::ExponentialTrapezoid
            } else {
                StepRule::ExponentialEuler
            },
            ..SolverConfig::default()
        }
    }

    pub fn decay_config(&self) -> DecayConfig {
        DecayConfig {
            t_max: self.grids.decay_t_max,
            tol_cert: self.tolerances.decay_tol,
            ..DecayConfig::default()
        }
    }

    /// The configured certificate, or one certified from samples of `‖T_t‖`.
    pub fn certificate(&self, gen: &GeneratorModel) -> Result<DecayCertificate> {
        match self.system.certificate {
            Some([m, lambda]) => DecayCertificate::assumed(m, lambda),
            None => gen.certify_decay(&self.decay_config()),
        }
    }
}

/// Reads and resolves a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_toml_str("[system]\nexemplar = \"scalar\"\n").unwrap();
        assert_eq!(cfg.task, Task::Simulate);
        assert_eq!(cfg.dim(), 1);
        assert_eq!(cfg.system.a, -1.0);
        assert_eq!(cfg.horizon(), 10.0);
        assert_eq!(
            cfg.grids,
            Grids {
                horizon: Some(10.0),
                ..Grids::default()
            }
        );
    }

    #[test]
    fn gamma_at_or_above_decay_rate_is_rejected() {
        let text = "task = \"build-lyap\"\n[system]\nexemplar = \"scalar\"\ncertificate = [1.0, 1.0]\n[lyapunov]\ngamma = 1.5\n";
        let err = RunConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("gamma = 1.5") && err.contains("lambda = 1"), "{err}");
        let ok = text.replace("gamma = 1.5", "gamma = 0.5");
        assert!(RunConfig::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "task = \"equivalence\"\nseed = 7\n[system]\nexemplar = \"heat\"\ndim = 8\n[grids]\nhorizon = 2.0\nh_seq = [1e-4, 1e-5]\nn_samples = 5\n[candidate]\nbeta_m = 1.0\nbeta_lambda = 9.0\ngain = 0.5\n";
        let a = RunConfig::from_toml_str(text).unwrap();
        let b = RunConfig::from_toml_str(&a.to_toml_string().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml_string().unwrap(), b.to_toml_string().unwrap());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = RunConfig::from_toml_str("[system]\nexemplar = \"scalar\"\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = RunConfig::from_toml_str("[system]\nexemplar = \"scalar\"\n[grids]\nswitch_dt = -1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("grids.switch_dt"), "{err}");
        let err = RunConfig::from_toml_str("[system]\nexemplar = \n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = RunConfig::from_toml_str("task = \"falsify-iss\"\n[system]\nexemplar = \"scalar\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("candidate"), "{err}");
    }

    #[test]
    fn policy_knobs_parse() {
        let text = "task = \"falsify-iss\"\nresynthesize = 2\n[system]\nexemplar = \"scalar\"\n[candidate]\nbeta_m = 2.0\nbeta_lambda = 1.0\ngain = 2.0\nform = \"max\"\n";
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.resynthesize, 2);
        assert_eq!(cfg.candidate.as_ref().unwrap().form, BoundForm::Max);
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
        let err = RunConfig::from_toml_str(&text.replace("\"max\"", "\"min\""))
            .unwrap_err()
            .to_string();
        assert!(err.contains("min"), "{err}");
    }

    #[test]
    fn decay_window_reaches_the_certificate() {
        let text = "task = \"certify-decay\"\n[system]\nexemplar = \"jordan2\"\n[grids]\ndecay_t_max = 8.0\n";
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let cert = cfg.generator().unwrap().certify_decay(&cfg.decay_config()).unwrap();
        assert_eq!(*cert.sample_times.last().unwrap(), 8.0);
        // ‖T_3‖ > 1 for the coupled Jordan block, so a short window cannot certify decay.
        let short = RunConfig::from_toml_str(&text.replace("8.0", "3.0")).unwrap();
        let err = short
            .generator()
            .unwrap()
            .certify_decay(&short.decay_config())
            .unwrap_err();
        assert!(matches!(err, Error::NoDecay { t_max, .. } if t_max == 3.0), "{err}");
        let err = RunConfig::from_toml_str(&text.replace("8.0", "0.0"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("grids.decay_t_max"), "{err}");
    }
}
