//! Empirical ISS estimation and falsification, zero-input stability checks,
//! the input-averaging limit `(1/h)∫₀^h T_{h−s}Bu(s)ds → Bu(0)`, and the
//! end-to-end equivalence experiment for linear systems.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compfunc::{ComparisonFunction, FunctionClass, KlFunction};
use crate::error::{Error, Result};
use crate::evolution::{
    fit_exp_envelope, greedy_run, solve_mild, InputSignal, SemilinearSystem, SolverConfig, Trajectory,
};
use crate::lyap_linear::{
    check_dissipation_gamma, check_dissipation_integral, check_gamma_norm, check_lipschitz_constants,
    check_quadratic_bounds, dissipation_samples, LinearSystem,
};
use crate::sampling;
use crate::semigroup::{DecayConfig, GeneratorModel, State};

/// Relative inflation applied to fitted gains.
pub const TOL_FIT: f64 = 1e-6;
/// Absolute-plus-relative tolerance for trajectory bound violations.
pub const TOL_VIOLATION: f64 = 1e-6;

/// A named input signal.
#[derive(Debug, Clone)]
pub struct LabeledInput {
    pub label: String,
    pub signal: InputSignal,
}

impl LabeledInput {
    pub fn new(label: impl Into<String>, signal: InputSignal) -> Self {
        Self {
            label: label.into(),
            signal,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", InputSignal::zero(dim))
    }
}

fn sign_direction(dim: usize, sign: f64) -> State {
    State::from_element(dim, sign / (dim as f64).sqrt())
}

/// `u ≡ ±s·(1, …, 1)/√m` for every level `s`.
pub fn constant_inputs(dim: usize, levels: &[f64]) -> Vec<LabeledInput> {
    levels
        .iter()
        .flat_map(|s| {
            [1.0, -1.0].map(|sign| {
                let tag = if sign > 0.0 { "+" } else { "-" };
                LabeledInput::new(
                    format!("const{tag}{s}"),
                    InputSignal::constant(sign_direction(dim, sign) * *s),
                )
            })
        })
        .collect()
}

/// Random piecewise-constant inputs on the sphere of radius `s`, switching every `dt`.
pub fn switched_inputs(
    dim: usize,
    levels: &[f64],
    n_per_level: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<Vec<LabeledInput>> {
    let mut rng = sampling::rng(seed);
    let l2 = crate::semigroup::NormKind::WeightedL2 { weight: 1.0 };
    let mut out = Vec::new();
    for s in levels {
        for k in 0..n_per_level {
            let base = InputSignal::sampled(dt, horizon, |_| State::zeros(dim))?;
            let values = base
                .breakpoints()
                .iter()
                .map(|_| sampling::on_sphere(&mut rng, dim, *s, l2))
                .collect();
            let signal = InputSignal::new(base.breakpoints().to_vec(), values)?;
            out.push(LabeledInput::new(format!("switched{s}#{k}"), signal));
        }
    }
    Ok(out)
}

/// Evidence that a sample does not decay or leaves every bounded set.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceEvidence {
    pub x0: State,
    pub x0_norm: f64,
    pub input_label: String,
    pub input_sup: f64,
    /// Set when the blow-up cap was hit.
    pub escape_time: Option<f64>,
    /// Last finite norm, at the escape time or at the horizon.
    pub last_norm: f64,
    pub horizon: f64,
}

impl DivergenceEvidence {
    pub fn describe(&self) -> String {
        match self.escape_time {
            Some(t) => format!(
                "escape near t = {t:.6} from |x0| = {:.6} under input {} (last norm {:.6e})",
                self.x0_norm, self.input_label, self.last_norm
            ),
            None => format!(
                "no decay from |x0| = {:.6} under input {}: norm {:.6e} at t = {}",
                self.x0_norm, self.input_label, self.last_norm, self.horizon
            ),
        }
    }
}

enum Sample {
    Done(Trajectory),
    Diverged { escape_time: f64, last_norm: f64 },
}

fn run_sample(sys: &SemilinearSystem, x0: &State, u: &InputSignal, horizon: f64, cfg: &SolverConfig) -> Result<Sample> {
    match solve_mild(sys, x0, u, horizon, cfg) {
        Ok(t) => Ok(Sample::Done(t)),
        Err(Error::BlowUp {
            escape_time, last_norm, ..
        }) => Ok(Sample::Diverged { escape_time, last_norm }),
        Err(Error::NonContraction { time, .. }) => Ok(Sample::Diverged {
            escape_time: time,
            last_norm: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

fn run_grid(
    sys: &SemilinearSystem,
    x0s: &[State],
    inputs: &[LabeledInput],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Vec<(usize, usize, Sample)>> {
    let jobs: Vec<(usize, usize)> = (0..x0s.len())
        .flat_map(|i| (0..inputs.len()).map(move |j| (i, j)))
        .collect();
    jobs.par_iter()
        .map(|&(i, j)| Ok((i, j, run_sample(sys, &x0s[i], &inputs[j].signal, horizon, cfg)?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ZeroUgasReport {
    /// `β̂₀(r, t) = M̂ r e^{−λ̂t}` when every sample decays.
    pub beta_hat: Option<KlFunction>,
    pub m_hat: f64,
    pub lambda_hat: f64,
    pub coverage: f64,
    pub evidence: Option<DivergenceEvidence>,
    pub horizon: f64,
    pub samples: usize,
}

impl ZeroUgasReport {
    pub fn passed(&self) -> bool {
        self.beta_hat.is_some()
    }
}

/// Simulates `u ≡ 0` from each initial state and fits `β̂₀` covering every
/// sample. A sample that escapes, or ends no smaller than it started, is
/// returned as failure evidence instead (the one with the largest growth).
pub fn zero_ugas_check(
    sys: &SemilinearSystem,
    x0s: &[State],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<ZeroUgasReport> {
    if x0s.is_empty() {
        return Err(Error::Harness(
            "zero_ugas_check needs at least one initial state".into(),
        ));
    }
    let zero = [LabeledInput::zero(sys.input_dim())];
    let results = run_grid(sys, x0s, &zero, horizon, cfg)?;
    let mut evidence: Option<(f64, DivergenceEvidence)> = None;
    let mut done = Vec::new();
    for (i, _, sample) in &results {
        let x0_norm = sys.norm(&x0s[*i]);
        let candidate = match sample {
            Sample::Diverged { escape_time, last_norm } => Some((f64::INFINITY, Some(*escape_time), *last_norm)),
            Sample::Done(tr) => {
                done.push((x0_norm, tr));
                let last = *tr.norms.last().unwrap();
                (x0_norm > 0.0 && last >= x0_norm).then_some((last / x0_norm, None, last))
            }
        };
        if let Some((growth, escape_time, last_norm)) = candidate {
            if evidence.as_ref().is_none_or(|(g, _)| growth > *g) {
                evidence = Some((
                    growth,
                    DivergenceEvidence {
                        x0: x0s[*i].clone(),
                        x0_norm,
                        input_label: "zero".into(),
                        input_sup: 0.0,
                        escape_time,
                        last_norm,
                        horizon,
                    },
                ));
            }
        }
    }
    let fit = fit_exp_envelope(&done);
    let evidence = evidence.map(|e| e.1);
    let beta_hat = (evidence.is_none() && fit.lambda > 0.0).then(|| KlFunction::exp_family(fit.m, fit.lambda));
    Ok(ZeroUgasReport {
        beta_hat,
        m_hat: fit.m,
        lambda_hat: fit.lambda,
        coverage: fit.coverage,
        evidence,
        horizon,
        samples: results.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssResidual {
    pub x0_norm: f64,
    pub input_label: String,
    pub input_sup: f64,
    /// `min_t β̂(‖x0‖, t) + γ̂(‖u‖) − ‖x(t)‖`
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssCoverage {
    pub x0_norms: Vec<f64>,
    pub input_labels: Vec<String>,
    pub horizon: f64,
}

/// Fitted pair `(β̂, γ̂)` with per-sample slack of the ISS estimate.
#[derive(Debug, Clone)]
pub struct IssEstimate {
    pub beta_hat: KlFunction,
    pub gamma_hat: ComparisonFunction,
    pub m_hat: f64,
    pub lambda_hat: f64,
    /// `(s, γ̂(s))` at every sampled input magnitude, after monotonization.
    pub gain_samples: Vec<(f64, f64)>,
    pub residuals: Vec<IssResidual>,
    pub coverage: IssCoverage,
    /// Set when no nonzero input was sampled, so `γ̂ ≡ 0` carries no information.
    pub degenerate: bool,
}

impl IssEstimate {
    pub fn min_slack(&self) -> f64 {
        self.residuals.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    /// Every sample satisfies `‖x(t)‖ ≤ β̂ + γ̂ + tol (1 + β̂ + γ̂)`.
    pub fn residual_invariant_holds(&self) -> bool {
        self.residuals.iter().all(|r| r.slack >= -TOL_VIOLATION)
    }

    /// `γ̂(s)`, linear beyond the last sampled magnitude.
    pub fn gain(&self, s: f64) -> f64 {
        gain_lookup(&self.gain_samples, s)
    }

    pub fn gain_to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "gamma_hat"])?;
        for (s, g) in &self.gain_samples {
            w.write_record([s.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn residuals_to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x0_norm", "input", "input_sup", "slack"])?;
        for r in &self.residuals {
            w.write_record([
                r.x0_norm.to_string(),
                r.input_label.clone(),
                r.input_sup.to_string(),
                r.slack.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gain_lookup(samples: &[(f64, f64)], s: f64) -> f64 {
    if s <= 0.0 || samples.is_empty() {
        return 0.0;
    }
    let k = samples.partition_point(|(x, _)| *x < s);
    if k < samples.len() && samples[k].0 == s {
        return samples[k].1;
    }
    let (s0, g0) = if k == 0 { (0.0, 0.0) } else { samples[k - 1] };
    match samples.get(k) {
        Some(&(s1, g1)) => g0 + (g1 - g0) * (s - s0) / (s1 - s0),
        None if s0 > 0.0 => g0 * s / s0,
        None => 0.0,
    }
}

#[derive(Debug, Clone)]
pub enum IssOutcome {
    Estimate(Box<IssEstimate>),
    NotIss(DivergenceEvidence),
}

/// Two-stage fit of `(β̂, γ̂)`.
///
/// `β̂ = M̂ r e^{−λ̂t}` is fitted on the `u ≡ 0` runs (added if absent). For
/// each input magnitude `s`, `γ̂(s)` is the largest excess `‖x(t)‖ − β̂(‖x0‖, t)`
/// over samples with `‖u‖ = s`, inflated by `TOL_FIT` and made monotone by a
/// running maximum. Slack is re-checked on every sample after the fit.
pub fn iss_estimate(
    sys: &SemilinearSystem,
    x0s: &[State],
    inputs: &[LabeledInput],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<IssOutcome> {
    if x0s.is_empty() {
        return Err(Error::Harness("iss_estimate needs at least one initial state".into()));
    }
    let mut family: Vec<LabeledInput> = Vec::with_capacity(inputs.len() + 1);
    if !inputs.iter().any(|u| u.signal.sup_norm() == 0.0) {
        family.push(LabeledInput::zero(sys.input_dim()));
    }
    family.extend(inputs.iter().cloned());
    let results = run_grid(sys, x0s, &family, horizon, cfg)?;

    let mut done: Vec<(usize, usize, &Trajectory)> = Vec::new();
    for (i, j, sample) in &results {
        match sample {
            Sample::Diverged { escape_time, last_norm } => {
                return Ok(IssOutcome::NotIss(DivergenceEvidence {
                    x0: x0s[*i].clone(),
                    x0_norm: sys.norm(&x0s[*i]),
                    input_label: family[*j].label.clone(),
                    input_sup: family[*j].signal.sup_norm(),
                    escape_time: Some(*escape_time),
                    last_norm: *last_norm,
                    horizon,
                }))
            }
            Sample::Done(tr) => done.push((*i, *j, tr)),
        }
    }
    let zero_runs: Vec<(f64, &Trajectory)> = done
        .iter()
        .filter(|(_, j, _)| family[*j].signal.sup_norm() == 0.0)
        .map(|(i, _, tr)| (sys.norm(&x0s[*i]), *tr))
        .collect();
    let fit = fit_exp_envelope(&zero_runs);
    if !(fit.lambda > 0.0) {
        let (r, tr) = zero_runs
            .iter()
            .filter(|(r, _)| *r > 0.0)
            .max_by(|a, b| (a.1.norms.last().unwrap() / a.0).total_cmp(&(b.1.norms.last().unwrap() / b.0)))
            .copied()
            .ok_or_else(|| Error::Harness("iss_estimate needs a nonzero initial state".into()))?;
        let i = x0s.iter().position(|x| sys.norm(x) == r).unwrap_or(0);
        return Ok(IssOutcome::NotIss(DivergenceEvidence {
            x0: x0s[i].clone(),
            x0_norm: r,
            input_label: "zero".into(),
            input_sup: 0.0,
            escape_time: None,
            last_norm: *tr.norms.last().unwrap(),
            horizon,
        }));
    }
    let beta = |r: f64, t: f64| fit.m * r * (-fit.lambda * t).exp();

    let mut excess: Vec<(f64, f64)> = done
        .iter()
        .map(|(i, j, tr)| {
            let r = sys.norm(&x0s[*i]);
            let e = tr
                .times
                .iter()
                .zip(&tr.norms)
                .map(|(t, n)| n - beta(r, *t))
                .fold(0.0, f64::max);
            (family[*j].signal.sup_norm(), e)
        })
        .filter(|(s, _)| *s > 0.0)
        .collect();
    excess.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gain_samples: Vec<(f64, f64)> = Vec::new();
    for (s, e) in excess {
        let g = (1.0 + TOL_FIT) * e;
        match gain_samples.last_mut() {
            Some(last) if last.0 == s => last.1 = last.1.max(g),
            _ => gain_samples.push((s, g)),
        }
    }
    let mut running = 0.0f64;
    for p in &mut gain_samples {
        running = running.max(p.1);
        p.1 = running;
    }
    let degenerate = gain_samples.is_empty();
    let gamma_hat = if degenerate || gain_samples.iter().all(|p| p.1 == 0.0) {
        ComparisonFunction::linear(0.0)
    } else {
        let (mut grid, mut values): (Vec<f64>, Vec<f64>) = gain_samples.iter().cloned().unzip();
        grid.insert(0, 0.0);
        values.insert(0, 0.0);
        ComparisonFunction::piecewise_linear(grid, values, FunctionClass::K)?
    };

    let residuals = done
        .iter()
        .map(|(i, j, tr)| {
            let r = sys.norm(&x0s[*i]);
            let s = family[*j].signal.sup_norm();
            let g = gain_lookup(&gain_samples, s);
            let slack = tr
                .times
                .iter()
                .zip(&tr.norms)
                .map(|(t, n)| {
                    let bound = beta(r, *t) + g;
                    (bound - n) / (1.0 + bound)
                })
                .fold(f64::INFINITY, f64::min);
            IssResidual {
                x0_norm: r,
                input_label: family[*j].label.clone(),
                input_sup: s,
                slack,
            }
        })
        .collect();
    Ok(IssOutcome::Estimate(Box::new(IssEstimate {
        beta_hat: KlFunction::exp_family(fit.m, fit.lambda),
        gamma_hat,
        m_hat: fit.m,
        lambda_hat: fit.lambda,
        gain_samples,
        residuals,
        coverage: IssCoverage {
            x0_norms: x0s.iter().map(|x| sys.norm(x)).collect(),
            input_labels: family.iter().map(|u| u.label.clone()).collect(),
            horizon,
        },
        degenerate,
    })))
}

/// How `β` and `γ` combine into the ISS bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundForm {
    /// `β(‖x0‖, t) + γ(‖u‖∞)`
    #[default]
    Sum,
    /// `max(β(‖x0‖, t), γ(‖u‖∞))`
    Max,
}

impl BoundForm {
    pub fn combine(self, beta: f64, gamma: f64) -> f64 {
        match self {
            BoundForm::Sum => beta + gamma,
            BoundForm::Max => beta.max(gamma),
        }
    }
}

/// Search budget of `iss_falsify`.
#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyBudget {
    /// Initial-state magnitudes; each gets `n_directions` random directions.
    pub x0_radii: Vec<f64>,
    pub n_directions: usize,
    pub input_levels: Vec<f64>,
    pub switched_per_level: usize,
    pub switch_dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub form: BoundForm,
}

impl Default for FalsifyBudget {
    fn default() -> Self {
        Self {
            x0_radii: vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0],
            n_directions: 3,
            input_levels: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            switched_per_level: 2,
            switch_dt: 0.5,
            horizon: 20.0,
            seed: 0,
            form: BoundForm::Sum,
        }
    }
}

/// A sample violating the ISS bound.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub x0: State,
    pub input_label: String,
    pub input: InputSignal,
    pub t: f64,
    /// `f64::INFINITY` when the sample escaped.
    pub norm: f64,
    pub bound: f64,
}

impl Counterexample {
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x0_norm", "input", "input_sup", "t", "norm", "bound"])?;
        w.write_record([
            self.x0.norm().to_string(),
            self.input_label.clone(),
            self.input.sup_norm().to_string(),
            self.t.to_string(),
            self.norm.to_string(),
            self.bound.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum FalsifyOutcome {
    Pass { samples: usize, min_slack: f64 },
    Counterexample(Box<Counterexample>),
}

impl FalsifyOutcome {
    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            FalsifyOutcome::Counterexample(c) => Some(c),
            FalsifyOutcome::Pass { .. } => None,
        }
    }
}

/// Adversarial search for a violation of the candidate ISS pair.
///
/// Phases run in order (zero input, constant, switched, greedy) and the search
/// stops at the first phase with a violation, returning its worst sample. The
/// greedy input re-chooses `u` every `switch_dt` among sign and coordinate
/// directions plus random ones, maximizing `⟨x, Ax + f(x, u)⟩`.
pub fn iss_falsify(
    sys: &SemilinearSystem,
    beta: &KlFunction,
    gamma: &ComparisonFunction,
    budget: &FalsifyBudget,
    cfg: &SolverConfig,
) -> Result<FalsifyOutcome> {
    let kind = sys.generator().norm_kind();
    let mut rng = sampling::rng(budget.seed);
    let mut x0s = Vec::new();
    for r in &budget.x0_radii {
        if *r == 0.0 {
            x0s.push(State::zeros(sys.dim()));
            continue;
        }
        for _ in 0..budget.n_directions.max(1) {
            x0s.push(sampling::on_sphere(&mut rng, sys.dim(), *r, kind));
        }
    }
    let m = sys.input_dim();
    let phases: Vec<Vec<LabeledInput>> = vec![
        vec![LabeledInput::zero(m)],
        constant_inputs(m, &budget.input_levels),
        switched_inputs(
            m,
            &budget.input_levels,
            budget.switched_per_level,
            budget.switch_dt,
            budget.horizon,
            budget.seed.wrapping_add(1),
        )?,
    ];
    let bound =
        |r: f64, s: f64, t: f64| -> Result<f64> { Ok(budget.form.combine(beta.eval(r, t)?, gamma.eval_extended(s))) };
    let mut samples = 0;
    let mut min_slack = f64::INFINITY;
    let check = |x0: &State, input: &LabeledInput, sample: &Sample| -> Result<(f64, Option<Counterexample>)> {
        let r = sys.norm(x0);
        let s = input.signal.sup_norm();
        let cex = |t: f64, norm: f64, b: f64| Counterexample {
            x0: x0.clone(),
            input_label: input.label.clone(),
            input: input.signal.clone(),
            t,
            norm,
            bound: b,
        };
        match sample {
            Sample::Diverged { escape_time, .. } => Ok((
                f64::NEG_INFINITY,
                Some(cex(*escape_time, f64::INFINITY, bound(r, s, *escape_time)?)),
            )),
            Sample::Done(tr) => {
                let mut worst = (f64::INFINITY, 0usize, 0.0);
                for (k, (t, n)) in tr.times.iter().zip(&tr.norms).enumerate() {
                    let b = bound(r, s, *t)?;
                    let slack = (b - n) / (1.0 + b);
                    if slack < worst.0 {
                        worst = (slack, k, b);
                    }
                }
                let (slack, k, b) = worst;
                let c = (slack < -TOL_VIOLATION).then(|| cex(tr.times[k], tr.norms[k], b));
                Ok((slack, c))
            }
        }
    };
    let mut best: Option<(f64, Counterexample)> = None;
    let consider = |slack: f64, c: Option<Counterexample>, best: &mut Option<(f64, Counterexample)>| {
        if let Some(c) = c {
            if best.as_ref().is_none_or(|(s, _)| slack < *s) {
                *best = Some((slack, c));
            }
        }
    };
    for inputs in &phases {
        let results = run_grid(sys, &x0s, inputs, budget.horizon, cfg)?;
        for (i, j, sample) in &results {
            let (slack, c) = check(&x0s[*i], &inputs[*j], sample)?;
            samples += 1;
            min_slack = min_slack.min(slack);
            consider(slack, c, &mut best);
        }
        if let Some((_, c)) = best {
            return Ok(FalsifyOutcome::Counterexample(Box::new(c)));
        }
    }
    let l2 = crate::semigroup::NormKind::WeightedL2 { weight: 1.0 };
    let mut directions = vec![sign_direction(m, 1.0), sign_direction(m, -1.0)];
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut e = State::zeros(m);
            e[i] = s;
            directions.push(e);
        }
    }
    for _ in 0..4 {
        directions.push(sampling::on_sphere(&mut rng, m, 1.0, l2));
    }
    let jobs: Vec<(usize, f64)> = (0..x0s.len())
        .flat_map(|i| budget.input_levels.iter().map(move |s| (i, *s)))
        .collect();
    let greedy: Vec<(usize, LabeledInput, Sample)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let cands: Vec<State> = directions.iter().map(|d| d * s).collect();
            let label = format!("greedy{s}");
            match greedy_run(sys, &x0s[i], &cands, budget.horizon, budget.switch_dt, cfg) {
                Ok((tr, u)) => Ok((i, LabeledInput::new(label, u), Sample::Done(tr))),
                Err(Error::BlowUp {
                    escape_time, last_norm, ..
                }) => Ok((
                    i,
                    LabeledInput::new(label, InputSignal::constant(cands[0].clone())),
                    Sample::Diverged { escape_time, last_norm },
                )),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    for (i, input, sample) in &greedy {
        let (slack, c) = check(&x0s[*i], input, sample)?;
        samples += 1;
        min_slack = min_slack.min(slack);
        consider(slack, c, &mut best);
    }
    Ok(match best {
        Some((_, c)) => FalsifyOutcome::Counterexample(Box::new(c)),
        None => FalsifyOutcome::Pass { samples, min_slack },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionReport {
    /// `(h, ‖(1/h)∫₀^h T_{h−s}Bu(s)ds − Bu(0)‖)`
    pub errors: Vec<(f64, f64)>,
    /// Least-squares slope of `log error` against `log h`; `None` when every error vanishes.
    pub order: Option<f64>,
}

/// Error of the input average `(1/h)∫₀^h T_{h−s}Bu(s)ds` against `Bu(0)`.
///
/// The integral is exact on each constant piece of `u`:
/// `∫_a^b T_{h−s} v ds = T_{h−b} (b−a) φ₁((b−a)A) v`.
pub fn convolution_limit_check(system: &LinearSystem, u: &InputSignal, h_seq: &[f64]) -> Result<ConvolutionReport> {
    if h_seq.is_empty() || h_seq.iter().any(|h| !(*h > 0.0)) || h_seq.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Harness("h_seq must be positive and strictly decreasing".into()));
    }
    if u.dim() != system.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.input_dim(),
            got: u.dim(),
        });
    }
    let gen = system.generator();
    let b = system.b();
    let target = b * u.initial_value();
    let errors: Vec<(f64, f64)> = h_seq
        .iter()
        .map(|&h| {
            let mut acc = State::zeros(system.dim());
            let mut a = 0.0;
            while a < h {
                let end = u.next_breakpoint_after(a).map_or(h, |bp| bp.min(h));
                let (p1, _) = gen.phi_matrices(end - a);
                let piece = gen.propagator(h - end) * (p1 * (b * u.value_at(a)));
                acc += piece;
                a = end;
            }
            (h, system.norm(&(acc / h - &target)))
        })
        .collect();
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let order = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(ConvolutionReport { errors, order })
}

/// Items of the linear equivalence chain, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquivalenceItem {
    /// Zero-input uniform global asymptotic stability.
    ZeroUgas,
    /// Exponential decay certificate of the semigroup.
    Decay,
    /// Integral Lyapunov functional with its dissipation inequality.
    IntegralLyapunov,
    /// Equivalent norm `V^γ` with its dissipation inequality.
    GammaLyapunov,
    /// ISS estimate and falsification of the certified pair.
    Iss,
}

impl EquivalenceItem {
    pub const CHAIN: [EquivalenceItem; 5] = [
        EquivalenceItem::ZeroUgas,
        EquivalenceItem::Decay,
        EquivalenceItem::IntegralLyapunov,
        EquivalenceItem::GammaLyapunov,
        EquivalenceItem::Iss,
    ];

    pub fn roman(&self) -> &'static str {
        match self {
            EquivalenceItem::Iss => "i",
            EquivalenceItem::ZeroUgas => "ii",
            EquivalenceItem::Decay => "iii",
            EquivalenceItem::IntegralLyapunov => "iv",
            EquivalenceItem::GammaLyapunov => "v",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquivalenceItem::Iss => "iss",
            EquivalenceItem::ZeroUgas => "zero-ugas",
            EquivalenceItem::Decay => "decay",
            EquivalenceItem::IntegralLyapunov => "integral-lyapunov",
            EquivalenceItem::GammaLyapunov => "gamma-lyapunov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemStatus {
    Pass,
    Fail,
    Skipped,
}

impl ItemStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ItemStatus::Pass => "pass",
            ItemStatus::Fail => "fail",
            ItemStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItemResult {
    pub item: EquivalenceItem,
    pub status: ItemStatus,
    pub detail: String,
    /// Named scalar metrics.
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct EquivalenceConfig {
    pub n_dissipation: usize,
    pub n_lipschitz_pairs: usize,
    /// `γ = gamma_fraction · λ` unless `gamma` is set.
    pub gamma_fraction: f64,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub decay: DecayConfig,
    pub solver: SolverConfig,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            n_dissipation: 50,
            n_lipschitz_pairs: 200,
            gamma_fraction: 0.5,
            gamma: None,
            seed: 0,
            decay: DecayConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub items: Vec<ItemResult>,
    pub evidence: Option<DivergenceEvidence>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.items.len() == EquivalenceItem::CHAIN.len() && self.items.iter().all(|i| i.status == ItemStatus::Pass)
    }

    pub fn first_failure(&self) -> Option<EquivalenceItem> {
        self.items.iter().find(|i| i.status == ItemStatus::Fail).map(|i| i.item)
    }

    pub fn item(&self, item: EquivalenceItem) -> Option<&ItemResult> {
        self.items.iter().find(|i| i.item == item)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["item", "name", "status", "metric", "value"])?;
        for it in &self.items {
            if it.metrics.is_empty() {
                w.write_record([it.item.roman(), it.item.name(), it.status.as_str(), "", ""])?;
            }
            for (k, v) in &it.metrics {
                w.write_record([
                    it.item.roman(),
                    it.item.name(),
                    it.status.as_str(),
                    k.as_str(),
                    &v.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn status(ok: bool) -> ItemStatus {
    if ok {
        ItemStatus::Pass
    } else {
        ItemStatus::Fail
    }
}

fn unit_states(gen: &GeneratorModel, n_random: usize, seed: u64) -> Vec<State> {
    let n = gen.dim();
    let mut out: Vec<State> = (0..n)
        .map(|k| {
            let mut e = State::zeros(n);
            e[k] = 1.0;
            let en = gen.norm(&e);
            e / en
        })
        .collect();
    let mut rng = sampling::rng(seed);
    out.extend((0..n_random).map(|_| sampling::on_sphere(&mut rng, n, 1.0, gen.norm_kind())));
    out
}

/// Runs the chain zero-input stability → decay certificate → integral
/// functional → equivalent norm → ISS on `ẋ = Ax + Bu`, stopping at the first
/// failed item.
pub fn equivalence_experiment(
    gen: &GeneratorModel,
    b: &DMatrix<f64>,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    let plant = SemilinearSystem::linear(gen.clone(), b.clone());
    let mut items = Vec::new();
    let finish = |mut items: Vec<ItemResult>, evidence| {
        for item in EquivalenceItem::CHAIN.iter().skip(items.len()) {
            items.push(ItemResult {
                item: *item,
                status: ItemStatus::Skipped,
                detail: "not reached".into(),
                metrics: Vec::new(),
            });
        }
        EquivalenceReport { items, evidence }
    };

    let horizon = gen.default_horizon();
    let x0s = unit_states(gen, 8, cfg.seed);
    let zero = zero_ugas_check(&plant, &x0s, horizon, &cfg.solver)?;
    items.push(ItemResult {
        item: EquivalenceItem::ZeroUgas,
        status: status(zero.passed()),
        detail: match &zero.evidence {
            Some(e) => e.describe(),
            None => format!("beta_hat = {:.6} r exp(-{:.6} t)", zero.m_hat, zero.lambda_hat),
        },
        metrics: vec![
            ("m_hat".into(), zero.m_hat),
            ("lambda_hat".into(), zero.lambda_hat),
            ("coverage".into(), zero.coverage),
        ],
    });
    if !zero.passed() {
        return Ok(finish(items, zero.evidence));
    }

    let cert = match gen.certify_decay(&cfg.decay) {
        Ok(c) => c,
        Err(e @ Error::NoDecay { .. }) => {
            items.push(ItemResult {
                item: EquivalenceItem::Decay,
                status: ItemStatus::Fail,
                detail: e.to_string(),
                metrics: Vec::new(),
            });
            return Ok(finish(items, None));
        }
        Err(e) => return Err(e),
    };
    let sys = LinearSystem::new(gen.clone(), b.clone(), cert)?;
    let (m, lambda) = (sys.m(), sys.lambda());
    items.push(ItemResult {
        item: EquivalenceItem::Decay,
        status: ItemStatus::Pass,
        detail: format!("|T_t| <= {m:.6} exp(-{lambda:.6} t)"),
        metrics: vec![
            ("m".into(), m),
            ("lambda".into(), lambda),
            ("min_slack".into(), sys.certificate().min_slack()),
            ("lambda_hat_over_lambda".into(), zero.lambda_hat / lambda),
        ],
    });

    let samples = dissipation_samples(&sys, cfg.n_dissipation, cfg.seed);
    let eps = sys.default_epsilon();
    let diss = check_dissipation_integral(&sys, &samples, eps)?;
    let quad = check_quadratic_bounds(&sys, 20)?;
    let gamma = cfg.gamma.unwrap_or(cfg.gamma_fraction * lambda);
    let lip = check_lipschitz_constants(&sys, 1.0, cfg.n_lipschitz_pairs, gamma)?;
    let ok = diss.passed && quad.passed && lip.v_sup <= lip.v_bound * (1.0 + 1e-3);
    items.push(ItemResult {
        item: EquivalenceItem::IntegralLyapunov,
        status: status(ok),
        detail: format!(
            "epsilon = {eps:.6}, dissipation constants eps M^2/(2 lambda) = {:.6}, M^2 |B|^2/(2 lambda eps) = {:.6}",
            eps * m * m / (2.0 * lambda),
            m * m * sys.b_norm().powi(2) / (2.0 * lambda * eps)
        ),
        metrics: vec![
            ("epsilon".into(), eps),
            ("worst_relative_margin".into(), diss.worst_relative_margin()),
            ("quadratic_max_ratio".into(), quad.max_ratio),
            ("quadratic_upper_constant".into(), quad.upper_constant),
            ("v_lipschitz_sup".into(), lip.v_sup),
            ("v_lipschitz_bound".into(), lip.v_bound),
        ],
    });
    if !ok {
        return Ok(finish(items, None));
    }

    let diss_g = check_dissipation_gamma(&sys, gamma, &samples)?;
    let norm_g = check_gamma_norm(&sys, gamma, 20, 20, cfg.seed)?;
    let ok = diss_g.passed && norm_g.passed && lip.vg_sup <= lip.vg_bound * (1.0 + 1e-3);
    items.push(ItemResult {
        item: EquivalenceItem::GammaLyapunov,
        status: status(ok),
        detail: format!("gamma = {gamma:.6}"),
        metrics: vec![
            ("gamma".into(), gamma),
            ("worst_relative_margin".into(), diss_g.worst_relative_margin()),
            ("max_decay_ratio".into(), norm_g.max_decay_ratio),
            ("max_upper_ratio".into(), norm_g.max_upper_ratio),
            ("vg_lipschitz_sup".into(), lip.vg_sup),
        ],
    });
    if !ok {
        return Ok(finish(items, None));
    }

    let levels = [0.25, 0.5, 1.0, 2.0];
    let iss_horizon = 2.0 * horizon.max((m.ln() + 10.0) / lambda);
    let mut inputs = constant_inputs(sys.input_dim(), &levels);
    inputs.extend(switched_inputs(
        sys.input_dim(),
        &levels,
        1,
        0.25 / lambda,
        iss_horizon,
        cfg.seed,
    )?);
    let x0_grid: Vec<State> = std::iter::once(State::zeros(sys.dim()))
        .chain(x0s.iter().flat_map(|x| [x * 0.5, x * 2.0]))
        .collect();
    let estimate = match iss_estimate(&plant, &x0_grid, &inputs, iss_horizon, &cfg.solver)? {
        IssOutcome::Estimate(e) => e,
        IssOutcome::NotIss(ev) => {
            items.push(ItemResult {
                item: EquivalenceItem::Iss,
                status: ItemStatus::Fail,
                detail: ev.describe(),
                metrics: Vec::new(),
            });
            return Ok(finish(items, Some(ev)));
        }
    };
    let theory_gain = m * sys.b_norm() / lambda;
    let beta = KlFunction::exp_family(m, lambda);
    let budget = FalsifyBudget {
        x0_radii: vec![0.0, 1.0, 10.0],
        n_directions: 2,
        input_levels: vec![0.5, 4.0],
        switched_per_level: 1,
        switch_dt: 0.25 / lambda,
        horizon: iss_horizon,
        seed: cfg.seed.wrapping_add(7),
        form: BoundForm::Sum,
    };
    let falsify = iss_falsify(
        &plant,
        &beta,
        &ComparisonFunction::linear(theory_gain),
        &budget,
        &cfg.solver,
    )?;
    let max_gain_ratio = estimate
        .gain_samples
        .iter()
        .map(|(s, g)| g / (theory_gain * s))
        .fold(0.0, f64::max);
    let ok = estimate.residual_invariant_holds() && !estimate.degenerate && falsify.counterexample().is_none();
    items.push(ItemResult {
        item: EquivalenceItem::Iss,
        status: status(ok),
        detail: match falsify.counterexample() {
            Some(c) => format!("certified pair violated at t = {} under {}", c.t, c.input_label),
            None => format!("gamma_hat(s) <= {max_gain_ratio:.6} M |B| s / lambda on sampled s"),
        },
        metrics: vec![
            ("beta_hat_m".into(), estimate.m_hat),
            ("beta_hat_lambda".into(), estimate.lambda_hat),
            ("gamma_hat_over_certified".into(), max_gain_ratio),
            ("residual_min_slack".into(), estimate.min_slack()),
        ],
    });
    Ok(finish(items, None))
}
