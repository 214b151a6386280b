//! Robust feedback synthesis from an ISS pair `(β, γ)` and sampled
//! certification of uniform global stability, attractivity and asymptotic
//! stability for the closed loop under multiplicative disturbances.

use std::io::Write;

use rayon::prelude::*;

use crate::compfunc::{log_space, ComparisonFunction, Form, FunctionClass, KlFunction};
use crate::error::{Error, Result};
use crate::evolution::{
    fit_exp_envelope, greedy_run, solve_disturbed, ClosedLoopSystem, DisturbanceSignal, ExpEnvelope, Feedback,
    SolverConfig, Trajectory,
};
use crate::semigroup::{NormKind, State};

/// Pointwise tolerance for trajectory bounds.
pub const TOL_BOUND: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct WursSynthesis {
    pub beta: KlFunction,
    pub gamma: ComparisonFunction,
    /// `α(r) = β(r, 0)`
    pub alpha: ComparisonFunction,
    /// `σ(r) = γ⁻¹(¼ α⁻¹(⅔ r))`
    pub sigma: ComparisonFunction,
    /// Locally Lipschitz minorant of `σ`.
    pub psi: ComparisonFunction,
    /// `ψ⁻¹`
    pub chi: ComparisonFunction,
}

impl WursSynthesis {
    /// `φ(x) = ψ(‖x‖)`.
    pub fn feedback(&self, norm: NormKind) -> Feedback {
        Feedback::from_gain(self.psi.clone(), norm)
    }

    /// Same pair with `σ` and `ψ` scaled by `factor ∈ (0, 1]`.
    pub fn shrunk(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::Synthesis(format!(
                "shrink factor must lie in (0, 1], got {factor}"
            )));
        }
        let sigma = self.sigma.scaled(factor)?;
        let psi = self.psi.scaled(factor)?;
        let chi = psi.inverse()?;
        Ok(Self {
            sigma,
            psi,
            chi,
            ..self.clone()
        })
    }
}

fn synthesis_error(e: Error) -> Error {
    match e {
        Error::RangeExceeded { .. } | Error::OutOfDomain { .. } => {
            Error::Synthesis(format!("gain inverse domain exhausted ({e}); raise the domain cap"))
        }
        other => other,
    }
}

/// `α`, `σ`, `ψ` and `χ` from an ISS pair.
pub fn synthesize_feedback(beta: &KlFunction, gamma: &ComparisonFunction) -> Result<WursSynthesis> {
    let alpha = beta.at_time_zero()?;
    let cap = alpha.domain_cap().min(1e6);
    for r in log_space(cap * 1e-9, cap, 200) {
        let a = alpha.eval(r)?;
        if a < r * (1.0 - 1e-12) {
            return Err(Error::Synthesis(format!(
                "beta(r, 0) must dominate r, but beta({r}, 0) = {a}"
            )));
        }
    }
    let alpha_inv = alpha.inverse()?;
    let inner = ComparisonFunction::linear(0.25)
        .compose(
            &alpha_inv
                .compose(&ComparisonFunction::linear(2.0 / 3.0))
                .map_err(synthesis_error)?,
        )
        .map_err(synthesis_error)?;
    let sigma = gamma.inverse()?.compose(&inner).map_err(synthesis_error)?;
    let psi = match *sigma.form() {
        Form::Linear { .. } => sigma.clone(),
        Form::Power { p, .. } if p >= 1.0 => sigma.clone(),
        _ => lagged_minorant(&sigma)?,
    };
    let chi = psi.inverse()?;
    Ok(WursSynthesis {
        beta: beta.clone(),
        gamma: gamma.clone(),
        alpha,
        sigma,
        psi,
        chi,
    })
}

/// Piecewise-linear `ψ ≤ σ`: node `rᵢ` carries `σ(rᵢ₋₁)`, and below the first
/// node `ψ` is linear with half the smallest sampled `σ(r)/r`.
fn lagged_minorant(sigma: &ComparisonFunction) -> Result<ComparisonFunction> {
    let hi = sigma.domain_cap();
    let nodes = log_space(hi * 1e-12, hi, 481);
    let vals: Vec<f64> = nodes.iter().map(|r| sigma.eval(*r)).collect::<Result<_>>()?;
    let slope = nodes
        .iter()
        .zip(&vals)
        .map(|(r, v)| v / r)
        .fold(f64::INFINITY, f64::min);
    let mut grid = vec![0.0, nodes[0]];
    let mut values = vec![0.0, 0.5 * slope * nodes[0]];
    for i in 1..nodes.len() {
        grid.push(nodes[i]);
        values.push(vals[i - 1]);
    }
    ComparisonFunction::piecewise_linear(grid, values, FunctionClass::KInf)
}

/// Disturbances sampled from the unit-ball signal class.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Zero,
    /// `+1` in every coordinate, normalized.
    Plus,
    Minus,
    /// Piecewise constant, uniform in the unit ball, switching every `switch_dt`.
    Random {
        seed: u64,
        switch_dt: f64,
    },
    /// Picks, every `switch_dt`, the candidate value maximizing the growth
    /// rate `⟨x, Ax + g(x, d)⟩`, ties broken by `‖g(x, d)‖`.
    Greedy {
        switch_dt: f64,
    },
}

impl DisturbanceKind {
    pub fn label(&self) -> String {
        match self {
            DisturbanceKind::Zero => "zero".into(),
            DisturbanceKind::Plus => "plus".into(),
            DisturbanceKind::Minus => "minus".into(),
            DisturbanceKind::Random { seed, .. } => format!("random-{seed}"),
            DisturbanceKind::Greedy { .. } => "greedy".into(),
        }
    }

    /// `d ≡ 0`, `d ≡ ±1`, `n_random` random signals and the greedy adversary.
    pub fn standard_family(n_random: usize, switch_dt: f64, seed: u64) -> Vec<Self> {
        let mut out = vec![DisturbanceKind::Zero, DisturbanceKind::Plus, DisturbanceKind::Minus];
        out.extend((0..n_random as u64).map(|k| DisturbanceKind::Random {
            seed: seed.wrapping_add(k),
            switch_dt,
        }));
        out.push(DisturbanceKind::Greedy { switch_dt });
        out
    }
}

fn sign_pattern(dim: usize, sign: f64) -> State {
    State::from_element(dim, sign / (dim as f64).sqrt())
}

fn candidates(dim: usize) -> Vec<State> {
    let mut out = vec![sign_pattern(dim, 1.0), sign_pattern(dim, -1.0)];
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = State::zeros(dim);
            e[i] = s;
            out.push(e);
        }
    }
    out.push(State::zeros(dim));
    out
}

/// One closed-loop simulation with the realized disturbance.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub x0: State,
    pub x0_norm: f64,
    pub label: String,
    pub disturbance: DisturbanceSignal,
    pub trajectory: Trajectory,
}

fn greedy_disturbance_run(
    cls: &ClosedLoopSystem,
    x0: &State,
    horizon: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<ClosedLoopRun> {
    let cands = candidates(cls.as_system().input_dim());
    let (trajectory, d) = greedy_run(cls.as_system(), x0, &cands, horizon, dt, cfg)?;
    Ok(ClosedLoopRun {
        x0: x0.clone(),
        x0_norm: cls.norm(x0),
        label: "greedy".into(),
        disturbance: DisturbanceSignal::new(d)?,
        trajectory,
    })
}

/// Simulates every `(x0, d)` combination; results are ordered by `x0`, then `d`.
pub fn simulate_runs(
    cls: &ClosedLoopSystem,
    x0s: &[State],
    family: &[DisturbanceKind],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Vec<ClosedLoopRun>> {
    let m = cls.as_system().input_dim();
    let jobs: Vec<(&State, &DisturbanceKind)> = x0s.iter().flat_map(|x| family.iter().map(move |d| (x, d))).collect();
    jobs.par_iter()
        .map(|(x0, kind)| {
            let d = match kind {
                DisturbanceKind::Greedy { switch_dt } => {
                    return greedy_disturbance_run(cls, x0, horizon, *switch_dt, cfg)
                }
                DisturbanceKind::Zero => DisturbanceSignal::zero(m),
                DisturbanceKind::Plus => DisturbanceSignal::constant(sign_pattern(m, 1.0))?,
                DisturbanceKind::Minus => DisturbanceSignal::constant(sign_pattern(m, -1.0))?,
                DisturbanceKind::Random { seed, switch_dt } => {
                    DisturbanceSignal::random(m, *switch_dt, horizon, *seed)?
                }
            };
            let trajectory = solve_disturbed(cls, x0, &d, horizon, cfg)?;
            Ok(ClosedLoopRun {
                x0: (*x0).clone(),
                x0_norm: cls.norm(x0),
                label: kind.label(),
                disturbance: d,
                trajectory,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallFeedbackReport {
    /// `(t, γ(‖d(t)‖ φ(x(t))) − ‖x0‖/2)` at every recorded time.
    pub margins: Vec<(f64, f64)>,
    pub max_margin: f64,
    pub passed: bool,
}

/// `γ(‖d(t) φ(x(t))‖) − ‖x0‖/2` along a recorded run.
pub fn small_feedback_margins(
    cls: &ClosedLoopSystem,
    gamma: &ComparisonFunction,
    run: &ClosedLoopRun,
) -> SmallFeedbackReport {
    let half = run.x0_norm / 2.0;
    let margins: Vec<(f64, f64)> = run
        .trajectory
        .times
        .iter()
        .zip(&run.trajectory.states)
        .map(|(t, x)| {
            let d = run.disturbance.value_at(*t).norm();
            (*t, gamma.eval_extended(d * cls.feedback().eval(x)) - half)
        })
        .collect();
    let max_margin = margins.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    SmallFeedbackReport {
        passed: max_margin <= 0.0,
        margins,
        max_margin,
    }
}

/// Simulates `(x0, d)` on `[0, horizon]` and evaluates the small-feedback margins.
pub fn check_small_feedback(
    cls: &ClosedLoopSystem,
    gamma: &ComparisonFunction,
    x0: &State,
    d: &DisturbanceSignal,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<SmallFeedbackReport> {
    let trajectory = solve_disturbed(cls, x0, d, horizon, cfg)?;
    let run = ClosedLoopRun {
        x0: x0.clone(),
        x0_norm: cls.norm(x0),
        label: "given".into(),
        disturbance: d.clone(),
        trajectory,
    };
    Ok(small_feedback_margins(cls, gamma, &run))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UgsReport {
    /// `(r, sup_t ‖x(t)‖)` per distinct initial norm, running max in `r`.
    pub sigma_ugs: Vec<(f64, f64)>,
    /// Linear `K∞` bound `r ↦ c r` covering every sample.
    pub fit: ComparisonFunction,
    /// Largest `‖x(t)‖ − β(‖x0‖, t) − ‖x0‖/2` (when `β` is known).
    pub max_excess_bound: Option<f64>,
    /// Largest `sup_t ‖x(t)‖ / (3/2 α(‖x0‖))`.
    pub max_envelope_ratio: Option<f64>,
    /// Largest small-feedback margin over all runs.
    pub max_small_feedback: Option<f64>,
    pub passed: bool,
}

/// Stability bounds over sampled runs. With a synthesis, checks
/// `‖x(t)‖ ≤ β(‖x0‖, t) + ‖x0‖/2` pointwise, the envelope `3/2 α(‖x0‖)`, and
/// the small-feedback margins.
pub fn verify_ugs(cls: &ClosedLoopSystem, syn: Option<&WursSynthesis>, runs: &[ClosedLoopRun]) -> Result<UgsReport> {
    let mut by_r: Vec<(f64, f64)> = runs.iter().map(|r| (r.x0_norm, r.trajectory.sup_norm())).collect();
    by_r.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sigma_ugs: Vec<(f64, f64)> = Vec::new();
    for (r, s) in by_r {
        let prev = sigma_ugs.last().map_or(0.0, |p| p.1);
        match sigma_ugs.last_mut() {
            Some(last) if last.0 == r => last.1 = last.1.max(s),
            _ => sigma_ugs.push((r, s.max(prev))),
        }
    }
    let slope = sigma_ugs
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1 / p.0)
        .fold(0.0, f64::max);
    let fit = ComparisonFunction::linear(slope.max(f64::MIN_POSITIVE));
    let mut report = UgsReport {
        sigma_ugs,
        fit,
        max_excess_bound: None,
        max_envelope_ratio: None,
        max_small_feedback: None,
        passed: true,
    };
    if let Some(syn) = syn {
        let mut excess = f64::NEG_INFINITY;
        let mut envelope = 0.0f64;
        let mut small = f64::NEG_INFINITY;
        for run in runs {
            let r = run.x0_norm;
            for (t, n) in run.trajectory.times.iter().zip(&run.trajectory.norms) {
                excess = excess.max(n - syn.beta.eval(r, *t)? - r / 2.0);
            }
            if r > 0.0 {
                envelope = envelope.max(run.trajectory.sup_norm() / (1.5 * syn.alpha.eval(r)?));
            }
            small = small.max(small_feedback_margins(cls, &syn.gamma, run).max_margin);
        }
        report.passed = excess <= TOL_BOUND && envelope <= 1.0 + TOL_BOUND && small <= 0.0;
        report.max_excess_bound = Some(excess);
        report.max_envelope_ratio = Some(envelope);
        report.max_small_feedback = Some(small);
    }
    Ok(report)
}

/// Last time `‖x(t)‖ ≥ eps`, interpolated to the downward crossing; `None`
/// when the trajectory is still above `eps` at the end of the horizon.
fn settling_time(traj: &Trajectory, eps: f64) -> Option<f64> {
    let norms = &traj.norms;
    if *norms.last().unwrap() >= eps {
        return None;
    }
    match norms.iter().rposition(|n| *n >= eps) {
        None => Some(0.0),
        Some(k) => {
            let (t0, t1) = (traj.times[k], traj.times[k + 1]);
            let (n0, n1) = (norms[k], norms[k + 1]);
            Some(t0 + (t1 - t0) * (n0 - eps) / (n0 - n1))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UgattReport {
    pub r_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `tau[i][j]` is `τ(r_i, ε_j)`; `None` when some sample has not settled.
    pub tau: Vec<Vec<Option<f64>>>,
    /// Horizon the settling decisions are based on.
    pub horizon: f64,
    /// `(k, t_k)` with `t_k = τ(r_max, (3/4)^k r_max)`.
    pub contraction_times: Vec<(u32, Option<f64>)>,
    pub tau_monotone: bool,
    pub contraction_increasing: bool,
    pub passed: bool,
}

impl UgattReport {
    pub fn tau_at(&self, r: f64, eps: f64) -> Option<f64> {
        let i = self.r_grid.iter().position(|v| *v == r)?;
        let j = self.eps_grid.iter().position(|v| *v == eps)?;
        self.tau[i][j]
    }

    /// Writes `r,eps,tau,settled,horizon`.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "eps", "tau", "settled", "horizon"])?;
        for (i, r) in self.r_grid.iter().enumerate() {
            for (j, e) in self.eps_grid.iter().enumerate() {
                let tau = self.tau[i][j];
                w.write_record([
                    r.to_string(),
                    e.to_string(),
                    tau.map_or_else(|| "nan".into(), |t| t.to_string()),
                    tau.is_some().to_string(),
                    self.horizon.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical `τ(r, ε)`: over runs with `‖x0‖ ≤ r`, the largest time after
/// which the norm stays below `ε` on the simulated horizon.
pub fn verify_ugatt(runs: &[ClosedLoopRun], r_grid: &[f64], eps_grid: &[f64]) -> UgattReport {
    let horizon = runs
        .iter()
        .map(|r| r.trajectory.final_time())
        .fold(f64::INFINITY, f64::min);
    let tau_for = |r: f64, eps: f64| -> Option<f64> {
        runs.iter()
            .filter(|run| run.x0_norm <= r * (1.0 + 1e-12))
            .map(|run| settling_time(&run.trajectory, eps))
            .try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)))
    };
    let tau: Vec<Vec<Option<f64>>> = r_grid
        .iter()
        .map(|r| eps_grid.iter().map(|e| tau_for(*r, *e)).collect())
        .collect();
    let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => a <= b,
        (_, None) => true,
        (None, Some(_)) => false,
    };
    let mut tau_monotone = true;
    let mut order_r: Vec<usize> = (0..r_grid.len()).collect();
    order_r.sort_by(|a, b| r_grid[*a].total_cmp(&r_grid[*b]));
    let mut order_e: Vec<usize> = (0..eps_grid.len()).collect();
    order_e.sort_by(|a, b| eps_grid[*a].total_cmp(&eps_grid[*b]));
    for w in order_r.windows(2) {
        for (a, b) in tau[w[0]].iter().zip(&tau[w[1]]) {
            tau_monotone &= le(*a, *b);
        }
    }
    for row in &tau {
        for w in order_e.windows(2) {
            tau_monotone &= le(row[w[1]], row[w[0]]);
        }
    }
    let r_max = r_grid.iter().cloned().fold(0.0, f64::max);
    let eps_min = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut contraction_times = Vec::new();
    let mut k = 1u32;
    while r_max > 0.0 && r_max * 0.75f64.powi(k as i32) >= eps_min.min(r_max) * (1.0 - 1e-12) && k <= 200 {
        contraction_times.push((k, tau_for(r_max, r_max * 0.75f64.powi(k as i32))));
        k += 1;
    }
    let contraction_increasing = contraction_times.windows(2).all(|w| match (w[0].1, w[1].1) {
        (Some(a), Some(b)) => b > a,
        _ => false,
    }) && contraction_times.iter().all(|c| c.1.is_some());
    let settled = tau.iter().flatten().all(|t| t.is_some());
    UgattReport {
        r_grid: r_grid.to_vec(),
        eps_grid: eps_grid.to_vec(),
        tau,
        horizon,
        contraction_times,
        tau_monotone,
        contraction_increasing,
        passed: settled && tau_monotone && contraction_increasing,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UgasReport {
    pub ugs: UgsReport,
    pub ugatt: UgattReport,
    /// `β̂(r, t) = M̂ r e^{−λ̂ t}`
    pub beta_hat: KlFunction,
    pub m_hat: f64,
    pub lambda_hat: f64,
    /// `max ‖x(t)‖ / β̂(‖x0‖, t)` over every recorded point.
    pub coverage: f64,
    pub passed: bool,
}

impl UgasReport {
    /// Writes `m_hat,lambda_hat,coverage,ugs,ugatt,passed`.
    pub fn fit_to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m_hat", "lambda_hat", "coverage", "ugs", "ugatt", "passed"])?;
        w.write_record([
            self.m_hat.to_string(),
            self.lambda_hat.to_string(),
            self.coverage.to_string(),
            self.ugs.passed.to_string(),
            self.ugatt.passed.to_string(),
            self.passed.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Fits `β̂(r, t) = M̂ r e^{−λ̂ t}` over the runs and combines it with the
/// stability and attractivity checks.
pub fn verify_ugas(
    cls: &ClosedLoopSystem,
    syn: Option<&WursSynthesis>,
    runs: &[ClosedLoopRun],
    r_grid: &[f64],
    eps_grid: &[f64],
) -> Result<UgasReport> {
    let ugs = verify_ugs(cls, syn, runs)?;
    let ugatt = verify_ugatt(runs, r_grid, eps_grid);
    let samples: Vec<(f64, &Trajectory)> = runs.iter().map(|r| (r.x0_norm, &r.trajectory)).collect();
    let ExpEnvelope {
        m: m_hat,
        lambda: lambda_hat,
        coverage,
    } = fit_exp_envelope(&samples);
    let beta_hat = KlFunction::exp_family(m_hat, lambda_hat.max(f64::MIN_POSITIVE));
    let passed = ugs.passed && ugatt.passed && lambda_hat > 0.0 && coverage <= 1.0 + TOL_BOUND;
    Ok(UgasReport {
        ugs,
        ugatt,
        beta_hat,
        m_hat,
        lambda_hat,
        coverage,
        passed,
    })
}
