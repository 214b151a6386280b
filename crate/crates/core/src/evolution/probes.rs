use rayon::prelude::*;

use super::signal::DisturbanceSignal;
use super::solver::{solve_mild, SolverConfig};
use super::system::{ClosedLoopSystem, SemilinearSystem};
use crate::error::Error;
use crate::sampling;
use crate::semigroup::{NormKind, State};

const INPUT_NORM: NormKind = NormKind::WeightedL2 { weight: 1.0 };

fn quotient(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Sampled `(L¹_f(C), L²_f(C))`; see [`estimate_lipschitz_with`].
pub fn estimate_lipschitz(sys: &SemilinearSystem, radius: f64, n_pairs: usize) -> (f64, f64) {
    estimate_lipschitz_with(sys, radius, n_pairs, 0, 1e-6 * radius)
}

/// Largest difference quotients of `f` over sampled pairs in the closed ball
/// of radius `radius`: state pairs with a shared input for `L¹`, input pairs
/// with a shared state for `L²`. The result is recorded in the system's cache.
pub fn estimate_lipschitz_with(
    sys: &SemilinearSystem,
    radius: f64,
    n_pairs: usize,
    seed: u64,
    min_sep: f64,
) -> (f64, f64) {
    let mut rng = sampling::rng(seed);
    let kind = sys.generator().norm_kind();
    let n = sys.dim();
    let m = sys.input_dim();
    let mut l1 = 0.0f64;
    for (x, y) in sampling::pairs_in_ball(&mut rng, n, radius, kind, n_pairs, min_sep) {
        let v = sampling::in_ball(&mut rng, m, radius, INPUT_NORM);
        let num = sys.norm(&(sys.f(&x, &v) - sys.f(&y, &v)));
        l1 = l1.max(quotient(num, sys.norm(&(&x - &y))));
    }
    let mut l2 = 0.0f64;
    for (u, v) in sampling::pairs_in_ball(&mut rng, m, radius, INPUT_NORM, n_pairs, min_sep) {
        let x = sampling::in_ball(&mut rng, n, radius, kind);
        let num = sys.norm(&(sys.f(&x, &u) - sys.f(&x, &v)));
        l2 = l2.max(quotient(num, (&u - &v).norm()));
    }
    sys.record_lipschitz(radius, (l1, l2));
    (l1, l2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    /// Sampled Lipschitz constant of `g` on the ball, uniform over sampled `d`.
    pub sampled: f64,
    /// `L¹_f(R) + L²_f(R) Lip(φ)` with `R = max(C, sup_{B_C} φ)`, when plant constants are known.
    pub bound: Option<f64>,
    pub radius: f64,
    pub bound_radius: f64,
}

impl Lemma1Report {
    pub fn holds(&self, tol: f64) -> bool {
        self.bound.is_none_or(|b| self.sampled <= b + tol)
    }
}

/// Disturbance values used when sampling over `D`: the extreme points `±e_i`
/// (and `±1` in every coordinate, normalized), zero, and random points.
fn disturbance_values(rng: &mut sampling::SampleRng, dim: usize, n_random: usize) -> Vec<State> {
    let mut out = vec![State::zeros(dim)];
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = State::zeros(dim);
            e[i] = s;
            out.push(e);
        }
    }
    let diag = State::from_element(dim, 1.0 / (dim as f64).sqrt());
    out.push(-&diag);
    out.push(diag);
    out.extend((0..n_random).map(|_| sampling::in_ball(rng, dim, 1.0, INPUT_NORM)));
    out
}

pub fn lemma1_check(cls: &ClosedLoopSystem, radius: f64, n_pairs: usize) -> Lemma1Report {
    let plant = cls.plant();
    let kind = plant.generator().norm_kind();
    let mut rng = sampling::rng(1);
    let ds = disturbance_values(&mut rng, plant.input_dim(), 8);
    let pairs = sampling::pairs_in_ball(&mut rng, plant.dim(), radius, kind, n_pairs, 1e-6 * radius);
    let mut sampled = 0.0f64;
    let mut phi_sup = cls.feedback().eval(&State::zeros(plant.dim()));
    for (x, y) in &pairs {
        phi_sup = phi_sup.max(cls.feedback().eval(x)).max(cls.feedback().eval(y));
        let dx = plant.norm(&(x - y));
        for d in &ds {
            let num = plant.norm(&(cls.g(x, d) - cls.g(y, d)));
            sampled = sampled.max(quotient(num, dx));
        }
    }
    // φ is bounded on B_C by φ(0) + Lip·C; the sampled max can only be smaller.
    let phi_bound = cls.feedback().eval(&State::zeros(plant.dim())) + cls.feedback().lipschitz_on(radius) * radius;
    let bound_radius = radius.max(phi_bound.max(phi_sup));
    let bound = plant
        .lipschitz_at(bound_radius)
        .map(|(l1, l2)| l1 + l2 * cls.feedback().lipschitz_on(radius));
    Lemma1Report {
        sampled,
        bound,
        radius,
        bound_radius,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RfcReport {
    Bounded {
        sup_bound: f64,
    },
    Diverged {
        x0_norm: f64,
        escape_time: f64,
        last_norm: f64,
    },
}

impl RfcReport {
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            RfcReport::Bounded { sup_bound } => Some(*sup_bound),
            RfcReport::Diverged { .. } => None,
        }
    }
}

/// Max of `‖φ_φ(t, x, d)‖` over sampled `‖x‖ ≤ C`, sampled `d ∈ 𝒟` and `t ∈ [0, τ]`.
///
/// Initial states include points on the sphere of radius `C`; disturbances
/// include the constants `±e_1` and random piecewise-constant signals.
pub fn rfc_probe(
    cls: &ClosedLoopSystem,
    radius: f64,
    tau: f64,
    n_x0: usize,
    n_d: usize,
    cfg: &SolverConfig,
) -> RfcReport {
    let plant = cls.plant();
    let kind = plant.generator().norm_kind();
    let mut rng = sampling::rng(2);
    let x0s: Vec<State> = (0..n_x0.max(1))
        .map(|i| {
            if i % 2 == 0 {
                sampling::on_sphere(&mut rng, plant.dim(), radius, kind)
            } else {
                sampling::in_ball(&mut rng, plant.dim(), radius, kind)
            }
        })
        .collect();
    let m = plant.input_dim();
    let mut ds = Vec::new();
    for (i, v) in disturbance_values(&mut rng, m, 0).into_iter().enumerate().skip(1) {
        if i <= n_d.max(1) {
            ds.push(DisturbanceSignal::constant(v).expect("unit disturbance"));
        }
    }
    for k in ds.len()..n_d.max(1) {
        ds.push(DisturbanceSignal::random(m, (tau / 20.0).max(1e-3), tau, 100 + k as u64).expect("random disturbance"));
    }
    let results: Vec<Result<f64, (f64, f64, f64)>> = x0s
        .par_iter()
        .flat_map_iter(|x0| ds.iter().map(move |d| (x0, d)))
        .map(|(x0, d)| match solve_mild(cls.as_system(), x0, d, tau, cfg) {
            Ok(tr) => Ok(tr.sup_norm()),
            Err(Error::BlowUp {
                escape_time, last_norm, ..
            }) => Err((plant.norm(x0), escape_time, last_norm)),
            Err(_) => Err((plant.norm(x0), f64::NAN, f64::INFINITY)),
        })
        .collect();
    let mut sup_bound = 0.0f64;
    for r in results {
        match r {
            Ok(s) => sup_bound = sup_bound.max(s),
            Err((x0_norm, escape_time, last_norm)) => {
                return RfcReport::Diverged {
                    x0_norm,
                    escape_time,
                    last_norm,
                }
            }
        }
    }
    RfcReport::Bounded { sup_bound }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLipschitzReport {
    /// `sup ‖φ(t,x,d) − φ(t,y,d)‖ / ‖x − y‖` over pairs, disturbances and `t ∈ [0, τ]`.
    pub fitted: f64,
    /// Gronwall bound `M exp(M L_g τ)` for comparison, when `L_g` is known.
    pub gronwall: Option<f64>,
    pub ratios: Vec<f64>,
}

/// Flow Lipschitz constant of the closed loop on `[0, τ]` for pairs in the
/// ball of radius `radius`, sharing a disturbance.
pub fn flow_lipschitz_probe(
    cls: &ClosedLoopSystem,
    radius: f64,
    tau: f64,
    n_pairs: usize,
    m_bound: f64,
    cfg: &SolverConfig,
) -> crate::error::Result<FlowLipschitzReport> {
    let plant = cls.plant();
    let kind = plant.generator().norm_kind();
    let mut rng = sampling::rng(3);
    let pairs = sampling::pairs_in_ball(&mut rng, plant.dim(), radius, kind, n_pairs, 1e-4 * radius);
    let ds: Vec<DisturbanceSignal> = (0..pairs.len())
        .map(|k| DisturbanceSignal::random(plant.input_dim(), (tau / 10.0).max(1e-3), tau, 200 + k as u64))
        .collect::<crate::error::Result<_>>()?;
    let grid: Vec<f64> = (0..=100).map(|i| tau * i as f64 / 100.0).collect();
    let ratios: Vec<f64> = pairs
        .par_iter()
        .zip(ds.par_iter())
        .map(|((x, y), d)| -> crate::error::Result<f64> {
            let dx = plant.norm(&(x - y));
            if dx == 0.0 {
                return Ok(0.0);
            }
            let tx = solve_mild(cls.as_system(), x, d, tau, cfg)?;
            let ty = solve_mild(cls.as_system(), y, d, tau, cfg)?;
            Ok(grid
                .iter()
                .map(|t| plant.norm(&(tx.state_at(*t) - ty.state_at(*t))) / dx)
                .fold(0.0, f64::max))
        })
        .collect::<crate::error::Result<_>>()?;
    let fitted = ratios.iter().cloned().fold(0.0, f64::max);
    let reach = m_bound * radius + tau * 10.0;
    let gronwall = cls
        .as_system()
        .lipschitz_at(reach)
        .map(|(lg, _)| m_bound * (m_bound * lg * tau).exp());
    Ok(FlowLipschitzReport {
        fitted,
        gronwall,
        ratios,
    })
}
