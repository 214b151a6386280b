//! Lyapunov functionals for `ẋ = Ax + Bu` built from a decay certificate:
//! the integral functional `V(x) = ∫₀^∞ ‖T_t x‖² dt` and the equivalent norm
//! `V^γ(x) = max_{s≥0} ‖e^{γs} T_s x‖`, with Dini-derivative estimates and
//! checks of their dissipation, bound and Lipschitz inequalities.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::compfunc::{log_space, ComparisonFunction};
use crate::error::{Error, Result};
use crate::evolution::{input_operator_norm, solve_mild, InputSignal, SemilinearSystem, SolverConfig};
use crate::sampling;
use crate::semigroup::{golden_max, DecayCertificate, DecayConfig, GeneratorModel, NormKind, State};

/// Default Dini step sequence.
pub const DEFAULT_H_SEQ: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];
/// Default relative truncation tolerance of the integral evaluator.
pub const DEFAULT_REL_TOL: f64 = 1e-12;
/// Relative dissipation margin tolerance.
pub const TOL_MARGIN: f64 = 1e-6;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss–Legendre nodes and weights on `[a, b]`.
fn gauss_legendre(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (c, r) = ((a + b) / 2.0, (b - a) / 2.0);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .flat_map(move |(x, w)| [(c - r * x, r * w), (c + r * x, r * w)])
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    generator: GeneratorModel,
    b: DMatrix<f64>,
    b_norm: f64,
    certificate: DecayCertificate,
}

impl LinearSystem {
    pub fn new(generator: GeneratorModel, b: DMatrix<f64>, certificate: DecayCertificate) -> Result<Self> {
        if b.nrows() != generator.dim() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: generator.dim(),
                got: b.nrows(),
            });
        }
        let b_norm = input_operator_norm(&b, generator.norm_kind());
        Ok(Self {
            generator,
            b,
            b_norm,
            certificate,
        })
    }

    /// Certifies `(M, λ)` for the generator, then builds the system.
    pub fn certified(generator: GeneratorModel, b: DMatrix<f64>, cfg: &DecayConfig) -> Result<Self> {
        let certificate = generator.certify_decay(cfg)?;
        Self::new(generator, b, certificate)
    }

    pub fn generator(&self) -> &GeneratorModel {
        &self.generator
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b_norm(&self) -> f64 {
        self.b_norm
    }

    pub fn certificate(&self) -> &DecayCertificate {
        &self.certificate
    }

    pub fn m(&self) -> f64 {
        self.certificate.m
    }

    pub fn lambda(&self) -> f64 {
        self.certificate.lambda
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn norm(&self, x: &State) -> f64 {
        self.generator.norm(x)
    }

    /// `ε = λ / M²`, half the largest admissible value.
    pub fn default_epsilon(&self) -> f64 {
        self.lambda() / (self.m() * self.m())
    }

    pub fn semilinear(&self) -> SemilinearSystem {
        SemilinearSystem::linear(self.generator.clone(), self.b.clone())
    }

    /// Induced norm of `A`, the fastest rate at which `‖T_t x‖` can vary.
    fn generator_rate(&self) -> f64 {
        match self.generator.scheme() {
            crate::semigroup::Scheme::SpectralDiagonal { eigenvalues } => {
                eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
            }
            _ => self.generator.induced_norm(self.generator.matrix()),
        }
    }

    /// Quadrature panels on `[0, horizon]` for integrands decaying no faster
    /// than `e^{-2ρt}`: geometric growth from `1/(2ρ)`, capped at `1/λ`.
    fn panels(&self, horizon: f64) -> Vec<f64> {
        let rho = self.generator_rate().max(self.lambda());
        let w_max = 1.0 / self.lambda();
        let mut edges = vec![0.0];
        let mut w = (0.5 / rho).min(w_max);
        let mut t = 0.0;
        while t < horizon {
            let next = (t + w).min(horizon);
            edges.push(next);
            t = next;
            w = (2.0 * w).min(w_max);
        }
        edges
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovKind {
    Integral,
    SupGamma { gamma: f64 },
}

#[derive(Debug, Clone)]
enum Plan {
    /// `V(x) = xᵀ G x` for weighted l2 norms.
    Gram(DMatrix<f64>),
    /// `V(x) = Σ wᵢ ‖Pᵢ x‖²`.
    Nodes(Vec<f64>, Vec<DMatrix<f64>>),
    /// `V^γ` grid: nodes `sⱼ` and `e^{γsⱼ} T_{sⱼ}`.
    Grid(Vec<f64>, Vec<DMatrix<f64>>),
}

/// A Lyapunov functional with a fixed evaluation plan, so that values at
/// nearby points are consistent to rounding.
#[derive(Debug, Clone)]
pub struct LyapunovEvaluator {
    kind: LyapunovKind,
    system: LinearSystem,
    horizon: f64,
    /// Integral: tail bound is `tail_coefficient · ‖x‖²`.
    tail_coefficient: f64,
    plan: Plan,
}

impl LyapunovEvaluator {
    /// Integral functional truncated at `T*` where the certified tail is
    /// `rel_tol · ‖x‖² / 2`.
    pub fn integral(system: &LinearSystem, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidLyapunov("relative tolerance must be positive".into()));
        }
        let (m, lambda) = (system.m(), system.lambda());
        let horizon = truncation_horizon(m, lambda, rel_tol).max(0.0);
        let tail_coefficient = m * m * (-2.0 * lambda * horizon).exp() / (2.0 * lambda);
        let gen = system.generator();
        let plan = match (gen.norm_kind(), gen.scheme()) {
            (NormKind::WeightedL2 { weight }, crate::semigroup::Scheme::SpectralDiagonal { eigenvalues }) => {
                let diag = eigenvalues.iter().map(|l| {
                    // ∫₀^T e^{2lt} dt
                    let z = 2.0 * l * horizon;
                    weight
                        * if z.abs() < 1e-8 {
                            horizon
                        } else {
                            z.exp_m1() / (2.0 * l)
                        }
                });
                Plan::Gram(DMatrix::from_diagonal(&State::from_iterator(eigenvalues.len(), diag)))
            }
            (kind, _) => {
                let (weights, props): (Vec<f64>, Vec<DMatrix<f64>>) = system
                    .panels(horizon)
                    .windows(2)
                    .flat_map(|w| gauss_legendre(w[0], w[1]).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .map(|(t, w)| (w, gen.propagator(t)))
                    .unzip();
                match kind {
                    NormKind::WeightedL2 { weight } => {
                        let n = gen.dim();
                        let gram = weights.iter().zip(&props).fold(DMatrix::zeros(n, n), |acc, (w, p)| {
                            acc + p.transpose() * p * (w * weight)
                        });
                        Plan::Gram((&gram + gram.transpose()) * 0.5)
                    }
                    NormKind::Sup => Plan::Nodes(weights, props),
                }
            }
        };
        Ok(Self {
            kind: LyapunovKind::Integral,
            system: system.clone(),
            horizon,
            tail_coefficient,
            plan,
        })
    }

    /// The equivalent norm `V^γ`, searched on `[0, s_max]` with
    /// `s_max = ln M / (λ − γ)`.
    pub fn sup_gamma(system: &LinearSystem, gamma: f64) -> Result<Self> {
        let (m, lambda) = (system.m(), system.lambda());
        if !(gamma > 0.0) || !(gamma < lambda) {
            return Err(Error::InvalidLyapunov(format!(
                "equivalent norm needs 0 < gamma < lambda, got gamma = {gamma}, lambda = {lambda}"
            )));
        }
        let s_max = m.ln().max(0.0) / (lambda - gamma);
        // Node spacing keeps e^{γs}‖T_s x‖ within about 1% between nodes.
        let rate = system.generator_rate() + gamma;
        let n = ((s_max * rate / 0.01).ceil() as usize).clamp(1, 20_000);
        let nodes: Vec<f64> = (0..=n).map(|j| s_max * j as f64 / n as f64).collect();
        let gen = system.generator();
        let props = nodes
            .par_iter()
            .map(|s| gen.propagator(*s) * (gamma * s).exp())
            .collect();
        Ok(Self {
            kind: LyapunovKind::SupGamma { gamma },
            system: system.clone(),
            horizon: s_max,
            tail_coefficient: 0.0,
            plan: Plan::Grid(nodes, props),
        })
    }

    pub fn kind(&self) -> LyapunovKind {
        self.kind
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    /// `T*` for the integral functional, `s_max` for `V^γ`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Certified truncation error bound at `x` (zero for `V^γ`).
    pub fn tail_bound(&self, x: &State) -> f64 {
        self.tail_coefficient * self.system.norm(x).powi(2)
    }

    pub fn value(&self, x: &State) -> f64 {
        let gen = self.system.generator();
        match &self.plan {
            Plan::Gram(g) => (g * x).dot(x),
            Plan::Nodes(w, p) => w.iter().zip(p).map(|(w, p)| w * gen.norm(&(p * x)).powi(2)).sum(),
            Plan::Grid(nodes, props) => {
                let vals: Vec<f64> = props.iter().map(|p| gen.norm(&(p * x))).collect();
                let (j, best) =
                    vals.iter().enumerate().fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc },
                    );
                if nodes.len() == 1 || best == 0.0 {
                    return best;
                }
                let LyapunovKind::SupGamma { gamma } = self.kind else {
                    unreachable!()
                };
                let f = |s: f64| (gamma * s).exp() * gen.norm(&(gen.propagator(s) * x));
                let a = nodes[j.saturating_sub(1)];
                let b = nodes[(j + 1).min(nodes.len() - 1)];
                let s = golden_max(f, a, b, 1e-12);
                best.max(f(s))
            }
        }
    }
}

/// `T*` with `M² e^{−2λT*} / (2λ) = rel_tol / 2`.
fn truncation_horizon(m: f64, lambda: f64, rel_tol: f64) -> f64 {
    (m * m / (lambda * rel_tol)).ln() / (2.0 * lambda)
}

/// A scalar functional on the state space.
pub trait Functional: Sync {
    fn value(&self, x: &State) -> f64;
}

impl Functional for LyapunovEvaluator {
    fn value(&self, x: &State) -> f64 {
        LyapunovEvaluator::value(self, x)
    }
}

impl<F: Fn(&State) -> f64 + Sync> Functional for F {
    fn value(&self, x: &State) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VIntegral {
    pub value: f64,
    /// Certified tail plus estimated quadrature error.
    pub error_bar: f64,
    pub horizon: f64,
}

/// `V(x)` by adaptive quadrature of `‖T_t x‖²` on `[0, T*]`, with `T*` chosen
/// so the certified tail is at most `tol/2`.
pub fn v_integral(system: &LinearSystem, x: &State, tol: f64) -> Result<VIntegral> {
    if !(tol > 0.0) {
        return Err(Error::InvalidLyapunov("tolerance must be positive".into()));
    }
    let gen = system.generator();
    if x.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            got: x.len(),
        });
    }
    let r = system.norm(x);
    if r == 0.0 {
        return Ok(VIntegral {
            value: 0.0,
            error_bar: 0.0,
            horizon: 0.0,
        });
    }
    let (m, lambda) = (system.m(), system.lambda());
    let horizon = truncation_horizon(m, lambda, tol / (r * r)).max(0.0);
    let tail = m * m * (-2.0 * lambda * horizon).exp() * r * r / (2.0 * lambda);
    let f = |t: f64| gen.norm(&gen.apply_semigroup(t, x).expect("dimension checked")).powi(2);
    let gl = |a: f64, b: f64| gauss_legendre(a, b).map(|(t, w)| w * f(t)).sum::<f64>();
    let mut value = 0.0;
    let mut quad_err = 0.0;
    let mut stack: Vec<(f64, f64, f64, u32)> = system
        .panels(horizon)
        .windows(2)
        .map(|w| (w[0], w[1], gl(w[0], w[1]), 0))
        .collect();
    while let Some((a, b, whole, depth)) = stack.pop() {
        let c = 0.5 * (a + b);
        let (left, right) = (gl(a, c), gl(c, b));
        let err = (left + right - whole).abs();
        if err <= 0.5 * tol * (b - a) / horizon || depth >= 30 {
            value += left + right;
            quad_err += err;
        } else {
            stack.push((a, c, left, depth + 1));
            stack.push((c, b, right, depth + 1));
        }
    }
    Ok(VIntegral {
        value,
        error_bar: tail + quad_err,
        horizon,
    })
}

/// `V^γ(x)`; see [`LyapunovEvaluator::sup_gamma`].
pub fn v_gamma(system: &LinearSystem, gamma: f64, x: &State) -> Result<f64> {
    Ok(LyapunovEvaluator::sup_gamma(system, gamma)?.value(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiniEstimate {
    /// Max of the quotients at the three smallest steps.
    pub value: f64,
    /// Richardson extrapolation from the two smallest steps.
    pub extrapolated: f64,
    /// `(h, (V(φ(h,x,u)) − V(x)) / h)` in the order given.
    pub quotients: Vec<(f64, f64)>,
    /// Quotients change monotonically as `h` decreases.
    pub monotone: bool,
}

/// Difference quotients of `V` along `φ(·, x, u)` for each step in `h_seq`.
pub fn dini_derivative(
    v: &impl Functional,
    sys: &SemilinearSystem,
    x: &State,
    u: &InputSignal,
    h_seq: &[f64],
    cfg: &SolverConfig,
) -> Result<DiniEstimate> {
    if h_seq.len() < 2 || h_seq.windows(2).any(|w| !(w[1] < w[0])) || !(h_seq[h_seq.len() - 1] > 0.0) {
        return Err(Error::InvalidLyapunov(
            "Dini step sequence must be positive and strictly decreasing".into(),
        ));
    }
    let v0 = v.value(x);
    let mut quotients = Vec::with_capacity(h_seq.len());
    for &h in h_seq {
        let tr = solve_mild(sys, x, u, h, cfg)?;
        quotients.push((h, (v.value(tr.final_state()) - v0) / h));
    }
    let k = quotients.len();
    let value = quotients[k.saturating_sub(3)..]
        .iter()
        .map(|q| q.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let ((hb, qb), (hs, qs)) = (quotients[k - 2], quotients[k - 1]);
    let extrapolated = qs - (qb - qs) * hs / (hb - hs);
    let diffs: Vec<f64> = quotients.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let monotone = diffs.iter().all(|d| *d >= 0.0) || diffs.iter().all(|d| *d <= 0.0);
    Ok(DiniEstimate {
        value,
        extrapolated,
        quotients,
        monotone,
    })
}

/// Coefficients of the dissipation bound being checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DissipationForm {
    /// `−‖x‖² + ε M²/(2λ) ‖x‖² + M²/(2λε) ‖B‖² ‖u₀‖²`
    Integral {
        m: f64,
        lambda: f64,
        epsilon: f64,
        b_norm: f64,
    },
    /// `−γ V^γ(x) + V^γ(B u₀)`
    Gamma { m: f64, gamma: f64, b_norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationRecord {
    pub index: usize,
    pub x: State,
    pub u0: State,
    pub x_norm: f64,
    pub u0_norm: f64,
    pub lhs: f64,
    pub extrapolated: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub form: DissipationForm,
    pub records: Vec<DissipationRecord>,
    /// A record passes when `margin ≥ −tol_margin · |rhs|`.
    pub tol_margin: f64,
    pub passed: bool,
}

impl DissipationReport {
    fn assemble(form: DissipationForm, records: Vec<DissipationRecord>, tol_margin: f64) -> Self {
        let passed = records.iter().all(|r| r.margin >= -tol_margin * r.rhs.abs());
        Self {
            form,
            records,
            tol_margin,
            passed,
        }
    }

    pub fn min_margin(&self) -> f64 {
        self.records.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    /// Worst `margin / |rhs|` over records with nonzero `rhs`.
    pub fn worst_relative_margin(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.rhs != 0.0)
            .map(|r| r.margin / r.rhs.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `sample,x_norm,u0_norm,lhs,rhs,margin,passed`.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample", "x_norm", "u0_norm", "lhs", "rhs", "margin", "passed"])?;
        for r in &self.records {
            let ok = r.margin >= -self.tol_margin * r.rhs.abs();
            w.write_record([
                r.index.to_string(),
                r.x_norm.to_string(),
                r.u0_norm.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.margin.to_string(),
                ok.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeded `(x, u₀)` samples: states over three decades of magnitude, inputs in
/// the ball of radius 2, with every fifth input zero.
pub fn dissipation_samples(system: &LinearSystem, n: usize, seed: u64) -> Vec<(State, State)> {
    let mut rng = sampling::rng(seed);
    let kind = system.generator().norm_kind();
    let l2 = NormKind::WeightedL2 { weight: 1.0 };
    (0..n)
        .map(|i| {
            let scale = 10f64.powf(-1.0 + 2.0 * (i as f64 + 0.5) / n as f64);
            let x = sampling::on_sphere(&mut rng, system.dim(), scale, kind);
            let u0 = if i % 5 == 4 {
                State::zeros(system.input_dim())
            } else {
                sampling::in_ball(&mut rng, system.input_dim(), 2.0, l2)
            };
            (x, u0)
        })
        .collect()
}

fn dissipation_sweep(
    v: &LyapunovEvaluator,
    samples: &[(State, State)],
    rhs: impl Fn(&State, &State) -> f64 + Sync,
) -> Result<Vec<DissipationRecord>> {
    let sys = v.system().semilinear();
    let cfg = SolverConfig::default();
    samples
        .par_iter()
        .enumerate()
        .map(|(index, (x, u0))| {
            let u = InputSignal::constant(u0.clone());
            let d = dini_derivative(v, &sys, x, &u, &DEFAULT_H_SEQ, &cfg)?;
            let r = rhs(x, u0);
            Ok(DissipationRecord {
                index,
                x: x.clone(),
                u0: u0.clone(),
                x_norm: v.system().norm(x),
                u0_norm: u0.norm(),
                lhs: d.value,
                extrapolated: d.extrapolated,
                rhs: r,
                margin: r - d.value,
            })
        })
        .collect()
}

/// Dini derivative of the integral functional against
/// `−‖x‖² + ε M²/(2λ) ‖x‖² + M²/(2λε) ‖B‖² ‖u₀‖²`.
pub fn check_dissipation_integral(
    system: &LinearSystem,
    samples: &[(State, State)],
    epsilon: f64,
) -> Result<DissipationReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidLyapunov(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let v = LyapunovEvaluator::integral(system, DEFAULT_REL_TOL)?;
    let (m, lambda, b_norm) = (system.m(), system.lambda(), system.b_norm());
    let rhs = |x: &State, u0: &State| {
        let xn2 = system.norm(x).powi(2);
        -xn2 + epsilon * m * m / (2.0 * lambda) * xn2
            + m * m / (2.0 * lambda * epsilon) * b_norm.powi(2) * u0.norm_squared()
    };
    let records = dissipation_sweep(&v, samples, rhs)?;
    Ok(DissipationReport::assemble(
        DissipationForm::Integral {
            m,
            lambda,
            epsilon,
            b_norm,
        },
        records,
        TOL_MARGIN,
    ))
}

/// Dini derivative of `V^γ` against `−γ V^γ(x) + V^γ(B u₀)`.
pub fn check_dissipation_gamma(
    system: &LinearSystem,
    gamma: f64,
    samples: &[(State, State)],
) -> Result<DissipationReport> {
    let v = LyapunovEvaluator::sup_gamma(system, gamma)?;
    let b = system.b();
    let rhs = |x: &State, u0: &State| -gamma * v.value(x) + v.value(&(b * u0));
    let records = dissipation_sweep(&v, samples, rhs)?;
    Ok(DissipationReport::assemble(
        DissipationForm::Gamma {
            m: system.m(),
            gamma,
            b_norm: system.b_norm(),
        },
        records,
        TOL_MARGIN,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBoundsReport {
    /// `M² / (2λ)`
    pub upper_constant: f64,
    /// `sup V(x) / ‖x‖²` over samples.
    pub max_ratio: f64,
    /// `inf V(x) / ‖x‖²` over samples.
    pub coercivity_floor: f64,
    /// `V(e_k) / ‖e_k‖²` for each basis vector.
    pub basis_ratios: Vec<f64>,
    pub zero_value: f64,
    pub passed: bool,
}

/// `0 < V(x) ≤ M²/(2λ) ‖x‖² (1 + 1e-6)` on sphere samples over six decades
/// of magnitude, plus every basis vector.
pub fn check_quadratic_bounds(system: &LinearSystem, n_samples: usize) -> Result<QuadraticBoundsReport> {
    let v = LyapunovEvaluator::integral(system, DEFAULT_REL_TOL)?;
    let upper_constant = system.m().powi(2) / (2.0 * system.lambda());
    let mut rng = sampling::rng(11);
    let kind = system.generator().norm_kind();
    let mut xs: Vec<State> = (0..n_samples)
        .map(|i| {
            let scale = 10f64.powf(-3.0 + 6.0 * i as f64 / n_samples.max(2).saturating_sub(1) as f64);
            sampling::on_sphere(&mut rng, system.dim(), scale, kind)
        })
        .collect();
    let basis: Vec<State> = (0..system.dim())
        .map(|k| {
            let mut e = State::zeros(system.dim());
            e[k] = 1.0;
            e
        })
        .collect();
    xs.extend(basis.iter().cloned());
    let ratio = |x: &State| v.value(x) / system.norm(x).powi(2);
    let ratios: Vec<f64> = xs.iter().map(ratio).collect();
    let basis_ratios = basis.iter().map(ratio).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let coercivity_floor = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let zero_value = v.value(&State::zeros(system.dim()));
    Ok(QuadraticBoundsReport {
        upper_constant,
        max_ratio,
        coercivity_floor,
        basis_ratios,
        zero_value,
        passed: coercivity_floor > 0.0 && max_ratio <= upper_constant * (1.0 + 1e-6) && zero_value == 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub radius: f64,
    /// Largest sampled `|V(x) − V(y)| / ‖x − y‖` on the ball.
    pub v_sup: f64,
    /// `M² r / λ`
    pub v_bound: f64,
    pub gamma: f64,
    pub vg_sup: f64,
    /// `M`
    pub vg_bound: f64,
    pub pairs_used: usize,
    pub passed: bool,
}

/// Sampled difference quotients of `V` on the ball of radius `r` and of `V^γ`.
pub fn check_lipschitz_constants(system: &LinearSystem, r: f64, n_pairs: usize, gamma: f64) -> Result<LipschitzReport> {
    if !(r > 0.0) {
        return Err(Error::InvalidLyapunov(format!("radius must be positive, got {r}")));
    }
    let v = LyapunovEvaluator::integral(system, DEFAULT_REL_TOL)?;
    let vg = LyapunovEvaluator::sup_gamma(system, gamma)?;
    let kind = system.generator().norm_kind();
    let mut rng = sampling::rng(12);
    let pairs = sampling::pairs_in_ball(&mut rng, system.dim(), r, kind, n_pairs, 1e-4 * r);
    let quotients: Vec<(f64, f64)> = pairs
        .par_iter()
        .filter_map(|(x, y)| {
            let d = system.norm(&(x - y));
            (d > 0.0).then(|| {
                (
                    (v.value(x) - v.value(y)).abs() / d,
                    (vg.value(x) - vg.value(y)).abs() / d,
                )
            })
        })
        .collect();
    let v_sup = quotients.iter().map(|q| q.0).fold(0.0, f64::max);
    let vg_sup = quotients.iter().map(|q| q.1).fold(0.0, f64::max);
    let (m, lambda) = (system.m(), system.lambda());
    let v_bound = m * m * r / lambda;
    Ok(LipschitzReport {
        radius: r,
        v_sup,
        v_bound,
        gamma,
        vg_sup,
        vg_bound: m,
        pairs_used: quotients.len(),
        passed: v_sup <= v_bound * (1.0 + 1e-3) && vg_sup <= m * (1.0 + 1e-3),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaNormReport {
    pub gamma: f64,
    /// `max V^γ(T_t x) / (e^{−γt} V^γ(x))` over the `(t, x)` grid.
    pub max_decay_ratio: f64,
    /// `min V^γ(x) / ‖x‖`
    pub min_lower_ratio: f64,
    /// `max V^γ(x) / (M ‖x‖)`
    pub max_upper_ratio: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Decay `V^γ(T_t x) ≤ e^{−γt} V^γ(x)` on an `n_times × n_states` grid and the
/// sandwich `‖x‖ ≤ V^γ(x) ≤ M ‖x‖` on the same states.
///
/// Times span `[0, 2 ln(M)/(λ−γ) + 1/λ]`; states are sphere samples over two
/// decades of magnitude.
pub fn check_gamma_norm(
    system: &LinearSystem,
    gamma: f64,
    n_times: usize,
    n_states: usize,
    seed: u64,
) -> Result<GammaNormReport> {
    let vg = LyapunovEvaluator::sup_gamma(system, gamma)?;
    let (m, lambda) = (system.m(), system.lambda());
    let t_end = 2.0 * m.ln() / (lambda - gamma) + 1.0 / lambda;
    let times: Vec<f64> = (0..n_times)
        .map(|i| t_end * i as f64 / n_times.max(2).saturating_sub(1) as f64)
        .collect();
    let mut rng = sampling::rng(seed);
    let kind = system.generator().norm_kind();
    let xs: Vec<State> = (0..n_states)
        .map(|i| {
            let scale = 10f64.powf(-1.0 + 2.0 * i as f64 / n_states.max(2).saturating_sub(1) as f64);
            sampling::on_sphere(&mut rng, system.dim(), scale, kind)
        })
        .collect();
    let gen = system.generator();
    let rows: Vec<(f64, f64, f64)> = xs
        .par_iter()
        .map(|x| {
            let v0 = vg.value(x);
            let xn = system.norm(x);
            let mut worst = 0.0f64;
            for t in &times {
                let xt = gen.apply_semigroup(*t, x)?;
                worst = worst.max(vg.value(&xt) / ((-gamma * t).exp() * v0));
            }
            Ok((worst, v0 / xn, v0 / (m * xn)))
        })
        .collect::<Result<_>>()?;
    let max_decay_ratio = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let min_lower_ratio = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max_upper_ratio = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(GammaNormReport {
        gamma,
        max_decay_ratio,
        min_lower_ratio,
        max_upper_ratio,
        samples: n_times * n_states,
        passed: max_decay_ratio <= 1.0 + 1e-8 && min_lower_ratio >= 1.0 && max_upper_ratio <= 1.0 + 1e-6,
    })
}

/// Smallest slope `R` such that `‖x‖ ≥ R ‖u₀‖` forces the dissipation bound
/// below `−α(‖x‖)`, as the gain `χ(s) = R s`.
///
/// The supremum over `s` is taken on a log grid over `[1e-3, 1e3]` and the
/// sampled state norms of the report.
pub fn to_implication_form(report: &DissipationReport, alpha: &ComparisonFunction) -> Result<ComparisonFunction> {
    let mut grid = log_space(1e-3, 1e3, 601);
    grid.extend(report.records.iter().map(|r| r.x_norm).filter(|s| *s > 0.0));
    let mut r2 = 0.0f64;
    match report.form {
        DissipationForm::Integral {
            m,
            lambda,
            epsilon,
            b_norm,
        } => {
            if epsilon >= 2.0 * lambda / (m * m) {
                return Err(Error::InvalidLyapunov(format!(
                    "epsilon = {epsilon} must be below 2 lambda / M^2 = {}",
                    2.0 * lambda / (m * m)
                )));
            }
            let a = 1.0 - epsilon * m * m / (2.0 * lambda);
            let b = m * m * b_norm * b_norm / (2.0 * lambda * epsilon);
            for s in grid {
                let gap = a * s * s - alpha.eval_extended(s);
                if !(gap > 0.0) {
                    return Err(Error::InvalidLyapunov(format!(
                        "decay rate exhausted by the target at s = {s}"
                    )));
                }
                r2 = r2.max(b * s * s / gap);
            }
        }
        DissipationForm::Gamma { m, gamma, b_norm } => {
            // V^γ(x) ≥ ‖x‖ and V^γ(Bu₀) ≤ M ‖B‖ ‖u₀‖.
            for s in grid {
                let gap = gamma * s - alpha.eval_extended(s);
                if !(gap > 0.0) {
                    return Err(Error::InvalidLyapunov(format!(
                        "decay rate exhausted by the target at s = {s}"
                    )));
                }
                r2 = r2.max((m * b_norm * s / gap).powi(2));
            }
        }
    }
    Ok(ComparisonFunction::linear(r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::OperatorSpec;

    fn scalar() -> LinearSystem {
        let g = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        LinearSystem::certified(g, DMatrix::from_element(1, 1, 1.0), &DecayConfig::default()).unwrap()
    }

    fn exact_scalar() -> LinearSystem {
        let g = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        LinearSystem::new(
            g,
            DMatrix::from_element(1, 1, 1.0),
            DecayCertificate::assumed(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn heat(n: usize) -> LinearSystem {
        let g = GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: 1.0 }, n).unwrap();
        LinearSystem::certified(g, DMatrix::identity(n, n), &DecayConfig::default()).unwrap()
    }

    fn jordan() -> LinearSystem {
        let g = GeneratorModel::discretize(
            &OperatorSpec::Jordan2 {
                lambda0: -1.0,
                coupling: 10.0,
            },
            2,
        )
        .unwrap();
        LinearSystem::certified(g, DMatrix::identity(2, 2), &DecayConfig::default()).unwrap()
    }

    fn s(v: f64) -> State {
        State::from_vec(vec![v])
    }

    #[test]
    fn integral_closed_forms() {
        let v = v_integral(&scalar(), &s(1.0), 1e-8).unwrap();
        assert!((v.value - 0.5).abs() < 1e-8, "{v:?}");
        assert!(v.error_bar <= 1e-8);
        assert_eq!(v_integral(&scalar(), &s(0.0), 1e-8).unwrap().value, 0.0);
        let h = heat(16);
        let mut e1 = State::zeros(16);
        e1[0] = 1.0;
        let v = v_integral(&h, &e1, 1e-10).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI.powi(2));
        assert!((v.value - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn evaluators_agree_with_adaptive_route() {
        for sys in [scalar(), heat(6), jordan()] {
            let ev = LyapunovEvaluator::integral(&sys, DEFAULT_REL_TOL).unwrap();
            let mut rng = sampling::rng(4);
            for _ in 0..5 {
                let x = sampling::in_ball(&mut rng, sys.dim(), 2.0, sys.generator().norm_kind());
                let a = ev.value(&x);
                let b = v_integral(&sys, &x, 1e-10).unwrap().value;
                assert!((a - b).abs() < 1e-8 * (1.0 + b), "{a} {b}");
            }
        }
    }

    #[test]
    fn gamma_norm_examples() {
        let sys = scalar();
        assert!((v_gamma(&sys, 0.5, &s(-3.0)).unwrap() - 3.0).abs() < 1e-8);
        assert_eq!(v_gamma(&sys, 0.5, &s(0.0)).unwrap(), 0.0);
        assert!(v_gamma(&sys, sys.lambda(), &s(1.0)).is_err());
        let j = jordan();
        let e2 = State::from_vec(vec![0.0, 1.0]);
        let val = v_gamma(&j, 0.5, &e2).unwrap();
        // Dense grid oracle over the closed form e^{-s}(10s, 1).
        let oracle = (0..200_000)
            .map(|i| {
                let t = i as f64 * 1e-4;
                (0.5 * t).exp() * (-t).exp() * (100.0 * t * t + 1.0).sqrt()
            })
            .fold(0.0, f64::max);
        assert!(val > 1.0);
        assert!((val - oracle).abs() < 1e-6 * oracle, "{val} {oracle}");
    }

    #[test]
    fn dini_examples() {
        let sys = exact_scalar();
        let plant = sys.semilinear();
        let cfg = SolverConfig::default();
        let half_square = |x: &State| 0.5 * x[0] * x[0];
        let d = dini_derivative(
            &half_square,
            &plant,
            &s(1.0),
            &InputSignal::zero(1),
            &DEFAULT_H_SEQ,
            &cfg,
        )
        .unwrap();
        assert!((d.value + 1.0).abs() < 1e-5 && d.monotone);
        let d = dini_derivative(
            &half_square,
            &plant,
            &s(0.0),
            &InputSignal::zero(1),
            &DEFAULT_H_SEQ,
            &cfg,
        )
        .unwrap();
        assert_eq!(d.value, 0.0);
        let v = LyapunovEvaluator::integral(&sys, DEFAULT_REL_TOL).unwrap();
        let u0 = 0.4;
        let d = dini_derivative(
            &v,
            &plant,
            &s(1.0),
            &InputSignal::constant(s(u0)),
            &[1e-4, 1e-5, 1e-6, 1e-7],
            &cfg,
        )
        .unwrap();
        assert!((d.extrapolated - (-1.0 + u0)).abs() < 2e-7, "{d:?}");
    }

    #[test]
    fn dissipation_examples() {
        let sys = exact_scalar();
        let rep = check_dissipation_integral(&sys, &[(s(1.0), s(0.0)), (s(0.0), s(0.0))], 1.0).unwrap();
        let r = &rep.records[0];
        assert!((r.lhs + 1.0).abs() < 1e-5 && r.rhs == -0.5 && (r.margin - 0.5).abs() < 1e-5);
        let r = &rep.records[1];
        assert_eq!((r.lhs, r.rhs, r.margin), (0.0, 0.0, 0.0));
        assert!(rep.passed);
        let rep = check_dissipation_gamma(&sys, 0.5, &[(s(1.0), s(0.0))]).unwrap();
        assert!((rep.records[0].lhs + 1.0).abs() < 1e-5 && (rep.records[0].rhs + 0.5).abs() < 1e-9);
    }

    #[test]
    fn implication_slopes() {
        let form = DissipationForm::Integral {
            m: 1.0,
            lambda: 1.0,
            epsilon: 0.5,
            b_norm: 1.0,
        };
        let rep = DissipationReport::assemble(form, Vec::new(), TOL_MARGIN);
        let chi = to_implication_form(&rep, &ComparisonFunction::power(0.5, 2.0)).unwrap();
        assert!((chi.linear_slope().unwrap() - 2.0).abs() < 1e-12);
        // At R = 2 the bound meets −s²/2 on the boundary ‖x‖ = R‖u₀‖ and beats it inside.
        for (x, u) in [(2.0, 1.0), (3.0, 1.0), (1.0, 0.0)] {
            let rhs = -x * x + 0.25 * x * x + u * u;
            assert!(rhs <= -0.5 * x * x + 1e-12);
        }
        let bad = DissipationForm::Integral {
            m: 1.0,
            lambda: 1.0,
            epsilon: 2.0,
            b_norm: 1.0,
        };
        assert!(to_implication_form(
            &DissipationReport::assemble(bad, Vec::new(), TOL_MARGIN),
            &ComparisonFunction::power(0.5, 2.0)
        )
        .is_err());
        let gamma = DissipationForm::Gamma {
            m: 1.0,
            gamma: 0.5,
            b_norm: 1.0,
        };
        let chi = to_implication_form(
            &DissipationReport::assemble(gamma, Vec::new(), TOL_MARGIN),
            &ComparisonFunction::linear(0.25),
        )
        .unwrap();
        assert!((chi.linear_slope().unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_bounds_and_noncoercivity() {
        let rep = check_quadratic_bounds(&scalar(), 20).unwrap();
        assert!(rep.passed && (rep.max_ratio - 0.5).abs() < 1e-9);
        let rep = check_quadratic_bounds(&heat(16), 20).unwrap();
        assert!(rep.passed);
        assert!(rep.basis_ratios.windows(2).all(|w| w[1] < w[0]));
        let pi2 = std::f64::consts::PI.powi(2);
        for (k, r) in rep.basis_ratios.iter().enumerate() {
            let exact = 1.0 / (2.0 * ((k + 1) * (k + 1)) as f64 * pi2);
            assert!((r - exact).abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn lipschitz_constants_scalar_tight() {
        let rep = check_lipschitz_constants(&scalar(), 1.0, 200, 0.5).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.v_sup >= 0.99);
        let rep = check_lipschitz_constants(&jordan(), 1.0, 100, 0.4).unwrap();
        assert!(rep.passed && rep.vg_bound > 1.0, "{rep:?}");
    }

    #[test]
    fn gamma_norm_decays_and_is_sandwiched() {
        for sys in [scalar(), heat(16), jordan()] {
            let rep = check_gamma_norm(&sys, sys.lambda() / 2.0, 20, 20, 5).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }
}
