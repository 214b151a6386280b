use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;

use super::signal::InputSignal;
use super::system::SemilinearSystem;
use crate::error::{Error, Result};
use crate::semigroup::{GeneratorModel, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Left-endpoint rule: `x₊ = T_h x + h φ₁(hA) f(x, u)`. Order 1.
    ExponentialEuler,
    /// Trapezoid rule in `s`, solved by fixed-point iteration started from
    /// the left-endpoint value. Order 2.
    ExponentialTrapezoid,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_step: f64,
    pub min_step: f64,
    /// Fixed-point acceptance: successive iterates closer than `tol · max(1, ‖x‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Blow-up cap is `blowup_factor · (1 + ‖x0‖)`.
    pub blowup_factor: f64,
    pub rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_step: 1.0e-2,
            min_step: 1.0e-12,
            tol: 1.0e-12,
            max_iter: 100,
            blowup_factor: 1.0e6,
            rule: StepRule::ExponentialEuler,
        }
    }
}

impl SolverConfig {
    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub fixed_point_iterations: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub norms: Vec<f64>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().unwrap()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn sup_norm(&self) -> f64 {
        self.norms.iter().cloned().fold(0.0, f64::max)
    }

    /// Linear interpolation between recorded states.
    pub fn state_at(&self, t: f64) -> State {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.times.len() {
            return self.final_state().clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        &self.states[k - 1] * (1.0 - w) + &self.states[k] * w
    }

    pub fn norm_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 {
            return self.norms[0];
        }
        if k >= self.times.len() {
            return *self.norms.last().unwrap();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.norms[k - 1] * (1.0 - w) + self.norms[k] * w
    }

    /// Writes `t,x1,...,xn,norm`.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("norm".into());
        w.write_record(&header)?;
        for ((t, x), nrm) in self.times.iter().zip(&self.states).zip(&self.norms) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|c| c.to_string()));
            row.push(nrm.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct StepOperators {
    propagator: DMatrix<f64>,
    phi1: DMatrix<f64>,
    phi2: DMatrix<f64>,
    propagator_norm: f64,
    phi2_norm: f64,
}

struct OperatorCache<'a> {
    generator: &'a GeneratorModel,
    cache: HashMap<u64, StepOperators>,
}

impl<'a> OperatorCache<'a> {
    fn new(generator: &'a GeneratorModel) -> Self {
        Self {
            generator,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, h: f64) -> &StepOperators {
        if self.cache.len() > 256 {
            self.cache.clear();
        }
        let g = self.generator;
        self.cache.entry(h.to_bits()).or_insert_with(|| {
            let propagator = g.propagator(h);
            let (phi1, phi2) = g.phi_matrices(h);
            StepOperators {
                propagator_norm: g.induced_norm(&propagator),
                phi2_norm: g.induced_norm(&phi2),
                propagator,
                phi1,
                phi2,
            }
        })
    }
}

/// Mild solution of `ẋ = Ax + f(x, u)` on `[0, horizon]`.
///
/// Steps never straddle an input breakpoint, so the recorded states up to
/// time `t` depend only on `u` restricted to `[0, t)`.
pub fn solve_mild(
    sys: &SemilinearSystem,
    x0: &State,
    u: &InputSignal,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !(cfg.tol > 0.0) || !(cfg.max_step > 0.0) {
        return Err(Error::InvalidSignal(
            "solve_mild needs horizon > 0, tol > 0 and max_step > 0".into(),
        ));
    }
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if u.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.input_dim(),
            got: u.dim(),
        });
    }
    let mut ops = OperatorCache::new(sys.generator());
    let x0_norm = sys.norm(x0);
    let cap = cfg.blowup_factor * (1.0 + x0_norm);
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        norms: vec![x0_norm],
        stats: SolverStats::default(),
    };
    // Relative slack for landing exactly on breakpoints and the horizon.
    let snap = 1e-12 * horizon.max(1.0);
    while t < horizon - snap {
        let x_norm = *traj.norms.last().unwrap();
        let mut h = cfg.max_step.min(horizon - t);
        if let Some(b) = u.next_breakpoint_after(t) {
            if b < t + h {
                h = b - t;
            }
        }
        // Contraction margin h·L·M < 1/2 with L the local Lipschitz constant of f.
        if let Some((l1, _)) = sys.lipschitz_at(2.0 * x_norm + 1.0) {
            if l1 > 0.0 && l1.is_finite() {
                let m = ops.get(h).propagator_norm.max(1.0);
                let h_contract = 0.5 / (l1 * m);
                if h_contract < h {
                    h = h_contract.max(cfg.min_step);
                }
            }
        }
        let uk = u.value_at(t).clone();
        let (x_next, iters, residual, h_used) = step(sys, &mut ops, &x, &uk, h, t, cfg)?;
        t = if (horizon - (t + h_used)).abs() <= snap {
            horizon
        } else {
            t + h_used
        };
        let n = sys.norm(&x_next);
        if !n.is_finite() || n > cap {
            return Err(Error::BlowUp {
                escape_time: t,
                last_norm: x_norm,
                cap,
            });
        }
        x = x_next;
        traj.stats.steps += 1;
        traj.stats.fixed_point_iterations += iters;
        traj.stats.max_residual = traj.stats.max_residual.max(residual);
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.norms.push(n);
    }
    Ok(traj)
}

/// One accepted step; halves `h` when the fixed-point map fails to contract.
fn step(
    sys: &SemilinearSystem,
    ops: &mut OperatorCache<'_>,
    x: &State,
    u: &State,
    mut h: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<(State, usize, f64, f64)> {
    let f0 = sys.f(x, u);
    loop {
        let op = ops.get(h);
        let euler = &op.propagator * x + &op.phi1 * &f0;
        if cfg.rule == StepRule::ExponentialEuler {
            return Ok((euler, 1, 0.0, h));
        }
        let base = &op.propagator * x + (&op.phi1 - &op.phi2) * &f0;
        let mut cur = euler;
        let mut prev_diff = f64::INFINITY;
        let mut ratio = 0.0f64;
        for it in 1..=cfg.max_iter {
            let next = &base + &op.phi2 * sys.f(&cur, u);
            let diff = sys.norm(&(&next - &cur));
            let scale = sys.norm(&next).max(1.0);
            if diff.is_finite() && diff <= cfg.tol * scale {
                return Ok((next, it, diff, h));
            }
            if prev_diff.is_finite() && prev_diff > 0.0 {
                ratio = diff / prev_diff;
                if !(ratio < 1.0) {
                    break;
                }
            }
            prev_diff = diff;
            cur = next;
        }
        let phi2_norm = op.phi2_norm;
        if h / 2.0 < cfg.min_step {
            return Err(Error::NonContraction {
                time: t,
                step: h,
                effective_lipschitz: if phi2_norm > 0.0 {
                    ratio / phi2_norm
                } else {
                    f64::INFINITY
                },
            });
        }
        h /= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::system::Nonlinearity;
    use crate::semigroup::{NormKind, OperatorSpec};

    fn scalar_plant(a: f64) -> SemilinearSystem {
        let g = GeneratorModel::discretize(&OperatorSpec::Scalar { a }, 1).unwrap();
        SemilinearSystem::linear(g, DMatrix::from_element(1, 1, 1.0))
    }

    fn s(v: f64) -> State {
        State::from_vec(vec![v])
    }

    #[test]
    fn linear_closed_forms() {
        let sys = scalar_plant(-1.0);
        let cfg = SolverConfig::default();
        let tr = solve_mild(&sys, &s(1.0), &InputSignal::zero(1), 1.0, &cfg).unwrap();
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(tr.final_time(), 1.0);
        let tr = solve_mild(&sys, &s(0.0), &InputSignal::constant(s(1.0)), 1.0, &cfg).unwrap();
        assert!((tr.final_state()[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let tr = solve_mild(&sys, &s(0.0), &InputSignal::zero(1), 3.0, &cfg).unwrap();
        assert!(tr.states.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn trapezoid_is_second_order() {
        let g = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        let sys = SemilinearSystem::new(
            g,
            Nonlinearity::new("sine", |x: &State, u: &State| x.map(|v| 0.5 * v.sin()) + u),
            1,
        );
        let mut cfg = SolverConfig {
            rule: StepRule::ExponentialTrapezoid,
            ..Default::default()
        };
        let u = InputSignal::constant(s(0.3));
        let reference = solve_mild(&sys, &s(1.0), &u, 1.0, &cfg.clone().with_max_step(1e-4)).unwrap();
        let mut errs = Vec::new();
        for h in [0.04, 0.02] {
            cfg.max_step = h;
            let tr = solve_mild(&sys, &s(1.0), &u, 1.0, &cfg).unwrap();
            errs.push((tr.final_state()[0] - reference.final_state()[0]).abs());
            assert!(tr.stats.fixed_point_iterations > tr.stats.steps);
        }
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn finite_escape_is_reported() {
        // ẋ = -x + x² escapes at t = ln(x0 / (x0 - 1)).
        let g = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        let sys = SemilinearSystem::new(
            g,
            Nonlinearity::new("square", |x: &State, _u: &State| x.map(|v| v * v)).with_lipschitz(|c| (2.0 * c, 0.0)),
            1,
        );
        let cfg = SolverConfig {
            rule: StepRule::ExponentialTrapezoid,
            max_step: 1e-3,
            ..Default::default()
        };
        let err = solve_mild(&sys, &s(2.0), &InputSignal::zero(1), 5.0, &cfg).unwrap_err();
        match err {
            Error::BlowUp { escape_time, .. } => {
                let exact = 2.0f64.ln();
                assert!((escape_time - exact).abs() < 0.02 * exact, "escape at {escape_time}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_contraction_is_reported() {
        let g = GeneratorModel::diagonal(vec![0.0], NormKind::WeightedL2 { weight: 1.0 });
        // Steep nonlinearity with no Lipschitz metadata: the trapezoid map cannot contract.
        let sys = SemilinearSystem::new(
            g,
            Nonlinearity::new("steep", |x: &State, _u: &State| x.map(|v| 1e13 * v)),
            1,
        );
        let cfg = SolverConfig {
            rule: StepRule::ExponentialTrapezoid,
            min_step: 1e-9,
            ..Default::default()
        };
        let err = solve_mild(&sys, &s(1.0), &InputSignal::zero(1), 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonContraction { .. }), "{err:?}");
    }
}
