use super::signal::InputSignal;
use super::solver::{solve_mild, SolverConfig, Trajectory};
use super::system::SemilinearSystem;
use crate::error::{Error, Result};
use crate::semigroup::{fit_tail_rate, State};

/// Simulates with an input re-chosen every `dt` from `candidates`, maximizing
/// the growth rate `⟨x, Ax + f(x, u)⟩` and breaking ties by `‖f(x, u)‖`.
/// Returns the trajectory and the realized input.
pub fn greedy_run(
    sys: &SemilinearSystem,
    x0: &State,
    candidates: &[State],
    horizon: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(Trajectory, InputSignal)> {
    if candidates.is_empty() || !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidSignal(
            "greedy input needs candidates, dt > 0 and horizon > 0".into(),
        ));
    }
    let gen = sys.generator();
    let mut x = x0.clone();
    let mut t = 0.0;
    let (mut bps, mut vals) = (Vec::new(), Vec::new());
    let mut traj: Option<Trajectory> = None;
    while t < horizon * (1.0 - 1e-12) {
        let ax = gen.matrix() * &x;
        let mut best: Option<((f64, f64), &State)> = None;
        for u in candidates {
            let f = sys.f(&x, u);
            let score = (gen.inner(&x, &(&ax + &f)), gen.norm(&f));
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, u));
            }
        }
        let u = best.expect("candidates are nonempty").1.clone();
        let step = dt.min(horizon - t);
        let seg = solve_mild(sys, &x, &InputSignal::constant(u.clone()), step, cfg)?;
        bps.push(t);
        vals.push(u);
        x = seg.final_state().clone();
        traj = Some(match traj {
            None => seg,
            Some(mut acc) => {
                for ((s, xs), n) in seg.times.iter().zip(&seg.states).zip(&seg.norms).skip(1) {
                    acc.times.push(t + s);
                    acc.states.push(xs.clone());
                    acc.norms.push(*n);
                }
                acc.stats.steps += seg.stats.steps;
                acc.stats.fixed_point_iterations += seg.stats.fixed_point_iterations;
                acc.stats.max_residual = acc.stats.max_residual.max(seg.stats.max_residual);
                acc
            }
        });
        t += step;
    }
    Ok((traj.expect("horizon is positive"), InputSignal::new(bps, vals)?))
}

/// `‖x(t)‖ ≤ m ‖x0‖ e^{−λt}` fitted over trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpEnvelope {
    pub m: f64,
    pub lambda: f64,
    /// `max ‖x(t)‖ / (m ‖x0‖ e^{−λt})` over every recorded point.
    pub coverage: f64,
}

/// `λ` is the tail rate of the normalized sup envelope over the last third of
/// the common horizon; `m` is the smallest constant covering every recorded
/// point given that rate. Samples with `‖x0‖ = 0` are skipped.
pub fn fit_exp_envelope(samples: &[(f64, &Trajectory)]) -> ExpEnvelope {
    let active: Vec<&(f64, &Trajectory)> = samples.iter().filter(|s| s.0 > 0.0).collect();
    if active.is_empty() {
        return ExpEnvelope {
            m: 1.0,
            lambda: 0.0,
            coverage: 0.0,
        };
    }
    let horizon = active.iter().map(|s| s.1.final_time()).fold(f64::INFINITY, f64::min);
    let grid: Vec<f64> = (0..=400).map(|i| horizon * i as f64 / 400.0).collect();
    let envelope: Vec<f64> = grid
        .iter()
        .map(|t| active.iter().map(|(r, tr)| tr.norm_at(*t) / r).fold(0.0, f64::max))
        .collect();
    let lambda = fit_tail_rate(&grid, &envelope, 1.0 / 3.0).map_or(0.0, |(rate, _)| rate);
    let ratio = |lambda: f64| {
        active
            .iter()
            .flat_map(|(r, tr)| {
                tr.times
                    .iter()
                    .zip(&tr.norms)
                    .map(move |(t, n)| n / r * (lambda * t).exp())
            })
            .fold(0.0, f64::max)
    };
    let m = ratio(lambda).max(1.0);
    ExpEnvelope {
        m,
        lambda,
        coverage: ratio(lambda) / m,
    }
}
