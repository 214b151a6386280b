//! Mild solutions of `ẋ = Ax + f(x, u)`, input signals, and closed loops
//! under multiplicative disturbances.

mod adversary;
mod probes;
mod signal;
mod solver;
mod system;

pub use adversary::{fit_exp_envelope, greedy_run, ExpEnvelope};
pub use probes::{
    estimate_lipschitz, estimate_lipschitz_with, flow_lipschitz_probe, lemma1_check, rfc_probe, FlowLipschitzReport,
    Lemma1Report, RfcReport,
};
pub use signal::{DisturbanceSignal, InputSignal};
pub use solver::{solve_mild, SolverConfig, SolverStats, StepRule, Trajectory};
pub use system::{close_loop, input_operator_norm, ClosedLoopSystem, Feedback, Nonlinearity, SemilinearSystem};

use crate::error::Result;
use crate::semigroup::State;

/// Trajectory of the closed loop `ẋ = Ax + g(x, d)`.
pub fn solve_disturbed(
    cls: &ClosedLoopSystem,
    x0: &State,
    d: &DisturbanceSignal,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve_mild(cls.as_system(), x0, d, horizon, cfg)
}
