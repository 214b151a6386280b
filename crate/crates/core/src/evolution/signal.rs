use std::io::{Read, Write};
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::sampling::{self, SampleRng};
use crate::semigroup::{NormKind, State};

/// Piecewise-constant input `u: ℝ₊ → U`.
///
/// `values[i]` holds on `[breakpoints[i], breakpoints[i + 1])`; the last value
/// extends to infinity. Input norms are Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    breakpoints: Vec<f64>,
    values: Vec<State>,
    sup_norm: f64,
}

impl InputSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<State>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidSignal(
                "input signal needs one value per breakpoint".into(),
            ));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSignal(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        let dim = values[0].len();
        if values
            .iter()
            .any(|v| v.len() != dim || v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidSignal(
                "input values must be finite with a common dimension".into(),
            ));
        }
        let sup_norm = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(Self {
            breakpoints,
            values,
            sup_norm,
        })
    }

    pub fn constant(value: State) -> Self {
        Self::new(vec![0.0], vec![value]).expect("constant input")
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(State::zeros(dim))
    }

    pub fn step(at: f64, before: State, after: State) -> Result<Self> {
        if at == 0.0 {
            return Ok(Self::constant(after));
        }
        Self::new(vec![0.0, at], vec![before, after])
    }

    /// Samples `f` at `0, dt, 2dt, ...` below `horizon`; holds each value for `dt`.
    pub fn sampled(dt: f64, horizon: f64, f: impl Fn(f64) -> State) -> Result<Self> {
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidSignal(
                "sampled input needs dt > 0 and horizon > 0".into(),
            ));
        }
        let n = (horizon / dt).ceil().max(1.0) as usize;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let values = times.iter().map(|t| f(*t)).collect();
        Self::new(times, values)
    }

    /// `amplitude · sin(2π frequency t)` in every coordinate, sampled every `dt`.
    pub fn sinusoid(dim: usize, amplitude: f64, frequency: f64, dt: f64, horizon: f64) -> Result<Self> {
        let scale = amplitude / (dim as f64).sqrt();
        Self::sampled(dt, horizon, |t| {
            State::from_element(dim, scale * (2.0 * std::f64::consts::PI * frequency * t).sin())
        })
    }

    /// Random piecewise-constant input with values uniform in the ball of radius `radius`.
    pub fn random_in_ball(dim: usize, radius: f64, dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let mut rng = sampling::rng(seed);
        Self::random_with(&mut rng, dim, radius, dt, horizon)
    }

    pub fn random_with(rng: &mut SampleRng, dim: usize, radius: f64, dt: f64, horizon: f64) -> Result<Self> {
        let kind = NormKind::WeightedL2 { weight: 1.0 };
        Self::sampled(dt, horizon, |_| State::zeros(dim)).map(|s| {
            let values = s
                .breakpoints
                .iter()
                .map(|_| sampling::in_ball(rng, dim, radius, kind))
                .collect();
            Self::new(s.breakpoints, values).expect("random input")
        })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    /// `u(0)`, the value on the first interval.
    pub fn initial_value(&self) -> &State {
        &self.values[0]
    }

    pub fn value_at(&self, t: f64) -> &State {
        let k = self.breakpoints.partition_point(|b| *b <= t);
        &self.values[k.saturating_sub(1)]
    }

    /// First breakpoint strictly after `t`.
    pub fn next_breakpoint_after(&self, t: f64) -> Option<f64> {
        let k = self.breakpoints.partition_point(|b| *b <= t);
        self.breakpoints.get(k).copied()
    }

    /// Keeps `self` on `[0, t)` and follows `tail` (shifted in time) from `t` on.
    pub fn splice(&self, t: f64, tail: &InputSignal) -> Result<Self> {
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for (b, v) in self.breakpoints.iter().zip(&self.values) {
            if *b < t {
                bps.push(*b);
                vals.push(v.clone());
            }
        }
        for (b, v) in tail.breakpoints.iter().zip(&tail.values) {
            bps.push(t + b);
            vals.push(v.clone());
        }
        if bps.len() >= 2 && bps[0] == bps[1] {
            bps.remove(0);
            vals.remove(0);
        }
        Self::new(bps, vals)
    }

    /// Reads `t,u1,...,um` rows (a header line is expected).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::InvalidSignal(format!("row {}: {e}", line + 2)))?;
            if nums.len() < 2 {
                return Err(Error::InvalidSignal(format!(
                    "row {}: expected t and at least one value",
                    line + 2
                )));
            }
            bps.push(nums[0]);
            vals.push(State::from_column_slice(&nums[1..]));
        }
        Self::new(bps, vals)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        for (b, v) in self.breakpoints.iter().zip(&self.values) {
            let mut row = vec![b.to_string()];
            row.extend(v.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Disturbance `d ∈ 𝒟`: a piecewise-constant input with `‖d(t)‖ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal(InputSignal);

impl DisturbanceSignal {
    pub fn new(signal: InputSignal) -> Result<Self> {
        if signal.sup_norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidSignal(format!(
                "disturbance values must lie in the closed unit ball, sup norm is {}",
                signal.sup_norm()
            )));
        }
        Ok(Self(signal))
    }

    pub fn constant(value: State) -> Result<Self> {
        Self::new(InputSignal::constant(value))
    }

    pub fn zero(dim: usize) -> Self {
        Self(InputSignal::zero(dim))
    }

    /// Random piecewise-constant disturbance switching every `dt`.
    pub fn random(dim: usize, dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        Self::new(InputSignal::random_in_ball(dim, 1.0, dt, horizon, seed)?)
    }

    pub fn into_inner(self) -> InputSignal {
        self.0
    }
}

impl Deref for DisturbanceSignal {
    type Target = InputSignal;

    fn deref(&self) -> &InputSignal {
        &self.0
    }
}
