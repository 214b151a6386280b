use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;

use crate::compfunc::ComparisonFunction;
use crate::sampling::state_norm;
use crate::semigroup::{GeneratorModel, NormKind, State};

type FieldFn = dyn Fn(&State, &State) -> State + Send + Sync;
type LipschitzFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// The nonlinearity `f(x, u)` of `ẋ = Ax + f(x, u)`.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    field: Arc<FieldFn>,
    // Analytic (L¹_f(C), L²_f(C)) when known.
    lipschitz: Option<Arc<LipschitzFn>>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity").field("name", &self.name).finish()
    }
}

impl Nonlinearity {
    pub fn new(name: impl Into<String>, field: impl Fn(&State, &State) -> State + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            field: Arc::new(field),
            lipschitz: None,
        }
    }

    /// Attaches analytic constants `C ↦ (L¹_f(C), L²_f(C))`.
    pub fn with_lipschitz(mut self, constants: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        self.lipschitz = Some(Arc::new(constants));
        self
    }

    /// `f(x, u) = B u`.
    pub fn linear_input(b: DMatrix<f64>, norm: NormKind) -> Self {
        let b_norm = input_operator_norm(&b, norm);
        Self::new("linear", move |_x: &State, u: &State| &b * u).with_lipschitz(move |_| (0.0, b_norm))
    }

    /// `f(x, u) = k sin(x) + B u`, componentwise sine.
    pub fn sine(k: f64, b: DMatrix<f64>, norm: NormKind) -> Self {
        let b_norm = input_operator_norm(&b, norm);
        Self::new("sine", move |x: &State, u: &State| x.map(|v| k * v.sin()) + &b * u)
            .with_lipschitz(move |_| (k.abs(), b_norm))
    }

    /// `f(x, u) = -k x³ + B u`, componentwise cube.
    pub fn cubic(k: f64, b: DMatrix<f64>, norm: NormKind) -> Self {
        let b_norm = input_operator_norm(&b, norm);
        // Largest coordinate magnitude on the ball of radius C.
        let coord = move |c: f64| match norm {
            NormKind::WeightedL2 { weight } => c / weight.sqrt(),
            NormKind::Sup => c,
        };
        Self::new("cubic", move |x: &State, u: &State| x.map(|v| -k * v * v * v) + &b * u)
            .with_lipschitz(move |c| (3.0 * k.abs() * coord(c).powi(2), b_norm))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &State, u: &State) -> State {
        (self.field)(x, u)
    }

    pub fn analytic_lipschitz(&self, radius: f64) -> Option<(f64, f64)> {
        self.lipschitz.as_ref().map(|f| f(radius))
    }
}

/// Induced norm of `B: (U, |·|₂) → (X, ‖·‖_X)`.
pub fn input_operator_norm(b: &DMatrix<f64>, norm: NormKind) -> f64 {
    match norm {
        NormKind::WeightedL2 { weight } => {
            if b.nrows() == 1 && b.ncols() == 1 {
                weight.sqrt() * b[(0, 0)].abs()
            } else {
                weight.sqrt() * b.singular_values().max()
            }
        }
        // sup_{|u|₂ ≤ 1} max_i |(Bu)_i| = max_i |row_i|₂
        NormKind::Sup => b.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
    }
}

/// `ẋ = Ax + f(x, u)`.
#[derive(Debug)]
pub struct SemilinearSystem {
    generator: GeneratorModel,
    nonlinearity: Nonlinearity,
    input_dim: usize,
    lipschitz_cache: RwLock<BTreeMap<u64, (f64, f64)>>,
}

impl Clone for SemilinearSystem {
    fn clone(&self) -> Self {
        Self {
            generator: self.generator.clone(),
            nonlinearity: self.nonlinearity.clone(),
            input_dim: self.input_dim,
            lipschitz_cache: RwLock::new(self.lipschitz_cache.read().unwrap().clone()),
        }
    }
}

impl SemilinearSystem {
    pub fn new(generator: GeneratorModel, nonlinearity: Nonlinearity, input_dim: usize) -> Self {
        Self {
            generator,
            nonlinearity,
            input_dim,
            lipschitz_cache: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn linear(generator: GeneratorModel, b: DMatrix<f64>) -> Self {
        let m = b.ncols();
        let norm = generator.norm_kind();
        Self::new(generator, Nonlinearity::linear_input(b, norm), m)
    }

    pub fn generator(&self) -> &GeneratorModel {
        &self.generator
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn f(&self, x: &State, u: &State) -> State {
        self.nonlinearity.eval(x, u)
    }

    pub fn norm(&self, x: &State) -> f64 {
        self.generator.norm(x)
    }

    pub fn record_lipschitz(&self, radius: f64, constants: (f64, f64)) {
        self.lipschitz_cache
            .write()
            .unwrap()
            .insert(radius.to_bits(), constants);
    }

    pub fn cached_lipschitz(&self, radius: f64) -> Option<(f64, f64)> {
        self.lipschitz_cache.read().unwrap().get(&radius.to_bits()).copied()
    }

    /// Best known `(L¹_f, L²_f)` valid at `radius`: analytic if available,
    /// else the cached estimate at the smallest cached radius `≥ radius`.
    pub fn lipschitz_at(&self, radius: f64) -> Option<(f64, f64)> {
        if let Some(c) = self.nonlinearity.analytic_lipschitz(radius) {
            return Some(c);
        }
        let cache = self.lipschitz_cache.read().unwrap();
        cache
            .iter()
            .find(|(k, _)| f64::from_bits(**k) >= radius)
            .map(|(_, v)| *v)
    }
}

type FeedbackFn = dyn Fn(&State) -> f64 + Send + Sync;
type FeedbackLipschitzFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Feedback magnitude `φ: X → ℝ₊` with per-ball Lipschitz constants.
#[derive(Clone)]
pub struct Feedback {
    name: String,
    phi: Arc<FeedbackFn>,
    lipschitz: Arc<FeedbackLipschitzFn>,
}

impl fmt::Debug for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Feedback").field("name", &self.name).finish()
    }
}

impl Feedback {
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(&State) -> f64 + Send + Sync + 'static,
        lipschitz: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            phi: Arc::new(phi),
            lipschitz: Arc::new(lipschitz),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_| 0.0)
    }

    /// `φ(x) = ψ(‖x‖_X)`.
    pub fn from_gain(psi: ComparisonFunction, norm: NormKind) -> Self {
        let lip = psi.clone();
        Self::new(
            "norm-gain",
            move |x: &State| psi.eval_extended(state_norm(norm, x)),
            move |r| lip.lipschitz_on(r),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &State) -> f64 {
        (self.phi)(x)
    }

    /// Lipschitz constant of `φ` on the ball of radius `radius`.
    pub fn lipschitz_on(&self, radius: f64) -> f64 {
        (self.lipschitz)(radius)
    }
}

/// `ẋ = Ax + g(x, d)` with `g(x, d) = f(x, d·φ(x))`.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    plant: SemilinearSystem,
    feedback: Feedback,
    // The closed loop as a system driven by the disturbance.
    driven: SemilinearSystem,
}

impl ClosedLoopSystem {
    pub fn plant(&self) -> &SemilinearSystem {
        &self.plant
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    /// The closed loop viewed as `ẋ = Ax + g(x, d)` with input `d`.
    pub fn as_system(&self) -> &SemilinearSystem {
        &self.driven
    }

    pub fn g(&self, x: &State, d: &State) -> State {
        self.driven.f(x, d)
    }

    pub fn norm(&self, x: &State) -> f64 {
        self.plant.norm(x)
    }
}

pub fn close_loop(plant: &SemilinearSystem, feedback: Feedback) -> ClosedLoopSystem {
    let f = plant.nonlinearity().clone();
    let phi = feedback.clone();
    let mut g = Nonlinearity::new(format!("{}|closed", f.name()), move |x: &State, d: &State| {
        f.eval(x, &(d * phi.eval(x)))
    });
    if let Some(bound) = closed_loop_lipschitz_hint(plant, &feedback) {
        g = g.with_lipschitz(bound);
    }
    let driven = SemilinearSystem::new(plant.generator().clone(), g, plant.input_dim());
    ClosedLoopSystem {
        plant: plant.clone(),
        feedback,
        driven,
    }
}

/// `C ↦ (L¹_f(R') + L²_f(R') Lip(φ|B_C), L²_f(R') sup_{B_C} φ)` with `R' = max(C, sup φ)`,
/// when the plant constants are analytic.
fn closed_loop_lipschitz_hint(
    plant: &SemilinearSystem,
    feedback: &Feedback,
) -> Option<impl Fn(f64) -> (f64, f64) + Send + Sync + 'static> {
    plant.nonlinearity().analytic_lipschitz(1.0)?;
    let f = plant.nonlinearity().clone();
    let phi = feedback.clone();
    let phi_at_zero = feedback.eval(&State::zeros(plant.dim())).max(0.0);
    Some(move |c: f64| {
        let lip_phi = phi.lipschitz_on(c);
        let phi_bound = lip_phi * c + phi_at_zero;
        let r = c.max(phi_bound);
        let (l1, l2) = f.analytic_lipschitz(r).unwrap_or((f64::INFINITY, f64::INFINITY));
        (l1 + l2 * lip_phi, l2 * phi_bound)
    })
}
