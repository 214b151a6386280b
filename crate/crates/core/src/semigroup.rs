//! Finite-dimensional generator models, the semigroup `T_t = exp(tA)` they
//! generate, induced operator norms, and certified exponential decay pairs
//! `(M, λ)` with `‖T_t‖ ≤ M e^{-λt}` on a sample grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type State = DVector<f64>;

/// Default backward-error target for the matrix exponential.
pub const TOL_EXP: f64 = 1.0e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `‖x‖² = w Σ x_i²`; `w` is the grid spacing for finite differences.
    WeightedL2 {
        weight: f64,
    },
    Sup,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    SpectralDiagonal { eigenvalues: Vec<f64> },
    FiniteDifference { description: String },
    ExplicitMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// `A = [a]`
    Scalar {
        a: f64,
    },
    /// Dirichlet Laplacian on `(0, L)` in its sine eigenbasis.
    HeatDirichlet {
        length: f64,
    },
    /// `x_t = -c x_ξ - a x` on `(0, 1)` with zero inflow, upwind differences.
    Transport {
        speed: f64,
        damping: f64,
    },
    /// `[[λ₀, k], [0, λ₀]]`
    Jordan2 {
        lambda0: f64,
        coupling: f64,
    },
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    matrix: DMatrix<f64>,
    norm: NormKind,
    scheme: Scheme,
}

impl GeneratorModel {
    pub fn discretize(spec: &OperatorSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGenerator("dimension must be at least 1".into()));
        }
        let l2 = NormKind::WeightedL2 { weight: 1.0 };
        let model = match spec {
            OperatorSpec::Scalar { a } => {
                if n != 1 {
                    return Err(Error::InvalidGenerator(format!(
                        "scalar generator needs N = 1, got {n}"
                    )));
                }
                Self::diagonal(vec![*a], l2)
            }
            OperatorSpec::HeatDirichlet { length } => {
                if !(*length > 0.0) {
                    return Err(Error::InvalidGenerator(format!(
                        "heat length must be positive, got {length}"
                    )));
                }
                let eig = (1..=n).map(|k| -((k as f64) * PI / length).powi(2)).collect();
                Self::diagonal(eig, l2)
            }
            OperatorSpec::Transport { speed, damping } => {
                if !(*speed > 0.0) {
                    return Err(Error::InvalidGenerator(format!(
                        "transport speed must be positive, got {speed}"
                    )));
                }
                let h = 1.0 / n as f64;
                let mut a = DMatrix::zeros(n, n);
                for i in 0..n {
                    a[(i, i)] = -speed / h - damping;
                    if i > 0 {
                        a[(i, i - 1)] = speed / h;
                    }
                }
                Self {
                    matrix: a,
                    norm: NormKind::WeightedL2 { weight: h },
                    scheme: Scheme::FiniteDifference {
                        description: format!("upwind transport c={speed} a={damping} h={h}"),
                    },
                }
            }
            OperatorSpec::Jordan2 { lambda0, coupling } => {
                if n != 2 {
                    return Err(Error::InvalidGenerator(format!(
                        "jordan2 generator needs N = 2, got {n}"
                    )));
                }
                Self::explicit(DMatrix::from_row_slice(2, 2, &[*lambda0, *coupling, 0.0, *lambda0]), l2)?
            }
            OperatorSpec::Explicit(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::InvalidGenerator(format!(
                        "explicit matrix is {}x{}, expected {n}x{n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Self::explicit(m.clone(), l2)?
            }
        };
        Ok(model)
    }

    pub fn diagonal(eigenvalues: Vec<f64>, norm: NormKind) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone())),
            norm,
            scheme: Scheme::SpectralDiagonal { eigenvalues },
        }
    }

    pub fn explicit(matrix: DMatrix<f64>, norm: NormKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidGenerator(
                "generator matrix must be square and nonempty".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGenerator(
                "generator matrix has non-finite entries".into(),
            ));
        }
        if let NormKind::WeightedL2 { weight } = norm {
            if !(weight > 0.0) {
                return Err(Error::InvalidGenerator(format!(
                    "norm weight must be positive, got {weight}"
                )));
            }
        }
        Ok(Self {
            matrix,
            norm,
            scheme: Scheme::ExplicitMatrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    fn diag(&self) -> Option<&[f64]> {
        match &self.scheme {
            Scheme::SpectralDiagonal { eigenvalues } => Some(eigenvalues),
            _ => None,
        }
    }

    pub fn norm(&self, x: &State) -> f64 {
        match self.norm {
            NormKind::WeightedL2 { weight } => weight.sqrt() * x.norm(),
            NormKind::Sup => x.amax(),
        }
    }

    /// Inner product compatible with the weighted l2 norm (plain dot product for sup).
    pub fn inner(&self, x: &State, y: &State) -> f64 {
        match self.norm {
            NormKind::WeightedL2 { weight } => weight * x.dot(y),
            NormKind::Sup => x.dot(y),
        }
    }

    /// Induced norm of a matrix acting on the state space.
    pub fn induced_norm(&self, m: &DMatrix<f64>) -> f64 {
        match self.norm {
            // Uniform weights cancel under conjugation.
            NormKind::WeightedL2 { .. } => {
                if m.nrows() == 1 && m.ncols() == 1 {
                    m[(0, 0)].abs()
                } else {
                    m.singular_values().max()
                }
            }
            NormKind::Sup => m
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    fn check_dim(&self, x: &State) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `exp(tA)`
    pub fn propagator(&self, t: f64) -> DMatrix<f64> {
        if t == 0.0 {
            return DMatrix::identity(self.dim(), self.dim());
        }
        match self.diag() {
            Some(eig) => DMatrix::from_diagonal(&DVector::from_iterator(eig.len(), eig.iter().map(|l| (l * t).exp()))),
            None => (&self.matrix * t).exp(),
        }
    }

    pub fn apply_semigroup(&self, t: f64, x: &State) -> Result<State> {
        self.check_dim(x)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidGenerator(format!(
                "semigroup time must be nonnegative, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        Ok(match self.diag() {
            Some(eig) => x.zip_map(&DVector::from_column_slice(eig), |xi, l| xi * (l * t).exp()),
            None => self.propagator(t) * x,
        })
    }

    pub fn operator_norm(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        if let Some(eig) = self.diag() {
            return eig.iter().map(|l| (l * t).exp()).fold(0.0, f64::max);
        }
        self.induced_norm(&self.propagator(t))
    }

    /// `(h φ₁(hA), h φ₂(hA))` with `φ₁(z) = (e^z − 1)/z`, `φ₂(z) = (e^z − 1 − z)/z²`.
    ///
    /// `h φ₁(hA) v = ∫₀^h T_{h−s} v ds` and `h φ₂(hA) v = ∫₀^h T_{h−s} (s/h) v ds`.
    pub fn phi_matrices(&self, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        if let Some(eig) = self.diag() {
            let (p1, p2): (Vec<f64>, Vec<f64>) = eig
                .iter()
                .map(|l| {
                    let z = l * h;
                    (h * phi1(z), h * phi2(z))
                })
                .unzip();
            return (
                DMatrix::from_diagonal(&DVector::from_vec(p1)),
                DMatrix::from_diagonal(&DVector::from_vec(p2)),
            );
        }
        let mut aug = DMatrix::zeros(3 * n, 3 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.matrix * h));
        for i in 0..n {
            aug[(i, n + i)] = 1.0;
            aug[(n + i, 2 * n + i)] = 1.0;
        }
        let e = aug.exp();
        (e.view((0, n), (n, n)) * h, e.view((0, 2 * n), (n, n)) * h)
    }

    /// `−max Re(eig A)`, a decay-rate guess used to size default horizons.
    pub fn decay_rate_guess(&self) -> f64 {
        if let Some(eig) = self.diag() {
            return -eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        -self
            .matrix
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn default_horizon(&self) -> f64 {
        let g = self.decay_rate_guess();
        if g > 0.0 {
            10.0 / g
        } else {
            10.0
        }
    }

    pub fn certify_decay(&self, cfg: &DecayConfig) -> Result<DecayCertificate> {
        let t_max = cfg.t_max.unwrap_or_else(|| self.default_horizon());
        if !(t_max > 0.0) || cfg.n_samples < 3 {
            return Err(Error::InvalidGenerator(
                "certify_decay needs t_max > 0 and n_samples >= 3".into(),
            ));
        }
        let mut times = vec![0.0];
        times.extend(crate::compfunc::log_space(t_max * 1.0e-4, t_max, cfg.n_samples - 1));
        let norms: Vec<f64> = times.par_iter().map(|t| self.operator_norm(*t)).collect();
        let norm_at_tmax = *norms.last().unwrap();
        if !(norm_at_tmax < 1.0) {
            return Err(Error::NoDecay { t_max, norm_at_tmax });
        }
        let (lambda, _) =
            fit_tail_rate(&times, &norms, cfg.fit_fraction).ok_or(Error::NoDecay { t_max, norm_at_tmax })?;
        if !(lambda > 0.0) {
            return Err(Error::NoDecay { t_max, norm_at_tmax });
        }
        let (times, norms) = self.refine_envelope_peaks(times, norms, lambda);
        let m = envelope_constant(&times, &norms, lambda).max(1.0) * (1.0 + cfg.tol_cert);
        Ok(DecayCertificate::from_samples(m, lambda, times, norms))
    }

    /// Adds golden-section refined samples at every interior local maximum of
    /// `‖T_t‖ e^{λt}`, so the envelope peak between grid nodes is covered.
    fn refine_envelope_peaks(&self, times: Vec<f64>, norms: Vec<f64>, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let w: Vec<f64> = times.iter().zip(&norms).map(|(t, n)| n * (lambda * t).exp()).collect();
        let envelope = |t: f64| self.operator_norm(t) * (lambda * t).exp();
        let mut extra: Vec<(f64, f64)> = Vec::new();
        for i in 1..times.len() - 1 {
            if w[i] >= w[i - 1] && w[i] >= w[i + 1] {
                let t = golden_max(envelope, times[i - 1], times[i + 1], 1e-12);
                extra.push((t, self.operator_norm(t)));
            }
        }
        let mut pts: Vec<(f64, f64)> = times.into_iter().zip(norms).chain(extra).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        pts.into_iter().unzip()
    }
}

/// Golden-section search for a maximizer of a unimodal function on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Least-squares decay rate of `ln v(t)` over the last `fraction` of the time window.
/// Returns `(rate, intercept)`.
pub fn fit_tail_rate(times: &[f64], values: &[f64], fraction: f64) -> Option<(f64, f64)> {
    let t_end = *times.last()?;
    let start = t_end * (1.0 - fraction);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= start && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((-slope, my - slope * mt))
}

/// Smallest `M` with `v(t) ≤ M e^{−λt}` on all samples.
pub fn envelope_constant(times: &[f64], values: &[f64], lambda: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(t, v)| v * (lambda * t).exp())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct DecayConfig {
    /// Horizon of the sample window; defaults to `10 / λ_guess`.
    pub t_max: Option<f64>,
    pub n_samples: usize,
    pub tol_cert: f64,
    /// Fraction of the time window (from its end) used to fit `λ`.
    pub fit_fraction: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            t_max: None,
            n_samples: 200,
            tol_cert: 1.0e-9,
            fit_fraction: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCertificate {
    pub m: f64,
    pub lambda: f64,
    pub sample_times: Vec<f64>,
    pub norms: Vec<f64>,
    pub slacks: Vec<f64>,
}

impl DecayCertificate {
    fn from_samples(m: f64, lambda: f64, sample_times: Vec<f64>, norms: Vec<f64>) -> Self {
        let slacks = sample_times
            .iter()
            .zip(&norms)
            .map(|(t, n)| m * (-lambda * t).exp() - n)
            .collect();
        Self {
            m,
            lambda,
            sample_times,
            norms,
            slacks,
        }
    }

    /// A certificate supplied by hand (e.g. from a config file), without samples.
    pub fn assumed(m: f64, lambda: f64) -> Result<Self> {
        if !(m >= 1.0) || !(lambda > 0.0) {
            return Err(Error::InvalidGenerator(format!(
                "decay certificate needs M >= 1 and lambda > 0, got M = {m}, lambda = {lambda}"
            )));
        }
        Ok(Self::from_samples(m, lambda, Vec::new(), Vec::new()))
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.m * (-self.lambda * t).exp()
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn jordan() -> GeneratorModel {
        GeneratorModel::discretize(
            &OperatorSpec::Jordan2 {
                lambda0: -1.0,
                coupling: 10.0,
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn discretizations() {
        let s = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        assert_eq!(s.matrix()[(0, 0)], -1.0);
        let h = GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: 1.0 }, 3).unwrap();
        for k in 0..3 {
            let expected = -((k + 1) as f64 * PI).powi(2);
            assert_relative_eq!(h.matrix()[(k, k)], expected, max_relative = 1e-15);
        }
        assert_eq!(
            jordan().matrix(),
            &DMatrix::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -1.0])
        );
        assert!(GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 2).is_err());
        assert!(GeneratorModel::discretize(
            &OperatorSpec::Jordan2 {
                lambda0: -1.0,
                coupling: 1.0
            },
            3
        )
        .is_err());
        let t = GeneratorModel::discretize(
            &OperatorSpec::Transport {
                speed: 1.0,
                damping: 0.5,
            },
            4,
        )
        .unwrap();
        assert_eq!(t.norm_kind(), NormKind::WeightedL2 { weight: 0.25 });
        assert_eq!(t.matrix()[(1, 0)], 4.0);
    }

    #[test]
    fn semigroup_action() {
        let s = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        let y = s.apply_semigroup(1.0, &State::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(y[0], (-1.0f64).exp(), max_relative = 1e-15);
        let x = State::from_vec(vec![0.3, -2.0]);
        assert_eq!(jordan().apply_semigroup(0.0, &x).unwrap(), x);
        let h = GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: 1.0 }, 3).unwrap();
        let y = h.apply_semigroup(0.1, &State::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(y[0], (-0.1 * PI * PI).exp(), max_relative = 1e-15);
        assert_eq!(y[1], 0.0);
        assert!(matches!(
            h.apply_semigroup(0.1, &State::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn norms() {
        let s = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        assert_relative_eq!(s.operator_norm(2.0), (-2.0f64).exp(), max_relative = 1e-15);
        assert_eq!(jordan().operator_norm(0.0), 1.0);
        for t in [0.05f64, 0.1, 0.5] {
            assert!(jordan().operator_norm(t) > (-t).exp());
        }
        // Dense path agrees with the closed form e^{-t}[[1, 10t], [0, 1]].
        let t: f64 = 0.7;
        let p = jordan().propagator(t);
        let e = (-t).exp();
        assert_relative_eq!(p[(0, 1)], 10.0 * t * e, max_relative = 1e-13);
        assert_relative_eq!(p[(0, 0)], e, max_relative = 1e-13);
    }

    #[test]
    fn phi_dense_matches_diagonal() {
        let eig = vec![-3.0, -0.5];
        let diag = GeneratorModel::diagonal(eig.clone(), NormKind::WeightedL2 { weight: 1.0 });
        let dense = GeneratorModel::explicit(
            DMatrix::from_diagonal(&DVector::from_vec(eig)),
            NormKind::WeightedL2 { weight: 1.0 },
        )
        .unwrap();
        for h in [1e-6, 1e-2, 0.7] {
            let (a1, a2) = diag.phi_matrices(h);
            let (b1, b2) = dense.phi_matrices(h);
            assert!((a1 - b1).amax() < 1e-14 * h.max(1e-3) * 10.0);
            assert!((a2 - b2).amax() < 1e-14 * h.max(1e-3) * 10.0);
        }
    }

    #[test]
    fn certificates() {
        let s = GeneratorModel::discretize(&OperatorSpec::Scalar { a: -1.0 }, 1).unwrap();
        let c = s.certify_decay(&DecayConfig::default()).unwrap();
        assert_relative_eq!(c.m, 1.0, max_relative = 1e-8);
        assert_relative_eq!(c.lambda, 1.0, max_relative = 1e-8);
        assert!(c.min_slack() >= -1e-12);

        let h = GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: 1.0 }, 16).unwrap();
        let c = h.certify_decay(&DecayConfig::default()).unwrap();
        assert_relative_eq!(c.lambda, PI * PI, max_relative = 1e-8);
        assert_relative_eq!(c.m, 1.0, max_relative = 1e-8);

        let c = jordan().certify_decay(&DecayConfig::default()).unwrap();
        assert!(c.lambda < 1.0 && c.m > 1.0, "M = {}, lambda = {}", c.m, c.lambda);
        assert!(c.min_slack() >= 0.0);
        // Feasibility oracle: the certified pair dominates a dense grid of exact norms.
        for i in 0..=2000 {
            let t = i as f64 * 0.01;
            assert!(jordan().operator_norm(t) <= c.bound(t) * (1.0 + 1e-9));
        }

        let unstable = GeneratorModel::discretize(&OperatorSpec::Scalar { a: 1.0 }, 1).unwrap();
        assert!(matches!(
            unstable.certify_decay(&DecayConfig::default()),
            Err(Error::NoDecay { .. })
        ));
    }
}
