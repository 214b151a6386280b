//! Comparison functions of classes PD, K, K-infinity and L, plus KL functions.
//!
//! Parametric forms are evaluated and inverted in closed form. Tabulated
//! forms use shape-preserving (Fritsch-Carlson) cubic interpolation, done in
//! log-log coordinates whenever the table is strictly positive away from the
//! origin, so power laws are reproduced exactly and monotonicity survives
//! interpolation.

use std::fmt;

use crate::error::{Error, Result};

/// Largest argument with certified behavior unless configured otherwise.
pub const DEFAULT_DOMAIN_CAP: f64 = 1.0e6;
/// Sample count used by [`ComparisonFunction::verify_class`] by default.
pub const DEFAULT_CLASS_SAMPLES: usize = 256;
/// Node count for tabulations produced by composition and inversion.
pub const TABULATION_POINTS: usize = 1024;
/// Smallest positive tabulation node, relative to the domain cap.
const TABULATION_FLOOR: f64 = 1.0e-12;
const INVERT_TOL: f64 = 1.0e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionClass {
    PositiveDefinite,
    K,
    KInf,
    L,
}

impl FunctionClass {
    fn vanishes_at_zero(self) -> bool {
        !matches!(self, FunctionClass::L)
    }

    fn increasing(self) -> bool {
        matches!(self, FunctionClass::K | FunctionClass::KInf)
    }
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FunctionClass::PositiveDefinite => "PD",
            FunctionClass::K => "K",
            FunctionClass::KInf => "Kinf",
            FunctionClass::L => "L",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    /// `c * r`
    Linear {
        c: f64,
    },
    /// `c * r^p`
    Power {
        c: f64,
        p: f64,
    },
    /// `c * r / (s + r)`, bounded by `c`.
    Saturating {
        c: f64,
        s: f64,
    },
    /// `c * exp(-rate * r)`, the canonical L-class decay.
    ExpDecay {
        c: f64,
        rate: f64,
    },
    Tabulated(Table),
}

/// Monotone piecewise-cubic table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    grid: Vec<f64>,
    values: Vec<f64>,
    // Interpolation nodes; in log-log coordinates when `log_space`.
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    log_space: bool,
    // Plain linear interpolation instead of monotone cubic.
    linear: bool,
}

impl Table {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidFunction(
                "tabulated form needs at least two (argument, value) pairs".into(),
            ));
        }
        if grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidFunction(
                "tabulated grid must be nonnegative and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidFunction(
                "tabulated values must be finite and nonnegative".into(),
            ));
        }
        let zero_anchor = grid[0] == 0.0 && values[0] == 0.0;
        let start = usize::from(zero_anchor);
        let log_space = grid[start..].len() >= 2 && grid[start] > 0.0 && values[start..].iter().all(|v| *v > 0.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = if log_space {
            grid[start..]
                .iter()
                .zip(&values[start..])
                .map(|(r, v)| (r.ln(), v.ln()))
                .unzip()
        } else {
            (grid.clone(), values.clone())
        };
        let slopes = pchip_slopes(&xs, &ys);
        Ok(Self {
            grid,
            values,
            xs,
            ys,
            slopes,
            log_space,
            linear: false,
        })
    }

    /// Piecewise-linear table through the given nodes.
    pub fn piecewise_linear(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(grid, values)?;
        t.linear = true;
        Ok(t)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn last_arg(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    fn eval(&self, r: f64) -> f64 {
        if self.linear {
            let (g, v) = (&self.grid, &self.values);
            let k = g.partition_point(|x| *x <= r).clamp(1, g.len() - 1);
            let w = (r - g[k - 1]) / (g[k] - g[k - 1]);
            return v[k - 1] + w * (v[k] - v[k - 1]);
        }
        if !self.log_space {
            return hermite(&self.xs, &self.ys, &self.slopes, r);
        }
        let first = self.xs[0].exp();
        if r < first {
            if r <= 0.0 {
                return if self.grid[0] == 0.0 {
                    self.values[0]
                } else {
                    self.ys[0].exp()
                };
            }
            if self.grid[0] == 0.0 {
                // Power-law continuation to the zero anchor.
                let k = self.slopes[0].max(f64::EPSILON);
                return self.ys[0].exp() * (r / first).powf(k);
            }
        }
        hermite(&self.xs, &self.ys, &self.slopes, r.ln()).exp()
    }

    /// Largest slope of the piecewise-linear chord through the nodes on `[0, r]`.
    fn max_chord_slope(&self, r: f64) -> f64 {
        let mut best = 0.0f64;
        for w in self.grid.windows(2).zip(self.values.windows(2)) {
            let (g, v) = w;
            if g[0] > r {
                break;
            }
            best = best.max(((v[1] - v[0]) / (g[1] - g[0])).abs());
        }
        best
    }
}

/// Fritsch-Carlson monotone slopes.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let deltas: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    if n == 2 {
        return vec![deltas[0], deltas[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (a, b) = (deltas[i - 1], deltas[i]);
        if a * b > 0.0 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            d[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], deltas[0], deltas[1]);
    d[n - 1] = end_slope(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        deltas[n - 2],
        deltas[n - 3],
    );
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

fn hermite(xs: &[f64], ys: &[f64], d: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|v| *v <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[i] + h10 * h * d[i] + h01 * ys[i + 1] + h11 * h * d[i + 1]
}

/// Log-spaced grid on `[lo, hi]` with `n` nodes, preceded by `0`.
pub fn log_grid_with_zero(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n + 1);
    g.push(0.0);
    g.extend(log_space(lo, hi, n));
    g
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonFunction {
    form: Form,
    class: FunctionClass,
    domain_cap: f64,
}

impl ComparisonFunction {
    pub fn new(form: Form, class: FunctionClass, domain_cap: f64) -> Result<Self> {
        if !(domain_cap > 0.0) || !domain_cap.is_finite() {
            return Err(Error::InvalidFunction(format!(
                "domain_cap must be positive, got {domain_cap}"
            )));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let ok = match &form {
            Form::Linear { c } => finite_nonneg(*c),
            Form::Power { c, p } => finite_nonneg(*c) && p.is_finite() && *p > 0.0,
            Form::Saturating { c, s } => finite_nonneg(*c) && s.is_finite() && *s > 0.0,
            Form::ExpDecay { c, rate } => finite_nonneg(*c) && rate.is_finite() && *rate > 0.0,
            Form::Tabulated(_) => true,
        };
        if !ok {
            return Err(Error::InvalidFunction(format!("invalid parameters in {form:?}")));
        }
        let domain_cap = match &form {
            Form::Tabulated(t) => domain_cap.min(t.last_arg()),
            _ => domain_cap,
        };
        Ok(Self {
            form,
            class,
            domain_cap,
        })
    }

    pub fn linear(c: f64) -> Self {
        Self::new(Form::Linear { c }, FunctionClass::KInf, DEFAULT_DOMAIN_CAP).expect("linear form")
    }

    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    pub fn power(c: f64, p: f64) -> Self {
        Self::new(Form::Power { c, p }, FunctionClass::KInf, DEFAULT_DOMAIN_CAP).expect("power form")
    }

    pub fn saturating(c: f64, s: f64) -> Self {
        Self::new(Form::Saturating { c, s }, FunctionClass::K, DEFAULT_DOMAIN_CAP).expect("saturating form")
    }

    pub fn exp_decay(c: f64, rate: f64) -> Self {
        Self::new(Form::ExpDecay { c, rate }, FunctionClass::L, DEFAULT_DOMAIN_CAP).expect("exponential decay form")
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>, class: FunctionClass) -> Result<Self> {
        let table = Table::new(grid, values)?;
        let cap = table.last_arg();
        Self::new(Form::Tabulated(table), class, cap)
    }

    /// Piecewise-linear interpolant of `(grid, values)`.
    pub fn piecewise_linear(grid: Vec<f64>, values: Vec<f64>, class: FunctionClass) -> Result<Self> {
        let table = Table::piecewise_linear(grid, values)?;
        let cap = table.last_arg();
        Self::new(Form::Tabulated(table), class, cap)
    }

    /// `r ↦ k f(r)` for `k > 0`, in the same form and on the same domain.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidFunction(format!(
                "scale factor must be positive, got {k}"
            )));
        }
        let form = match &self.form {
            Form::Linear { c } => Form::Linear { c: c * k },
            Form::Power { c, p } => Form::Power { c: c * k, p: *p },
            Form::Saturating { c, s } => Form::Saturating { c: c * k, s: *s },
            Form::ExpDecay { c, rate } => Form::ExpDecay { c: c * k, rate: *rate },
            Form::Tabulated(t) => {
                let values = t.values.iter().map(|v| v * k).collect();
                Form::Tabulated(if t.linear {
                    Table::piecewise_linear(t.grid.clone(), values)?
                } else {
                    Table::new(t.grid.clone(), values)?
                })
            }
        };
        Self::new(form, self.class, self.domain_cap)
    }

    pub fn with_domain_cap(mut self, cap: f64) -> Self {
        self.domain_cap = match &self.form {
            Form::Tabulated(t) => cap.min(t.last_arg()),
            _ => cap,
        };
        self
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    /// Slope `c` when the function is exactly linear.
    pub fn linear_slope(&self) -> Option<f64> {
        match self.form {
            Form::Linear { c } => Some(c),
            Form::Power { c, p: 1.0 } => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || r > self.domain_cap {
            return Err(Error::OutOfDomain {
                arg: r,
                cap: self.domain_cap,
            });
        }
        Ok(self.eval_unchecked(r))
    }

    /// Like [`eval`](Self::eval) but continues past the domain cap: parametric
    /// forms by their formula, tables linearly with their steepest chord.
    pub fn eval_extended(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match &self.form {
            Form::Tabulated(t) if r > self.domain_cap => {
                self.eval_unchecked(self.domain_cap) + t.max_chord_slope(self.domain_cap) * (r - self.domain_cap)
            }
            _ => self.eval_unchecked(r),
        }
    }

    fn eval_unchecked(&self, r: f64) -> f64 {
        match &self.form {
            Form::Linear { c } => c * r,
            Form::Power { c, p } => c * r.powf(*p),
            Form::Saturating { c, s } => c * r / (s + r),
            Form::ExpDecay { c, rate } => c * (-rate * r).exp(),
            Form::Tabulated(t) => t.eval(r),
        }
    }

    /// Inverse value of a strictly increasing function.
    pub fn invert(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidFunction(format!("cannot invert at negative value {y}")));
        }
        if !self.class.increasing() {
            return Err(Error::InvalidFunction(format!(
                "inversion needs a K-class function, got class {}",
                self.class
            )));
        }
        let r = match &self.form {
            Form::Linear { c } if *c > 0.0 => y / c,
            Form::Power { c, p } if *c > 0.0 => (y / c).powf(1.0 / p),
            Form::Saturating { c, s } if y < *c => s * y / (c - y),
            Form::Saturating { c, .. } => return Err(Error::RangeExceeded { value: y, max: *c }),
            _ => return self.invert_bisection(y),
        };
        if r > self.domain_cap {
            return Err(Error::RangeExceeded {
                value: y,
                max: self.eval_unchecked(self.domain_cap),
            });
        }
        Ok(r)
    }

    fn invert_bisection(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let top = self.eval_unchecked(self.domain_cap);
        if y > top {
            return Err(Error::RangeExceeded { value: y, max: top });
        }
        // Bracket by doubling from a small argument, then bisect.
        let mut lo = 0.0;
        let mut hi = (self.domain_cap * TABULATION_FLOOR).max(f64::MIN_POSITIVE);
        while self.eval_unchecked(hi) < y && hi < self.domain_cap {
            lo = hi;
            hi = (hi * 2.0).min(self.domain_cap);
        }
        let target = INVERT_TOL * y.max(1.0);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.eval_unchecked(mid);
            if (v - y).abs() <= target * 1e-3 {
                return Ok(mid);
            }
            if v < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (self.eval_unchecked(lo), self.eval_unchecked(hi));
        Ok(if (flo - y).abs() <= (fhi - y).abs() { lo } else { hi })
    }

    /// Inverse function of a K-class function as a comparison function.
    pub fn inverse(&self) -> Result<ComparisonFunction> {
        if !self.class.increasing() {
            return Err(Error::InvalidFunction(format!(
                "inverse needs a K-class function, got class {}",
                self.class
            )));
        }
        let top = self.eval_unchecked(self.domain_cap);
        match &self.form {
            Form::Linear { c } if *c > 0.0 => ComparisonFunction::new(Form::Linear { c: 1.0 / c }, self.class, top),
            Form::Power { c, p } if *c > 0.0 => ComparisonFunction::new(
                Form::Power {
                    c: c.powf(-1.0 / p),
                    p: 1.0 / p,
                },
                self.class,
                top,
            ),
            _ => {
                let grid = tabulation_grid(self.domain_cap);
                let values: Vec<f64> = grid.iter().map(|r| self.eval_unchecked(*r)).collect();
                if values.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidFunction(
                        "inverse needs a strictly increasing function on its tabulation grid".into(),
                    ));
                }
                ComparisonFunction::tabulated(values, grid, self.class)
            }
        }
    }

    /// `self ∘ inner`, i.e. `r ↦ self(inner(r))`.
    pub fn compose(&self, inner: &ComparisonFunction) -> Result<ComparisonFunction> {
        let compatible = |c: FunctionClass| c.increasing();
        if !compatible(self.class) || !compatible(inner.class) {
            return Err(Error::ClassIncompatible {
                outer: self.class.to_string(),
                inner: inner.class.to_string(),
            });
        }
        let class = if self.class == FunctionClass::KInf && inner.class == FunctionClass::KInf {
            FunctionClass::KInf
        } else {
            FunctionClass::K
        };
        // Largest r with inner(r) inside the outer domain.
        let cap = if inner.eval_unchecked(inner.domain_cap) <= self.domain_cap {
            inner.domain_cap
        } else {
            inner.invert(self.domain_cap)?
        };
        let as_power = |f: &Form| match *f {
            Form::Linear { c } => Some((c, 1.0)),
            Form::Power { c, p } => Some((c, p)),
            _ => None,
        };
        if let (Some((c1, p1)), Some((c2, p2))) = (as_power(&self.form), as_power(&inner.form)) {
            let c = c1 * c2.powf(p1);
            let p = p1 * p2;
            let form = if p == 1.0 {
                Form::Linear { c }
            } else {
                Form::Power { c, p }
            };
            return ComparisonFunction::new(form, class, cap);
        }
        let grid = tabulation_grid(cap);
        let values: Vec<f64> = grid
            .iter()
            .map(|r| self.eval_unchecked(inner.eval_unchecked(*r).min(self.domain_cap)))
            .collect();
        ComparisonFunction::tabulated(grid, values, class)
    }

    /// Local Lipschitz constant on `[0, r]` (exact for parametric forms).
    pub fn lipschitz_on(&self, r: f64) -> f64 {
        match &self.form {
            Form::Linear { c } => *c,
            Form::Power { c, p } if *p >= 1.0 => c * p * r.powf(p - 1.0),
            Form::Power { .. } => f64::INFINITY,
            Form::Saturating { c, s } => c / s,
            Form::ExpDecay { c, rate } => c * rate,
            Form::Tabulated(t) => t.max_chord_slope(r),
        }
    }

    /// Sample-based class membership check.
    pub fn verify_class(&self, claimed: FunctionClass, cfg: &ClassCheckConfig) -> ClassReport {
        let n = cfg.n_samples.max(2);
        let cap = self.domain_cap;
        let grid = log_space(cap * cfg.lowest_fraction, cap, n);
        let vals: Vec<f64> = grid.iter().map(|r| self.eval_unchecked(*r)).collect();
        let mut checks = Vec::new();
        if claimed.vanishes_at_zero() {
            let v0 = self.eval_unchecked(0.0);
            checks.push(ClassCheck {
                property: Property::ZeroAtZero,
                passed: v0 == 0.0,
                detail: format!("f(0) = {v0:e}"),
            });
            let min_pos = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(ClassCheck {
                property: Property::PositiveAwayFromZero,
                passed: min_pos > 0.0,
                detail: format!("min sampled value {min_pos:e}"),
            });
        }
        match claimed {
            FunctionClass::K | FunctionClass::KInf => {
                let bad = vals.windows(2).position(|w| !(w[1] > w[0]));
                checks.push(ClassCheck {
                    property: Property::StrictlyIncreasing,
                    passed: bad.is_none(),
                    detail: match bad {
                        Some(i) => format!("not increasing between r = {:e} and {:e}", grid[i], grid[i + 1]),
                        None => format!("{n} log-spaced samples"),
                    },
                });
            }
            FunctionClass::L => {
                let bad = vals.windows(2).position(|w| !(w[1] < w[0]));
                checks.push(ClassCheck {
                    property: Property::StrictlyDecreasing,
                    passed: bad.is_none(),
                    detail: match bad {
                        Some(i) => format!("not decreasing between r = {:e} and {:e}", grid[i], grid[i + 1]),
                        None => format!("{n} log-spaced samples"),
                    },
                });
                let at_zero = self.eval_unchecked(0.0).max(vals[0]);
                let tail = vals[n - 1];
                checks.push(ClassCheck {
                    property: Property::DecaysToZero,
                    passed: tail <= cfg.decay_tol * at_zero.max(f64::MIN_POSITIVE),
                    detail: format!("f(cap) = {tail:e}, f(0) = {at_zero:e}"),
                });
            }
            FunctionClass::PositiveDefinite => {}
        }
        if claimed == FunctionClass::KInf {
            let top = vals[n - 1];
            checks.push(ClassCheck {
                property: Property::Unbounded,
                passed: top > cfg.unbounded_threshold,
                detail: format!("f(cap) = {top:e} vs threshold {:e}", cfg.unbounded_threshold),
            });
        }
        ClassReport { claimed, checks }
    }
}

fn tabulation_grid(cap: f64) -> Vec<f64> {
    log_grid_with_zero(cap * TABULATION_FLOOR, cap, TABULATION_POINTS)
}

#[derive(Debug, Clone)]
pub struct ClassCheckConfig {
    pub n_samples: usize,
    /// Lowest sampled argument as a fraction of the domain cap.
    pub lowest_fraction: f64,
    /// `f(cap)` must exceed this for the K-infinity unboundedness proxy.
    pub unbounded_threshold: f64,
    /// `f(cap) <= decay_tol * f(0)` for the L-class decay check.
    pub decay_tol: f64,
}

impl Default for ClassCheckConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_CLASS_SAMPLES,
            lowest_fraction: 1.0e-9,
            unbounded_threshold: 1.0e3,
            decay_tol: 1.0e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    ZeroAtZero,
    PositiveAwayFromZero,
    StrictlyIncreasing,
    StrictlyDecreasing,
    Unbounded,
    DecaysToZero,
}

#[derive(Debug, Clone)]
pub struct ClassCheck {
    pub property: Property,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ClassReport {
    pub claimed: FunctionClass,
    pub checks: Vec<ClassCheck>,
}

impl ClassReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, property: Property) -> Option<&ClassCheck> {
        self.checks.iter().find(|c| c.property == property)
    }
}

/// Class-KL function `β(r, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum KlFunction {
    /// `σ(r) · decay(t)`
    Factored {
        sigma: ComparisonFunction,
        decay: ComparisonFunction,
    },
    /// `shape(M r) · exp(-λ t)`
    ExpFamily {
        m: f64,
        lambda: f64,
        shape: ComparisonFunction,
    },
}

impl KlFunction {
    pub fn exp_family(m: f64, lambda: f64) -> Self {
        KlFunction::ExpFamily {
            m,
            lambda,
            shape: ComparisonFunction::identity(),
        }
    }

    pub fn eval(&self, r: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::OutOfDomain {
                arg: t,
                cap: f64::INFINITY,
            });
        }
        match self {
            KlFunction::Factored { sigma, decay } => {
                let tt = t.min(decay.domain_cap());
                Ok(sigma.eval(r)? * decay.eval(tt)?)
            }
            KlFunction::ExpFamily { m, lambda, shape } => Ok(shape.eval(m * r)? * (-lambda * t).exp()),
        }
    }

    /// `α(r) = β(r, 0)` as a comparison function.
    pub fn at_time_zero(&self) -> Result<ComparisonFunction> {
        match self {
            KlFunction::Factored { sigma, decay } => ComparisonFunction::linear(decay.eval(0.0)?).compose(sigma),
            KlFunction::ExpFamily { m, shape, .. } => shape.compose(&ComparisonFunction::linear(*m)),
        }
    }

    /// Decay rate when the family is exponential in time.
    pub fn decay_rate(&self) -> Option<f64> {
        match self {
            KlFunction::ExpFamily { lambda, .. } => Some(*lambda),
            KlFunction::Factored { decay, .. } => match decay.form() {
                Form::ExpDecay { rate, .. } => Some(*rate),
                _ => None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn parametric_values() {
        assert_eq!(ComparisonFunction::linear(2.0).eval(3.0).unwrap(), 6.0);
        assert_eq!(ComparisonFunction::power(1.0, 2.0).eval(0.5).unwrap(), 0.25);
        for f in [
            ComparisonFunction::linear(3.0),
            ComparisonFunction::power(2.0, 0.5),
            ComparisonFunction::saturating(1.0, 2.0),
        ] {
            assert_eq!(f.eval(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn out_of_domain() {
        let t = ComparisonFunction::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 8.0], FunctionClass::KInf).unwrap();
        assert!(matches!(t.eval(2.5), Err(Error::OutOfDomain { .. })));
        assert!(ComparisonFunction::linear(1.0).eval(-1.0).is_err());
        assert!(ComparisonFunction::linear(1.0).eval(2.0e6).is_err());
    }

    #[test]
    fn closed_form_inverse() {
        assert_eq!(ComparisonFunction::linear(2.0).invert(6.0).unwrap(), 3.0);
        assert_relative_eq!(ComparisonFunction::power(1.0, 2.0).invert(0.25).unwrap(), 0.5);
        assert!(matches!(
            ComparisonFunction::saturating(1.0, 1.0).invert(2.0),
            Err(Error::RangeExceeded { .. })
        ));
    }

    #[test]
    fn scaling_is_exact_in_every_form() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = grid.iter().map(|r| r * r + r).collect();
        let fs = [
            ComparisonFunction::linear(3.0),
            ComparisonFunction::power(2.0, 0.5),
            ComparisonFunction::saturating(1.0, 2.0),
            ComparisonFunction::tabulated(grid.clone(), vals.clone(), FunctionClass::KInf).unwrap(),
            ComparisonFunction::piecewise_linear(grid, vals, FunctionClass::KInf).unwrap(),
        ];
        for f in fs {
            let g = f.scaled(0.25).unwrap();
            assert_eq!(g.class(), f.class());
            assert_eq!(g.domain_cap(), f.domain_cap());
            for r in [0.0, 1e-3, 0.37, 1.0, 1.95] {
                assert_relative_eq!(g.eval(r).unwrap(), 0.25 * f.eval(r).unwrap(), max_relative = 1e-13);
            }
        }
        assert!(ComparisonFunction::linear(1.0).scaled(0.0).is_err());
    }

    #[test]
    fn tabulated_cube_inverse() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let vals: Vec<f64> = grid.iter().map(|r| r * r * r).collect();
        let f = ComparisonFunction::tabulated(grid, vals, FunctionClass::KInf).unwrap();
        // Oracle: analytic cube root of 1.
        let r = f.invert(1.0).unwrap();
        assert!((r - 1.0f64.cbrt()).abs() < 1e-9, "r = {r}");
        assert!(matches!(f.invert(9.0), Err(Error::RangeExceeded { .. })));
    }

    #[test]
    fn composition() {
        let f = ComparisonFunction::linear(2.0)
            .compose(&ComparisonFunction::linear(3.0))
            .unwrap();
        assert_eq!(f.eval(1.0).unwrap(), 6.0);
        let g = ComparisonFunction::saturating(2.0, 1.0);
        let id_g = ComparisonFunction::identity().compose(&g).unwrap();
        for r in [0.0, 1e-3, 0.5, 1.0, 10.0, 1e3] {
            assert_relative_eq!(id_g.eval(r).unwrap(), g.eval(r).unwrap(), max_relative = 1e-6);
        }
        // γ⁻¹(¼ α⁻¹(⅔ r)) with γ = g·id, α = C·id simplifies to r / (6 g C).
        let (gain, c) = (1.7, 2.3);
        let gamma_inv = ComparisonFunction::linear(gain).inverse().unwrap();
        let alpha_inv = ComparisonFunction::linear(c).inverse().unwrap();
        let chain = gamma_inv
            .compose(&ComparisonFunction::linear(0.25))
            .unwrap()
            .compose(&alpha_inv)
            .unwrap()
            .compose(&ComparisonFunction::linear(2.0 / 3.0))
            .unwrap();
        for r in [0.1, 1.0, 7.0] {
            assert_relative_eq!(chain.eval(r).unwrap(), r / (6.0 * gain * c), max_relative = 1e-14);
        }
    }

    #[test]
    fn compose_rejects_l_class() {
        let l = ComparisonFunction::exp_decay(1.0, 1.0);
        assert!(matches!(
            ComparisonFunction::linear(1.0).compose(&l),
            Err(Error::ClassIncompatible { .. })
        ));
    }

    #[test]
    fn class_reports() {
        let cfg = ClassCheckConfig::default();
        assert!(ComparisonFunction::linear(1.0)
            .verify_class(FunctionClass::KInf, &cfg)
            .passed());
        let sat = ComparisonFunction::saturating(1.0, 1.0).verify_class(FunctionClass::KInf, &cfg);
        assert!(!sat.check(Property::Unbounded).unwrap().passed);
        assert!(sat.check(Property::StrictlyIncreasing).unwrap().passed);
        let zero = ComparisonFunction::linear(0.0).verify_class(FunctionClass::K, &cfg);
        assert!(!zero.check(Property::StrictlyIncreasing).unwrap().passed);
        let decay = ComparisonFunction::exp_decay(1.0, 1.0).with_domain_cap(50.0);
        assert!(decay.verify_class(FunctionClass::L, &cfg).passed());
    }

    #[test]
    fn kl_values() {
        let b = KlFunction::exp_family(1.0, 1.0);
        assert_eq!(b.eval(2.0, 0.0).unwrap(), 2.0);
        assert_eq!(b.eval(0.0, 3.0).unwrap(), 0.0);
        let b2 = KlFunction::exp_family(2.0, 1.0);
        assert_relative_eq!(b2.eval(1.0, 2.0f64.ln()).unwrap(), 1.0, max_relative = 1e-15);
        let f = KlFunction::Factored {
            sigma: ComparisonFunction::power(1.0, 2.0),
            decay: ComparisonFunction::exp_decay(1.0, 0.5),
        };
        assert_eq!(f.eval(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(f.at_time_zero().unwrap().eval(3.0).unwrap(), 9.0);
    }

    fn sample_functions() -> Vec<ComparisonFunction> {
        let grid = log_grid_with_zero(1e-4, 1e3, 64);
        let vals = grid.iter().map(|r| r.powf(1.5) + r).collect();
        vec![
            ComparisonFunction::linear(0.7),
            ComparisonFunction::power(2.0, 0.5),
            ComparisonFunction::power(0.3, 3.0),
            ComparisonFunction::saturating(5.0, 2.0),
            ComparisonFunction::tabulated(grid, vals, FunctionClass::KInf).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn inversion_round_trip(idx in 0usize..5, frac in 0.0f64..1.0) {
            let f = &sample_functions()[idx];
            let top = f.eval(f.domain_cap().min(1e3)).unwrap();
            let y = frac * top;
            let r = f.invert(y).unwrap();
            prop_assert!((f.eval(r).unwrap() - y).abs() <= 1e-9 * y.max(1.0));
        }

        #[test]
        fn composition_pointwise(i in 0usize..5, j in 0usize..5, r in 1e-3f64..100.0) {
            let fs = sample_functions();
            let inner = fs[j].eval(r).unwrap();
            prop_assume!(inner <= fs[i].domain_cap());
            let h = fs[i].compose(&fs[j]).unwrap();
            let direct = fs[i].eval(fs[j].eval(r).unwrap()).unwrap();
            prop_assert!((h.eval(r).unwrap() - direct).abs() <= 1e-4 * direct.max(1e-12));
        }

        #[test]
        fn kl_monotone(m in 1.0f64..5.0, lam in 0.1f64..3.0, r in 0.0f64..10.0, t in 0.0f64..10.0) {
            let b = KlFunction::ExpFamily { m, lambda: lam, shape: ComparisonFunction::power(1.0, 1.3) };
            prop_assert!(b.eval(r, t + 0.1).unwrap() <= b.eval(r, t).unwrap());
            prop_assert!(b.eval(r + 0.1, t).unwrap() >= b.eval(r, t).unwrap());
        }
    }
}
