//! Seeded random sampling of states, inputs and point pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::semigroup::{NormKind, State};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn state_norm(kind: NormKind, x: &State) -> f64 {
    match kind {
        NormKind::WeightedL2 { weight } => weight.sqrt() * x.norm(),
        NormKind::Sup => x.amax(),
    }
}

/// Random vector with norm exactly `radius`.
pub fn on_sphere(rng: &mut SampleRng, dim: usize, radius: f64, kind: NormKind) -> State {
    loop {
        let v = State::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = state_norm(kind, &v);
        if n > 1e-300 {
            return v * (radius / n);
        }
    }
}

/// Uniform-in-radius sample from the closed ball of radius `radius`.
pub fn in_ball(rng: &mut SampleRng, dim: usize, radius: f64, kind: NormKind) -> State {
    let rho = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    on_sphere(rng, dim, rho, kind)
}

/// Point pairs in the ball of radius `radius`.
///
/// Half the pairs are independent uniform samples. A quarter sit near the
/// boundary sphere, where difference quotients of smooth maps peak, and a
/// quarter sit near the origin, where non-Lipschitz maps like `u^{1/3}` show
/// up. Close pairs have separation log-uniform in `[min_sep, 0.1 radius]`.
pub fn pairs_in_ball(
    rng: &mut SampleRng,
    dim: usize,
    radius: f64,
    kind: NormKind,
    n_pairs: usize,
    min_sep: f64,
) -> Vec<(State, State)> {
    let mut out = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        if i % 2 == 0 {
            out.push((in_ball(rng, dim, radius, kind), in_ball(rng, dim, radius, kind)));
        } else {
            let lo = (min_sep / radius).max(1e-12).ln();
            let hi = 0.1f64.ln();
            let sep = radius * (lo + (hi - lo) * rng.random::<f64>()).exp();
            let x = if i % 4 == 1 {
                let rho = radius * (1.0 - 0.05 * rng.random::<f64>());
                on_sphere(rng, dim, rho, kind)
            } else {
                in_ball(rng, dim, 0.5 * sep, kind)
            };
            let mut y = &x + on_sphere(rng, dim, sep, kind);
            let ny = state_norm(kind, &y);
            if ny > radius {
                y *= radius / ny;
            }
            out.push((x, y));
        }
    }
    out
}
