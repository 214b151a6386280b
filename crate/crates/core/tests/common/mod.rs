#![allow(dead_code)]

use iss_lyap::lyap_linear::LinearSystem;
use iss_lyap::semigroup::{DecayConfig, GeneratorModel, OperatorSpec, State};
use nalgebra::DMatrix;

pub fn scalar_gen(a: f64) -> GeneratorModel {
    GeneratorModel::discretize(&OperatorSpec::Scalar { a }, 1).unwrap()
}

pub fn heat_gen(n: usize) -> GeneratorModel {
    GeneratorModel::discretize(&OperatorSpec::HeatDirichlet { length: 1.0 }, n).unwrap()
}

pub fn jordan_gen() -> GeneratorModel {
    GeneratorModel::discretize(
        &OperatorSpec::Jordan2 {
            lambda0: -1.0,
            coupling: 10.0,
        },
        2,
    )
    .unwrap()
}

pub fn certified(gen: GeneratorModel) -> LinearSystem {
    let n = gen.dim();
    LinearSystem::certified(gen, DMatrix::identity(n, n), &DecayConfig::default()).unwrap()
}

/// `(name, system)` for scalar(−1), heat N=16 and jordan2(−1, 10), each with `B = I`.
pub fn exemplars() -> Vec<(&'static str, LinearSystem)> {
    vec![
        ("scalar", certified(scalar_gen(-1.0))),
        ("heat16", certified(heat_gen(16))),
        ("jordan2", certified(jordan_gen())),
    ]
}

pub fn s(v: f64) -> State {
    State::from_vec(vec![v])
}
