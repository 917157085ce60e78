//! Fixtures shared by the criterion benchmarks.

use nalgebra::DMatrix;

use mgig_core::eval::{generate_synthetic, SyntheticData, SyntheticSpec};
use mgig_core::linalg::{cholesky, SymmetricMatrix};
use mgig_core::{MgigParams, PmfHyperParams, SpdMatrix};

/// A deterministic, well-conditioned SPD matrix with off-diagonal coupling.
pub fn spd(n: usize, scale: f64) -> SpdMatrix {
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            scale * (1.0 + 0.1 * i as f64)
        } else {
            scale * 0.3 / (1.0 + (i as f64 - j as f64).abs())
        }
    });
    cholesky(&SymmetricMatrix::from_upper(m).unwrap()).unwrap()
}

pub fn target(n: usize, nu: f64) -> MgigParams {
    MgigParams::new(spd(n, 2.0), spd(n, 0.5), nu).unwrap()
}

/// A small completion problem with the default hyperparameters at rank 3.
pub fn completion_problem(n: usize, m: usize) -> (SyntheticData, PmfHyperParams) {
    let spec = SyntheticSpec {
        n,
        m,
        hp: PmfHyperParams::new(0.01, 0.05, 0.05, 3).unwrap(),
        delta: 0.2,
    };
    (generate_synthetic(&spec, 7).unwrap(), spec.hp)
}
