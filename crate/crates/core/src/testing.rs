//! Shared fixtures for unit tests.

use nalgebra::DMatrix;

use crate::geometry::{DiscreteShape, Topology};
use crate::sampling::{row_means, SnapshotSet};

pub(crate) fn toy_shape(l: usize, seed: u64) -> DiscreteShape {
    let nodes = (0..l).map(|i| [i as f64, 0.0, 0.0]).collect();
    let measures = (0..l).map(|i| 0.5 + ((i as u64 * 7 + seed) % 5) as f64 * 0.3).collect();
    let weights = (0..l).map(|i| 1.0 + ((i as u64 * 3 + seed) % 4) as f64 * 0.5).collect();
    DiscreteShape::new(nodes, measures, weights, Topology::grid(1, l)).unwrap()
}

pub(crate) fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

/// Linear toy: δ = B u with random B, centered.
pub(crate) fn linear_toy(l: usize, m: usize, s: usize, seed: u64) -> (SnapshotSet, DiscreteShape, DMatrix<f64>) {
    let mut st = seed.wrapping_add(1);
    let b = DMatrix::from_fn(3 * l, m, |_, _| lcg(&mut st));
    let u = DMatrix::from_fn(m, s, |_, _| lcg(&mut st));
    let d = &b * &u;
    let mean_d = row_means(&d);
    let mean_u = row_means(&u);
    let mut dc = d.clone();
    let mut uc = u.clone();
    for j in 0..s {
        for r in 0..3 * l {
            dc[(r, j)] -= mean_d[r];
        }
        for r in 0..m {
            uc[(r, j)] -= mean_u[r];
        }
    }
    (SnapshotSet::from_parts(dc, uc, mean_d, mean_u, seed), toy_shape(l, seed), b)
}

