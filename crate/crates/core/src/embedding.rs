//! Parametric model embedding: latent coordinates that reconstruct the
//! original design variables.
//!
//! Augmenting `D` with the zero-weighted design rows `U` leaves the spectrum
//! unchanged and adds a lower eigenvector block `V`. The production path uses
//! the closed form `V = C (GW) Z Λ⁻¹` with `C = U Dᵀ / S`; the explicit
//! augmented eigensolve in [`solve_pme_direct`] is kept as a cross-check.

use nalgebra::DMatrix;

use crate::error::{check_len, PmeError, Result};
use crate::geometry::{weighted_dot, DiscreteShape};
use crate::klepca::{project_set, ModalBasis, ReducedVector};
use crate::parameterization::{DesignBounds, DesignVector, Parameterization};
use crate::sampling::SnapshotSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    basis: ModalBasis,
    v: DMatrix<f64>,
    mean_u: Vec<f64>,
    x_lower: Vec<f64>,
    x_upper: Vec<f64>,
    bounds: DesignBounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedOptions {
    /// Number of modes to embed; the basis retained count when `None`.
    pub modes: Option<usize>,
    /// Fractional widening of the latent box on each side.
    pub margin: f64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            modes: None,
            margin: 0.0,
        }
    }
}

impl Embedding {
    pub fn from_parts(
        basis: ModalBasis,
        v: DMatrix<f64>,
        mean_u: Vec<f64>,
        x_lower: Vec<f64>,
        x_upper: Vec<f64>,
        bounds: DesignBounds,
    ) -> Result<Self> {
        if v.ncols() > basis.rank() {
            return Err(PmeError::Index { index: v.ncols(), max: basis.rank() });
        }
        check_len("embedding mean", v.nrows(), mean_u.len())?;
        check_len("embedding bounds", v.nrows(), bounds.dimension())?;
        check_len("latent lower bounds", v.ncols(), x_lower.len())?;
        check_len("latent upper bounds", v.ncols(), x_upper.len())?;
        Ok(Self {
            basis,
            v,
            mean_u,
            x_lower,
            x_upper,
            bounds,
        })
    }

    /// Embedding vectors `v_k`, one column per retained mode (`M × N`).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn mean_u(&self) -> &[f64] {
        &self.mean_u
    }

    pub fn x_lower(&self) -> &[f64] {
        &self.x_lower
    }

    pub fn x_upper(&self) -> &[f64] {
        &self.x_upper
    }

    pub fn bounds(&self) -> &DesignBounds {
        &self.bounds
    }

    pub fn modes(&self) -> usize {
        self.v.ncols()
    }

    /// The basis truncated to the embedded modes.
    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }
}

pub fn embed(set: &SnapshotSet, basis: &ModalBasis, shape: &DiscreteShape, bounds: &DesignBounds) -> Result<Embedding> {
    embed_with(set, basis, shape, bounds, EmbedOptions::default())
}

pub fn embed_with(
    set: &SnapshotSet,
    basis: &ModalBasis,
    shape: &DiscreteShape,
    bounds: &DesignBounds,
    opts: EmbedOptions,
) -> Result<Embedding> {
    if basis.source_hash() != set.hash() {
        return Err(PmeError::Provenance {
            expected: set.hash().to_string(),
            found: basis.source_hash().to_string(),
        });
    }
    check_len("design bounds", set.design_dimension(), bounds.dimension())?;
    let n = opts.modes.unwrap_or(basis.retained());
    if n == 0 || n > basis.rank() {
        return Err(PmeError::Index { index: n, max: basis.rank() });
    }
    // projections α_j = Zₙᵀ (GW) d_j, so C (GW) Zₙ = U αᵀ / S
    let alpha = project_set(basis, set, shape, n)?;
    let s = set.samples() as f64;
    let mut v = set.u() * alpha.transpose() / s;
    for (k, mut col) in v.column_iter_mut().enumerate() {
        col /= basis.eigenvalues()[k];
    }
    let mut x_lower = Vec::with_capacity(n);
    let mut x_upper = Vec::with_capacity(n);
    for row in alpha.row_iter() {
        let lo = row.min();
        let hi = row.max();
        let pad = opts.margin * (hi - lo);
        x_lower.push(lo - pad);
        x_upper.push(hi + pad);
    }
    Embedding::from_parts(basis.with_retained(n)?, v, set.mean_u().to_vec(), x_lower, x_upper, bounds.clone())
}

/// `û = ⟨u⟩ + Σ x_k v_k`. The result may lie outside the original box.
pub fn reconstruct_u(emb: &Embedding, x: &ReducedVector) -> Result<DesignVector> {
    check_len("latent vector", emb.modes(), x.len())?;
    let mut values = emb.mean_u.clone();
    for (k, xk) in x.0.iter().enumerate() {
        for (val, vk) in values.iter_mut().zip(emb.v.column(k).iter()) {
            *val += xk * vk;
        }
    }
    DesignVector::new(values, &emb.bounds)
}

/// `Σ_j max(u_j^l − u_j, u_j − u_j^u, 0)`, zero exactly on the closed box.
pub fn bound_violation(u: &DesignVector) -> f64 {
    u.values
        .iter()
        .zip(u.lower.iter().zip(&u.upper))
        .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
        .sum()
}

/// Per-sample NSE with shapes rebuilt through the design variables:
/// `d̂_j = δ(û(x_j)) − ⟨δ⟩`, normalized like [`crate::klepca::nse_per_sample`].
pub fn nse_via_design_space(
    emb: &Embedding,
    param: &Parameterization,
    set: &SnapshotSet,
    shape: &DiscreteShape,
) -> Result<Vec<f64>> {
    let x = project_set(emb.basis(), set, shape, emb.modes())?;
    let nw = shape.node_weights();
    let mut res = Vec::with_capacity(set.samples());
    let mut total = 0.0;
    for (j, col) in x.column_iter().enumerate() {
        let u = reconstruct_u(emb, &ReducedVector(col.iter().copied().collect()))?;
        let delta = param.deform_values(&u.values)?;
        let d = set.d().column(j);
        let r: Vec<f64> = delta
            .values()
            .iter()
            .zip(set.mean_delta())
            .zip(d.iter())
            .map(|((a, m), dj)| dj - (a - m))
            .collect();
        res.push(weighted_dot(&r, &r, &nw));
        total += weighted_dot(d.as_slice(), d.as_slice(), &nw);
    }
    let mean = total / set.samples() as f64;
    Ok(res.into_iter().map(|r| r / mean).collect())
}

/// Eigenpairs of the explicitly assembled augmented operator.
#[derive(Debug, Clone)]
pub struct DirectSolution {
    /// Real parts of all `3L + M` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Count of eigenvalues above [`DIRECT_ZERO_TOLERANCE`] relative to the largest.
    pub nonzero: usize,
    /// Unit-norm eigenvectors of the nonzero eigenvalues, `(3L + M) × nonzero`.
    pub vectors: DMatrix<f64>,
    /// Number of geometry rows `3L`; rows below are the design block.
    pub geometry_rows: usize,
}

pub const DIRECT_ZERO_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_DIRECT_CAP: usize = 400;

/// Dense non-symmetric eigensolve of `Ã G̃ W̃` with `Ã = P Pᵀ / S`,
/// `P = [D; U]`, `G̃ = diag(G, I)` and `W̃ = diag(W, 0)`. Eigenvectors come
/// from the null space of `Ã G̃ W̃ − λ I` by SVD. Oracle scale only.
pub fn solve_pme_direct(set: &SnapshotSet, shape: &DiscreteShape, cap: usize) -> Result<DirectSolution> {
    let rows = set.d().nrows();
    let m = set.design_dimension();
    let order = rows + m;
    if order > cap {
        return Err(PmeError::SizeCap { order, cap });
    }
    let gw = shape.gw_diagonal();
    check_len("snapshot rows", gw.len(), rows)?;
    let s = set.samples();
    let mut p = DMatrix::zeros(order, s);
    p.rows_mut(0, rows).copy_from(set.d());
    p.rows_mut(rows, m).copy_from(set.u());
    let a = &p * p.transpose() / s as f64;
    let mut op = a;
    for (c, mut col) in op.column_iter_mut().enumerate() {
        let w = if c < rows { gw[c] } else { 0.0 };
        col *= w;
    }
    let mut eigenvalues: Vec<f64> = op.clone().complex_eigenvalues().iter().map(|c| c.re).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let top = eigenvalues[0].abs();
    let nonzero = eigenvalues
        .iter()
        .take_while(|l| **l > DIRECT_ZERO_TOLERANCE * top)
        .count();
    let mut vectors = DMatrix::zeros(order, nonzero);
    for (k, &lam) in eigenvalues.iter().take(nonzero).enumerate() {
        let shifted = &op - DMatrix::identity(order, order) * lam;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
        vectors.column_mut(k).copy_from(&v_t.row(imin).transpose());
    }
    Ok(DirectSolution {
        eigenvalues,
        nonzero,
        vectors,
        geometry_rows: rows,
    })
}

impl DirectSolution {
    /// Splits eigenvector `k` into its geometry and design blocks, rescaled so
    /// the geometry block has unit `(GW)` norm and a positive `(GW)` inner
    /// product with `reference`.
    pub fn normalized_blocks(&self, k: usize, shape: &DiscreteShape, reference: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let col = self.vectors.column(k);
        let gw = shape.gw_diagonal();
        let z = &col.as_slice()[..self.geometry_rows];
        let norm2: f64 = z.iter().zip(&gw).map(|(a, w)| a * a * w).sum();
        let along: f64 = z.iter().zip(&gw).zip(reference).map(|((a, w), r)| a * w * r).sum();
        let scale = along.signum() / norm2.sqrt();
        let scaled: Vec<f64> = col.iter().map(|v| v * scale).collect();
        let (zb, vb) = scaled.split_at(self.geometry_rows);
        (zb.to_vec(), vb.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MeasureScheme, Topology};
    use crate::klepca::{project_n, solve_kle};
    use crate::testing::linear_toy;

    fn toy_bounds(m: usize) -> DesignBounds {
        DesignBounds::new(vec![-1.0; m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn rank_one_closed_form() {
        // δ = u b: the embedding column is 1 / x-per-unit-u
        let l = 4;
        let b: Vec<f64> = (0..3 * l).map(|i| 0.3 + 0.1 * i as f64).collect();
        let us = [-0.8, -0.1, 0.35, 0.55];
        let mean = us.iter().sum::<f64>() / 4.0;
        let d = DMatrix::from_fn(3 * l, 4, |r, c| b[r] * (us[c] - mean));
        let u = DMatrix::from_fn(1, 4, |_, c| us[c] - mean);
        let mean_d: Vec<f64> = b.iter().map(|v| v * mean).collect();
        let set = SnapshotSet::from_parts(d, u, mean_d, vec![mean], 0);
        let nodes = (0..l).map(|i| [i as f64, 0.0, 0.0]).collect();
        let shape = DiscreteShape::from_grid(nodes, Topology::grid(1, l), MeasureScheme::Uniform).unwrap();
        let basis = solve_kle(&set, &shape, 1.0).unwrap();
        let emb = embed(&set, &basis, &shape, &toy_bounds(1)).unwrap();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        // z = b/|b| (sign fixed positive), x = (u-ū)|b|, so v = 1/|b|
        assert!((emb.v()[(0, 0)] - 1.0 / bnorm).abs() < 1e-12);
        for (j, uj) in us.iter().enumerate() {
            let x = project_n(&basis, &set.centered_field(j), &shape, 1).unwrap();
            let back = reconstruct_u(&emb, &x).unwrap();
            assert!((back.values[0] - uj).abs() < 1e-12);
        }
    }

    #[test]
    fn full_rank_pre_image_is_exact() {
        let (set, shape, _) = linear_toy(12, 5, 40, 71);
        let basis = solve_kle(&set, &shape, 1.0).unwrap();
        let emb = embed_with(&set, &basis, &shape, &toy_bounds(5), EmbedOptions { modes: Some(basis.rank()), margin: 0.0 }).unwrap();
        for j in 0..40 {
            let x = project_n(&basis, &set.centered_field(j), &shape, basis.rank()).unwrap();
            let back = reconstruct_u(&emb, &x).unwrap();
            let uj = set.design(j);
            let err: f64 = back.values.iter().zip(&uj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = uj.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-8 * scale, "sample {j}: {err}");
        }
    }

    #[test]
    fn zero_latent_gives_mean_design() {
        let (set, shape, _) = linear_toy(6, 3, 20, 2);
        let basis = solve_kle(&set, &shape, 0.9).unwrap();
        let emb = embed(&set, &basis, &shape, &toy_bounds(3)).unwrap();
        let u = reconstruct_u(&emb, &ReducedVector(vec![0.0; emb.modes()])).unwrap();
        assert_eq!(u.values, set.mean_u());
        assert!(reconstruct_u(&emb, &ReducedVector(vec![0.0; emb.modes() + 1])).is_err());
    }

    #[test]
    fn training_projections_lie_inside_latent_box() {
        let (set, shape, _) = linear_toy(6, 4, 30, 13);
        let basis = solve_kle(&set, &shape, 0.9).unwrap();
        let emb = embed(&set, &basis, &shape, &toy_bounds(4)).unwrap();
        for j in 0..30 {
            let x = project_n(&basis, &set.centered_field(j), &shape, emb.modes()).unwrap();
            for k in 0..emb.modes() {
                assert!(emb.x_lower()[k] <= x.0[k] && x.0[k] <= emb.x_upper()[k]);
            }
        }
        assert!(emb.x_lower().iter().zip(emb.x_upper()).all(|(l, u)| l < u));
        let padded = embed_with(&set, &basis, &shape, &toy_bounds(4), EmbedOptions { modes: None, margin: 0.1 }).unwrap();
        assert!(padded.x_lower()[0] < emb.x_lower()[0]);
    }

    #[test]
    fn provenance_mismatch_is_rejected() {
        let (set, shape, _) = linear_toy(6, 3, 20, 2);
        let (other, _, _) = linear_toy(6, 3, 20, 3);
        let basis = solve_kle(&other, &shape, 0.9).unwrap();
        assert!(matches!(embed(&set, &basis, &shape, &toy_bounds(3)), Err(PmeError::Provenance { .. })));
    }

    #[test]
    fn direct_solve_matches_closed_form() {
        let (set, shape, _) = linear_toy(3, 2, 25, 19);
        let basis = solve_kle(&set, &shape, 1.0).unwrap();
        let emb = embed(&set, &basis, &shape, &toy_bounds(2)).unwrap();
        let direct = solve_pme_direct(&set, &shape, DEFAULT_DIRECT_CAP).unwrap();
        assert_eq!(direct.eigenvalues.len(), 11);
        assert_eq!(direct.nonzero, basis.rank());
        for k in 0..basis.rank() {
            let lam = basis.eigenvalues()[k];
            assert!((direct.eigenvalues[k] - lam).abs() < 1e-10 * lam);
            let (z, v) = direct.normalized_blocks(k, &shape, basis.mode(k).values());
            for (a, b) in z.iter().zip(basis.mode(k).values()) {
                assert!((a - b).abs() < 1e-8);
            }
            for (a, b) in v.iter().zip(emb.v().column(k).iter()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        assert!(direct.eigenvalues[direct.nonzero..].len() >= 2);
    }

    #[test]
    fn decoupled_design_block_has_zero_lower_vectors() {
        let (set, shape, _) = linear_toy(3, 2, 25, 5);
        let zero_u = SnapshotSet::from_parts(set.d().clone(), DMatrix::zeros(2, 25), set.mean_delta().to_vec(), vec![0.0; 2], 0);
        let direct = solve_pme_direct(&zero_u, &shape, DEFAULT_DIRECT_CAP).unwrap();
        assert!(direct.vectors.rows(9, 2).amax() < 1e-12);
    }

    #[test]
    fn direct_solve_size_cap() {
        let (set, shape, _) = linear_toy(10, 3, 12, 1);
        assert!(matches!(solve_pme_direct(&set, &shape, 20), Err(PmeError::SizeCap { order: 33, cap: 20 })));
    }

    #[test]
    fn violation_values() {
        let b = DesignBounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(bound_violation(&DesignVector::new(vec![0.0, 0.0], &b).unwrap()), 0.0);
        assert!((bound_violation(&DesignVector::new(vec![1.3, 0.0], &b).unwrap()) - 0.3).abs() < 1e-15);
        assert_eq!(bound_violation(&DesignVector::new(vec![1.0, -1.0], &b).unwrap()), 0.0);
        assert!((bound_violation(&DesignVector::new(vec![-1.5, 2.0], &b).unwrap()) - 1.5).abs() < 1e-15);
    }
}
