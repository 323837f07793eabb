//! Discrete Karhunen-Loève expansion of the shape-modification snapshots.
//!
//! The generalized eigenproblem `A G W Z = Z Λ`, `A = D Dᵀ / S`, is solved
//! through the symmetric `S × S` snapshot problem
//! `(1/S) Dᵀ (GW) D Y = Y Λ`, then `Z = D Y Λ^{-1/2} / √S`. This satisfies the
//! original eigenproblem and `Zᵀ (GW) Z = I` on the nonzero spectrum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PmeError, Result};
use crate::geometry::{weighted_dot, DiscreteShape, DisplacementField};
use crate::sampling::SnapshotSet;

/// Eigenvalues below this fraction of the largest are numerical zeros.
pub const RANK_CUTOFF: f64 = 1e-12;

pub const NORMALIZATION: &str = "Z^T (G W) Z = I";
pub const SIGN_CONVENTION: &str = "largest-magnitude entry positive, ties to lowest index";

#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    z: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    sigma2: f64,
    retained: usize,
    confidence: f64,
    source_hash: String,
}

/// Latent coordinates in a modal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedVector(pub Vec<f64>);

impl ReducedVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl ModalBasis {
    pub fn from_parts(
        z: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        sigma2: f64,
        retained: usize,
        confidence: f64,
        source_hash: String,
    ) -> Result<Self> {
        check_len("basis eigenvalues", z.ncols(), eigenvalues.len())?;
        if retained == 0 || retained > eigenvalues.len() {
            return Err(PmeError::Config(format!(
                "retained count {retained} outside 1..={}",
                eigenvalues.len()
            )));
        }
        Ok(Self {
            z,
            eigenvalues,
            sigma2,
            retained,
            confidence,
            source_hash,
        })
    }

    /// All `r` geometric modes, one per column.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Retained count `N`.
    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn mode(&self, k: usize) -> DisplacementField {
        DisplacementField(self.z.column(k).as_slice().to_vec())
    }

    /// Cumulative retained variance fraction for `1..=r` modes.
    pub fn cumulative_fraction(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                acc / self.sigma2
            })
            .collect()
    }

    /// Same modes with a different retained count.
    pub fn with_retained(&self, n: usize) -> Result<Self> {
        Self::from_parts(
            self.z.clone(),
            self.eigenvalues.clone(),
            self.sigma2,
            n,
            self.confidence,
            self.source_hash.clone(),
        )
    }
}

/// Smallest `N` with `Σ_{k≤N} λ_k ≥ l σ²`; equality to round-off counts.
pub fn select_mode_count(eigenvalues: &[f64], sigma2: f64, confidence: f64) -> usize {
    let target = confidence * sigma2;
    let slack = 8.0 * f64::EPSILON * sigma2;
    let mut acc = 0.0;
    for (k, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= target - slack {
            return k + 1;
        }
    }
    eigenvalues.len()
}

/// Flips each column so its largest-magnitude entry is positive.
pub(crate) fn apply_sign_convention(z: &mut DMatrix<f64>) -> Vec<bool> {
    let mut flipped = Vec::with_capacity(z.ncols());
    for mut col in z.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        let flip = col[best] < 0.0;
        if flip {
            col.neg_mut();
        }
        flipped.push(flip);
    }
    flipped
}

fn sqrt_weighted(d: &DMatrix<f64>, gw: &[f64]) -> DMatrix<f64> {
    let mut dw = d.clone();
    for mut col in dw.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(gw) {
            *v *= w.sqrt();
        }
    }
    dw
}

pub fn solve_kle(set: &SnapshotSet, shape: &DiscreteShape, confidence: f64) -> Result<ModalBasis> {
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(PmeError::Config(format!("confidence {confidence} outside (0, 1]")));
    }
    let s = set.samples();
    if s < 2 {
        return Err(PmeError::Config("need at least 2 snapshots".into()));
    }
    let gw = shape.gw_diagonal();
    check_len("snapshot rows", gw.len(), set.d().nrows())?;
    let dw = sqrt_weighted(set.d(), &gw);
    let gram = dw.tr_mul(&dw) / s as f64;
    if gram.diagonal().iter().all(|v| *v == 0.0) {
        return Err(PmeError::DegenerateSpectrum("all snapshots have zero weighted norm".into()));
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(PmeError::DegenerateSpectrum("no positive eigenvalue".into()));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&i| eig.eigenvalues[i] > RANK_CUTOFF * top)
        .collect();
    let r = kept.len();
    let eigenvalues: Vec<f64> = kept.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut y = DMatrix::zeros(s, r);
    for (c, &i) in kept.iter().enumerate() {
        let scale = 1.0 / (eigenvalues[c] * s as f64).sqrt();
        y.column_mut(c).copy_from(&(eig.eigenvectors.column(i) * scale));
    }
    let mut z = set.d() * y;
    apply_sign_convention(&mut z);
    let sigma2 = set.variance(shape)?;
    let retained = select_mode_count(&eigenvalues, sigma2, confidence);
    ModalBasis::from_parts(z, eigenvalues, sigma2, retained, confidence, set.hash().to_string())
}

/// `x_k = z_kᵀ (GW) d̂` for the retained modes.
pub fn project(basis: &ModalBasis, d_hat: &DisplacementField, shape: &DiscreteShape) -> Result<ReducedVector> {
    project_n(basis, d_hat, shape, basis.retained())
}

pub fn project_n(basis: &ModalBasis, d_hat: &DisplacementField, shape: &DiscreteShape, n: usize) -> Result<ReducedVector> {
    d_hat.conform(shape)?;
    check_len("basis rows", basis.z.nrows(), d_hat.0.len())?;
    if n > basis.rank() {
        return Err(PmeError::Index { index: n, max: basis.rank() });
    }
    let nw = shape.node_weights();
    Ok(ReducedVector(
        (0..n)
            .map(|k| weighted_dot(basis.z.column(k).as_slice(), &d_hat.0, &nw))
            .collect(),
    ))
}

/// Projections of every snapshot, `n × S`.
pub fn project_set(basis: &ModalBasis, set: &SnapshotSet, shape: &DiscreteShape, n: usize) -> Result<DMatrix<f64>> {
    let gw = shape.gw_diagonal();
    check_len("snapshot rows", gw.len(), set.d().nrows())?;
    if n > basis.rank() {
        return Err(PmeError::Index { index: n, max: basis.rank() });
    }
    let mut zw = basis.z.columns(0, n).into_owned();
    for mut col in zw.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(&gw) {
            *v *= w;
        }
    }
    Ok(zw.tr_mul(set.d()))
}

/// `⟨δ⟩ + Σ x_k z_k`.
pub fn reconstruct_shape(basis: &ModalBasis, x: &ReducedVector, mean_delta: &[f64]) -> Result<DisplacementField> {
    check_len("mean field", basis.z.nrows(), mean_delta.len())?;
    if x.len() > basis.rank() {
        return Err(PmeError::Index { index: x.len(), max: basis.rank() });
    }
    let mut out = DVector::from_column_slice(mean_delta);
    for (k, xk) in x.0.iter().enumerate() {
        out.axpy(*xk, &basis.z.column(k), 1.0);
    }
    Ok(DisplacementField(out.as_slice().to_vec()))
}

/// Per-sample squared residual norms `‖d_j − d̂_j‖²_ρ` under an `n`-mode reconstruction.
fn residual_norms(basis: &ModalBasis, set: &SnapshotSet, shape: &DiscreteShape, n: usize) -> Result<Vec<f64>> {
    let x = project_set(basis, set, shape, n)?;
    let residual = set.d() - basis.z.columns(0, n) * x;
    let nw = shape.node_weights();
    Ok(residual
        .column_iter()
        .map(|c| weighted_dot(c.as_slice(), c.as_slice(), &nw))
        .collect())
}

fn snapshot_norms(set: &SnapshotSet, shape: &DiscreteShape) -> Vec<f64> {
    let nw = shape.node_weights();
    set.d()
        .column_iter()
        .map(|c| weighted_dot(c.as_slice(), c.as_slice(), &nw))
        .collect()
}

/// `Σ_j ‖d_j − d̂_j‖² / Σ_j ‖d_j‖²` with an `n`-mode reconstruction.
pub fn nmse(basis: &ModalBasis, set: &SnapshotSet, shape: &DiscreteShape, n: usize) -> Result<f64> {
    let res: f64 = residual_norms(basis, set, shape, n)?.iter().sum();
    let tot: f64 = snapshot_norms(set, shape).iter().sum();
    Ok(res / tot)
}

/// `‖d_j − d̂_j‖² / (Σ_j ‖d_j‖² / S)` for every sample.
pub fn nse_per_sample(basis: &ModalBasis, set: &SnapshotSet, shape: &DiscreteShape, n: usize) -> Result<Vec<f64>> {
    let res = residual_norms(basis, set, shape, n)?;
    let mean: f64 = snapshot_norms(set, shape).iter().sum::<f64>() / set.samples() as f64;
    Ok(res.into_iter().map(|r| r / mean).collect())
}

/// NMSE for `n = 0..=r`, by peeling one mode at a time off the residual.
pub fn nmse_curve(basis: &ModalBasis, set: &SnapshotSet, shape: &DiscreteShape) -> Result<Vec<f64>> {
    let r = basis.rank();
    let x = project_set(basis, set, shape, r)?;
    let nw = shape.node_weights();
    let norm2 = |m: &DMatrix<f64>| -> f64 {
        m.column_iter().map(|c| weighted_dot(c.as_slice(), c.as_slice(), &nw)).sum()
    };
    let mut residual = set.d().clone();
    let total = norm2(&residual);
    let mut curve = Vec::with_capacity(r + 1);
    curve.push(1.0);
    for k in 0..r {
        residual.ger(-1.0, &basis.z.column(k), &x.row(k).transpose(), 1.0);
        curve.push(norm2(&residual) / total);
    }
    Ok(curve)
}
