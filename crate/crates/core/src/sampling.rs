//! Monte Carlo sampling of the original design space and assembly of the
//! centered snapshot matrices.
//!
//! Designs are drawn from ChaCha8 seeded with `seed_from_u64`; each uniform
//! variate uses the top 53 bits of one `next_u64` call, components in order
//! within a sample, samples in order. This keeps streams identical across
//! platforms.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::hash_parts;
use crate::error::{check_len, PmeError, Result};
use crate::geometry::{weighted_dot, DiscreteShape, DisplacementField};
use crate::parameterization::{DesignBounds, DesignVector, Parameterization};

/// Centered shape-modification snapshots `D` (3L × S) and design snapshots
/// `U` (M × S) with their means.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    d: DMatrix<f64>,
    u: DMatrix<f64>,
    mean_delta: Vec<f64>,
    mean_u: Vec<f64>,
    seed: u64,
    hash: String,
}

pub(crate) fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `s` i.i.d. uniform designs in the box.
pub fn sample_designs(bounds: &DesignBounds, s: usize, seed: u64) -> Result<Vec<DesignVector>> {
    if s < 2 {
        return Err(PmeError::Config(format!("need at least 2 samples, got {s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..s)
        .map(|_| {
            let values = bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .map(|(lo, hi)| lo + (hi - lo) * unit_uniform(&mut rng))
                .collect();
            DesignVector {
                values,
                lower: bounds.lower.clone(),
                upper: bounds.upper.clone(),
            }
        })
        .collect())
}

/// Row means by a two-pass scheme (mean, then mean of residuals as a correction).
pub(crate) fn row_means(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.ncols() as f64;
    (0..m.nrows())
        .map(|r| {
            let row = m.row(r);
            let mean = row.iter().sum::<f64>() / s;
            let corr = row.iter().map(|v| v - mean).sum::<f64>() / s;
            mean + corr
        })
        .collect()
}

fn center(m: &mut DMatrix<f64>, means: &[f64]) {
    for mut col in m.column_iter_mut() {
        for (v, mu) in col.iter_mut().zip(means) {
            *v -= mu;
        }
    }
}

/// Evaluates every design and centers the results.
pub fn assemble(param: &Parameterization, baseline: &DiscreteShape, designs: &[DesignVector], seed: u64) -> Result<SnapshotSet> {
    if designs.is_empty() {
        return Err(PmeError::Config("no designs to assemble".into()));
    }
    check_len("parameterization nodes", baseline.len(), param.node_count())?;
    let rows = 3 * baseline.len();
    let m = param.dimension();
    let s = designs.len();
    let mut d = DMatrix::zeros(rows, s);
    let mut u = DMatrix::zeros(m, s);
    for (j, design) in designs.iter().enumerate() {
        let field = param.deform(design).map_err(|e| PmeError::Sample {
            index: j,
            source: Box::new(e),
        })?;
        d.column_mut(j).copy_from_slice(field.values());
        u.column_mut(j).copy_from_slice(&design.values);
    }
    let mean_delta = row_means(&d);
    let mean_u = row_means(&u);
    center(&mut d, &mean_delta);
    center(&mut u, &mean_u);
    Ok(SnapshotSet::from_parts(d, u, mean_delta, mean_u, seed))
}

impl SnapshotSet {
    pub fn from_parts(d: DMatrix<f64>, u: DMatrix<f64>, mean_delta: Vec<f64>, mean_u: Vec<f64>, seed: u64) -> Self {
        let hash = hash_parts(&[d.as_slice(), u.as_slice(), &mean_delta, &mean_u]);
        Self {
            d,
            u,
            mean_delta,
            mean_u,
            seed,
            hash,
        }
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn mean_delta(&self) -> &[f64] {
        &self.mean_delta
    }

    pub fn mean_u(&self) -> &[f64] {
        &self.mean_u
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> usize {
        self.d.ncols()
    }

    pub fn design_dimension(&self) -> usize {
        self.u.nrows()
    }

    /// Content hash over `D`, `U` and both means.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn centered_field(&self, j: usize) -> DisplacementField {
        DisplacementField(self.d.column(j).as_slice().to_vec())
    }

    /// The uncentered design `u_j`.
    pub fn design(&self, j: usize) -> Vec<f64> {
        self.u.column(j).iter().zip(&self.mean_u).map(|(v, m)| v + m).collect()
    }

    /// `⟨‖d_j‖²_ρ⟩`, the geometric variance of the full set.
    pub fn variance(&self, shape: &DiscreteShape) -> Result<f64> {
        check_len("snapshot rows", 3 * shape.len(), self.d.nrows())?;
        let nw = shape.node_weights();
        let total: f64 = self.d.column_iter().map(|c| weighted_dot(c.as_slice(), c.as_slice(), &nw)).sum();
        Ok(total / self.samples() as f64)
    }
}

/// Geometric variance of the first `S'` snapshots, recentered on their own
/// mean, for each checkpoint `S'`.
pub fn variance_convergence(set: &SnapshotSet, shape: &DiscreteShape, checkpoints: &[usize]) -> Result<Vec<(usize, f64)>> {
    check_len("snapshot rows", 3 * shape.len(), set.d.nrows())?;
    let mut prev = 0;
    for &c in checkpoints {
        if c <= prev || c > set.samples() {
            return Err(PmeError::Config(format!(
                "checkpoints must be increasing within 1..={}, got {checkpoints:?}",
                set.samples()
            )));
        }
        prev = c;
    }
    let nw = shape.node_weights();
    let rows = set.d.nrows();
    Ok(checkpoints
        .iter()
        .map(|&sp| {
            let sub = set.d.columns(0, sp);
            let mut mean = vec![0.0; rows];
            for col in sub.column_iter() {
                for (m, v) in mean.iter_mut().zip(col.iter()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= sp as f64);
            let mut buf = vec![0.0; rows];
            let total: f64 = sub
                .column_iter()
                .map(|col| {
                    for ((b, v), m) in buf.iter_mut().zip(col.iter()).zip(&mean) {
                        *b = v - m;
                    }
                    weighted_dot(&buf, &buf, &nw)
                })
                .sum();
            (sp, total / sp as f64)
        })
        .collect())
}

/// `[10, 20, 50, 100, 200, 500, 1000, ...]` capped at `s`, always ending at `s`.
pub fn default_checkpoints(s: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 10;
    'outer: loop {
        for m in [1, 2, 5] {
            let c = decade * m;
            if c >= s {
                break 'outer;
            }
            out.push(c);
        }
        decade *= 10;
    }
    out.push(s);
    out
}
