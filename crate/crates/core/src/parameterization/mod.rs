//! Original parametric models: maps from a design vector `u` to a
//! displacement field over a discretized shape.
//!
//! Both supported models are linear in `u`, so a registered parameterization
//! is stored as its dense `3L × M` influence matrix.

mod bezier;
mod ffd;

pub use bezier::{de_casteljau, make_bezier_airfoil, naca_half_thickness, BezierAirfoilSpec, BEZIER_DEGREE};
pub use ffd::{make_ffd_hull, table1_active_dofs, ActiveDof, FfdLatticeSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PmeError, Result};
use crate::geometry::{DiscreteShape, DisplacementField, Point};

/// `C(n, i) tⁱ (1 − t)^(n−i)`.
pub fn bernstein(i: usize, n: usize, t: f64) -> Result<f64> {
    if i > n {
        return Err(PmeError::Index { index: i, max: n });
    }
    Ok(bernstein_unchecked(i, n, t))
}

pub(crate) fn bernstein_unchecked(i: usize, n: usize, t: f64) -> f64 {
    binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Box bounds of the original design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DesignBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("design bounds", lower.len(), upper.len())?;
        if let Some(j) = lower.iter().zip(&upper).position(|(l, u)| !(l < u)) {
            return Err(PmeError::InvalidSpec(format!(
                "bound {j}: lower {} must be below upper {}",
                lower[j], upper[j]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

/// A point of the original design space together with its box. Values outside
/// the box are representable: reconstructions from a latent space may land
/// there and the optimizer must see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DesignVector {
    pub fn new(values: Vec<f64>, bounds: &DesignBounds) -> Result<Self> {
        check_len("design vector", bounds.dimension(), values.len())?;
        Ok(Self {
            values,
            lower: bounds.lower.clone(),
            upper: bounds.upper.clone(),
        })
    }

    pub fn zeros(bounds: &DesignBounds) -> Self {
        Self {
            values: vec![0.0; bounds.dimension()],
            lower: bounds.lower.clone(),
            upper: bounds.upper.clone(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParameterizationSpec {
    BezierAirfoil(BezierAirfoilSpec),
    FfdLattice(FfdLatticeSpec),
}

impl ParameterizationSpec {
    pub fn dimension(&self) -> usize {
        match self {
            Self::BezierAirfoil(s) => 2 * s.active.len(),
            Self::FfdLattice(s) => s.active.len(),
        }
    }

    pub fn bounds(&self) -> DesignBounds {
        match self {
            Self::BezierAirfoil(s) => {
                let m = 2 * s.active.len();
                DesignBounds {
                    lower: vec![s.lower; m],
                    upper: vec![s.upper; m],
                }
            }
            Self::FfdLattice(s) => DesignBounds {
                lower: s.active.iter().map(|a| a.lower).collect(),
                upper: s.active.iter().map(|a| a.upper).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::BezierAirfoil(s) => s.validate()?,
            Self::FfdLattice(s) => s.validate()?,
        }
        let b = self.bounds();
        DesignBounds::new(b.lower, b.upper).map(|_| ())
    }
}

/// A parameterization registered on a baseline shape.
#[derive(Debug, Clone)]
pub struct Parameterization {
    spec: ParameterizationSpec,
    bounds: DesignBounds,
    influence: DMatrix<f64>,
}

impl Parameterization {
    /// Precomputes per-node parametric coordinates and the influence matrix.
    pub fn register(spec: ParameterizationSpec, baseline: &DiscreteShape) -> Result<Self> {
        spec.validate()?;
        let influence = match &spec {
            ParameterizationSpec::BezierAirfoil(s) => s.influence(baseline)?,
            ParameterizationSpec::FfdLattice(s) => s.influence(baseline)?,
        };
        let bounds = spec.bounds();
        Ok(Self {
            spec,
            bounds,
            influence,
        })
    }

    pub fn spec(&self) -> &ParameterizationSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &DesignBounds {
        &self.bounds
    }

    pub fn dimension(&self) -> usize {
        self.influence.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.influence.nrows() / 3
    }

    /// `∂δ/∂u`, a `3L × M` matrix in block layout.
    pub fn influence(&self) -> &DMatrix<f64> {
        &self.influence
    }

    pub fn deform(&self, u: &DesignVector) -> Result<DisplacementField> {
        self.deform_values(&u.values)
    }

    pub fn deform_values(&self, u: &[f64]) -> Result<DisplacementField> {
        check_len("design vector", self.dimension(), u.len())?;
        let d = &self.influence * DVector::from_column_slice(u);
        Ok(DisplacementField(d.as_slice().to_vec()))
    }
}

/// `g' = g + δ`: node-wise sum, measures and weights copied from the baseline.
pub fn apply(baseline: &DiscreteShape, d: &DisplacementField) -> Result<DiscreteShape> {
    d.conform(baseline)?;
    let nodes: Vec<Point> = baseline
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = d.node(i);
            [p[0] + q[0], p[1] + q[1], p[2] + q[2]]
        })
        .collect();
    baseline.with_nodes(nodes)
}
