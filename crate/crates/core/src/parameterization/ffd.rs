//! Trivariate Bernstein free-form deformation on an axis-aligned lattice.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{bernstein_unchecked, ParameterizationSpec};
use crate::error::{PmeError, Result};
use crate::geometry::DiscreteShape;

const BOX_TOLERANCE: f64 = 1e-12;

/// One design variable: a lattice node (1-based layer indices) moving along
/// one axis. Bounds are in unit-cube lattice coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveDof {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// Axis of motion, 1 = ξ1, 2 = ξ2, 3 = ξ3.
    pub dof: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfdLatticeSpec {
    pub dims: [usize; 3],
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub active: Vec<ActiveDof>,
}

const fn dof(i: usize, j: usize, k: usize, dof: usize, bound: f64) -> ActiveDof {
    ActiveDof {
        i,
        j,
        k,
        dof,
        lower: -bound,
        upper: bound,
    }
}

/// The 22 design variables of the 9×3×3 hull lattice.
pub fn table1_active_dofs() -> Vec<ActiveDof> {
    let mut rows = Vec::with_capacity(22);
    for k in 1..=2 {
        for i in 1..=9 {
            rows.push(dof(i, 2, k, 2, 0.5));
        }
    }
    rows.push(dof(9, 1, 2, 3, 0.25));
    rows.push(dof(9, 1, 1, 1, 0.025));
    rows.push(dof(9, 1, 1, 3, 0.1));
    rows.push(dof(8, 1, 1, 1, 0.025));
    rows
}

impl FfdLatticeSpec {
    pub(super) fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 2) {
            return Err(PmeError::InvalidSpec(format!("lattice dims {:?} must all be >= 2", self.dims)));
        }
        for a in 0..3 {
            if !(self.box_max[a] > self.box_min[a]) {
                return Err(PmeError::InvalidSpec(format!("lattice box is empty along axis {a}")));
            }
        }
        for (d, row) in self.active.iter().enumerate() {
            let ok = (1..=self.dims[0]).contains(&row.i)
                && (1..=self.dims[1]).contains(&row.j)
                && (1..=self.dims[2]).contains(&row.k)
                && (1..=3).contains(&row.dof);
            if !ok {
                return Err(PmeError::InvalidSpec(format!("active row {} out of lattice range: {row:?}", d + 1)));
            }
        }
        Ok(())
    }

    /// Unit-cube coordinates of every node, or the indices of those outside
    /// the lattice box.
    pub fn local_coordinates(&self, shape: &DiscreteShape) -> Result<Vec<[f64; 3]>> {
        let mut offenders = Vec::new();
        let mut local = Vec::with_capacity(shape.len());
        for (n, p) in shape.nodes().iter().enumerate() {
            let mut s = [0.0; 3];
            let mut inside = true;
            for a in 0..3 {
                let v = (p[a] - self.box_min[a]) / (self.box_max[a] - self.box_min[a]);
                if !(-BOX_TOLERANCE..=1.0 + BOX_TOLERANCE).contains(&v) {
                    inside = false;
                }
                s[a] = v.clamp(0.0, 1.0);
            }
            if !inside {
                offenders.push(n);
            }
            local.push(s);
        }
        if offenders.is_empty() {
            Ok(local)
        } else {
            Err(PmeError::Registration { offenders })
        }
    }

    pub(super) fn influence(&self, baseline: &DiscreteShape) -> Result<DMatrix<f64>> {
        let local = self.local_coordinates(baseline)?;
        let l = baseline.len();
        let deg = [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1];
        let span: Vec<f64> = (0..3).map(|a| self.box_max[a] - self.box_min[a]).collect();
        let mut m = DMatrix::zeros(3 * l, self.active.len());
        for (col, row) in self.active.iter().enumerate() {
            let axis = row.dof - 1;
            for (n, s) in local.iter().enumerate() {
                let w = bernstein_unchecked(row.i - 1, deg[0], s[0])
                    * bernstein_unchecked(row.j - 1, deg[1], s[1])
                    * bernstein_unchecked(row.k - 1, deg[2], s[2]);
                m[(axis * l + n, col)] = w * span[axis];
            }
        }
        Ok(m)
    }
}

/// FFD spec over an axis-aligned lattice. Fails with the list of nodes
/// outside the box.
pub fn make_ffd_hull(
    dims: [usize; 3],
    box_min: [f64; 3],
    box_max: [f64; 3],
    active: Vec<ActiveDof>,
    baseline: &DiscreteShape,
) -> Result<ParameterizationSpec> {
    let spec = FfdLatticeSpec {
        dims,
        box_min,
        box_max,
        active,
    };
    spec.validate()?;
    spec.local_coordinates(baseline)?;
    Ok(ParameterizationSpec::FfdLattice(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::solids::{wigley_demi_hull, HullDimensions};
    use crate::geometry::{bounding_extents, MeasureScheme, Topology};
    use crate::parameterization::{bernstein, Parameterization};

    fn hull_setup() -> (DiscreteShape, ParameterizationSpec, [f64; 3], [f64; 3]) {
        let dims = HullDimensions::default();
        let hull = wigley_demi_hull(&dims, MeasureScheme::Uniform);
        let lo = [-0.5 * dims.length, 0.0, -dims.draught];
        let hi = [0.5 * dims.length, 0.5 * dims.beam, dims.freeboard];
        let spec = make_ffd_hull([9, 3, 3], lo, hi, table1_active_dofs(), &hull).unwrap();
        (hull, spec, lo, hi)
    }

    #[test]
    fn table1_has_22_rows() {
        let t = table1_active_dofs();
        assert_eq!(t.len(), 22);
        assert_eq!(t[18], ActiveDof { i: 9, j: 1, k: 2, dof: 3, lower: -0.25, upper: 0.25 });
        assert_eq!(t[19].dof, 1);
        assert_eq!(t[21], ActiveDof { i: 8, j: 1, k: 1, dof: 1, lower: -0.025, upper: 0.025 });
        assert_eq!(t.iter().filter(|r| r.dof == 2).count(), 18);
        let mut nodes: Vec<_> = t.iter().map(|r| (r.i, r.j, r.k)).collect();
        nodes.sort();
        nodes.dedup();
        assert_eq!(nodes.len(), 21);
    }

    #[test]
    fn hull_spec_dimension_and_zero_design() {
        let (hull, spec, _, _) = hull_setup();
        assert_eq!(spec.dimension(), 22);
        let p = Parameterization::register(spec, &hull).unwrap();
        let d = p.deform_values(&[0.0; 22]).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_node_matches_tensor_bernstein() {
        let (hull, _, lo, hi) = hull_setup();
        let eps = 0.013;
        let spec = FfdLatticeSpec {
            dims: [9, 3, 3],
            box_min: lo,
            box_max: hi,
            active: vec![dof(4, 2, 2, 2, 0.5)],
        };
        let p = Parameterization::register(ParameterizationSpec::FfdLattice(spec), &hull).unwrap();
        let d = p.deform_values(&[eps]).unwrap();
        let span_y = hi[1] - lo[1];
        for (n, x) in hull.nodes().iter().enumerate() {
            let s = (x[0] - lo[0]) / (hi[0] - lo[0]);
            let t = (x[1] - lo[1]) / span_y;
            let v = (x[2] - lo[2]) / (hi[2] - lo[2]);
            let w = bernstein(3, 8, s).unwrap() * bernstein(1, 2, t).unwrap() * bernstein(1, 2, v).unwrap();
            let got = d.node(n);
            assert_eq!(got[0], 0.0);
            assert_eq!(got[2], 0.0);
            assert!((got[1] - eps * span_y * w).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_lattice_motion_translates_every_node() {
        let (hull, _, lo, hi) = hull_setup();
        let mut active = Vec::new();
        for i in 1..=9 {
            for j in 1..=3 {
                for k in 1..=3 {
                    for axis in 1..=3 {
                        active.push(dof(i, j, k, axis, 1.0));
                    }
                }
            }
        }
        let spec = FfdLatticeSpec { dims: [9, 3, 3], box_min: lo, box_max: hi, active };
        let p = Parameterization::register(ParameterizationSpec::FfdLattice(spec.clone()), &hull).unwrap();
        let w = [0.03, -0.07, 0.11];
        let u: Vec<f64> = spec
            .active
            .iter()
            .map(|r| w[r.dof - 1] / (hi[r.dof - 1] - lo[r.dof - 1]))
            .collect();
        let d = p.deform_values(&u).unwrap();
        for n in 0..hull.len() {
            let got = d.node(n);
            for a in 0..3 {
                assert!((got[a] - w[a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn upper_bound_xi1_motion_is_limited() {
        let (hull, spec, lo, hi) = hull_setup();
        let p = Parameterization::register(spec.clone(), &hull).unwrap();
        let d = p.deform_values(&spec.bounds().upper).unwrap();
        let span = hi[0] - lo[0];
        // bow keel node: closest to the (9,1,1) lattice corner
        let (corner, _) = hull
            .nodes()
            .iter()
            .enumerate()
            .map(|(n, x)| (n, (x[0] - hi[0]).powi(2) + x[1].powi(2) + (x[2] - lo[2]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let dx = d.node(corner)[0];
        assert!(dx > 0.0 && dx <= 0.025 * span + 1e-15, "dx = {dx}");
        for n in 0..hull.len() {
            assert!(d.node(n)[0].abs() <= 0.025 * span + 1e-15);
        }
    }

    #[test]
    fn nodes_outside_the_box_are_listed() {
        let (hull, _, lo, hi) = hull_setup();
        let mut shrunk = hi;
        shrunk[0] -= 0.5;
        let err = make_ffd_hull([9, 3, 3], lo, shrunk, table1_active_dofs(), &hull).unwrap_err();
        match err {
            PmeError::Registration { offenders } => {
                assert!(!offenders.is_empty());
                assert!(offenders.iter().all(|&n| hull.nodes()[n][0] > shrunk[0]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lattice_fits_hull_extents() {
        let (hull, _, lo, hi) = hull_setup();
        let (l, b, t) = bounding_extents(&hull).unwrap();
        assert!((l - (hi[0] - lo[0])).abs() < 1e-12);
        assert!((b - (hi[1] - lo[1])).abs() < 1e-12);
        assert!((t - (hi[2] - lo[2])).abs() < 1e-12);
    }

    #[test]
    fn invalid_rows_rejected() {
        let shape = DiscreteShape::from_grid(vec![[0.5; 3]], Topology::grid(1, 1), MeasureScheme::Uniform).unwrap();
        let bad = vec![dof(10, 1, 1, 1, 0.1)];
        assert!(make_ffd_hull([9, 3, 3], [0.0; 3], [1.0; 3], bad, &shape).is_err());
        let bad_axis = vec![dof(1, 1, 1, 4, 0.1)];
        assert!(make_ffd_hull([9, 3, 3], [0.0; 3], [1.0; 3], bad_axis, &shape).is_err());
    }
}
