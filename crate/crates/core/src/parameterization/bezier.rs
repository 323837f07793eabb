//! Two degree-ten Bezier curves (suction and pressure side) fitted to the
//! NACA 0012 thickness law, with ξ2-only perturbation of interior control
//! points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{bernstein_unchecked, ParameterizationSpec};
use crate::error::{PmeError, Result};
use crate::geometry::{DiscreteShape, MeasureScheme, Point, Topology};

pub const BEZIER_DEGREE: usize = 10;

const FIT_POINTS: usize = 400;
const FIT_TOLERANCE: f64 = 1e-2;

/// Control polygons are `(ξ1, ξ2)` pairs ordered leading edge to trailing
/// edge. Design variables are the suction-side active points followed by the
/// pressure-side ones; each moves its control ordinate multiplicatively,
/// `ξ2' = ξ2 (1 + u_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierAirfoilSpec {
    pub suction: Vec<[f64; 2]>,
    pub pressure: Vec<[f64; 2]>,
    /// 0-based indices of active control points (same on both sides).
    pub active: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    /// Curve parameter of each node on one side; the pressure side reuses them.
    pub node_params: Vec<f64>,
}

impl BezierAirfoilSpec {
    pub(super) fn validate(&self) -> Result<()> {
        let n = BEZIER_DEGREE + 1;
        if self.suction.len() != n || self.pressure.len() != n {
            return Err(PmeError::InvalidSpec(format!("each side needs {n} control points")));
        }
        if let Some(&k) = self.active.iter().find(|&&k| k >= n) {
            return Err(PmeError::InvalidSpec(format!("active index {k} outside control polygon")));
        }
        if self.node_params.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(PmeError::InvalidSpec("node parameters must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub(super) fn influence(&self, baseline: &DiscreteShape) -> Result<DMatrix<f64>> {
        let per_side = self.node_params.len();
        let l = 2 * per_side;
        if baseline.len() != l {
            return Err(PmeError::InvalidSpec(format!(
                "baseline has {} nodes, airfoil spec expects {l}",
                baseline.len()
            )));
        }
        let na = self.active.len();
        let mut m = DMatrix::zeros(3 * l, 2 * na);
        for (side, polygon) in [&self.suction, &self.pressure].into_iter().enumerate() {
            for (j, &t) in self.node_params.iter().enumerate() {
                let row = l + side * per_side + j;
                for (a, &k) in self.active.iter().enumerate() {
                    m[(row, side * na + a)] = bernstein_unchecked(k, BEZIER_DEGREE, t) * polygon[k][1];
                }
            }
        }
        Ok(m)
    }

    /// Control polygons after applying `u`.
    pub fn perturbed_polygons(&self, u: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let na = self.active.len();
        let mut suction = self.suction.clone();
        let mut pressure = self.pressure.clone();
        for (a, &k) in self.active.iter().enumerate() {
            suction[k][1] *= 1.0 + u[a];
            pressure[k][1] *= 1.0 + u[na + a];
        }
        (suction, pressure)
    }
}

/// Closed-trailing-edge NACA 0012 half thickness.
pub fn naca_half_thickness(x: f64) -> f64 {
    5.0 * 0.12
        * (0.2969 * x.max(0.0).sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3)
            - 0.1036 * x.powi(4))
}

/// Evaluates a planar Bezier curve by repeated linear interpolation.
pub fn de_casteljau(polygon: &[[f64; 2]], t: f64) -> [f64; 2] {
    let mut pts = polygon.to_vec();
    for level in (1..pts.len()).rev() {
        for i in 0..level {
            pts[i] = [
                (1.0 - t) * pts[i][0] + t * pts[i + 1][0],
                (1.0 - t) * pts[i][1] + t * pts[i + 1][1],
            ];
        }
    }
    pts[0]
}

fn bezier_point(polygon: &[[f64; 2]], t: f64) -> [f64; 2] {
    polygon.iter().enumerate().fold([0.0, 0.0], |acc, (i, p)| {
        let b = bernstein_unchecked(i, BEZIER_DEGREE, t);
        [acc[0] + b * p[0], acc[1] + b * p[1]]
    })
}

/// Fixed control abscissae, evenly spaced from leading to trailing edge.
fn control_abscissae() -> Vec<f64> {
    (0..=BEZIER_DEGREE).map(|i| i as f64 / BEZIER_DEGREE as f64).collect()
}

/// Suction-side control polygon fitted by least squares to the thickness
/// law, endpoints clamped at `(0,0)` and `(1,0)`.
fn fit_suction_polygon() -> Result<Vec<[f64; 2]>> {
    let xs = control_abscissae();
    let free = BEZIER_DEGREE - 1;
    let mut a = DMatrix::zeros(FIT_POINTS, free);
    let mut b = DVector::zeros(FIT_POINTS);
    for r in 0..FIT_POINTS {
        let t = r as f64 / (FIT_POINTS - 1) as f64;
        let x: f64 = (0..=BEZIER_DEGREE).map(|i| bernstein_unchecked(i, BEZIER_DEGREE, t) * xs[i]).sum();
        for c in 0..free {
            a[(r, c)] = bernstein_unchecked(c + 1, BEZIER_DEGREE, t);
        }
        b[r] = naca_half_thickness(x);
    }
    let coeffs = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| PmeError::InvalidSpec(format!("least-squares fit failed: {e}")))?;
    let residual = (&a * &coeffs - &b).amax();
    if residual > FIT_TOLERANCE {
        return Err(PmeError::Fit {
            residual,
            tolerance: FIT_TOLERANCE,
        });
    }
    let mut polygon = vec![[0.0, 0.0]; BEZIER_DEGREE + 1];
    for (i, p) in polygon.iter_mut().enumerate() {
        p[0] = xs[i];
        if (1..BEZIER_DEGREE).contains(&i) {
            p[1] = coeffs[i - 1];
        }
    }
    Ok(polygon)
}

/// The 14-variable Bezier airfoil design space and its baseline shape.
///
/// Control points 0, 1, 9 and 10 are fixed on each side (leading and trailing
/// edge position and tangency); points 2 through 8 move along ξ2 within
/// `[-0.9, 0.9]`. Nodes are placed at cosine-spaced curve parameters, suction
/// side first; the default 91 per side gives 182 nodes.
pub fn make_bezier_airfoil(nodes_per_side: usize) -> Result<(ParameterizationSpec, DiscreteShape)> {
    if nodes_per_side < 12 {
        return Err(PmeError::InvalidSpec(format!(
            "need at least 12 nodes per side, got {nodes_per_side}"
        )));
    }
    let suction = fit_suction_polygon()?;
    let pressure: Vec<[f64; 2]> = suction.iter().map(|p| [p[0], -p[1]]).collect();
    let node_params: Vec<f64> = (0..nodes_per_side)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / (nodes_per_side - 1) as f64).cos()))
        .collect();
    let mut nodes: Vec<Point> = Vec::with_capacity(2 * nodes_per_side);
    for polygon in [&suction, &pressure] {
        for &t in &node_params {
            let [x, y] = bezier_point(polygon, t);
            nodes.push([x, y, 0.0]);
        }
    }
    let spec = BezierAirfoilSpec {
        suction,
        pressure,
        active: (2..=8).collect(),
        lower: -0.9,
        upper: 0.9,
        node_params,
    };
    let shape = DiscreteShape::from_grid(nodes, Topology::grid(2, nodes_per_side), MeasureScheme::ArcLength)?;
    Ok((ParameterizationSpec::BezierAirfoil(spec), shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parameterization::{apply, DesignVector, Parameterization};

    fn airfoil() -> (BezierAirfoilSpec, Parameterization, DiscreteShape) {
        let (spec, shape) = make_bezier_airfoil(91).unwrap();
        let ParameterizationSpec::BezierAirfoil(inner) = spec.clone() else { unreachable!() };
        let p = Parameterization::register(spec, &shape).unwrap();
        (inner, p, shape)
    }

    fn max_thickness(shape: &DiscreteShape, per_side: usize) -> f64 {
        (0..per_side)
            .map(|j| shape.nodes()[j][1] - shape.nodes()[per_side + j][1])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn baseline_matches_naca0012_thickness() {
        let (_, p, shape) = airfoil();
        assert_eq!(shape.len(), 182);
        assert_eq!(p.dimension(), 14);
        let t = max_thickness(&shape, 91);
        assert!(((t - 0.12) / 0.12).abs() < 1e-2, "t/c = {t}");
    }

    #[test]
    fn baseline_is_symmetric() {
        let (spec, _, shape) = airfoil();
        for (s, p) in spec.suction.iter().zip(&spec.pressure) {
            assert_eq!(s[1], -p[1]);
            assert_eq!(s[0], p[0]);
        }
        for j in 0..91 {
            assert_eq!(shape.nodes()[j][1], -shape.nodes()[91 + j][1]);
        }
    }

    #[test]
    fn opposite_designs_give_opposite_fields() {
        let (_, p, _) = airfoil();
        for k in 0..14 {
            let mut e = vec![0.0; 14];
            e[k] = 1.0;
            let plus = p.deform_values(&e).unwrap();
            e[k] = -1.0;
            let minus = p.deform_values(&e).unwrap();
            assert!(plus.values().iter().zip(minus.values()).all(|(a, b)| *a == -*b));
        }
    }

    #[test]
    fn zero_design_recovers_parent() {
        let (_, p, shape) = airfoil();
        let u = DesignVector::zeros(p.bounds());
        let d = p.deform(&u).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
        assert_eq!(apply(&shape, &d).unwrap(), shape);
    }

    #[test]
    fn perturbed_thickness_matches_de_casteljau() {
        let (spec, p, shape) = airfoil();
        let u: Vec<f64> = (0..14).map(|k| 0.8 * ((k as f64 * 1.7).sin())).collect();
        let moved = apply(&shape, &p.deform_values(&u).unwrap()).unwrap();
        let (suction, pressure) = spec.perturbed_polygons(&u);
        let oracle = spec
            .node_params
            .iter()
            .map(|&t| de_casteljau(&suction, t)[1] - de_casteljau(&pressure, t)[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let got = max_thickness(&moved, 91);
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        assert!((got - max_thickness(&shape, 91)).abs() > 1e-3);
    }

    #[test]
    fn fixed_points_keep_edges_in_place() {
        let (_, p, _) = airfoil();
        let d = p.deform_values(&[0.9; 14]).unwrap();
        for idx in [0, 90, 91, 181] {
            assert_eq!(d.node(idx), [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(make_bezier_airfoil(11).is_err());
    }
}
