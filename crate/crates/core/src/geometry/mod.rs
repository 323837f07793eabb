//! Discretized shapes, the weighted inner product on displacement fields, and
//! the geometric quantities used as design constraints.
//!
//! Vector-valued data on a shape with `L` nodes is stored in component blocks:
//! all ξ1 components, then all ξ2, then all ξ3. A planar shape keeps a zero ξ3
//! block so that curves and surfaces share one code path.

mod io;
pub mod solids;

pub use io::{format_geometry, parse_geometry, read_geometry, write_geometry};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, PmeError, Result};

pub type Point = [f64; 3];

/// How the open boundary of a structured surface is closed for volume
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// The grid is a closed surface on its own (poles collapsed, columns wrapped).
    #[default]
    Closed,
    /// The missing faces lie in the symmetry plane `x[axis] = 0` and, optionally,
    /// in a flat lid at the maximum coordinate along `lid_axis`.
    Mirror { axis: usize, lid_axis: Option<usize> },
}

/// Structured-grid connectivity: node `(r, c)` is stored at `r * cols + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub wrap_cols: bool,
    #[serde(default)]
    pub closure: Closure,
}

impl Topology {
    pub fn grid(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            wrap_cols: false,
            closure: Closure::Closed,
        }
    }

    pub fn wrapped(mut self) -> Self {
        self.wrap_cols = true;
        self
    }

    pub fn with_closure(mut self, closure: Closure) -> Self {
        self.closure = closure;
        self
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Triangles of the panel surface. Each quad `(r,c) (r,c+1) (r+1,c+1) (r+1,c)`
    /// is split along the `(r,c)-(r+1,c+1)` diagonal.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut tris = Vec::new();
        if self.rows < 2 || self.cols < 2 {
            return tris;
        }
        let col_quads = if self.wrap_cols { self.cols } else { self.cols - 1 };
        for r in 0..self.rows - 1 {
            for c in 0..col_quads {
                let c1 = (c + 1) % self.cols;
                let a = r * self.cols + c;
                let b = r * self.cols + c1;
                let cc = (r + 1) * self.cols + c1;
                let d = (r + 1) * self.cols + c;
                tris.push([a, b, cc]);
                tris.push([a, cc, d]);
            }
        }
        tris
    }
}

/// Element measure attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureScheme {
    /// Every node gets measure 1.
    Uniform,
    /// One third of the area of each incident triangle.
    PanelArea,
    /// Each grid row is a polyline; half of each incident segment length.
    ArcLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteShape {
    nodes: Vec<Point>,
    measures: Vec<f64>,
    weights: Vec<f64>,
    topology: Topology,
}

impl DiscreteShape {
    pub fn new(
        nodes: Vec<Point>,
        measures: Vec<f64>,
        weights: Vec<f64>,
        topology: Topology,
    ) -> Result<Self> {
        let n = nodes.len();
        check_len("shape measures", n, measures.len())?;
        check_len("shape weights", n, weights.len())?;
        check_len("shape topology", n, topology.node_count())?;
        if n == 0 {
            return Err(PmeError::InvalidShape("no nodes".into()));
        }
        if let Some(i) = measures.iter().position(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(PmeError::InvalidShape(format!("measure of node {i} is negative or not finite")));
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(PmeError::InvalidShape(format!("weight of node {i} is negative or not finite")));
        }
        if !measures.iter().zip(&weights).any(|(m, w)| m * w > 0.0) {
            return Err(PmeError::InvalidShape("every node has zero measure or zero weight".into()));
        }
        Ok(Self {
            nodes,
            measures,
            weights,
            topology,
        })
    }

    /// Builds a shape with unit weights and measures from `scheme`.
    pub fn from_grid(nodes: Vec<Point>, topology: Topology, scheme: MeasureScheme) -> Result<Self> {
        check_len("shape topology", topology.node_count(), nodes.len())?;
        let measures = compute_measures(&nodes, &topology, scheme);
        let weights = vec![1.0; nodes.len()];
        Self::new(nodes, measures, weights, topology)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.nodes.clone(), self.measures.clone(), weights, self.topology)
    }

    pub fn with_measures(&self, measures: Vec<f64>) -> Result<Self> {
        Self::new(self.nodes.clone(), measures, self.weights.clone(), self.topology)
    }

    pub fn with_topology(&self, topology: Topology) -> Result<Self> {
        Self::new(self.nodes.clone(), self.measures.clone(), self.weights.clone(), topology)
    }

    /// Replaces the node coordinates, keeping measures, weights and topology.
    pub fn with_nodes(&self, nodes: Vec<Point>) -> Result<Self> {
        check_len("shape nodes", self.nodes.len(), nodes.len())?;
        Ok(Self {
            nodes,
            measures: self.measures.clone(),
            weights: self.weights.clone(),
            topology: self.topology,
        })
    }

    /// Per-node products ρ_i ΔG_i.
    pub fn node_weights(&self) -> Vec<f64> {
        self.measures.iter().zip(&self.weights).map(|(m, w)| m * w).collect()
    }

    /// Diagonal of the `3L × 3L` matrix `G W`, in block layout.
    pub fn gw_diagonal(&self) -> Vec<f64> {
        let nw = self.node_weights();
        let mut diag = Vec::with_capacity(3 * nw.len());
        for _ in 0..3 {
            diag.extend_from_slice(&nw);
        }
        diag
    }

    /// Sets ρ = 1 on nodes at or below `level` along ξ3 and ρ = 0 above it.
    pub fn waterline_mask(&self, level: f64) -> Result<Self> {
        let weights = self
            .nodes
            .iter()
            .map(|p| if p[2] <= level { 1.0 } else { 0.0 })
            .collect();
        self.with_weights(weights)
    }
}

/// Displacement of every node of a shape, in block layout (length `3L`).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField(pub Vec<f64>);

impl DisplacementField {
    pub fn zeros(nodes: usize) -> Self {
        Self(vec![0.0; 3 * nodes])
    }

    pub fn from_node_vectors(vectors: &[Point]) -> Self {
        let l = vectors.len();
        let mut values = vec![0.0; 3 * l];
        for (i, v) in vectors.iter().enumerate() {
            for a in 0..3 {
                values[a * l + i] = v[a];
            }
        }
        Self(values)
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / 3
    }

    pub fn node(&self, i: usize) -> Point {
        let l = self.node_count();
        [self.0[i], self.0[l + i], self.0[2 * l + i]]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_len("displacement sum", self.0.len(), other.0.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_len("displacement difference", self.0.len(), other.0.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub(crate) fn conform(&self, shape: &DiscreteShape) -> Result<()> {
        check_len("displacement field", 3 * shape.len(), self.0.len())
    }
}

/// `(a, b)_ρ = Σ_i ρ_i ΔG_i (a_i · b_i)`.
pub fn weighted_inner_product(
    a: &DisplacementField,
    b: &DisplacementField,
    shape: &DiscreteShape,
) -> Result<f64> {
    a.conform(shape)?;
    b.conform(shape)?;
    Ok(weighted_dot(&a.0, &b.0, &shape.node_weights()))
}

pub fn field_norm(a: &DisplacementField, shape: &DiscreteShape) -> Result<f64> {
    Ok(weighted_inner_product(a, a, shape)?.max(0.0).sqrt())
}

/// Block-layout dot product against per-node weights.
pub(crate) fn weighted_dot(a: &[f64], b: &[f64], node_weights: &[f64]) -> f64 {
    let l = node_weights.len();
    let mut sum = 0.0;
    for (i, w) in node_weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let dot = a[i] * b[i] + a[l + i] * b[l + i] + a[2 * l + i] * b[2 * l + i];
        sum += w * dot;
    }
    sum
}

/// Volume enclosed by the panel surface, by signed-tetrahedron summation.
///
/// For [`Closure::Mirror`] the reference point sits on the symmetry plane (and
/// on the lid plane when present), so the missing closure faces contribute
/// nothing and the result is the demi-volume.
pub fn enclosed_volume(shape: &DiscreteShape) -> Result<f64> {
    let topo = shape.topology();
    if topo.rows < 2 || topo.cols < 2 {
        return Err(PmeError::Topology(format!(
            "volume needs at least 2 rows and 2 columns, grid is {}x{}",
            topo.rows, topo.cols
        )));
    }
    let mut reference = [0.0; 3];
    if let Closure::Mirror { axis, lid_axis } = topo.closure {
        if axis > 2 {
            return Err(PmeError::Topology(format!("mirror axis {axis} out of range")));
        }
        if let Some(lid) = lid_axis {
            if lid > 2 || lid == axis {
                return Err(PmeError::Topology(format!("invalid lid axis {lid}")));
            }
            reference[lid] = shape
                .nodes()
                .iter()
                .map(|p| p[lid])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let nodes = shape.nodes();
    let mut six_vol = 0.0;
    for [a, b, c] in topo.triangles() {
        let p = sub3(nodes[a], reference);
        let q = sub3(nodes[b], reference);
        let r = sub3(nodes[c], reference);
        six_vol += dot3(p, cross3(q, r));
    }
    Ok((six_vol / 6.0).abs())
}

/// Axis-aligned extents `(ξ1, ξ2, ξ3)`, i.e. length, beam and draught for a hull.
pub fn bounding_extents(shape: &DiscreteShape) -> Result<(f64, f64, f64)> {
    extents_of(shape.nodes().iter())
        .ok_or_else(|| PmeError::InvalidShape("no nodes".into()))
}

/// Extents over the nodes carrying a positive weight.
pub fn weighted_extents(shape: &DiscreteShape) -> Result<(f64, f64, f64)> {
    extents_of(
        shape
            .nodes()
            .iter()
            .zip(shape.weights())
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, _)| p),
    )
    .ok_or_else(|| PmeError::InvalidShape("no weighted nodes".into()))
}

fn extents_of<'a>(points: impl Iterator<Item = &'a Point>) -> Option<(f64, f64, f64)> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut any = false;
    for p in points {
        any = true;
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    any.then(|| (hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]))
}

pub fn compute_measures(nodes: &[Point], topology: &Topology, scheme: MeasureScheme) -> Vec<f64> {
    let n = nodes.len();
    match scheme {
        MeasureScheme::Uniform => vec![1.0; n],
        MeasureScheme::PanelArea => {
            let mut m = vec![0.0; n];
            for [a, b, c] in topology.triangles() {
                let area = 0.5 * norm3(cross3(sub3(nodes[b], nodes[a]), sub3(nodes[c], nodes[a])));
                for v in [a, b, c] {
                    m[v] += area / 3.0;
                }
            }
            m
        }
        MeasureScheme::ArcLength => {
            let mut m = vec![0.0; n];
            let cols = topology.cols;
            let segs = if topology.wrap_cols { cols } else { cols.saturating_sub(1) };
            for r in 0..topology.rows {
                for c in 0..segs {
                    let a = r * cols + c;
                    let b = r * cols + (c + 1) % cols;
                    let len = norm3(sub3(nodes[b], nodes[a]));
                    m[a] += 0.5 * len;
                    m[b] += 0.5 * len;
                }
            }
            m
        }
    }
}

pub(crate) fn sub3(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: Point) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::solids::{open_cube_half, sphere, unit_cube};
    use super::*;
    use proptest::prelude::*;

    fn line_shape(l: usize) -> DiscreteShape {
        let nodes = (0..l).map(|i| [i as f64, 0.0, 0.0]).collect();
        DiscreteShape::from_grid(nodes, Topology::grid(1, l), MeasureScheme::Uniform).unwrap()
    }

    #[test]
    fn inner_product_of_zero_fields_is_zero() {
        let shape = line_shape(4);
        let z = DisplacementField::zeros(4);
        assert_eq!(weighted_inner_product(&z, &z, &shape).unwrap(), 0.0);
        assert_eq!(field_norm(&z, &shape).unwrap(), 0.0);
    }

    #[test]
    fn identity_weights_count_nodes() {
        let shape = line_shape(5);
        let f = DisplacementField::from_node_vectors(&vec![[0.0, 1.0, 0.0]; 5]);
        assert_eq!(weighted_inner_product(&f, &f, &shape).unwrap(), 5.0);
        let shape4 = line_shape(4);
        let g = DisplacementField::from_node_vectors(&vec![[1.0, 0.0, 0.0]; 4]);
        assert_eq!(field_norm(&g, &shape4).unwrap(), 2.0);
        assert!((field_norm(&g.scaled(3.0), &shape4).unwrap() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_weights_match_hand_sum() {
        let nodes = vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let measures = vec![0.5, 1.25, 2.0];
        let weights = vec![2.0, 0.0, 0.3];
        let shape = DiscreteShape::new(nodes, measures, weights, Topology::grid(1, 3)).unwrap();
        let a = [[0.1, -0.7, 0.4], [1.3, 0.2, -2.0], [0.9, 0.5, -0.3]];
        let b = [[-1.1, 0.6, 0.25], [0.3, 0.8, 1.5], [0.2, -0.4, 0.7]];
        let fa = DisplacementField::from_node_vectors(&a);
        let fb = DisplacementField::from_node_vectors(&b);
        let hand = 1.0 * (0.1 * -1.1 + -0.7 * 0.6 + 0.4 * 0.25)
            + 0.0 * (1.3 * 0.3 + 0.2 * 0.8 + -2.0 * 1.5)
            + 0.6 * (0.9 * 0.2 + 0.5 * -0.4 + -0.3 * 0.7);
        let got = weighted_inner_product(&fa, &fb, &shape).unwrap();
        assert!((got - hand).abs() < 1e-15, "{got} vs {hand}");
    }

    #[test]
    fn length_mismatch_is_a_dimension_error() {
        let shape = line_shape(3);
        let a = DisplacementField::zeros(3);
        let b = DisplacementField::zeros(4);
        assert!(matches!(
            weighted_inner_product(&a, &b, &shape),
            Err(PmeError::Dimension { .. })
        ));
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        let nodes = vec![[0.0; 3]; 2];
        assert!(DiscreteShape::new(nodes.clone(), vec![1.0, -1.0], vec![1.0; 2], Topology::grid(1, 2)).is_err());
        assert!(DiscreteShape::new(nodes.clone(), vec![1.0; 2], vec![0.0; 2], Topology::grid(1, 2)).is_err());
        assert!(DiscreteShape::new(nodes, vec![1.0; 3], vec![1.0; 2], Topology::grid(1, 2)).is_err());
    }

    #[test]
    fn cube_volume_and_extents() {
        let cube = unit_cube();
        assert!((enclosed_volume(&cube).unwrap() - 1.0).abs() < 1e-12);
        let (l, b, t) = bounding_extents(&cube).unwrap();
        assert_eq!((l, b, t), (1.0, 1.0, 1.0));
        let moved: Vec<Point> = cube.nodes().iter().map(|p| [p[0] + 3.5, p[1] - 2.0, p[2] + 0.25]).collect();
        let moved = cube.with_nodes(moved).unwrap();
        let (l2, b2, t2) = bounding_extents(&moved).unwrap();
        assert!((l2 - 1.0).abs() < 1e-15 && (b2 - 1.0).abs() < 1e-15 && (t2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_cube_mirror_volume() {
        let half = open_cube_half();
        assert!((enclosed_volume(&half).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sphere_volume_within_discretization_error() {
        let s = sphere(1.0, 90, 25);
        let v = enclosed_volume(&s).unwrap();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!(((v - exact) / exact).abs() < 0.01, "v = {v}");
    }

    #[test]
    fn degenerate_grid_is_a_topology_error() {
        let shape = line_shape(4);
        assert!(matches!(enclosed_volume(&shape), Err(PmeError::Topology(_))));
    }

    #[test]
    fn panel_area_measures_sum_to_surface_area() {
        let cube = DiscreteShape::from_grid(unit_cube().nodes().to_vec(), *unit_cube().topology(), MeasureScheme::PanelArea).unwrap();
        let total: f64 = cube.measures().iter().sum();
        assert!((total - 6.0).abs() < 1e-12);
    }

    #[test]
    fn arc_length_measures_sum_to_length() {
        let nodes = (0..5).map(|i| [0.25 * i as f64, 0.0, 0.0]).collect();
        let shape = DiscreteShape::from_grid(nodes, Topology::grid(1, 5), MeasureScheme::ArcLength).unwrap();
        assert_eq!(shape.measures(), &[0.125, 0.25, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn waterline_mask_zeroes_nodes_above() {
        let nodes = vec![[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.5]];
        let shape = DiscreteShape::from_grid(nodes, Topology::grid(1, 3), MeasureScheme::Uniform)
            .unwrap()
            .waterline_mask(0.0)
            .unwrap();
        assert_eq!(shape.weights(), &[1.0, 1.0, 0.0]);
    }

    fn field_strategy(l: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 3 * l)
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_and_bilinear(
            a in field_strategy(6), b in field_strategy(6), c in field_strategy(6),
            w in prop::collection::vec(0.0..3.0f64, 6),
        ) {
            let nodes = (0..6).map(|i| [i as f64, 0.0, 0.0]).collect();
            let mut weights = w;
            weights[0] = 1.0;
            let shape = DiscreteShape::new(nodes, vec![0.7; 6], weights, Topology::grid(1, 6)).unwrap();
            let (fa, fb, fc) = (DisplacementField(a), DisplacementField(b), DisplacementField(c));
            let ab = weighted_inner_product(&fa, &fb, &shape).unwrap();
            let ba = weighted_inner_product(&fb, &fa, &shape).unwrap();
            prop_assert_eq!(ab, ba);
            let lhs = weighted_inner_product(&fa.add(&fc).unwrap(), &fb, &shape).unwrap();
            let rhs = ab + weighted_inner_product(&fc, &fb, &shape).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        }

        #[test]
        fn zero_weight_nodes_do_not_contribute(a in field_strategy(4), kick in -5.0..5.0f64) {
            let nodes = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
            let shape = DiscreteShape::new(nodes, vec![1.0; 4], vec![1.0, 0.0, 2.0, 1.0], Topology::grid(1, 4)).unwrap();
            let fa = DisplacementField(a.clone());
            let mut perturbed = a;
            perturbed[1] += kick;
            perturbed[4 + 1] -= kick;
            let fp = DisplacementField(perturbed);
            prop_assert_eq!(
                weighted_inner_product(&fa, &fa, &shape).unwrap(),
                weighted_inner_product(&fp, &fp, &shape).unwrap()
            );
        }

        #[test]
        fn volume_is_translation_invariant_and_cubic_in_scale(
            dx in -5.0..5.0f64, dy in -5.0..5.0f64, dz in -5.0..5.0f64, s in 0.2..4.0f64,
        ) {
            let base = sphere(0.8, 24, 9);
            let v0 = enclosed_volume(&base).unwrap();
            let moved: Vec<Point> = base.nodes().iter().map(|p| [p[0] + dx, p[1] + dy, p[2] + dz]).collect();
            let v1 = enclosed_volume(&base.with_nodes(moved).unwrap()).unwrap();
            prop_assert!((v1 - v0).abs() < 1e-11 * (1.0 + v0));
            let scaled: Vec<Point> = base.nodes().iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect();
            let v2 = enclosed_volume(&base.with_nodes(scaled).unwrap()).unwrap();
            prop_assert!((v2 - s.powi(3) * v0).abs() < 1e-11 * (1.0 + v2));
        }
    }
}
