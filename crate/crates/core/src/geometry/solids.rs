//! Closed-form test solids and the analytic demo hull.

use std::f64::consts::PI;

use super::{Closure, DiscreteShape, MeasureScheme, Point, Topology};

/// `[0,1]^3` as a 4×4 wrapped grid: bottom pole row, bottom ring, top ring,
/// top pole row.
pub fn unit_cube() -> DiscreteShape {
    let ring = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut nodes = Vec::with_capacity(16);
    nodes.extend(std::iter::repeat_n([0.5, 0.5, 0.0], 4));
    nodes.extend(ring.iter().map(|[x, y]| [*x, *y, 0.0]));
    nodes.extend(ring.iter().map(|[x, y]| [*x, *y, 1.0]));
    nodes.extend(std::iter::repeat_n([0.5, 0.5, 1.0], 4));
    DiscreteShape::from_grid(nodes, Topology::grid(4, 4).wrapped(), MeasureScheme::Uniform)
        .expect("cube grid is valid")
}

/// The `y >= 0` half of the box `[0,1] × [-0.5,0.5] × [0,1]`, open on the
/// symmetry plane `y = 0`.
pub fn open_cube_half() -> DiscreteShape {
    let ring = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut nodes = Vec::with_capacity(12);
    nodes.extend(ring.iter().map(|[x, z]| [*x, 0.0, *z]));
    nodes.extend(ring.iter().map(|[x, z]| [*x, 0.5, *z]));
    nodes.extend(std::iter::repeat_n([0.5, 0.5, 0.5], 4));
    let topo = Topology::grid(3, 4)
        .wrapped()
        .with_closure(Closure::Mirror { axis: 1, lid_axis: None });
    DiscreteShape::from_grid(nodes, topo, MeasureScheme::Uniform).expect("half-cube grid is valid")
}

/// Latitude-longitude sphere; `rows` includes both poles.
pub fn sphere(radius: f64, cols: usize, rows: usize) -> DiscreteShape {
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let theta = PI * r as f64 / (rows - 1) as f64;
        let (st, ct) = theta.sin_cos();
        for c in 0..cols {
            let phi = 2.0 * PI * c as f64 / cols as f64;
            let (sp, cp) = phi.sin_cos();
            nodes.push([radius * st * cp, radius * st * sp, radius * ct]);
        }
    }
    DiscreteShape::from_grid(nodes, Topology::grid(rows, cols).wrapped(), MeasureScheme::Uniform)
        .expect("sphere grid is valid")
}

/// Principal dimensions of the demo hull.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HullDimensions {
    pub length: f64,
    pub beam: f64,
    pub draught: f64,
    pub freeboard: f64,
    pub stations: usize,
    pub rows: usize,
}

impl Default for HullDimensions {
    fn default() -> Self {
        Self {
            length: 5.72,
            beam: 0.76,
            draught: 0.25,
            freeboard: 0.1,
            stations: 91,
            rows: 25,
        }
    }
}

impl HullDimensions {
    /// Number of grid rows at or below the waterline `z = 0`.
    pub fn rows_below(&self) -> usize {
        if self.freeboard <= 0.0 {
            return self.rows;
        }
        let frac = self.draught / (self.draught + self.freeboard);
        (((self.rows - 1) as f64 * frac).round() as usize).clamp(1, self.rows - 2) + 1
    }

    fn row_z(&self, r: usize) -> f64 {
        let below = self.rows_below() - 1;
        if r <= below {
            -self.draught + self.draught * r as f64 / below as f64
        } else {
            let above = self.rows - 1 - below;
            self.freeboard * (r - below) as f64 / above as f64
        }
    }
}

/// Wigley-type demi-hull `y = B/2 (1 - (2x/L)^2)(1 - (z/T)^2)` below the
/// waterline, wall-sided above it. Rows run from keel to deck, columns from
/// stern to bow. Closed by mirroring about `y = 0` and a deck lid.
pub fn wigley_demi_hull(dims: &HullDimensions, scheme: MeasureScheme) -> DiscreteShape {
    let mut nodes: Vec<Point> = Vec::with_capacity(dims.rows * dims.stations);
    for r in 0..dims.rows {
        let z = dims.row_z(r);
        let depth = if z < 0.0 { 1.0 - (z / dims.draught).powi(2) } else { 1.0 };
        for c in 0..dims.stations {
            let x = -0.5 * dims.length + dims.length * c as f64 / (dims.stations - 1) as f64;
            let xi = 2.0 * x / dims.length;
            let y = 0.5 * dims.beam * (1.0 - xi * xi).max(0.0) * depth;
            nodes.push([x, y, z]);
        }
    }
    let topo = Topology::grid(dims.rows, dims.stations)
        .with_closure(Closure::Mirror { axis: 1, lid_axis: Some(2) });
    DiscreteShape::from_grid(nodes, topo, scheme).expect("hull grid is valid")
}
