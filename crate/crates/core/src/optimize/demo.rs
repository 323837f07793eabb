//! Planted-optimum demo problem.
//!
//! The objective is the weighted distance to a hidden target shape plus a
//! curvature-roughness term, `f = ‖δ' − δ*‖²_ρ / σ² + γ R(g') / R(g)`, where
//! `R` sums squared second differences of node positions along grid rows.
//! The target comes from a design `u* = ⟨u⟩ + V x*` that lies strictly inside
//! the original box, so the reduced spaces can reach it exactly.

use std::sync::Arc;

use super::problem::{Comparison, Constraint, OptimizationProblem};
use crate::embedding::{reconstruct_u, Embedding};
use crate::error::{check_len, PmeError, Result};
use crate::geometry::{enclosed_volume, sub3, weighted_dot, weighted_extents, DiscreteShape, DisplacementField, Point};
use crate::klepca::{project_set, ReducedVector};
use crate::parameterization::{apply, DesignVector, Parameterization};
use crate::sampling::SnapshotSet;

pub const DEMO_GAMMA: f64 = 0.01;
/// Target designs keep this fraction of each box range clear of the walls.
pub const TARGET_MARGIN: f64 = 0.02;
pub const EXTENT_TOLERANCE: f64 = 0.05;

/// Squared second differences along each grid row.
pub fn roughness(shape: &DiscreteShape) -> f64 {
    let topo = shape.topology();
    let nodes = shape.nodes();
    let at = |r: usize, c: usize| nodes[r * topo.cols + c];
    let mut sum = 0.0;
    for r in 0..topo.rows {
        let interior: Box<dyn Iterator<Item = (usize, usize, usize)>> = if topo.wrap_cols {
            Box::new((0..topo.cols).map(|c| ((c + topo.cols - 1) % topo.cols, c, (c + 1) % topo.cols)))
        } else {
            Box::new((1..topo.cols.saturating_sub(1)).map(|c| (c - 1, c, c + 1)))
        };
        for (a, b, c) in interior {
            let d = second_difference(at(r, a), at(r, b), at(r, c));
            sum += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        }
    }
    sum
}

fn second_difference(a: Point, b: Point, c: Point) -> Point {
    let ab = sub3(a, b);
    let cb = sub3(c, b);
    [ab[0] + cb[0], ab[1] + cb[1], ab[2] + cb[2]]
}

#[derive(Debug, Clone)]
pub struct DemoObjective {
    baseline_nodes: Vec<Point>,
    node_weights: Vec<f64>,
    target: Vec<f64>,
    sigma2: f64,
    gamma: f64,
    rough0: f64,
}

impl DemoObjective {
    pub fn new(baseline: &DiscreteShape, target: &DisplacementField, sigma2: f64, gamma: f64) -> Result<Self> {
        check_len("target field", 3 * baseline.len(), target.0.len())?;
        let rough0 = roughness(baseline);
        if !(sigma2 > 0.0) || !(rough0 > 0.0) {
            return Err(PmeError::Config("demo objective needs positive variance and baseline roughness".into()));
        }
        Ok(Self {
            baseline_nodes: baseline.nodes().to_vec(),
            node_weights: baseline.node_weights(),
            target: target.0.clone(),
            sigma2,
            gamma,
            rough0,
        })
    }

    /// `‖δ' − δ*‖²_ρ / σ²`.
    pub fn misfit(&self, shape: &DiscreteShape) -> Result<f64> {
        check_len("shape nodes", self.baseline_nodes.len(), shape.len())?;
        let l = shape.len();
        let mut diff = vec![0.0; 3 * l];
        for (i, (p, q)) in shape.nodes().iter().zip(&self.baseline_nodes).enumerate() {
            for a in 0..3 {
                diff[a * l + i] = p[a] - q[a] - self.target[a * l + i];
            }
        }
        Ok(weighted_dot(&diff, &diff, &self.node_weights) / self.sigma2)
    }

    pub fn regularizer(&self, shape: &DiscreteShape) -> f64 {
        self.gamma * roughness(shape) / self.rough0
    }

    pub fn value(&self, shape: &DiscreteShape) -> Result<f64> {
        Ok(self.misfit(shape)? + self.regularizer(shape))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTarget {
    /// Training sample whose latent projection defines the target.
    pub sample: usize,
    pub x_star: Vec<f64>,
    pub u_star: Vec<f64>,
    pub delta_star: DisplacementField,
}

/// Picks the training projection with the largest normalized latent norm
/// `Σ x_k² / λ_k` whose `û` clears the box walls by [`TARGET_MARGIN`] and
/// whose shape passes `accept`. Ties go to the lowest sample index.
pub fn plant_target(
    emb: &Embedding,
    param: &Parameterization,
    set: &SnapshotSet,
    baseline: &DiscreteShape,
    accept: &dyn Fn(&DesignVector, &DiscreteShape) -> Result<bool>,
) -> Result<PlantedTarget> {
    let x = project_set(emb.basis(), set, baseline, emb.modes())?;
    let lambda = emb.basis().eigenvalues();
    let b = emb.bounds();
    let mut best: Option<(f64, PlantedTarget)> = None;
    for (j, col) in x.column_iter().enumerate() {
        let xs: Vec<f64> = col.iter().copied().collect();
        let u = reconstruct_u(emb, &ReducedVector(xs.clone()))?;
        let clear = u.values.iter().zip(b.lower.iter().zip(&b.upper)).all(|(v, (l, h))| {
            let pad = TARGET_MARGIN * (h - l);
            *v > l + pad && *v < h - pad
        });
        if !clear {
            continue;
        }
        let score: f64 = xs.iter().zip(lambda).map(|(v, l)| v * v / l).sum();
        if best.as_ref().is_some_and(|(s, _)| *s >= score) {
            continue;
        }
        let delta = param.deform(&u)?;
        if !accept(&u, &apply(baseline, &delta)?)? {
            continue;
        }
        best = Some((
            score,
            PlantedTarget {
                sample: j,
                x_star: xs,
                u_star: u.values,
                delta_star: delta,
            },
        ));
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| PmeError::Config("no training projection qualifies as a planted target".into()))
}

/// Baseline hull sizes the constraints are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullReference {
    pub volume: f64,
    pub beam: f64,
    pub draught: f64,
}

impl HullReference {
    pub fn of(baseline: &DiscreteShape) -> Result<Self> {
        let (_, beam, draught) = weighted_extents(baseline)?;
        Ok(Self {
            volume: enclosed_volume(baseline)?,
            beam,
            draught,
        })
    }

    /// Volume not below the baseline; wetted beam and draught within 5%.
    pub fn constraints(&self) -> Vec<Constraint> {
        let r = *self;
        vec![
            Constraint {
                name: "volume_ratio".into(),
                comparison: Comparison::AtLeast,
                threshold: 1.0,
                eval: Box::new(move |s| Ok(enclosed_volume(s)? / r.volume)),
            },
            Constraint {
                name: "beam_change".into(),
                comparison: Comparison::AtMost,
                threshold: EXTENT_TOLERANCE,
                eval: Box::new(move |s| Ok((weighted_extents(s)?.1 / r.beam - 1.0).abs())),
            },
            Constraint {
                name: "draught_change".into(),
                comparison: Comparison::AtMost,
                threshold: EXTENT_TOLERANCE,
                eval: Box::new(move |s| Ok((weighted_extents(s)?.2 / r.draught - 1.0).abs())),
            },
        ]
    }
}

/// Everything needed to pose the demo problem.
#[derive(Debug, Clone)]
pub struct Demo {
    pub target: PlantedTarget,
    pub objective: Arc<DemoObjective>,
    /// Objective value at the target, the regularizer floor.
    pub f_star: f64,
    pub hull: Option<HullReference>,
}

impl Demo {
    /// Plants a target; with `hull` set the target must also satisfy the hull
    /// constraints.
    pub fn build(
        emb: &Embedding,
        param: &Parameterization,
        set: &SnapshotSet,
        baseline: &DiscreteShape,
        gamma: f64,
        hull: bool,
    ) -> Result<Self> {
        let reference = if hull { Some(HullReference::of(baseline)?) } else { None };
        let constraints = reference.map(|r| r.constraints()).unwrap_or_default();
        let accept = |_: &DesignVector, shape: &DiscreteShape| -> Result<bool> {
            for c in &constraints {
                if c.violation((c.eval)(shape)?) > 0.0 {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        let target = plant_target(emb, param, set, baseline, &accept)?;
        let objective = DemoObjective::new(baseline, &target.delta_star, set.variance(baseline)?, gamma)?;
        let f_star = objective.value(&apply(baseline, &target.delta_star)?)?;
        Ok(Self {
            target,
            objective: Arc::new(objective),
            f_star,
            hull: reference,
        })
    }

    pub fn problem(&self, budget: usize) -> OptimizationProblem {
        let obj = Arc::clone(&self.objective);
        let problem = OptimizationProblem::new(Box::new(move |s| obj.value(s)), budget);
        match self.hull {
            Some(r) => problem.with_constraints(r.constraints()),
            None => problem,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed;
    use crate::geometry::solids::{wigley_demi_hull, HullDimensions};
    use crate::geometry::MeasureScheme;
    use crate::klepca::solve_kle;
    use crate::parameterization::make_bezier_airfoil;
    use crate::optimize::SearchSpace;
    use crate::sampling::{assemble, sample_designs};
    use nalgebra::{DMatrix, DVector};

    fn airfoil_demo(s: usize) -> (Parameterization, DiscreteShape, Demo) {
        let (spec, shape) = make_bezier_airfoil(91).unwrap();
        let p = Parameterization::register(spec, &shape).unwrap();
        let set = assemble(&p, &shape, &sample_designs(p.bounds(), s, 4).unwrap(), 4).unwrap();
        let basis = solve_kle(&set, &shape, 0.95).unwrap();
        let emb = embed(&set, &basis, &shape, p.bounds()).unwrap();
        let demo = Demo::build(&emb, &p, &set, &shape, DEMO_GAMMA, false).unwrap();
        (p, shape, demo)
    }

    #[test]
    fn straight_rows_have_zero_roughness() {
        let nodes = (0..8).map(|i| [i as f64 * 0.3, 2.0 * i as f64, 1.0]).collect();
        let s = DiscreteShape::from_grid(nodes, crate::geometry::Topology::grid(2, 4), MeasureScheme::Uniform).unwrap();
        assert!(roughness(&s) < 1e-24);
        let bent = s.with_nodes(s.nodes().iter().enumerate().map(|(i, p)| if i == 1 { [p[0], p[1] + 1.0, p[2]] } else { *p }).collect()).unwrap();
        // node next to the row end enters two stencils, weights 4 and 1
        assert!((roughness(&bent) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn target_scores_regularizer_floor_and_baseline_scores_higher() {
        let (p, shape, demo) = airfoil_demo(200);
        let target_shape = apply(&shape, &demo.target.delta_star).unwrap();
        assert!(demo.objective.misfit(&target_shape).unwrap() < 1e-24);
        assert!((demo.f_star - demo.objective.regularizer(&target_shape)).abs() < 1e-15);
        let base = demo.objective.value(&shape).unwrap();
        assert!(base > demo.f_star);
        let b = p.bounds();
        for (v, (l, h)) in demo.target.u_star.iter().zip(b.lower.iter().zip(&b.upper)) {
            assert!(v > l && v < h);
        }
    }

    #[test]
    fn latent_minimizer_stays_near_planted_design() {
        // quadratic in the latent coordinates: recover it by central differences
        let (spec, shape) = make_bezier_airfoil(91).unwrap();
        let p = Parameterization::register(spec, &shape).unwrap();
        let set = assemble(&p, &shape, &sample_designs(p.bounds(), 300, 4).unwrap(), 4).unwrap();
        let basis = solve_kle(&set, &shape, 0.95).unwrap();
        let emb = embed(&set, &basis, &shape, p.bounds()).unwrap();
        let demo = Demo::build(&emb, &p, &set, &shape, DEMO_GAMMA, false).unwrap();
        let space = SearchSpace::pme(&shape, &p, &emb, set.mean_delta());
        let n = emb.modes();
        let f = |x: &DVector<f64>| demo.objective.value(&space.shape(x.as_slice()).unwrap()).unwrap();
        let xs = DVector::from_vec(demo.target.x_star.clone());
        let h = 1e-3;
        let e = |k: usize| DVector::from_fn(n, |i, _| if i == k { h } else { 0.0 });
        let mut hess = DMatrix::zeros(n, n);
        let mut grad = DVector::zeros(n);
        for i in 0..n {
            grad[i] = (f(&(&xs + e(i))) - f(&(&xs - e(i)))) / (2.0 * h);
            for j in 0..n {
                hess[(i, j)] = (f(&(&xs + e(i) + e(j))) - f(&(&xs + e(i) - e(j))) - f(&(&xs - e(i) + e(j))) + f(&(&xs - e(i) - e(j))))
                    / (4.0 * h * h);
            }
        }
        let x_min = &xs - hess.cholesky().expect("positive definite").solve(&grad);
        let f_min = f(&x_min);
        assert!(f_min <= demo.f_star);
        assert!(demo.f_star - f_min < 0.05 * demo.f_star, "floor {f_min} vs {}", demo.f_star);
        let (u_min, _) = space.map(x_min.as_slice()).unwrap();
        let b = p.bounds();
        for k in 0..p.dimension() {
            let shift = (u_min.values[k] - demo.target.u_star[k]).abs();
            assert!(shift <= 0.05 * (b.upper[k] - b.lower[k]), "component {k}: shift {shift}");
        }
    }

    #[test]
    fn hull_constraints_hold_with_equality_at_baseline() {
        let dims = HullDimensions::default();
        let hull = wigley_demi_hull(&dims, MeasureScheme::PanelArea).waterline_mask(0.0).unwrap();
        let r = HullReference::of(&hull).unwrap();
        assert!((r.beam - 0.5 * dims.beam).abs() < 1e-12);
        assert!((r.draught - dims.draught).abs() < 1e-12);
        for c in r.constraints() {
            let v = (c.eval)(&hull).unwrap();
            assert_eq!(c.violation(v), 0.0, "{}", c.name);
        }
        let vol = &r.constraints()[0];
        assert_eq!((vol.eval)(&hull).unwrap(), 1.0);
        let slim = hull.with_nodes(hull.nodes().iter().map(|q| [q[0], 0.9 * q[1], q[2]]).collect()).unwrap();
        let cs = r.constraints();
        assert!(cs[0].violation((cs[0].eval)(&slim).unwrap()) > 0.0);
        assert!(cs[1].violation((cs[1].eval)(&slim).unwrap()) > 0.0);
        assert_eq!(cs[2].violation((cs[2].eval)(&slim).unwrap()), 0.0);
    }
}
