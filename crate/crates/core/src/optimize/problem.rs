//! Optimization problems over the original, KLE or PME coordinates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pso::{pso_minimize, PsoConfig, PsoResult};
use crate::archive::write_table;
use crate::embedding::{bound_violation, reconstruct_u, Embedding};
use crate::error::{check_len, PmeError, Result};
use crate::geometry::{DiscreteShape, DisplacementField};
use crate::klepca::{reconstruct_shape, ReducedVector};
use crate::parameterization::{apply, DesignVector, Parameterization};

pub const DEFAULT_PENALTY: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Original,
    Kle,
    Pme,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::Original, Space::Kle, Space::Pme];

    pub fn name(self) -> &'static str {
        match self {
            Space::Original => "original",
            Space::Kle => "kle",
            Space::Pme => "pme",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Space {
    type Err = PmeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Space::Original),
            "kle" => Ok(Space::Kle),
            "pme" => Ok(Space::Pme),
            other => Err(PmeError::Config(format!("unknown space {other:?}, expected original, kle or pme"))),
        }
    }
}

/// How a PME point becomes a shape: through the latent modes, or through the
/// reconstructed design vector and the original parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeRoute {
    Modal,
    Parametric,
}

pub type ShapeFn = Box<dyn Fn(&DiscreteShape) -> Result<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

pub struct Constraint {
    pub name: String,
    pub comparison: Comparison,
    pub threshold: f64,
    pub eval: ShapeFn,
}

impl Constraint {
    pub fn violation(&self, value: f64) -> f64 {
        let v = match self.comparison {
            Comparison::AtMost => value - self.threshold,
            Comparison::AtLeast => self.threshold - value,
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v.max(0.0)
        }
    }
}

pub struct OptimizationProblem {
    pub objective: ShapeFn,
    pub constraints: Vec<Constraint>,
    pub budget: usize,
    pub penalty_c: f64,
}

impl OptimizationProblem {
    pub fn new(objective: ShapeFn, budget: usize) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
            budget,
            penalty_c: DEFAULT_PENALTY,
        }
    }

    pub fn with_constraints(mut self, constraints: Vec<Constraint>) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_c > 0.0) {
            return Err(PmeError::Config(format!("penalty coefficient must be positive, got {}", self.penalty_c)));
        }
        if self.budget == 0 {
            return Err(PmeError::Config("budget must be positive".into()));
        }
        Ok(())
    }
}

/// `f + c · bound_violation(û)`; `f` itself when `û` is inside the box.
pub fn penalized_objective(f: f64, u_hat: &DesignVector, c: f64) -> f64 {
    let v = bound_violation(u_hat);
    if v > 0.0 {
        f + c * v
    } else {
        f
    }
}

/// Coordinates searched by the optimizer and their map to shapes.
#[derive(Clone, Copy)]
pub struct SearchSpace<'a> {
    pub kind: Space,
    baseline: &'a DiscreteShape,
    param: &'a Parameterization,
    embedding: Option<&'a Embedding>,
    mean_delta: &'a [f64],
    pub route: ShapeRoute,
    pub bound_penalty: bool,
}

impl<'a> SearchSpace<'a> {
    pub fn original(baseline: &'a DiscreteShape, param: &'a Parameterization) -> Self {
        Self {
            kind: Space::Original,
            baseline,
            param,
            embedding: None,
            mean_delta: &[],
            route: ShapeRoute::Parametric,
            bound_penalty: false,
        }
    }

    /// Latent search with modal shapes and no bound penalty. `û` is still
    /// reconstructed for feasibility reporting.
    pub fn kle(baseline: &'a DiscreteShape, param: &'a Parameterization, emb: &'a Embedding, mean_delta: &'a [f64]) -> Self {
        Self {
            kind: Space::Kle,
            baseline,
            param,
            embedding: Some(emb),
            mean_delta,
            route: ShapeRoute::Modal,
            bound_penalty: false,
        }
    }

    /// Latent search through the original parameterization, penalizing `û`
    /// outside the original box.
    pub fn pme(baseline: &'a DiscreteShape, param: &'a Parameterization, emb: &'a Embedding, mean_delta: &'a [f64]) -> Self {
        Self {
            kind: Space::Pme,
            baseline,
            param,
            embedding: Some(emb),
            mean_delta,
            route: ShapeRoute::Parametric,
            bound_penalty: true,
        }
    }

    pub fn with_route(mut self, route: ShapeRoute) -> Self {
        self.route = route;
        self
    }

    pub fn with_bound_penalty(mut self, on: bool) -> Self {
        self.bound_penalty = on;
        self
    }

    pub fn baseline(&self) -> &'a DiscreteShape {
        self.baseline
    }

    pub fn parameterization(&self) -> &'a Parameterization {
        self.param
    }

    pub fn dimension(&self) -> usize {
        match self.embedding {
            Some(e) if self.kind != Space::Original => e.modes(),
            _ => self.param.dimension(),
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self.embedding {
            Some(e) if self.kind != Space::Original => (e.x_lower().to_vec(), e.x_upper().to_vec()),
            _ => (self.param.bounds().lower.clone(), self.param.bounds().upper.clone()),
        }
    }

    /// Original design vector and displacement for an active-space point.
    pub fn map(&self, x: &[f64]) -> Result<(DesignVector, DisplacementField)> {
        check_len("search point", self.dimension(), x.len())?;
        let Some(emb) = self.embedding.filter(|_| self.kind != Space::Original) else {
            let u = DesignVector::new(x.to_vec(), self.param.bounds())?;
            let delta = self.param.deform(&u)?;
            return Ok((u, delta));
        };
        let xr = ReducedVector(x.to_vec());
        let u = reconstruct_u(emb, &xr)?;
        let delta = match self.route {
            ShapeRoute::Modal => reconstruct_shape(emb.basis(), &xr, self.mean_delta)?,
            ShapeRoute::Parametric => self.param.deform(&u)?,
        };
        Ok((u, delta))
    }

    pub fn shape(&self, x: &[f64]) -> Result<DiscreteShape> {
        let (_, delta) = self.map(x)?;
        apply(self.baseline, &delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eval: usize,
    pub iteration: usize,
    pub x: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub objective: f64,
    pub bound_violation: f64,
    pub constraint_violation: f64,
    pub penalty: f64,
    pub penalized: f64,
    /// `û` inside the original box.
    pub box_feasible: bool,
    /// Inside the box and satisfying every constraint.
    pub feasible: bool,
    /// Running minimum of `penalized`.
    pub best: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub space: Space,
    pub seed: u64,
    pub trace: Vec<EvalRecord>,
    pub best: EvalRecord,
    pub pso: PsoResult,
}

impl OptimizationOutcome {
    /// Records that strictly improved the running best.
    pub fn incumbents(&self) -> Vec<&EvalRecord> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .filter(|r| {
                let improves = r.penalized < best;
                if improves {
                    best = r.penalized;
                }
                improves
            })
            .collect()
    }
}

fn evaluate(problem: &OptimizationProblem, space: &SearchSpace, x: &[f64]) -> (DesignVector, f64, f64, f64, Option<String>) {
    let inner = || -> Result<(DesignVector, f64, f64)> {
        let (u, delta) = space.map(x)?;
        let shape = apply(space.baseline, &delta)?;
        let f = (problem.objective)(&shape)?;
        let mut cv = 0.0;
        for c in &problem.constraints {
            cv += c.violation((c.eval)(&shape)?);
        }
        Ok((u, f, cv))
    };
    match inner() {
        Ok((u, f, cv)) if f.is_finite() => {
            let bv = bound_violation(&u);
            (u, f, bv, cv, None)
        }
        Ok((u, f, _)) => {
            let bv = bound_violation(&u);
            (u, f64::INFINITY, bv, 0.0, Some(format!("objective returned {f}")))
        }
        Err(e) => {
            let u = DesignVector {
                values: vec![f64::NAN; space.param.dimension()],
                lower: space.param.bounds().lower.clone(),
                upper: space.param.bounds().upper.clone(),
            };
            (u, f64::INFINITY, 0.0, 0.0, Some(e.to_string()))
        }
    }
}

/// Runs the swarm in `space`, recording every evaluation.
pub fn run(problem: &OptimizationProblem, space: &SearchSpace, cfg: &PsoConfig, seed: u64) -> Result<OptimizationOutcome> {
    problem.validate()?;
    let (lower, upper) = space.bounds();
    let mut trace: Vec<EvalRecord> = Vec::with_capacity(problem.budget);
    let mut best = f64::INFINITY;
    let c = problem.penalty_c;
    let mut f = |x: &[f64], iteration: usize| -> f64 {
        let (u, obj, bv, cv, failure) = evaluate(problem, space, x);
        let bound_term = if space.bound_penalty && bv > 0.0 { c * bv } else { 0.0 };
        let constraint_term = if cv > 0.0 { c * cv } else { 0.0 };
        let penalty = bound_term + constraint_term;
        let penalized = if failure.is_some() { f64::INFINITY } else { obj + penalty };
        best = best.min(penalized);
        let box_feasible = failure.is_none() && bv == 0.0;
        trace.push(EvalRecord {
            eval: trace.len(),
            iteration,
            x: x.to_vec(),
            u_hat: u.values,
            objective: obj,
            bound_violation: bv,
            constraint_violation: cv,
            penalty,
            penalized,
            box_feasible,
            feasible: box_feasible && cv == 0.0,
            best,
            failure,
        });
        penalized
    };
    let pso = pso_minimize(&mut f, &lower, &upper, problem.budget, cfg, seed)?;
    let best = trace
        .iter()
        .fold(None::<&EvalRecord>, |acc, r| match acc {
            Some(b) if b.penalized <= r.penalized => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| PmeError::Config("no evaluations were made".into()))?;
    Ok(OptimizationOutcome {
        space: space.kind,
        seed,
        trace,
        best,
        pso,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// One row per evaluation; `x_*` are active-space coordinates, `u_*` the
/// original design variables.
pub fn write_trace(path: &Path, trace: &[EvalRecord]) -> Result<()> {
    let n = trace.first().map_or(0, |r| r.x.len());
    let m = trace.first().map_or(0, |r| r.u_hat.len());
    let mut header: Vec<String> = [
        "eval",
        "iteration",
        "objective",
        "penalty",
        "penalized",
        "bound_violation",
        "constraint_violation",
        "box_feasible",
        "feasible",
        "best",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|k| format!("x_{k}")));
    header.extend((1..=m).map(|k| format!("u_{k}")));
    header.push("failure".into());
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            let mut row = vec![
                r.eval.to_string(),
                r.iteration.to_string(),
                fmt_f(r.objective),
                fmt_f(r.penalty),
                fmt_f(r.penalized),
                fmt_f(r.bound_violation),
                fmt_f(r.constraint_violation),
                r.box_feasible.to_string(),
                r.feasible.to_string(),
                fmt_f(r.best),
            ];
            row.extend(r.x.iter().map(|v| fmt_f(*v)));
            row.extend(r.u_hat.iter().map(|v| fmt_f(*v)));
            row.push(r.failure.clone().unwrap_or_default());
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header_refs, &rows)
}
