//! Side-by-side runs of one problem in several search spaces.

use serde::Serialize;

use super::problem::{run, OptimizationOutcome, OptimizationProblem, SearchSpace, Space};
use super::pso::PsoConfig;
use crate::error::Result;

pub const DEFAULT_DROPS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub space: Space,
    pub seed: u64,
    pub best_penalized: f64,
    pub best_objective: f64,
    pub best_feasible: bool,
    pub evaluations: usize,
    /// Incumbents whose `û` is outside the original box.
    pub infeasible_incumbents: usize,
    pub incumbents: usize,
    /// First evaluation (1-based count) at which the running best reached
    /// `(1 − drop) · reference`, per drop level.
    pub evals_to_drop: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Objective of the unmodified baseline, the drop reference.
    pub reference: f64,
    pub drops: Vec<f64>,
    pub runs: Vec<OptimizationOutcome>,
    pub summaries: Vec<RunSummary>,
}

pub fn evals_to_drop(outcome: &OptimizationOutcome, reference: f64, drops: &[f64]) -> Vec<Option<usize>> {
    drops
        .iter()
        .map(|d| {
            let level = (1.0 - d) * reference;
            outcome.trace.iter().position(|r| r.best <= level).map(|i| i + 1)
        })
        .collect()
}

pub fn summarize(outcome: &OptimizationOutcome, reference: f64, drops: &[f64]) -> RunSummary {
    let inc = outcome.incumbents();
    RunSummary {
        space: outcome.space,
        seed: outcome.seed,
        best_penalized: outcome.best.penalized,
        best_objective: outcome.best.objective,
        best_feasible: outcome.best.feasible,
        evaluations: outcome.trace.len(),
        infeasible_incumbents: inc.iter().filter(|r| !r.box_feasible).count(),
        incumbents: inc.len(),
        evals_to_drop: evals_to_drop(outcome, reference, drops),
    }
}

/// Runs every space with every seed. `reference` is usually the objective at
/// the baseline shape.
pub fn compare_spaces(
    problem: &OptimizationProblem,
    spaces: &[SearchSpace],
    cfg: &PsoConfig,
    seeds: &[u64],
    reference: f64,
    drops: &[f64],
) -> Result<Comparison> {
    let mut runs = Vec::with_capacity(spaces.len() * seeds.len());
    for space in spaces {
        for &seed in seeds {
            runs.push(run(problem, space, cfg, seed)?);
        }
    }
    let summaries = runs.iter().map(|o| summarize(o, reference, drops)).collect();
    Ok(Comparison {
        reference,
        drops: drops.to_vec(),
        runs,
        summaries,
    })
}

/// Ratio of original-space to PME-space evaluations for each drop level
/// reached by both, averaged over matching seeds.
pub fn speedup(cmp: &Comparison) -> Vec<Option<f64>> {
    (0..cmp.drops.len())
        .map(|k| {
            let ratios: Vec<f64> = cmp
                .summaries
                .iter()
                .filter(|s| s.space == Space::Original)
                .filter_map(|o| {
                    let p = cmp.summaries.iter().find(|s| s.space == Space::Pme && s.seed == o.seed)?;
                    Some(o.evals_to_drop[k]? as f64 / p.evals_to_drop[k]? as f64)
                })
                .collect();
            (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
        })
        .collect()
}
