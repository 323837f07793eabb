//! Particle swarm optimization in original, KLE or PME coordinates.

pub mod compare;
pub mod demo;
pub mod problem;
pub mod pso;

pub use compare::{compare_spaces, evals_to_drop, speedup, summarize, Comparison, RunSummary, DEFAULT_DROPS};
pub use demo::{roughness, Demo, DemoObjective, HullReference, PlantedTarget, DEMO_GAMMA};
pub use problem::{
    penalized_objective, run, write_trace, Constraint, EvalRecord, OptimizationOutcome, OptimizationProblem, SearchSpace,
    ShapeRoute, Space, DEFAULT_PENALTY,
};
pub use pso::{pso_minimize, PsoConfig, PsoResult};
