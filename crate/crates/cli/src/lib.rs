//! File-based pipeline behind the `pme` command: sample, reduce, embed,
//! optimize and report, each stage checking the producer hash of the one
//! before it.

pub mod config;
pub mod pipeline;

pub use config::{Case, FileRef, OptimizerConfig, PipelineConfig, StageKeys, WeightScheme};
pub use pipeline::{report, Pipeline, Report, RunRecord};
