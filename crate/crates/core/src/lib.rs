//! Design-space dimensionality reduction for shape optimization.
//!
//! Shape-modification snapshots from a parametric model are reduced by a
//! weighted Karhunen-Loève expansion. Parametric model embedding augments the
//! expansion with the original design variables, so every latent point maps
//! back to a design vector of the original model.

pub mod archive;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod klepca;
pub mod optimize;
pub mod parameterization;
pub mod presets;
pub mod sampling;

#[cfg(test)]
mod testing;

pub use error::{PmeError, Result};
