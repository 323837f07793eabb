//! The two built-in study cases: a 14-variable Bezier airfoil and a
//! 22-variable FFD demi-hull.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PmeError, Result};
use crate::geometry::solids::{wigley_demi_hull, HullDimensions};
use crate::geometry::{DiscreteShape, MeasureScheme};
use crate::parameterization::{make_bezier_airfoil, make_ffd_hull, table1_active_dofs, ParameterizationSpec};

pub const AIRFOIL_NODES_PER_SIDE: usize = 91;
pub const FFD_LATTICE: [usize; 3] = [9, 3, 3];
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    AirfoilBezier14,
    HullFfd22,
}

/// Study-level settings that come with a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetDefaults {
    pub samples: usize,
    pub confidence: f64,
    pub budget: usize,
    /// Volume, beam and draught constraints on the optimization.
    pub constrained: bool,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::AirfoilBezier14, Preset::HullFfd22];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AirfoilBezier14 => "airfoil-bezier14",
            Preset::HullFfd22 => "hull-ffd22",
        }
    }

    pub fn defaults(self) -> PresetDefaults {
        match self {
            Preset::AirfoilBezier14 => PresetDefaults {
                samples: 1000,
                confidence: 0.95,
                budget: 500,
                constrained: false,
            },
            Preset::HullFfd22 => PresetDefaults {
                samples: 1000,
                confidence: 0.95,
                budget: 1000,
                constrained: true,
            },
        }
    }

    /// Parameterization and baseline shape with its measures and weights.
    pub fn case(self) -> Result<(ParameterizationSpec, DiscreteShape)> {
        match self {
            Preset::AirfoilBezier14 => make_bezier_airfoil(AIRFOIL_NODES_PER_SIDE),
            Preset::HullFfd22 => {
                let dims = HullDimensions::default();
                let hull = wigley_demi_hull(&dims, MeasureScheme::PanelArea).waterline_mask(0.0)?;
                let (lo, hi) = hull_lattice_box(&dims);
                let spec = make_ffd_hull(FFD_LATTICE, lo, hi, table1_active_dofs(), &hull)?;
                Ok((spec, hull))
            }
        }
    }
}

/// Lattice box spanning the hull length, the half beam and keel to deck.
pub fn hull_lattice_box(dims: &HullDimensions) -> ([f64; 3], [f64; 3]) {
    (
        [-0.5 * dims.length, 0.0, -dims.draught],
        [0.5 * dims.length, 0.5 * dims.beam, dims.freeboard],
    )
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = PmeError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PmeError::Config(format!("unknown preset `{s}`, expected airfoil-bezier14 or hull-ffd22")))
    }
}
