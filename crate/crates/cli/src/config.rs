//! Pipeline configuration and the per-stage producer hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pme_core::archive::hash_bytes;
use pme_core::geometry::{format_geometry, read_geometry, DiscreteShape};
use pme_core::optimize::{PsoConfig, DEFAULT_PENALTY, DEMO_GAMMA};
use pme_core::parameterization::{Parameterization, ParameterizationSpec};
use pme_core::presets::{Preset, DEFAULT_SEED};
use pme_core::{PmeError, Result};

/// A file the pipeline reads, optionally pinned by its SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl FileRef {
    /// Reads the file and checks the pinned hash, if any.
    pub fn load(&self, base: &Path) -> Result<Vec<u8>> {
        let path = base.join(&self.path);
        let bytes = fs::read(&path)
            .map_err(|e| PmeError::Config(format!("cannot read referenced file {}: {e}", path.display())))?;
        if let Some(expected) = &self.sha256 {
            let found = hash_bytes(&bytes);
            if !found.eq_ignore_ascii_case(expected) {
                return Err(PmeError::Config(format!(
                    "{} has sha256 {found}, configuration pins {expected}",
                    path.display()
                )));
            }
        }
        Ok(bytes)
    }
}

/// How node weights ρ are assigned on the baseline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightScheme {
    /// Keep the weights carried by the preset or geometry file.
    #[default]
    AsBuilt,
    Uniform,
    WaterlineMask {
        #[serde(default)]
        level: f64,
    },
    /// One weight per node, a single CSV column.
    File { file: FileRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Evaluation budget; the preset value when absent.
    pub budget: Option<usize>,
    pub penalty_c: f64,
    pub gamma: f64,
    /// Hull volume and extent constraints; the preset value when absent.
    pub constraints: Option<bool>,
    /// PSO seed; the pipeline seed when absent.
    pub seed: Option<u64>,
    pub pso: PsoConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            budget: None,
            penalty_c: DEFAULT_PENALTY,
            gamma: DEMO_GAMMA,
            constraints: None,
            seed: None,
            pso: PsoConfig::default().with_polish(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Option<Preset>,
    /// JSON parameterization spec, replacing the preset's.
    pub parameterization: Option<FileRef>,
    /// Baseline geometry file, replacing the preset's.
    pub geometry: Option<FileRef>,
    pub weights: WeightScheme,
    /// Monte Carlo sample count S; the preset value when absent.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Retained variance fraction l; the preset value when absent.
    pub confidence: Option<f64>,
    /// Sample counts at which σ² is reported; a default ladder when absent.
    pub checkpoints: Option<Vec<usize>>,
    /// Latent box widening as a fraction of each range.
    pub margin: f64,
    pub optimizer: OptimizerConfig,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preset: None,
            parameterization: None,
            geometry: None,
            weights: WeightScheme::AsBuilt,
            samples: None,
            seed: DEFAULT_SEED,
            confidence: None,
            checkpoints: None,
            margin: 0.0,
            optimizer: OptimizerConfig::default(),
            out: PathBuf::from("runs/pme"),
        }
    }
}

const FALLBACK_SAMPLES: usize = 1000;
const FALLBACK_CONFIDENCE: f64 = 0.95;
const FALLBACK_BUDGET: usize = 500;

impl PipelineConfig {
    /// Reads a JSON config. Relative file references and a relative output
    /// directory resolve against the directory holding it.
    pub fn from_file(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)
            .map_err(|e| PmeError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| PmeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.out = base.join(&cfg.out);
        Ok((cfg, base))
    }

    pub fn samples(&self) -> usize {
        self.samples
            .unwrap_or_else(|| self.preset.map_or(FALLBACK_SAMPLES, |p| p.defaults().samples))
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
            .unwrap_or_else(|| self.preset.map_or(FALLBACK_CONFIDENCE, |p| p.defaults().confidence))
    }

    pub fn budget(&self) -> usize {
        self.optimizer
            .budget
            .unwrap_or_else(|| self.preset.map_or(FALLBACK_BUDGET, |p| p.defaults().budget))
    }

    pub fn constrained(&self) -> bool {
        self.optimizer
            .constraints
            .unwrap_or_else(|| self.preset.is_some_and(|p| p.defaults().constrained))
    }

    pub fn optimizer_seed(&self) -> u64 {
        self.optimizer.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_none() && (self.parameterization.is_none() || self.geometry.is_none()) {
            return Err(PmeError::Config(
                "need a preset, or both `parameterization` and `geometry` files".into(),
            ));
        }
        if self.samples() < 2 {
            return Err(PmeError::Config(format!("samples must be at least 2, got {}", self.samples())));
        }
        let l = self.confidence();
        if !(l > 0.0 && l <= 1.0) {
            return Err(PmeError::Config(format!("confidence must lie in (0, 1], got {l}")));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(PmeError::Config(format!("margin must be finite and non-negative, got {}", self.margin)));
        }
        let opt = &self.optimizer;
        if !(opt.penalty_c > 0.0 && opt.penalty_c.is_finite()) {
            return Err(PmeError::Config(format!("penalty_c must be positive, got {}", opt.penalty_c)));
        }
        if !(opt.gamma >= 0.0 && opt.gamma.is_finite()) {
            return Err(PmeError::Config(format!("gamma must be non-negative, got {}", opt.gamma)));
        }
        Ok(())
    }
}

/// The resolved study case: parameterization registered on the weighted
/// baseline.
pub struct Case {
    pub baseline: DiscreteShape,
    pub param: Parameterization,
    /// Hash of the parameterization settings and the baseline file image.
    pub hash: String,
}

impl Case {
    pub fn resolve(cfg: &PipelineConfig, base: &Path) -> Result<Self> {
        cfg.validate()?;
        let preset = cfg.preset.map(Preset::case).transpose()?;
        let spec: ParameterizationSpec = match (&cfg.parameterization, &preset) {
            (Some(file), _) => serde_json::from_slice(&file.load(base)?)
                .map_err(|e| PmeError::Config(format!("parameterization {}: {e}", file.path.display())))?,
            (None, Some((spec, _))) => spec.clone(),
            (None, None) => unreachable!("validated"),
        };
        let shape = match (&cfg.geometry, preset) {
            (Some(file), _) => {
                file.load(base)?;
                read_geometry(&base.join(&file.path))?
            }
            (None, Some((_, shape))) => shape,
            (None, None) => unreachable!("validated"),
        };
        let baseline = match &cfg.weights {
            WeightScheme::AsBuilt => shape,
            WeightScheme::Uniform => shape.with_weights(vec![1.0; shape.len()])?,
            WeightScheme::WaterlineMask { level } => shape.waterline_mask(*level)?,
            WeightScheme::File { file } => {
                file.load(base)?;
                let w = pme_core::archive::read_vector(&base.join(&file.path))?;
                shape.with_weights(w)?
            }
        };
        let param = Parameterization::register(spec, &baseline)?;
        let spec_json = serde_json::to_vec(param.spec())?;
        let hash = hash_bytes(&[spec_json, format_geometry(&baseline).into_bytes()].concat());
        Ok(Self { baseline, param, hash })
    }
}

/// Producer hashes chained through the stages. Each covers every setting
/// its stage and the stages before it consume, and nothing else, so a new
/// optimizer setting does not invalidate the snapshots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageKeys {
    pub sample: String,
    pub reduce: String,
    pub embed: String,
    pub optimize: String,
}

fn chain(prev: &str, value: serde_json::Value) -> Result<String> {
    let body = serde_json::to_vec(&serde_json::json!({ "after": prev, "settings": value }))?;
    Ok(hash_bytes(&body))
}

impl StageKeys {
    pub fn new(cfg: &PipelineConfig, case: &Case) -> Result<Self> {
        let sample = chain(
            &case.hash,
            serde_json::json!({ "samples": cfg.samples(), "seed": cfg.seed, "checkpoints": cfg.checkpoints }),
        )?;
        let reduce = chain(&sample, serde_json::json!({ "confidence": cfg.confidence() }))?;
        let embed = chain(&reduce, serde_json::json!({ "margin": cfg.margin }))?;
        let opt = &cfg.optimizer;
        let optimize = chain(
            &embed,
            serde_json::json!({
                "budget": cfg.budget(),
                "penalty_c": opt.penalty_c,
                "gamma": opt.gamma,
                "constraints": cfg.constrained(),
                "seed": cfg.optimizer_seed(),
                "pso": serde_json::to_value(&opt.pso)?,
            }),
        )?;
        Ok(Self {
            sample,
            reduce,
            embed,
            optimize,
        })
    }
}
