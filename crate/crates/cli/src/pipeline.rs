//! The five pipeline stages over an output directory.
//!
//! ```text
//! out/snapshots/  out/basis/  out/embedding/     archives
//! out/report/                                    CSV tables
//! out/optimize/target.json
//! out/optimize/<space>/{trace.csv, best_u.csv, best_shape.dat, summary.json}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pme_core::archive::{
    read_basis, read_embedding, read_json, read_snapshots, write_basis, write_embedding, write_json, write_snapshots,
    write_table, BASIS_DIR, EMBEDDING_DIR, SNAPSHOT_DIR,
};
use pme_core::embedding::{embed_with, nse_via_design_space, EmbedOptions, Embedding};
use pme_core::geometry::write_geometry;
use pme_core::klepca::{nmse_curve, nse_per_sample, solve_kle, ModalBasis};
use pme_core::optimize::{evals_to_drop, run, write_trace, Demo, OptimizationOutcome, SearchSpace, Space, DEFAULT_DROPS};
use pme_core::sampling::{assemble, default_checkpoints, sample_designs, variance_convergence, SnapshotSet};
use pme_core::{PmeError, Result};

use crate::config::{Case, PipelineConfig, StageKeys};

pub const REPORT_DIR: &str = "report";
pub const OPTIMIZE_DIR: &str = "optimize";

/// A configuration resolved against its case, ready to run stages.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub case: Case,
    pub keys: StageKeys,
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub rows: usize,
    pub samples: usize,
    pub inert_blocks: Vec<usize>,
    pub convergence: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ReduceReport {
    pub rank: usize,
    pub retained: usize,
    pub sigma2: f64,
    pub nmse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmbedReport {
    pub modes: usize,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub max_nse_difference: f64,
}

/// Per-space result of an optimization run, as stored in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub space: Space,
    pub seed: u64,
    pub producer: String,
    pub budget: usize,
    pub evaluations: usize,
    pub f_star: f64,
    pub baseline_objective: f64,
    pub best_objective: f64,
    pub best_penalized: f64,
    /// `(best − f*) / f*`.
    pub relative_gap: f64,
    pub feasible: bool,
    pub box_feasible: bool,
    pub incumbents: usize,
    pub infeasible_incumbents: usize,
    pub drops: Vec<f64>,
    pub evals_to_drop: Vec<Option<usize>>,
    pub best_x: Vec<f64>,
    pub best_u: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub sample: usize,
    pub x_star: Vec<f64>,
    pub u_star: Vec<f64>,
    pub f_star: f64,
    pub producer: String,
}

fn stale(stage: &str, expected: &str, found: &str) -> PmeError {
    PmeError::Provenance {
        expected: format!("{expected} (current configuration)"),
        found: format!("{found} in the {stage} archive; rerun `{stage}` with this configuration"),
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, base: &Path) -> Result<Self> {
        let case = Case::resolve(&cfg, base)?;
        let keys = StageKeys::new(&cfg, &case)?;
        Ok(Self { cfg, case, keys })
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out
    }

    fn report_dir(&self) -> Result<PathBuf> {
        let dir = self.out().join(REPORT_DIR);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn load_snapshots(&self) -> Result<SnapshotSet> {
        let (set, meta) = read_snapshots(&self.out().join(SNAPSHOT_DIR))?;
        if meta.producer != self.keys.sample {
            return Err(stale("sample", &self.keys.sample, &meta.producer));
        }
        Ok(set)
    }

    pub fn load_basis(&self, set: &SnapshotSet) -> Result<ModalBasis> {
        let (basis, meta) = read_basis(&self.out().join(BASIS_DIR))?;
        if meta.producer != self.keys.reduce {
            return Err(stale("reduce", &self.keys.reduce, &meta.producer));
        }
        if basis.source_hash() != set.hash() {
            return Err(PmeError::Provenance {
                expected: set.hash().to_string(),
                found: basis.source_hash().to_string(),
            });
        }
        Ok(basis)
    }

    pub fn load_embedding(&self, basis: &ModalBasis) -> Result<Embedding> {
        let (emb, meta) = read_embedding(&self.out().join(EMBEDDING_DIR), basis)?;
        if meta.producer != self.keys.embed {
            return Err(stale("embed", &self.keys.embed, &meta.producer));
        }
        Ok(emb)
    }

    /// Draws the Monte Carlo designs and writes the snapshot archive and the
    /// σ² convergence table.
    pub fn sample(&self) -> Result<SampleReport> {
        let s = self.cfg.samples();
        let p = &self.case.param;
        let designs = sample_designs(p.bounds(), s, self.cfg.seed)?;
        let set = assemble(p, &self.case.baseline, &designs, self.cfg.seed)?;
        let meta = write_snapshots(&self.out().join(SNAPSHOT_DIR), &set, &self.keys.sample)?;
        let checkpoints = self.cfg.checkpoints.clone().unwrap_or_else(|| default_checkpoints(s));
        let convergence = variance_convergence(&set, &self.case.baseline, &checkpoints)?;
        let last = convergence.last().map_or(f64::NAN, |c| c.1);
        let rows: Vec<Vec<String>> = convergence
            .iter()
            .map(|&(n, v)| vec![n.to_string(), num(v), num((v - last).abs() / last)])
            .collect();
        write_table(
            &self.report_dir()?.join("variance_convergence.csv"),
            &["samples", "sigma2", "relative_change"],
            &rows,
        )?;
        Ok(SampleReport {
            rows: meta.rows,
            samples: meta.samples,
            inert_blocks: meta.inert_blocks,
            convergence,
        })
    }

    /// Solves the weighted eigenproblem and writes the basis archive, the
    /// spectrum and the NMSE curve.
    pub fn reduce(&self) -> Result<ReduceReport> {
        let set = self.load_snapshots()?;
        let shape = &self.case.baseline;
        let basis = solve_kle(&set, shape, self.cfg.confidence())?;
        write_basis(&self.out().join(BASIS_DIR), &basis, &self.keys.reduce)?;
        let dir = self.report_dir()?;
        let sigma2 = basis.sigma2();
        let cumulative = basis.cumulative_fraction();
        let spectrum: Vec<Vec<String>> = basis
            .eigenvalues()
            .iter()
            .zip(&cumulative)
            .enumerate()
            .map(|(k, (l, c))| vec![(k + 1).to_string(), num(*l), num(l / sigma2), num(*c)])
            .collect();
        write_table(&dir.join("spectrum.csv"), &["mode", "eigenvalue", "fraction", "cumulative"], &spectrum)?;
        let nmse = nmse_curve(&basis, &set, shape)?;
        let curve: Vec<Vec<String>> = nmse
            .iter()
            .enumerate()
            .map(|(n, e)| {
                let parseval = if n == 0 { 1.0 } else { 1.0 - cumulative[n - 1] };
                vec![n.to_string(), num(*e), num(parseval)]
            })
            .collect();
        write_table(&dir.join("nmse.csv"), &["modes", "nmse", "one_minus_cumulative"], &curve)?;
        Ok(ReduceReport {
            rank: basis.rank(),
            retained: basis.retained(),
            sigma2,
            nmse,
        })
    }

    /// Builds the design-variable embedding and writes the per-sample NSE
    /// of the modal and the design-space reconstructions side by side.
    pub fn embed(&self) -> Result<EmbedReport> {
        let set = self.load_snapshots()?;
        let basis = self.load_basis(&set)?;
        let shape = &self.case.baseline;
        let opts = EmbedOptions {
            modes: None,
            margin: self.cfg.margin,
        };
        let emb = embed_with(&set, &basis, shape, self.case.param.bounds(), opts)?;
        write_embedding(&self.out().join(EMBEDDING_DIR), &emb, &self.keys.embed)?;
        let kle = nse_per_sample(&basis, &set, shape, emb.modes())?;
        let pme = nse_via_design_space(&emb, &self.case.param, &set, shape)?;
        let mut max_diff: f64 = 0.0;
        let rows: Vec<Vec<String>> = kle
            .iter()
            .zip(&pme)
            .enumerate()
            .map(|(j, (a, b))| {
                max_diff = max_diff.max((a - b).abs());
                vec![(j + 1).to_string(), num(*a), num(*b)]
            })
            .collect();
        write_table(&self.report_dir()?.join("nse_pairs.csv"), &["sample", "nse_kle", "nse_pme"], &rows)?;
        Ok(EmbedReport {
            modes: emb.modes(),
            x_lower: emb.x_lower().to_vec(),
            x_upper: emb.x_upper().to_vec(),
            max_nse_difference: max_diff,
        })
    }

    /// Runs the planted-optimum problem in each requested space.
    pub fn optimize(&self, spaces: &[Space]) -> Result<Vec<RunRecord>> {
        let set = self.load_snapshots()?;
        let basis = self.load_basis(&set)?;
        let emb = self.load_embedding(&basis)?;
        let shape = &self.case.baseline;
        let param = &self.case.param;
        let opt = &self.cfg.optimizer;
        let demo = Demo::build(&emb, param, &set, shape, opt.gamma, self.cfg.constrained())?;
        let mut problem = demo.problem(self.cfg.budget());
        problem.penalty_c = opt.penalty_c;
        let baseline_objective = demo.objective.value(shape)?;
        let dir = self.out().join(OPTIMIZE_DIR);
        fs::create_dir_all(&dir)?;
        write_json(
            &dir.join("target.json"),
            &TargetRecord {
                sample: demo.target.sample,
                x_star: demo.target.x_star.clone(),
                u_star: demo.target.u_star.clone(),
                f_star: demo.f_star,
                producer: self.keys.optimize.clone(),
            },
        )?;
        let seed = self.cfg.optimizer_seed();
        let mut records = Vec::with_capacity(spaces.len());
        for &kind in spaces {
            let space = match kind {
                Space::Original => SearchSpace::original(shape, param),
                Space::Kle => SearchSpace::kle(shape, param, &emb, set.mean_delta()),
                Space::Pme => SearchSpace::pme(shape, param, &emb, set.mean_delta()),
            };
            let outcome = run(&problem, &space, &opt.pso, seed)?;
            let record = self.record(&outcome, demo.f_star, baseline_objective);
            let run_dir = dir.join(kind.name());
            fs::create_dir_all(&run_dir)?;
            write_trace(&run_dir.join("trace.csv"), &outcome.trace)?;
            let b = param.bounds();
            let best_u: Vec<Vec<String>> = (0..param.dimension())
                .map(|k| vec![format!("u{}", k + 1), num(record.best_u[k]), num(b.lower[k]), num(b.upper[k])])
                .collect();
            write_table(&run_dir.join("best_u.csv"), &["variable", "value", "lower", "upper"], &best_u)?;
            write_geometry(&run_dir.join("best_shape.dat"), &space.shape(&outcome.best.x)?)?;
            write_json(&run_dir.join("summary.json"), &record)?;
            records.push(record);
        }
        Ok(records)
    }

    fn record(&self, o: &OptimizationOutcome, f_star: f64, reference: f64) -> RunRecord {
        let incumbents = o.incumbents();
        let b = self.case.param.bounds();
        RunRecord {
            space: o.space,
            seed: o.seed,
            producer: self.keys.optimize.clone(),
            budget: self.cfg.budget(),
            evaluations: o.trace.len(),
            f_star,
            baseline_objective: reference,
            best_objective: o.best.objective,
            best_penalized: o.best.penalized,
            relative_gap: (o.best.objective - f_star) / f_star,
            feasible: o.best.feasible,
            box_feasible: o.best.box_feasible,
            incumbents: incumbents.len(),
            infeasible_incumbents: incumbents.iter().filter(|r| !r.box_feasible).count(),
            drops: DEFAULT_DROPS.to_vec(),
            evals_to_drop: evals_to_drop(o, reference, &DEFAULT_DROPS),
            best_x: o.best.x.clone(),
            best_u: o.best.u_hat.clone(),
            lower: b.lower.clone(),
            upper: b.upper.clone(),
        }
    }
}

/// Comparison across runs, one entry per (run directory, space).
#[derive(Debug, Clone)]
pub struct Report {
    pub labels: Vec<String>,
    pub records: Vec<RunRecord>,
    pub u_star: Option<Vec<f64>>,
    /// Original-to-PME evaluation ratio per drop level, per directory.
    pub speedup: Vec<(String, Vec<Option<f64>>)>,
}

fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for space in Space::ALL {
        let path = dir.join(OPTIMIZE_DIR).join(space.name()).join("summary.json");
        if path.exists() {
            out.push(read_json(&path)?);
        }
    }
    if out.is_empty() {
        return Err(PmeError::MissingArtifact {
            path: dir.join(OPTIMIZE_DIR).display().to_string(),
            hint: "run the `optimize` stage first".into(),
        });
    }
    Ok(out)
}

/// Collects optimization summaries from run directories and writes the
/// optimal design-variable table and the per-space table into `out`.
pub fn report(run_dirs: &[PathBuf], out: &Path) -> Result<Report> {
    if run_dirs.is_empty() {
        return Err(PmeError::Config("no run directories given".into()));
    }
    let mut labels = Vec::new();
    let mut records: Vec<RunRecord> = Vec::new();
    let mut speedup = Vec::new();
    for dir in run_dirs {
        let runs = load_runs(dir)?;
        let prefix = if run_dirs.len() > 1 { format!("{}/", dir.display()) } else { String::new() };
        if let (Some(o), Some(p)) = (
            runs.iter().find(|r| r.space == Space::Original),
            runs.iter().find(|r| r.space == Space::Pme),
        ) {
            let ratios = o
                .evals_to_drop
                .iter()
                .zip(&p.evals_to_drop)
                .map(|(a, b)| Some(a.as_ref().copied()? as f64 / b.as_ref().copied()? as f64))
                .collect();
            speedup.push((dir.display().to_string(), ratios));
        }
        for r in runs {
            labels.push(format!("{prefix}{}", r.space));
            records.push(r);
        }
    }
    let m = records[0].best_u.len();
    if let Some(bad) = records.iter().find(|r| r.best_u.len() != m) {
        return Err(PmeError::Config(format!(
            "runs mix design spaces of dimension {m} and {}",
            bad.best_u.len()
        )));
    }
    let target: Option<TargetRecord> = {
        let path = run_dirs[0].join(OPTIMIZE_DIR).join("target.json");
        if path.exists() {
            Some(read_json(&path)?)
        } else {
            None
        }
    };
    let u_star = target.map(|t| t.u_star).filter(|u| u.len() == m);
    fs::create_dir_all(out)?;
    let mut header = vec!["variable".to_string(), "lower".into(), "upper".into()];
    if u_star.is_some() {
        header.push("target".into());
    }
    header.extend(labels.iter().cloned());
    let rows: Vec<Vec<String>> = (0..m)
        .map(|k| {
            let mut row = vec![format!("u{}", k + 1), num(records[0].lower[k]), num(records[0].upper[k])];
            if let Some(u) = &u_star {
                row.push(num(u[k]));
            }
            row.extend(records.iter().map(|r| num(r.best_u[k])));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&out.join("optimal_dv.csv"), &header_ref, &rows)?;
    let drop_cols: Vec<String> = records[0].drops.iter().map(|d| format!("evals_to_{}pct", (d * 100.0).round())).collect();
    let mut header: Vec<String> = [
        "run", "space", "seed", "evaluations", "f_star", "best_objective", "best_penalized", "relative_gap", "feasible",
        "incumbents", "infeasible_incumbents",
    ]
    .map(String::from)
    .to_vec();
    header.extend(drop_cols);
    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(&records)
        .map(|(label, r)| {
            let mut row = vec![
                label.clone(),
                r.space.to_string(),
                r.seed.to_string(),
                r.evaluations.to_string(),
                num(r.f_star),
                num(r.best_objective),
                num(r.best_penalized),
                num(r.relative_gap),
                r.feasible.to_string(),
                r.incumbents.to_string(),
                r.infeasible_incumbents.to_string(),
            ];
            row.extend(r.evals_to_drop.iter().map(|e| e.map_or(String::new(), |v| v.to_string())));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&out.join("spaces.csv"), &header_ref, &rows)?;
    Ok(Report {
        labels,
        records,
        u_star,
        speedup,
    })
}
