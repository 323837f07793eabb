use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pme_cli::pipeline::REPORT_DIR;
use pme_cli::{report, Pipeline, PipelineConfig};
use pme_core::optimize::Space;
use pme_core::presets::Preset;
use pme_core::{PmeError, Result};

#[derive(Parser)]
#[command(name = "pme", version, about = "Design-space reduction and embedding pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in study: airfoil-bezier14 or hull-ffd22.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory holding the archives.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Retained variance fraction.
    #[arg(long, global = true)]
    confidence: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Original,
    Kle,
    Pme,
    All,
}

impl SpaceArg {
    fn spaces(self) -> Vec<Space> {
        match self {
            SpaceArg::Original => vec![Space::Original],
            SpaceArg::Kle => vec![Space::Kle],
            SpaceArg::Pme => vec![Space::Pme],
            SpaceArg::All => Space::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw Monte Carlo designs and write the snapshot archive.
    Sample,
    /// Solve for the modal basis.
    Reduce,
    /// Embed the design variables in the modal basis.
    Embed,
    /// Run the planted-optimum problem in one or all search spaces.
    Optimize {
        #[arg(long, value_enum, default_value = "all")]
        space: SpaceArg,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Compare optimization runs; defaults to the output directory.
    Report { runs: Vec<PathBuf> },
    /// All stages in order, then the report.
    Run {
        #[arg(long, value_enum, default_value = "all")]
        space: SpaceArg,
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn load_config(g: &Global) -> Result<(PipelineConfig, PathBuf)> {
    let (mut cfg, base) = match &g.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => (PipelineConfig::default(), PathBuf::new()),
    };
    if let Some(p) = &g.preset {
        cfg.preset = Some(p.parse::<Preset>()?);
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(s) = g.samples {
        cfg.samples = Some(s);
    }
    if let Some(l) = g.confidence {
        cfg.confidence = Some(l);
    }
    Ok((cfg, base))
}

fn pipeline(g: &Global, budget: Option<usize>) -> Result<Pipeline> {
    let (mut cfg, base) = load_config(g)?;
    if budget.is_some() {
        cfg.optimizer.budget = budget;
    }
    Pipeline::new(cfg, &base)
}

fn sample(p: &Pipeline) -> Result<()> {
    let r = p.sample()?;
    println!("snapshots: {} rows x {} samples -> {}", r.rows, r.samples, p.out().display());
    if !r.inert_blocks.is_empty() {
        println!("inert coordinate blocks: {:?}", r.inert_blocks);
    }
    println!("{:>8}  {:>14}", "S", "sigma2");
    for (s, v) in &r.convergence {
        println!("{s:>8}  {v:>14.6e}");
    }
    Ok(())
}

fn reduce(p: &Pipeline) -> Result<()> {
    let r = p.reduce()?;
    println!(
        "rank {}, retained N = {} at l = {}, sigma2 = {:.6e}, NMSE(N) = {:.4}%",
        r.rank,
        r.retained,
        p.cfg.confidence(),
        r.sigma2,
        100.0 * r.nmse[r.retained]
    );
    Ok(())
}

fn embed(p: &Pipeline) -> Result<()> {
    let r = p.embed()?;
    println!("embedding: {} modes, max |NSE_kle - NSE_pme| = {:.3e}", r.modes, r.max_nse_difference);
    for (k, (lo, hi)) in r.x_lower.iter().zip(&r.x_upper).enumerate() {
        println!("  x{} in [{lo:.6e}, {hi:.6e}]", k + 1);
    }
    Ok(())
}

fn optimize(p: &Pipeline, space: SpaceArg) -> Result<()> {
    for r in p.optimize(&space.spaces())? {
        println!(
            "{:>8}: best {:.6e} (f* {:.6e}, gap {:+.2}%), feasible {}, {} evaluations, {}/{} incumbents outside the box",
            r.space.name(),
            r.best_penalized,
            r.f_star,
            100.0 * r.relative_gap,
            r.feasible,
            r.evaluations,
            r.infeasible_incumbents,
            r.incumbents
        );
    }
    Ok(())
}

fn print_report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let r = report(runs, out)?;
    for (label, rec) in r.labels.iter().zip(&r.records) {
        println!(
            "{label:>16}: best {:.6e}, gap {:+.2}%, feasible {}",
            rec.best_penalized,
            100.0 * rec.relative_gap,
            rec.feasible
        );
    }
    for (dir, ratios) in &r.speedup {
        let cells: Vec<String> = ratios.iter().map(|v| v.map_or("-".into(), |x| format!("{x:.2}"))).collect();
        println!("{dir}: original/pme evaluations to 25/50/75% drop: {}", cells.join(" "));
    }
    println!("tables written to {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Sample => sample(&pipeline(g, None)?),
        Command::Reduce => reduce(&pipeline(g, None)?),
        Command::Embed => embed(&pipeline(g, None)?),
        Command::Optimize { space, budget } => optimize(&pipeline(g, budget)?, space),
        Command::Report { runs } => {
            let (cfg, _) = load_config(g)?;
            let runs = if runs.is_empty() { vec![cfg.out.clone()] } else { runs };
            let out = if g.out.is_some() || g.config.is_some() { cfg.out.clone() } else { runs[0].clone() };
            print_report(&runs, &out.join(REPORT_DIR))
        }
        Command::Run { space, budget } => {
            let p = pipeline(g, budget)?;
            sample(&p)?;
            reduce(&p)?;
            embed(&p)?;
            optimize(&p, space)?;
            print_report(&[p.out().to_path_buf()], &p.out().join(REPORT_DIR))
        }
    }
}

fn exit_code(e: &PmeError) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
