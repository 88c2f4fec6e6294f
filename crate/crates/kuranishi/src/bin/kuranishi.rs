use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kuranishi::atlas::{atlas_from_doc, atlas_to_json};
use kuranishi::config::Tolerances;
use kuranishi::pipeline::{run, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "kuranishi", version, about = "Validate, tame, reduce, perturb and count finite-dimensional Kuranishi atlases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Samples per axis for the sampled checks.
    #[arg(long, global = true, default_value_t = 12)]
    density: usize,
    #[arg(long, global = true, env = "KURANISHI_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true)]
    tau_rank: Option<f64>,
    #[arg(long, global = true)]
    tau_eq: Option<f64>,
    #[arg(long, global = true)]
    tau_id: Option<f64>,
    #[arg(long, global = true)]
    tau_transv: Option<f64>,
    #[arg(long, global = true)]
    tau_fit: Option<f64>,
    /// Override δ of the reduction (σ is then recomputed unless given).
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Report document path.
    #[arg(long, global = true)]
    report: Option<String>,
    /// Plot data path.
    #[arg(long, global = true)]
    plot: Option<String>,
    /// Write the (tamed or generated) atlas document here.
    #[arg(long, global = true)]
    atlas_out: Option<String>,
    /// Print the report document instead of verdict lines.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks on an atlas (fixture name, document path or gen:<problem>).
    Validate { atlas: String },
    /// Validate, then find a tame shrinking.
    Tame { atlas: String },
    /// Through the reduction and its constants.
    Reduce { atlas: String },
    /// Through the adapted perturbation and its ledger.
    Perturb { atlas: String },
    /// Through the signed zero count.
    Vfc { atlas: String },
    /// Count across seeds, reductions and norm scalings, plus a concordance.
    Invariance { atlas: String },
    /// Build an additive atlas from a global problem.
    Generate { problem: String },
    /// Brute-force degree of a global problem, compared with the count.
    Oracle { problem: String },
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let o = &cli.opts;
    rayon::ThreadPoolBuilder::new().num_threads(o.jobs).build_global().context("building worker pool")?;
    let (stage, atlas) = match &cli.command {
        Command::Validate { atlas } => (Stage::Validate, atlas),
        Command::Tame { atlas } => (Stage::Tame, atlas),
        Command::Reduce { atlas } => (Stage::Reduce, atlas),
        Command::Perturb { atlas } => (Stage::Perturb, atlas),
        Command::Vfc { atlas } => (Stage::Vfc, atlas),
        Command::Invariance { atlas } => (Stage::Invariance, atlas),
        Command::Generate { problem } => (Stage::Generate, problem),
        Command::Oracle { problem } => (Stage::Oracle, problem),
    };
    let d = Tolerances::default();
    let cfg = PipelineConfig {
        atlas: atlas.clone(),
        command: stage,
        density: o.density,
        seed: o.seed,
        tolerances: Tolerances {
            tau_rank: o.tau_rank.unwrap_or(d.tau_rank),
            tau_eq: o.tau_eq.unwrap_or(d.tau_eq),
            tau_id: o.tau_id.unwrap_or(d.tau_id),
            tau_transv: o.tau_transv.unwrap_or(d.tau_transv),
            tau_fit: o.tau_fit.unwrap_or(d.tau_fit),
        },
        delta: o.delta,
        sigma: o.sigma,
        report: o.report.clone(),
        plot: o.plot.clone(),
    };
    let (report, plot) = run(&cfg);
    let body = report.to_json();
    if let Some(p) = &cfg.report {
        fs::write(p, &body).with_context(|| format!("writing report {p}"))?;
    }
    if let Some(p) = &cfg.plot {
        fs::write(p, serde_json::to_string_pretty(&plot)?).with_context(|| format!("writing plot data {p}"))?;
    }
    if let (Some(p), Some(doc)) = (&o.atlas_out, &report.atlas) {
        fs::write(p, atlas_to_json(&atlas_from_doc(doc)?)).with_context(|| format!("writing atlas {p}"))?;
    }
    if o.json {
        println!("{body}");
    } else {
        for s in &report.stages {
            for v in &s.verdicts {
                println!("[{}] {v}", s.stage);
            }
        }
        if let Some(v) = &report.vfc {
            println!("count = {}", v.count);
        }
        if let Some(d) = report.degree {
            println!("degree = {d}");
        }
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("first failing verdict: {}", report.first_failure.as_deref().unwrap_or("none"));
        Ok(ExitCode::FAILURE)
    }
}
