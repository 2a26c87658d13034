use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgda::config::{RunConfig, VariantSelection};
use kgda::pipeline::{Pipeline, Stage};
use kgda::Error;

/// Bicluster-augmented knowledge graphs for diagnosis prediction.
#[derive(Parser)]
#[command(name = "kgda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine biclusters from the normalized table.
    Mine(RunArgs),
    /// Distance-to-centroid features and their bins.
    Augment(RunArgs),
    /// Original, augmented and fused triple files.
    Fuse(RunArgs),
    /// Train one model per variant at the first ratio and seed.
    Train(RunArgs),
    /// Score held-out diagnoses of the trained models.
    Eval(RunArgs),
    /// Every ratio × variant × seed cell.
    Sweep(RunArgs),
    /// Oracle comparisons and the variance experiment.
    Check(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long, env = "KGDA_OUT_DIR")]
    out: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<VariantSelection>,
    /// Training ratios, e.g. `0.1,0.5`.
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
}

impl RunArgs {
    fn load(&self) -> kgda::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(variant) = self.variant {
            config.variant = variant;
        }
        if let Some(ratios) = &self.ratios {
            config.ratios = ratios.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn diagnostic(err: &Error) -> serde_json::Value {
    let (stage, inner) = match err {
        Error::Stage { stage, source } => (Some(stage.as_str()), source.as_ref()),
        other => (None, other),
    };
    let mut causes = Vec::new();
    let mut next = inner.source();
    while let Some(e) = next {
        causes.push(e.to_string());
        next = e.source();
    }
    serde_json::json!({ "stage": stage, "error": inner.to_string(), "causes": causes })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Mine(a) => (Stage::Mine, a),
        Command::Augment(a) => (Stage::Augment, a),
        Command::Fuse(a) => (Stage::Fuse, a),
        Command::Train(a) => (Stage::Train, a),
        Command::Eval(a) => (Stage::Eval, a),
        Command::Sweep(a) => (Stage::Sweep, a),
        Command::Check(a) => (Stage::Check, a),
    };
    let outcome = args
        .load()
        .map_err(|e| e.in_stage("config"))
        .and_then(Pipeline::new)
        .and_then(|p| p.run(stage));
    match outcome {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("wrote {}", outcome.dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("kgda: {} reported failing checks", stage.name());
                ExitCode::from(3)
            }
        }
        Err(err) => {
            eprintln!("kgda: {err}");
            eprintln!("{}", diagnostic(&err));
            ExitCode::FAILURE
        }
    }
}
