use clap::{Parser, Subcommand};
use czvar_cli::campaign::{run_certify, run_corpus, run_sparse, run_weaktype, run_weighted, Runner};
use czvar_cli::config::{load_config, ExperimentConfig};
use czvar_cli::report::{Aggregate, RunDir};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "czvar",
    version,
    about = "Numerical campaigns for truncation variation, sparse domination, and matrix weights"
)]
struct Cli {
    /// Experiment configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides CZVAR_OUT and the configured directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed; overrides the configured corpus seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; 0 picks the machine default.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stopping-time refinement: density, packing, witness, and domination checks.
    Sparse,
    /// Weak (1,1) ratios of the variation field over the corpus and spike ladders.
    Weaktype,
    /// Weighted norm ratios across a sweep of matrix weights.
    Weighted,
    /// Dual-route certificates for the exact and closed-form algorithms.
    Certify,
    /// Materialize the signal corpus with a summary table.
    Corpus,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sparse => "sparse",
            Command::Weaktype => "weaktype",
            Command::Weighted => "weighted",
            Command::Certify => "certify",
            Command::Corpus => "corpus",
        }
    }
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("CZVAR_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(&cfg.output.dir)
}

fn run(cli: &Cli) -> Result<Aggregate, czvar::Error> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    let dir = out_dir(cli, &cfg);
    let out = RunDir::create(&dir)?;
    let runner = Runner::new(cfg, cli.seed, cli.jobs);
    let agg = match cli.command {
        Command::Sparse => run_sparse(&runner, &out)?,
        Command::Weaktype => run_weaktype(&runner, &out)?,
        Command::Weighted => run_weighted(&runner, &out)?,
        Command::Certify => run_certify(&runner, &out)?,
        Command::Corpus => run_corpus(&runner, &out)?,
    };
    out.write_json(&format!("{}.json", cli.command.name()), &agg)?;
    Ok(agg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(agg) => {
            for c in &agg.criteria {
                println!("{}", c.line());
            }
            let failed = agg.criteria.iter().filter(|c| !c.pass).count();
            println!(
                "{}: {} criteria, {} failed, {} instance errors",
                agg.command,
                agg.criteria.len(),
                failed,
                agg.instance_errors
            );
            if agg.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
