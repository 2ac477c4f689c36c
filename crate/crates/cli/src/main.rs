use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use w2s_core::harness::{
    run_diagnose, run_regimes, run_replication, run_tails, write_csv, ExperimentConfig, Outcome, Record,
};
use w2s_core::Error;

const EXIT_INVALID: u8 = 2;
const EXIT_TOTAL_FAILURE: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "w2s", version, about = "Weak-to-strong generalization simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weak/student/baseline accuracies over the u grid, plus an aggregate file.
    ReplicateAppendixE(Common),
    /// Phase-diagram raster of the closed-form regime classifier.
    Regimes(Common),
    /// Tail bound, quadrature and Monte Carlo values for the max of correlated Gaussians.
    Tails(Common),
    /// Per-trial survival/contamination of clean-label MNI over an n grid.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take the protocol defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Run configurations outside the regime hypotheses.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::ConfigInvalid(problems))
        }
    }
}

fn aggregate_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_aggregate.{ext}"))
}

fn save<R: Record>(path: &Path, rows: &[R]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(BufWriter::new(f), rows).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn outcome_of<'a>(statuses: impl Iterator<Item = &'a str>) -> Outcome {
    let mut o = Outcome::default();
    for s in statuses {
        o.rows += 1;
        if s != "ok" {
            o.failed += 1;
        }
    }
    o
}

fn run(cli: Cli) -> Result<Outcome> {
    Ok(match cli.command {
        Command::ReplicateAppendixE(c) => {
            let cfg = c.load()?;
            let rep = run_replication(&cfg, c.force)?;
            save(&c.out, &rep.rows)?;
            save(&aggregate_path(&c.out), &rep.aggregates)?;
            rep.outcome()
        }
        Command::Regimes(c) => {
            let cfg = c.load()?;
            let rows = run_regimes(&cfg.regimes)?;
            save(&c.out, &rows)?;
            Outcome {
                rows: rows.len(),
                failed: 0,
            }
        }
        Command::Tails(c) => {
            let cfg = c.load()?;
            let rows = run_tails(&cfg.tails, cfg.seed, cfg.parallelism)?;
            save(&c.out, &rows)?;
            outcome_of(rows.iter().map(|r| r.status.as_str()))
        }
        Command::Diagnose(c) => {
            let cfg = c.load()?;
            let rows = run_diagnose(&cfg, &cfg.diagnose, c.force)?;
            save(&c.out, &rows)?;
            outcome_of(rows.iter().map(|r| r.status.as_str()))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) if o.all_failed() => {
            eprintln!("error: all {} rows failed", o.rows);
            ExitCode::from(EXIT_TOTAL_FAILURE)
        }
        Ok(o) if o.partial() => {
            eprintln!("warning: {} of {} rows failed (see the status column)", o.failed, o.rows);
            ExitCode::from(EXIT_PARTIAL)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = matches!(
                e.downcast_ref::<Error>(),
                Some(Error::ConfigInvalid(_) | Error::Json(_))
            );
            ExitCode::from(if invalid { EXIT_INVALID } else { 1 })
        }
    }
}
