//! `prvr`: synthetic instances, identification, calibration, transport and
//! full pipeline reports from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure, 3 configuration
//! error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use prvr_core::harness::io::{format_label_rows, read_instance, write_instance};
use prvr_core::harness::pipeline::{
    calibrate, identification_report, identify, run_in_pool, transport_all, video_report,
};
use prvr_core::harness::report::{plot_csv, render_summary, to_json_finite};
use prvr_core::harness::{run_pipeline, synth_generate, ArchetypeMix, PipelineConfig, SynthSpec};
use prvr_core::losses::Stage;
use prvr_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "prvr", version, about = "Evidential query identification and flexible transport for partial video retrieval")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training stage, 1 (warm-up) or 2 (full).
    #[arg(long, global = true)]
    stage: Option<u8>,
    /// Output path; stdout when omitted (synth requires it).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for the default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail with exit code 2 when a transport solve does not converge.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance directory with planted archetypes.
    Synth {
        #[arg(long, default_value_t = 300)]
        queries: usize,
        #[arg(long, default_value_t = 40)]
        videos: usize,
        #[arg(long, default_value_t = 12)]
        clips: usize,
        /// Precise, polysemous and under-determined fractions.
        #[arg(long, value_delimiter = ',', value_name = "P,Q,U")]
        mix: Option<Vec<f64>>,
        /// Query embedding dimension, 0 to omit embeddings.
        #[arg(long, default_value_t = 16)]
        embedding_dim: usize,
    },
    /// Per-branch opinions and partitions plus the fused partition (JSON).
    Identify {
        /// Instance directory.
        instance: PathBuf,
    },
    /// Calibrated label rows (CSV).
    Calibrate {
        /// Instance directory.
        instance: PathBuf,
    },
    /// Flexible transport plans per video (JSON).
    Transport {
        /// Instance directory.
        instance: PathBuf,
    },
    /// Full pipeline report (JSON).
    Pipeline {
        /// Instance directory.
        instance: PathBuf,
    },
    /// Summary tables of a report; optionally per-query plot data as CSV.
    Report {
        /// Report JSON written by `pipeline`.
        report: PathBuf,
        /// Also write per-query plot data as CSV to this path.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(stage) = cli.stage {
        cfg.stage = Stage::try_from(stage)?;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.strict |= cli.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
            _ => Ok(()),
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Synth {
            queries,
            videos,
            clips,
            mix,
            embedding_dim,
        } => {
            let dir = out.ok_or_else(|| Error::Config("synth needs --out <dir>".into()))?;
            let mix = match mix.as_deref() {
                Some(&[precise, polysemous, under_determined]) => ArchetypeMix {
                    precise,
                    polysemous,
                    under_determined,
                },
                Some(_) => return Err(Error::Config("--mix takes three fractions".into())),
                None => ArchetypeMix::balanced(),
            };
            let inst = synth_generate(&SynthSpec {
                n_queries: *queries,
                n_videos: *videos,
                n_clips: *clips,
                mix,
                seed: cfg.seed,
                embedding_dim: *embedding_dim,
            })?;
            write_instance(&inst, dir)
        }
        Command::Identify { instance } => {
            let inst = read_instance(instance)?;
            let (branches, fused) = run_in_pool(&inst, &cfg, identify).map(identification_report)?;
            let body = serde_json::json!({ "branches": branches, "fused": fused });
            emit(out, &to_json_finite(&body, "identification")?)
        }
        Command::Calibrate { instance } => {
            let inst = read_instance(instance)?;
            let labels = run_in_pool(&inst, &cfg, |inst, cfg| {
                let ident = identify(inst, cfg)?;
                calibrate(inst, &ident, cfg.gamma)
            })?;
            emit(out, &format_label_rows(labels.rows())?)
        }
        Command::Transport { instance } => {
            let inst = read_instance(instance)?;
            let videos = run_in_pool(&inst, &cfg, transport_all)?;
            let reports: Vec<_> = videos.into_iter().map(video_report).collect();
            emit(out, &to_json_finite(&reports, "transport")?)
        }
        Command::Pipeline { instance } => {
            let inst = read_instance(instance)?;
            emit(out, &run_pipeline(&inst, &cfg)?.to_json()?)
        }
        Command::Report { report, plot } => {
            let text = std::fs::read_to_string(report).map_err(|source| Error::Io {
                path: report.display().to_string(),
                source,
            })?;
            let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: report.display().to_string(),
                line: e.line() as u64,
                message: e.to_string(),
            })?;
            if let Some(plot) = plot {
                emit(Some(plot), &plot_csv(&value)?)?;
            }
            emit(out, &render_summary(&value)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prvr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
