mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rstgcn::model::FeatureSet;
use rstgcn::synth::Topology;
use rstgcn::BaselineKind;

use commands::{EvaluateArgs, FeaturizeArgs, SplitPart, SynthMode, TrainArgs};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "rstgcn", version, about = "Railway delay forecasting on station graphs")]
struct Cli {
    /// Base directory for relative input and output paths.
    #[arg(long, global = true, env = "RSTGCN_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network with records or a feature cube.
    Synth {
        #[arg(long, value_enum, default_value = "records")]
        mode: SynthMode,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        topology: Option<Topology>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Build the station graph from running records.
    BuildGraph {
        #[arg(long)]
        records: PathBuf,
        /// CSV of station code to zone.
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Aggregate records into the hourly station feature cube.
    Featurize {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// First slot start, `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        hours: Option<usize>,
        /// Derive headway from scheduled rather than actual arrivals.
        #[arg(long)]
        scheduled_headway: bool,
    },
    /// Fit the model and write a checkpoint.
    Train {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Training summary JSON; defaults next to the checkpoint.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the JSONL progress events here.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Do not echo progress events to stdout.
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Score a checkpoint or a baseline on one split.
    Evaluate {
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<BaselineKind>,
        /// Baselines read only the recent window.
        #[arg(long, requires = "baseline")]
        recent_only: bool,
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitPart,
        /// Score the first N target slots and also write cumulative metrics.
        #[arg(long)]
        long_horizon: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    cheb_order: Option<usize>,
    #[arg(long)]
    features: Option<FeatureSet>,
    #[arg(long)]
    t_h: Option<usize>,
    /// Forecast horizon in slots.
    #[arg(long)]
    t_p: Option<usize>,
    #[arg(long)]
    no_frequency_weight: bool,
    #[arg(long)]
    no_final_relu: bool,
}

impl ModelFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.channels {
            m.channels = v;
        }
        if let Some(v) = self.blocks {
            m.blocks = v;
        }
        if let Some(v) = self.cheb_order {
            m.cheb_order = v;
        }
        if let Some(v) = self.features {
            m.features = v;
        }
        if let Some(v) = self.t_h {
            m.window.t_h = v;
        }
        if let Some(v) = self.t_p {
            // daily and weekly windows span one period by default
            if m.window.t_d == m.window.t_p {
                m.window.t_d = v;
            }
            if m.window.t_w == m.window.t_p {
                m.window.t_w = v;
            }
            m.window.t_p = v;
        }
        if self.no_frequency_weight {
            m.use_frequency_weight = false;
        }
        if self.no_final_relu {
            m.use_final_relu = false;
        }
    }
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = cli.data_dir.as_deref();
    let r = |p: &Path| resolve(base, p);
    let config_path = cli.config.as_deref().map(r);
    let mut cfg = RunConfig::load(config_path.as_deref())?;
    match cli.command {
        Command::Synth { mode, out, seed, stations, days, topology, rho } => {
            let s = &mut cfg.synth;
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = stations {
                s.stations = v;
            }
            if let Some(v) = days {
                s.days = v;
            }
            if let Some(v) = topology {
                s.topology = v;
            }
            if let Some(v) = rho {
                s.rho = v;
            }
            commands::synth(&cfg, mode, &r(&out))
        }
        Command::BuildGraph { records, zones, out } => {
            commands::build_graph_cmd(&r(&records), zones.as_deref().map(r).as_deref(), &r(&out))
        }
        Command::Featurize { records, graph, out, start, hours, scheduled_headway } => {
            if scheduled_headway {
                cfg.features.headway_source = rstgcn::ingest::HeadwaySource::Scheduled;
            }
            let (records, graph, out) = (r(&records), r(&graph), r(&out));
            commands::featurize(
                &cfg,
                FeaturizeArgs { records: &records, graph: &graph, out: &out, start: start.as_deref(), hours },
            )
        }
        Command::Train { cube, graph, out, report, events, quiet, model } => {
            model.apply(&mut cfg);
            let (cube, graph, out) = (r(&cube), r(&graph), r(&out));
            let report = report.as_deref().map(r);
            let events = events.as_deref().map(r);
            commands::train(
                &cfg,
                TrainArgs {
                    cube: &cube,
                    graph: &graph,
                    out: &out,
                    report: report.as_deref(),
                    events: events.as_deref(),
                    quiet,
                },
            )
        }
        Command::Evaluate { checkpoint, baseline, recent_only, cube, graph, split, long_horizon, out } => {
            let checkpoint = checkpoint.as_deref().map(r);
            let (cube, graph, out) = (r(&cube), r(&graph), r(&out));
            commands::evaluate(
                &cfg,
                EvaluateArgs {
                    checkpoint: checkpoint.as_deref(),
                    baseline,
                    recent_only,
                    cube: &cube,
                    graph: &graph,
                    split,
                    long_horizon,
                    out_dir: &out,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
