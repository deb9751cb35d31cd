//! Experiment runner for the swarm self-healing library.
//!
//! Every subcommand resolves a [`config::RunConfig`], refuses to overwrite existing
//! outputs unless forced, writes deterministic CSV/JSON data files and a
//! `manifest.json` echoing the resolved configuration.

pub mod commands;
pub mod config;
pub mod output;
pub mod stats;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use swarmheal::meta::MetaParamStore;

pub use config::{Overrides, RunConfig};
pub use output::OutDir;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUN: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] swarmheal::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(_) | CliError::Io(_) => EXIT_RUN,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "swarmheal", version, about = "Swarm connectivity self-healing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub kind: CommandKind,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file merged over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: results/<subcommand>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Meta-parameter store to read (for meta-train: where to write it).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Full-size defaults: 200 UAVs, U0 = 400, 100 trials, 1000 m scene. Long-running.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    /// Meta-train initial GCN parameters for every swarm size up to n.
    MetaTrain,
    /// Mean VRG cluster count versus the virtual-distance coefficient c.
    SweepC,
    /// Mean GCO iterations and displacement versus eta.
    SweepEta,
    /// Mean GCO iterations and displacement versus epsilon.
    SweepEps,
    /// One-off destructions healed by the meta GCN and by the centroid baseline.
    HealOneoff,
    /// General destruction schedules under the three policies.
    SimGeneral,
    /// Wall-clock cost of one healing decision.
    Bench,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::MetaTrain => "meta-train",
            CommandKind::SweepC => "sweep-c",
            CommandKind::SweepEta => "sweep-eta",
            CommandKind::SweepEps => "sweep-eps",
            CommandKind::HealOneoff => "heal-oneoff",
            CommandKind::SimGeneral => "sim-general",
            CommandKind::Bench => "bench",
        }
    }

    /// Data files the subcommand writes into its output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            CommandKind::MetaTrain => &[commands::meta_train::STORE, commands::meta_train::TRACE],
            CommandKind::SweepC => &[commands::sweeps::SWEEP_C],
            CommandKind::SweepEta => &[commands::sweeps::SWEEP_ETA],
            CommandKind::SweepEps => &[commands::sweeps::SWEEP_EPS],
            CommandKind::HealOneoff => &[
                commands::heal::SUMMARY_JSON,
                commands::heal::SUMMARY_CSV,
                commands::heal::TRACES,
                commands::heal::TRAJECTORY,
            ],
            CommandKind::SimGeneral => &[
                commands::general::SUMMARY_JSON,
                commands::general::STEPS,
                commands::general::TRAJECTORY,
            ],
            CommandKind::Bench => &[commands::bench::BENCH],
        }
    }

    fn uses_store(self) -> bool {
        matches!(
            self,
            CommandKind::HealOneoff | CommandKind::SimGeneral | CommandKind::Bench
        )
    }
}

/// Where the meta parameters of a run came from.
#[derive(Debug)]
pub struct StoreSource {
    pub store: MetaParamStore,
    pub description: String,
}

pub fn load_store(path: &Path) -> Result<StoreSource, CliError> {
    let store = MetaParamStore::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(StoreSource {
        store,
        description: path.display().to_string(),
    })
}

/// The store from `path`, or one meta-trained in-process for sizes up to `cfg.n`.
pub fn store_for(cfg: &RunConfig, path: Option<&Path>) -> Result<StoreSource, CliError> {
    match path {
        Some(p) => {
            let src = load_store(p)?;
            if src.store.metadata().hyper.q != cfg.hyper.q {
                return Err(CliError::Config(format!(
                    "{}: store has Q = {}, configuration Q = {}",
                    p.display(),
                    src.store.metadata().hyper.q,
                    cfg.hyper.q
                )));
            }
            Ok(src)
        }
        None => {
            let (store, _) = swarmheal::meta::meta_train_all(cfg.n, &cfg.meta_config())?;
            Ok(StoreSource {
                store,
                description: format!("trained in-process (n <= {}, U0 = {})", cfg.n, cfg.u0),
            })
        }
    }
}

/// Outcome of a successful subcommand, echoed to stdout.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub summary: String,
}

pub fn run(cmd: &Cli, argv: Vec<String>) -> Result<RunReport, CliError> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let c = &cmd.common;
    let cfg = config::resolve(
        c.config.as_deref(),
        &Overrides {
            seed: c.seed,
            trials: c.trials,
            paper_scale: c.paper_scale,
        },
    )?;
    let dir = c
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cmd.kind.name()));
    let mut out = OutDir::prepare(&dir, cmd.kind.outputs(), c.force)?;
    if cmd.kind == CommandKind::MetaTrain {
        if let Some(p) = &c.store {
            if p.exists() && !c.force {
                return Err(CliError::Config(format!("{} exists; pass --force to overwrite", p.display())));
            }
        }
    }

    let mut store_desc = None;
    let result = (|| {
        let store = if cmd.kind.uses_store() {
            let s = store_for(&cfg, c.store.as_deref())?;
            store_desc = Some(s.description.clone());
            Some(s.store)
        } else {
            None
        };
        match cmd.kind {
            CommandKind::MetaTrain => {
                let r = commands::meta_train::cmd_meta_train(&cfg, &mut out, c.store.as_deref());
                store_desc = Some(
                    c.store
                        .as_ref()
                        .map_or_else(|| out.path(commands::meta_train::STORE), Clone::clone)
                        .display()
                        .to_string(),
                );
                r
            }
            CommandKind::SweepC => commands::sweeps::cmd_sweep_c(&cfg, &mut out),
            CommandKind::SweepEta => commands::sweeps::cmd_sweep_eta(&cfg, &mut out),
            CommandKind::SweepEps => commands::sweeps::cmd_sweep_eps(&cfg, &mut out),
            CommandKind::HealOneoff => commands::heal::cmd_heal_oneoff(&cfg, store.as_ref(), &mut out),
            CommandKind::SimGeneral => commands::general::cmd_sim_general(&cfg, store.as_ref(), &mut out),
            CommandKind::Bench => commands::bench::cmd_bench(&cfg, store.as_ref(), &mut out),
        }
    })();

    let finished = chrono::Utc::now();
    let manifest = output::Manifest {
        subcommand: cmd.kind.name(),
        code_version: env!("CARGO_PKG_VERSION"),
        git_revision: option_env!("SWARMHEAL_GIT_REV"),
        argv,
        started_utc: started.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        finished_utc: finished.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        elapsed_s: clock.elapsed().as_secs_f64(),
        status: match &result {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        },
        store: store_desc,
        config: &cfg,
        outputs: out.written().to_vec(),
    };
    out.write_json(output::MANIFEST, &manifest)?;
    let summary = result?;
    Ok(RunReport {
        out_dir: dir,
        outputs: out.written().to_vec(),
        summary,
    })
}
