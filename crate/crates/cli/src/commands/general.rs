use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swarmheal::graph::TopologyMatrix;
use swarmheal::meta::MetaParamStore;
use swarmheal::seed::{derive_seed, rng_for};
use swarmheal::sim::{run_general_with, sample_schedule, GeneralOutcome, PolicyKind, RunOptions, Scenario, UedEvent};

use crate::config::RunConfig;
use crate::stats::{summarize, Summary};
use crate::{CliError, OutDir};

pub const SUMMARY_JSON: &str = "sim_general.json";
pub const STEPS: &str = "steps.csv";
pub const TRAJECTORY: &str = "trajectory.csv";

const STREAM_GENERAL: u64 = 0x6e;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    Csv { csv: PathBuf },
    Inline(TopologyMatrix<f64>),
}

/// Scenario file: the initial swarm inline or as a `index,x,y,z` CSV path (relative to
/// the file), the events and the motion settings. Missing settings come from the run
/// configuration.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub initial_topology: TopologySource,
    pub events: Vec<UedEvent>,
    pub horizon: Option<usize>,
    pub v0: Option<f64>,
    pub kappa: Option<usize>,
    pub policy: Option<PolicyKind>,
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn load(path: &Path, cfg: &RunConfig) -> Result<(Scenario, Option<PolicyKind>), CliError> {
        let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let initial = match file.initial_topology {
            TopologySource::Inline(t) => t,
            TopologySource::Csv { csv } => {
                let p = path.parent().map_or(csv.clone(), |d| d.join(&csv));
                let f = std::fs::File::open(&p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
                TopologyMatrix::read_csv(f).map_err(|e| bad(format!("{}: {e}", p.display())))?
            }
        };
        let mut heal = cfg.heal_config();
        heal.v0 = file.v0.unwrap_or(heal.v0);
        heal.kappa = file.kappa.unwrap_or(heal.kappa);
        let scenario = Scenario {
            initial_topology: initial,
            events: file.events,
            horizon: file.horizon.unwrap_or(cfg.sim_general.horizon),
            heal,
            seed: file.seed.unwrap_or(cfg.seed),
        };
        scenario.validate().map_err(|e| bad(e.to_string()))?;
        Ok((scenario, file.policy))
    }
}

/// Sampled scenario for seed index `idx`.
pub fn sampled_scenario(cfg: &RunConfig, idx: usize) -> Result<Scenario, CliError> {
    let link = cfg.link()?;
    let mut rng = rng_for(derive_seed(cfg.seed, STREAM_GENERAL), idx as u64);
    let initial = cfg.bounds.sample_connected(cfg.n, &link, &mut rng)?;
    let events = sample_schedule(&initial, &cfg.schedule(), &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    let scenario = Scenario {
        initial_topology: initial,
        events,
        horizon: cfg.sim_general.horizon,
        heal: cfg.heal_config(),
        seed: idx as u64,
    };
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scenario)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyRun {
    pub j_c: f64,
    pub j_s: Vec<Option<usize>>,
    pub l_max_m: f64,
    pub fallbacks: usize,
    pub store_misses: usize,
    pub trainings: usize,
    pub max_center_gap_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub events: Vec<UedEvent>,
    pub policies: BTreeMap<&'static str, PolicyRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralReport {
    pub n: usize,
    pub horizon: usize,
    pub seeds: Vec<SeedRun>,
    pub mean_j_c: BTreeMap<&'static str, Summary>,
    /// Mean J_c of the database-driven planner over that of the ground-truth planner.
    pub j_c_ratio: Option<f64>,
}

pub struct GeneralRun {
    pub report: GeneralReport,
    pub outcomes: Vec<Vec<GeneralOutcome>>,
}

fn policy_run(o: &GeneralOutcome) -> PolicyRun {
    PolicyRun {
        j_c: o.metrics.j_c,
        j_s: o.metrics.j_s.clone(),
        l_max_m: o.metrics.l_max,
        fallbacks: o.fallbacks,
        store_misses: o.store_misses,
        trainings: o.steps.iter().map(|s| s.trainings).sum(),
        max_center_gap_m: o.steps.iter().map(|s| s.max_center_gap_m).fold(0.0, f64::max),
    }
}

/// Runs every scenario under every policy.
pub fn simulate(
    cfg: &RunConfig,
    scenarios: &[Scenario],
    policies: &[PolicyKind],
    store: Option<&MetaParamStore>,
) -> Result<GeneralRun, CliError> {
    let outcomes: Vec<Vec<GeneralOutcome>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            policies
                .iter()
                .map(|&p| {
                    let opts = RunOptions {
                        record_trajectory: i < cfg.sim_general.trajectory_seeds,
                        spectral_spot_checks: cfg.sim_general.spectral_spot_checks,
                    };
                    run_general_with(sc, p, store, opts, |_| {})
                })
                .collect::<swarmheal::Result<Vec<_>>>()
        })
        .collect::<swarmheal::Result<_>>()?;

    let seeds: Vec<SeedRun> = scenarios
        .iter()
        .zip(&outcomes)
        .map(|(sc, os)| SeedRun {
            seed: sc.seed,
            events: sc.events.clone(),
            policies: os.iter().map(|o| (o.policy.name(), policy_run(o))).collect(),
        })
        .collect();
    let mut mean_j_c = BTreeMap::new();
    for &p in policies {
        let xs: Vec<f64> = seeds.iter().map(|s| s.policies[p.name()].j_c).collect();
        if let Some(s) = summarize(&xs) {
            mean_j_c.insert(p.name(), s);
        }
    }
    let j_c_ratio = match (
        mean_j_c.get(PolicyKind::CrMgcm.name()),
        mean_j_c.get(PolicyKind::CrMgcmGlob.name()),
    ) {
        (Some(a), Some(g)) if g.mean > 0.0 => Some(a.mean / g.mean),
        _ => None,
    };
    Ok(GeneralRun {
        report: GeneralReport {
            n: scenarios.first().map_or(cfg.n, |s| s.initial_topology.len()),
            horizon: scenarios.first().map_or(cfg.sim_general.horizon, |s| s.horizon),
            seeds,
            mean_j_c,
            j_c_ratio,
        },
        outcomes,
    })
}

#[derive(Serialize)]
struct StepRow {
    seed: u64,
    policy: &'static str,
    t: usize,
    clusters: usize,
    alive: usize,
    moving: usize,
    trainings: usize,
    max_center_gap_m: f64,
}

#[derive(Serialize)]
struct TrajectoryRow {
    seed: u64,
    policy: &'static str,
    t: usize,
    index: usize,
    x: f64,
    y: f64,
    z: f64,
}

pub fn cmd_sim_general(cfg: &RunConfig, store: Option<&MetaParamStore>, out: &mut OutDir) -> Result<String, CliError> {
    let (scenarios, policies) = match &cfg.sim_general.scenario {
        Some(path) => {
            let (sc, policy) = ScenarioFile::load(path, cfg)?;
            let policies = policy.map_or_else(|| cfg.sim_general.policies.clone(), |p| vec![p]);
            (vec![sc], policies)
        }
        None => (
            (0..cfg.trials)
                .map(|i| sampled_scenario(cfg, i))
                .collect::<Result<Vec<_>, _>>()?,
            cfg.sim_general.policies.clone(),
        ),
    };
    let run = simulate(cfg, &scenarios, &policies, store)?;

    let mut steps = Vec::new();
    let mut traj = Vec::new();
    for (sc, os) in scenarios.iter().zip(&run.outcomes) {
        for o in os {
            let policy = o.policy.name();
            steps.extend(o.steps.iter().map(|s| StepRow {
                seed: sc.seed,
                policy,
                t: s.t,
                clusters: s.clusters,
                alive: s.alive,
                moving: s.moving,
                trainings: s.trainings,
                max_center_gap_m: s.max_center_gap_m,
            }));
            traj.extend(o.trajectory.iter().map(|&(t, index, p)| TrajectoryRow {
                seed: sc.seed,
                policy,
                t,
                index,
                x: p[0],
                y: p[1],
                z: p[2],
            }));
        }
    }
    out.write_csv(STEPS, &steps)?;
    out.write_csv(TRAJECTORY, &traj)?;
    out.write_json(SUMMARY_JSON, &run.report)?;

    let mut lines: Vec<String> = run
        .report
        .mean_j_c
        .iter()
        .map(|(p, s)| format!("{p:>13}: mean J_c {:.4} (sd {:.4}, {} seeds)", s.mean, s.std, s.n))
        .collect();
    if let Some(r) = run.report.j_c_ratio {
        lines.push(format!("J_c ratio cr-mgcm / cr-mgcm-glob: {r:.4}"));
    }
    Ok(lines.join("\n"))
}
