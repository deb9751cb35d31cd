use rayon::prelude::*;
use serde::Serialize;
use swarmheal::meta::MetaParamStore;
use swarmheal::sim::{cen_heal, cr_mgc_heal, HealOutcome};
use swarmheal::Error;

use super::{breaking_sample, check_sizes};
use crate::config::{resolve_sizes, RunConfig};
use crate::stats::{summarize, Summary};
use crate::{CliError, OutDir};

pub const SUMMARY_JSON: &str = "heal_oneoff.json";
pub const SUMMARY_CSV: &str = "heal_oneoff.csv";
pub const TRACES: &str = "cluster_traces.csv";
pub const TRAJECTORY: &str = "trajectory.csv";

pub const CR_MGC: &str = "cr-mgc";
pub const CEN: &str = "cen";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HealRun {
    pub destroyed: usize,
    pub trial: usize,
    pub policy: &'static str,
    pub healed: bool,
    /// Steps until the swarm is connected; absent when healing failed.
    pub j_s: Option<usize>,
    pub l_max_m: Option<f64>,
    pub fallback: bool,
    pub store_hit: bool,
    pub k_star: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicySummary {
    pub trials: usize,
    pub healed: usize,
    pub fallbacks: usize,
    pub j_s: Option<Summary>,
    pub l_max_m: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeSummary {
    pub destroyed: usize,
    pub cr_mgc: PolicySummary,
    pub cen: PolicySummary,
    pub cr_mgc_mean_js_le_cen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HealReport {
    pub n: usize,
    pub trials: usize,
    pub sizes: Vec<SizeSummary>,
    pub runs: Vec<HealRun>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    destroyed: usize,
    policy: &'a str,
    trials: usize,
    healed: usize,
    fallbacks: usize,
    mean_js: Option<f64>,
    std_js: Option<f64>,
    ci95_js: Option<f64>,
    mean_l_max_m: Option<f64>,
    std_l_max_m: Option<f64>,
}

#[derive(Serialize)]
struct TraceRow {
    destroyed: usize,
    trial: usize,
    policy: &'static str,
    step: usize,
    clusters: usize,
}

#[derive(Serialize)]
struct TrajectoryRow {
    destroyed: usize,
    trial: usize,
    policy: &'static str,
    t: usize,
    index: usize,
    x: f64,
    y: f64,
    z: f64,
}

fn record(destroyed: usize, trial: usize, policy: &'static str, r: &Result<HealOutcome, Error>) -> HealRun {
    match r {
        Ok(o) => HealRun {
            destroyed,
            trial,
            policy,
            healed: o.flight.connected,
            j_s: o.metrics.j_s.first().copied().flatten(),
            l_max_m: Some(o.metrics.l_max),
            fallback: o.fallback,
            store_hit: o.store_hit,
            k_star: o.metrics.k_star,
            failure: None,
        },
        Err(e) => HealRun {
            destroyed,
            trial,
            policy,
            healed: false,
            j_s: None,
            l_max_m: None,
            fallback: false,
            store_hit: false,
            k_star: None,
            failure: Some(e.to_string()),
        },
    }
}

fn summarize_policy(runs: &[&HealRun]) -> PolicySummary {
    let js: Vec<f64> = runs.iter().filter_map(|r| r.j_s).map(|x| x as f64).collect();
    let ls: Vec<f64> = runs.iter().filter_map(|r| r.l_max_m).collect();
    PolicySummary {
        trials: runs.len(),
        healed: runs.iter().filter(|r| r.healed).count(),
        fallbacks: runs.iter().filter(|r| r.fallback).count(),
        j_s: summarize(&js),
        l_max_m: summarize(&ls),
    }
}

/// Keeps a failed heal as data; any other error aborts the run.
fn failed_heal_ok(r: swarmheal::Result<HealOutcome>) -> swarmheal::Result<swarmheal::Result<HealOutcome>> {
    match r {
        Err(Error::HealFailed(m)) => Ok(Err(Error::HealFailed(m))),
        Err(e) => Err(e),
        Ok(o) => Ok(Ok(o)),
    }
}

type Trial = (HealRun, HealRun, Option<HealOutcome>, Option<HealOutcome>);

/// Runs the one-off protocol and returns the report; trajectories and traces go to `out`
/// when given.
pub fn heal_oneoff(
    cfg: &RunConfig,
    store: Option<&MetaParamStore>,
    out: Option<&mut OutDir>,
) -> Result<HealReport, CliError> {
    let link = cfg.link()?;
    let heal = cfg.heal_config();
    let sizes = resolve_sizes(cfg.n, &cfg.heal_oneoff.destroy_sizes, &cfg.heal_oneoff.destroy_fractions);
    check_sizes(cfg, &sizes)?;

    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    let mut trajectories = Vec::new();
    for &k in &sizes {
        let trials: Vec<Trial> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| -> swarmheal::Result<Trial> {
                let s = breaking_sample(cfg, &link, k, trial)?;
                let cr = failed_heal_ok(cr_mgc_heal(&s.post, store, &heal))?;
                let cen = failed_heal_ok(cen_heal(&s.post, &heal))?;
                Ok((
                    record(k, trial, CR_MGC, &cr),
                    record(k, trial, CEN, &cen),
                    cr.ok(),
                    cen.ok(),
                ))
            })
            .collect::<swarmheal::Result<_>>()?;
        for (trial, (a, b, oa, ob)) in trials.into_iter().enumerate() {
            for (policy, o) in [(CR_MGC, &oa), (CEN, &ob)] {
                let Some(o) = o else { continue };
                traces.extend(o.flight.cluster_trace.iter().enumerate().map(|(i, &c)| TraceRow {
                    destroyed: k,
                    trial,
                    policy,
                    step: i + 1,
                    clusters: c,
                }));
                if trial < cfg.heal_oneoff.trajectory_trials {
                    for (t, topo) in o.flight.trajectory.iter().enumerate() {
                        trajectories.extend(topo.rows().map(|(index, p)| TrajectoryRow {
                            destroyed: k,
                            trial,
                            policy,
                            t,
                            index,
                            x: p[0],
                            y: p[1],
                            z: p[2],
                        }));
                    }
                }
            }
            runs.push(a);
            runs.push(b);
        }
        let of = |policy: &str| -> Vec<&HealRun> {
            runs.iter().filter(|r| r.destroyed == k && r.policy == policy).collect()
        };
        let cr_mgc = summarize_policy(&of(CR_MGC));
        let cen = summarize_policy(&of(CEN));
        let le = match (&cr_mgc.j_s, &cen.j_s) {
            (Some(a), Some(b)) => cr_mgc.healed == cr_mgc.trials && a.mean <= b.mean,
            _ => false,
        };
        summaries.push(SizeSummary {
            destroyed: k,
            cr_mgc,
            cen,
            cr_mgc_mean_js_le_cen: le,
        });
    }

    if let Some(out) = out {
        let mut rows = Vec::new();
        for s in &summaries {
            for (policy, p) in [(CR_MGC, &s.cr_mgc), (CEN, &s.cen)] {
                rows.push(CsvRow {
                    destroyed: s.destroyed,
                    policy,
                    trials: p.trials,
                    healed: p.healed,
                    fallbacks: p.fallbacks,
                    mean_js: p.j_s.map(|x| x.mean),
                    std_js: p.j_s.map(|x| x.std),
                    ci95_js: p.j_s.map(|x| x.ci95),
                    mean_l_max_m: p.l_max_m.map(|x| x.mean),
                    std_l_max_m: p.l_max_m.map(|x| x.std),
                });
            }
        }
        out.write_csv(SUMMARY_CSV, &rows)?;
        out.write_csv(TRACES, &traces)?;
        out.write_csv(TRAJECTORY, &trajectories)?;
    }
    Ok(HealReport {
        n: cfg.n,
        trials: cfg.trials,
        sizes: summaries,
        runs,
    })
}

pub fn cmd_heal_oneoff(cfg: &RunConfig, store: Option<&MetaParamStore>, out: &mut OutDir) -> Result<String, CliError> {
    let report = heal_oneoff(cfg, store, Some(&mut *out))?;
    out.write_json(SUMMARY_JSON, &report)?;
    let lines: Vec<String> = report
        .sizes
        .iter()
        .map(|s| {
            let m = |p: &PolicySummary| p.j_s.map_or("-".to_string(), |x| format!("{:.1}", x.mean));
            format!(
                "destroyed {:>3}: J_s cr-mgc {} (healed {}/{}, fallbacks {}), cen {}",
                s.destroyed,
                m(&s.cr_mgc),
                s.cr_mgc.healed,
                s.cr_mgc.trials,
                s.cr_mgc.fallbacks,
                m(&s.cen)
            )
        })
        .collect();
    Ok(lines.join("\n"))
}
