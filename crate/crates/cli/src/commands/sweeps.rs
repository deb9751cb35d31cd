use rayon::prelude::*;
use serde::Serialize;
use swarmheal::gcn::{gco_iterate, GcoConfig, GcoOperator};
use swarmheal::graph::{build_graph, TopologyMatrix};
use swarmheal::scalar::dist3;
use swarmheal::vrg::{build_vrg, min_virtual_distance, virtual_distance_for};
use swarmheal::Error;

use super::{breaking_sample, check_sizes, fmt_opt};
use crate::config::{resolve_sizes, RunConfig};
use crate::stats::summarize;
use crate::{CliError, OutDir};

pub const SWEEP_C: &str = "sweep_c.csv";
pub const SWEEP_ETA: &str = "sweep_eta.csv";
pub const SWEEP_EPS: &str = "sweep_eps.csv";

/// Post-destruction topologies for every trial at size `k`, in trial order.
fn samples(cfg: &RunConfig, k: usize) -> Result<Vec<TopologyMatrix<f64>>, CliError> {
    let link = cfg.link()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| breaking_sample(cfg, &link, k, trial).map(|s| s.post))
        .collect::<swarmheal::Result<_>>()
        .map_err(CliError::from)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCRow {
    pub destroyed: usize,
    pub c: f64,
    pub trials: usize,
    pub mean_clusters: f64,
    pub std_clusters: f64,
    pub min_clusters: usize,
    pub max_clusters: usize,
}

/// `d_v = (1 - c) r + c d_min`, which equals `r + c (d_min - r)` and is exactly
/// `d_min` at `c = 1`.
pub fn blended_distance(radius: f64, d_min: f64, c: f64) -> f64 {
    (1.0 - c) * radius + c * d_min
}

pub fn sweep_c_rows(cfg: &RunConfig) -> Result<Vec<SweepCRow>, CliError> {
    let radius = cfg
        .link()?
        .link_radius()
        .ok_or_else(|| CliError::Config("sweep-c needs a fixed link radius (small-scale fading off)".into()))?;
    let sizes = resolve_sizes(cfg.n, &cfg.sweep_c.destroy_sizes, &cfg.sweep_c.destroy_fractions);
    check_sizes(cfg, &sizes)?;
    let mut rows = Vec::new();
    for k in sizes {
        let posts = samples(cfg, k)?;
        let d_mins = posts
            .iter()
            .map(min_virtual_distance)
            .collect::<swarmheal::Result<Vec<_>>>()?;
        for &c in &cfg.sweep_c.c_grid {
            let counts: Vec<usize> = posts
                .iter()
                .zip(&d_mins)
                .map(|(p, &d_min)| {
                    let d_v = blended_distance(radius, d_min, c);
                    build_graph(p.clone(), |d| d <= d_v).cluster_count()
                })
                .collect();
            let xs: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
            let s = summarize(&xs).expect("trials >= 1");
            rows.push(SweepCRow {
                destroyed: k,
                c,
                trials: counts.len(),
                mean_clusters: s.mean,
                std_clusters: s.std,
                min_clusters: *counts.iter().min().expect("nonempty"),
                max_clusters: *counts.iter().max().expect("nonempty"),
            });
        }
    }
    Ok(rows)
}

pub fn cmd_sweep_c(cfg: &RunConfig, out: &mut OutDir) -> Result<String, CliError> {
    let rows = sweep_c_rows(cfg)?;
    for r in rows.iter().filter(|r| r.c == 1.0) {
        if r.max_clusters != 1 {
            return Err(Error::Invariant(format!(
                "VRG at c = 1 has {} clusters after destroying {}",
                r.max_clusters, r.destroyed
            ))
            .into());
        }
    }
    out.write_csv(SWEEP_C, &rows)?;
    Ok(format!(
        "{} rows; c = 1 gives one cluster in every trial",
        rows.len()
    ))
}

/// Result of one GCO run to connectivity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GcoOutcome {
    Converged { k_star: usize, l_max_m: f64 },
    Diverged,
    NotConverged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GcoRun {
    pub outcome: GcoOutcome,
    /// Spectral radius of the operator on deviations from the centroid.
    pub gain: f64,
}

pub fn gco_trial(post: &TopologyMatrix<f64>, eta: f64, epsilon: f64, cfg: &RunConfig) -> Result<GcoRun, CliError> {
    let link = cfg.link()?;
    let vd = virtual_distance_for(post, eta)?;
    let vrg = build_vrg(post.clone(), vd.d_v_m)?;
    let gain = GcoOperator::for_vrg(&vrg, epsilon)?.deviation_gain()?;
    let gco = GcoConfig::new(epsilon);
    let outcome = match gco_iterate(post, &vrg, &gco, |d| link.linked(d)) {
        Ok((t, k_star)) => {
            let l_max_m = post
                .positions()
                .iter()
                .zip(t.positions())
                .map(|(a, b)| dist3(a, b))
                .fold(0.0, f64::max);
            GcoOutcome::Converged { k_star, l_max_m }
        }
        Err(Error::Diverged { .. }) => GcoOutcome::Diverged,
        Err(Error::NonConvergence { .. }) => GcoOutcome::NotConverged,
        Err(e) => return Err(e.into()),
    };
    Ok(GcoRun { outcome, gain })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GcoRow {
    pub destroyed: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub converged: usize,
    pub diverged: usize,
    pub not_converged: usize,
    /// Trials whose operator expands some deviation from the centroid (gain > 1):
    /// its iterates diverge unless connectivity is reached first.
    pub expansive: usize,
    pub max_gain: f64,
    /// Means over converged trials only; empty when none converged.
    pub mean_k_star: String,
    pub std_k_star: String,
    pub mean_l_max_m: String,
    pub std_l_max_m: String,
    /// Set when the operator of any trial is expansive.
    pub divergent: bool,
}

impl GcoRow {
    pub fn mean_k(&self) -> Option<f64> {
        self.mean_k_star.parse().ok()
    }
}

const GAIN_TOL: f64 = 1e-9;

fn gco_rows(cfg: &RunConfig, sizes: Vec<usize>, grid: &[(f64, f64)]) -> Result<Vec<GcoRow>, CliError> {
    check_sizes(cfg, &sizes)?;
    let mut rows = Vec::new();
    for k in sizes {
        let posts = samples(cfg, k)?;
        for &(eta, epsilon) in grid {
            let runs = posts
                .par_iter()
                .map(|p| gco_trial(p, eta, epsilon, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let (mut ks, mut ls) = (Vec::new(), Vec::new());
            let (mut diverged, mut not_converged, mut expansive, mut max_gain) = (0, 0, 0, 0.0f64);
            for r in runs {
                if r.gain > 1.0 + GAIN_TOL {
                    expansive += 1;
                }
                max_gain = max_gain.max(r.gain);
                match r.outcome {
                    GcoOutcome::Converged { k_star, l_max_m } => {
                        ks.push(k_star as f64);
                        ls.push(l_max_m);
                    }
                    GcoOutcome::Diverged => diverged += 1,
                    GcoOutcome::NotConverged => not_converged += 1,
                }
            }
            let sk = summarize(&ks);
            let sl = summarize(&ls);
            rows.push(GcoRow {
                destroyed: k,
                eta,
                epsilon,
                trials: posts.len(),
                converged: ks.len(),
                diverged,
                not_converged,
                expansive,
                max_gain,
                mean_k_star: fmt_opt(sk.map(|s| s.mean)),
                std_k_star: fmt_opt(sk.map(|s| s.std)),
                mean_l_max_m: fmt_opt(sl.map(|s| s.mean)),
                std_l_max_m: fmt_opt(sl.map(|s| s.std)),
                divergent: expansive > 0 || diverged > 0,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_eta_rows(cfg: &RunConfig) -> Result<Vec<GcoRow>, CliError> {
    let sizes = resolve_sizes(cfg.n, &cfg.sweep_eta.destroy_sizes, &cfg.sweep_eta.destroy_fractions);
    let grid: Vec<_> = cfg.sweep_eta.eta_grid.iter().map(|&e| (e, cfg.hyper.epsilon)).collect();
    gco_rows(cfg, sizes, &grid)
}

pub fn sweep_eps_rows(cfg: &RunConfig) -> Result<Vec<GcoRow>, CliError> {
    let sizes = resolve_sizes(cfg.n, &cfg.sweep_eps.destroy_sizes, &cfg.sweep_eps.destroy_fractions);
    let grid: Vec<_> = cfg.sweep_eps.eps_grid.iter().map(|&e| (cfg.hyper.eta, e)).collect();
    gco_rows(cfg, sizes, &grid)
}

fn describe(rows: &[GcoRow]) -> String {
    let flagged = rows.iter().filter(|r| r.divergent).count();
    format!("{} rows, {flagged} flagged divergent", rows.len())
}

pub fn cmd_sweep_eta(cfg: &RunConfig, out: &mut OutDir) -> Result<String, CliError> {
    let rows = sweep_eta_rows(cfg)?;
    out.write_csv(SWEEP_ETA, &rows)?;
    Ok(describe(&rows))
}

pub fn cmd_sweep_eps(cfg: &RunConfig, out: &mut OutDir) -> Result<String, CliError> {
    let rows = sweep_eps_rows(cfg)?;
    out.write_csv(SWEEP_EPS, &rows)?;
    Ok(describe(&rows))
}
