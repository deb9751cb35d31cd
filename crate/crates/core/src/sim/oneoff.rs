use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{connected_ratio, init_params, HealConfig, Metrics, UedEvent};
use crate::channel::LinkPredicate;
use crate::error::{Error, Result};
use crate::gcn::gcn_train_online;
use crate::graph::{centroid, cluster_count_with, TopologyMatrix};
use crate::meta::MetaParamStore;
use crate::scalar::{dist3, Vec3};

const MAX_SAMPLING_REJECTIONS: usize = 10_000;

/// Uniformly random destruction of `count` UAVs that leaves the rest disconnected.
pub fn sample_one_off_ued<R: Rng + ?Sized>(
    initial: &TopologyMatrix<f64>,
    count: usize,
    link: &LinkPredicate<f64>,
    rng: &mut R,
) -> Result<UedEvent> {
    let n = initial.len();
    if count == 0 || count + 2 > n {
        return Err(Error::Domain(format!("destroy count {count} outside 1..={}", n.saturating_sub(2))));
    }
    for _ in 0..MAX_SAMPLING_REJECTIONS {
        let destroyed: std::collections::BTreeSet<usize> = rand::seq::index::sample(rng, n, count)
            .iter()
            .map(|r| initial.indices()[r])
            .collect();
        let rest = initial.without(&destroyed).expect("survivors remain");
        if cluster_count_with(&rest, |d| link.linked(d)) > 1 {
            return Ok(UedEvent {
                time_step: 0,
                destroyed,
            });
        }
    }
    Err(Error::NoBreakingSet {
        attempts: MAX_SAMPLING_REJECTIONS,
    })
}

/// Next position when flying from `p` towards `target` at speed `v0`; the final step
/// lands exactly on the target.
pub(crate) fn advance(p: &Vec3<f64>, target: &Vec3<f64>, v0: f64) -> Vec3<f64> {
    let d = dist3(p, target);
    if d <= v0 {
        return *target;
    }
    let s = v0 / d;
    [
        p[0] + (target[0] - p[0]) * s,
        p[1] + (target[1] - p[1]) * s,
        p[2] + (target[2] - p[2]) * s,
    ]
}

/// Straight constant-speed flight that stops the first step the swarm is connected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    /// Topology before the first step and after every step.
    pub trajectory: Vec<TopologyMatrix<f64>>,
    pub cluster_trace: Vec<usize>,
    pub connected: bool,
}

impl Flight {
    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }
}

pub fn fly_to_targets(
    start: &TopologyMatrix<f64>,
    targets: &TopologyMatrix<f64>,
    v0: f64,
    link: &LinkPredicate<f64>,
) -> Result<Flight> {
    if start.indices() != targets.indices() {
        return Err(Error::Contract("targets and swarm index sets differ".into()));
    }
    let clusters = |t: &TopologyMatrix<f64>| cluster_count_with(t, |d| link.linked(d));
    let mut trajectory = vec![start.clone()];
    let mut cluster_trace = Vec::new();
    let mut current = start.clone();
    let mut c = clusters(&current);
    while c > 1 {
        if current == *targets {
            return Ok(Flight {
                trajectory,
                cluster_trace,
                connected: false,
            });
        }
        let next = current
            .positions()
            .iter()
            .zip(targets.positions())
            .map(|(p, q)| advance(p, q, v0))
            .collect();
        current = current.with_positions(next)?;
        c = clusters(&current);
        cluster_trace.push(c);
        trajectory.push(current.clone());
    }
    Ok(Flight {
        trajectory,
        cluster_trace,
        connected: true,
    })
}

/// Result of healing a single destruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealOutcome {
    pub targets: TopologyMatrix<f64>,
    pub flight: Flight,
    pub metrics: Metrics,
    /// Targets came from plain GCO iteration instead of a trained GCN.
    pub fallback: bool,
    pub store_hit: bool,
}

fn outcome(
    start: &TopologyMatrix<f64>,
    targets: TopologyMatrix<f64>,
    flight: Flight,
    k_star: Option<usize>,
    fallback: bool,
    store_hit: bool,
) -> HealOutcome {
    let end = flight.trajectory.last().expect("trajectory starts with the input");
    let l_max = start
        .positions()
        .iter()
        .zip(end.positions())
        .map(|(a, b)| dist3(a, b))
        .fold(0.0, f64::max);
    let metrics = Metrics {
        j_c: connected_ratio(&flight.cluster_trace),
        cluster_trace: flight.cluster_trace.clone(),
        j_s: vec![Some(flight.steps())],
        l_max,
        k_star,
    };
    HealOutcome {
        targets,
        flight,
        metrics,
        fallback,
        store_hit,
    }
}

/// Meta-initialized on-line GCN healing of one disconnected topology.
pub fn cr_mgc_heal(post: &TopologyMatrix<f64>, store: Option<&MetaParamStore>, cfg: &HealConfig) -> Result<HealOutcome> {
    cfg.validate()?;
    let link = cfg.link()?;
    if post.len() < 2 || cluster_count_with(post, |d| link.linked(d)) == 1 {
        let flight = fly_to_targets(post, post, cfg.v0, &link)?;
        return Ok(outcome(post, post.clone(), flight, None, false, false));
    }
    let (init, store_hit) = init_params(store, post.len(), cfg)?;
    let trained = gcn_train_online(&init, post, &link, cfg.hyper.online_episodes, cfg.hyper.learning_rate)
        .map_err(|e| match e {
            Error::NonConvergence { .. } | Error::Diverged { .. } => Error::HealFailed(e.to_string()),
            other => other,
        })?;
    let targets = trained.best.target_topology;
    let flight = fly_to_targets(post, &targets, cfg.v0, &link)?;
    if !flight.connected {
        return Err(Error::HealFailed("swarm reached its targets disconnected".into()));
    }
    Ok(outcome(post, targets, flight, trained.k_star, trained.fallback, store_hit))
}

/// Baseline: every UAV flies straight to the swarm centroid.
pub fn cen_heal(post: &TopologyMatrix<f64>, cfg: &HealConfig) -> Result<HealOutcome> {
    cfg.validate()?;
    let link = cfg.link()?;
    let c = centroid(post);
    let targets = post.with_positions(vec![c; post.len()])?;
    let flight = fly_to_targets(post, &targets, cfg.v0, &link)?;
    Ok(outcome(post, targets, flight, None, false, false))
}
