//! Discrete-time swarm simulation: destruction events, per-UAV databases,
//! one-off healing and the general-event policies.

mod general;
mod idb;
mod oneoff;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, LinkPredicate};
use crate::error::{Error, Result};
use crate::gcn::{GcnHyper, GcnParams};
use crate::graph::{cluster_count_with, TopologyMatrix};
use crate::meta::{random_init_for, MetaParamStore};

pub use general::{run_general, run_general_with, GeneralOutcome, PolicyKind, RunOptions, StepRecord};
pub use idb::{apply_ued, broadcast_round, center_gap, Idb, SimState};
pub use oneoff::{cen_heal, cr_mgc_heal, fly_to_targets, sample_one_off_ued, Flight, HealOutcome};

/// UAVs destroyed at a given step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UedEvent {
    pub time_step: usize,
    pub destroyed: BTreeSet<usize>,
}

/// Healing settings shared by the one-off and general simulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealConfig {
    pub hyper: GcnHyper<f64>,
    /// Flight speed, meters per step.
    pub v0: f64,
    /// Steps a UAV holds its target before re-planning.
    pub kappa: usize,
    pub channel: ChannelParams<f64>,
    /// Seed for initializations on store misses.
    pub init_seed: u64,
}

impl Default for HealConfig {
    fn default() -> Self {
        Self {
            hyper: GcnHyper::default(),
            v0: 1.0,
            kappa: 10,
            channel: ChannelParams::default(),
            init_seed: 0,
        }
    }
}

impl HealConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::Scenario(format!("v0 must be positive, got {}", self.v0)));
        }
        if self.kappa == 0 {
            return Err(Error::Scenario("kappa must be at least 1".into()));
        }
        Ok(())
    }

    pub fn link(&self) -> Result<LinkPredicate<f64>> {
        LinkPredicate::new(self.channel.clone())
    }
}

/// Initial GCN parameters for cardinality `n`: the stored meta parameters if present,
/// otherwise the deterministic random initialization.
pub fn init_params(store: Option<&MetaParamStore>, n: usize, cfg: &HealConfig) -> Result<(GcnParams<f64>, bool)> {
    match store.map(|s| s.get(n)) {
        Some(Ok(p)) => {
            if p.layers.len() != cfg.hyper.q {
                return Err(Error::StoreFormat(format!(
                    "store holds {} layers, configuration expects {}",
                    p.layers.len(),
                    cfg.hyper.q
                )));
            }
            Ok((
                GcnParams {
                    layers: p.layers.clone(),
                    hyper: cfg.hyper,
                },
                true,
            ))
        }
        Some(Err(Error::StoreMiss(_))) | None => Ok((random_init_for(n, cfg.hyper, cfg.init_seed), false)),
        Some(Err(e)) => Err(e),
    }
}

/// A general-event simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial_topology: TopologyMatrix<f64>,
    pub events: Vec<UedEvent>,
    pub horizon: usize,
    pub heal: HealConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.heal.validate()?;
        if self.horizon == 0 {
            return Err(Error::Scenario("horizon must be at least 1".into()));
        }
        let link = self.heal.link()?;
        if cluster_count_with(&self.initial_topology, |d| link.linked(d)) != 1 {
            return Err(Error::Scenario("initial topology is not connected".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.events {
            if e.time_step > self.horizon {
                return Err(Error::ScheduleInvalid(format!(
                    "event at step {} beyond horizon {}",
                    e.time_step, self.horizon
                )));
            }
            if e.destroyed.is_empty() {
                return Err(Error::ScheduleInvalid("event destroys nothing".into()));
            }
            for &j in &e.destroyed {
                if self.initial_topology.row_of(j).is_none() {
                    return Err(Error::ScheduleInvalid(format!("UAV {j} not in the initial swarm")));
                }
                if !seen.insert(j) {
                    return Err(Error::ScheduleInvalid(format!("UAV {j} destroyed twice")));
                }
            }
        }
        Ok(())
    }
}

/// Events at the given steps destroying disjoint random sets of the given sizes.
pub fn sample_schedule<R: rand::Rng + ?Sized>(
    initial: &TopologyMatrix<f64>,
    plan: &[(usize, usize)],
    rng: &mut R,
) -> Result<Vec<UedEvent>> {
    let total: usize = plan.iter().map(|p| p.1).sum();
    if total >= initial.len() {
        return Err(Error::ScheduleInvalid(format!(
            "schedule destroys {total} of {} UAVs",
            initial.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, initial.len(), total);
    let mut it = picked.iter().map(|r| initial.indices()[r]);
    Ok(plan
        .iter()
        .map(|&(time_step, k)| UedEvent {
            time_step,
            destroyed: it.by_ref().take(k).collect(),
        })
        .collect())
}

/// Per-run metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// True cluster count after each step.
    pub cluster_trace: Vec<usize>,
    /// Steps from each event until the true graph is connected again (`None` if never).
    pub j_s: Vec<Option<usize>>,
    /// Fraction of steps with a connected true graph.
    pub j_c: f64,
    /// Largest distance flown by any UAV, meters.
    pub l_max: f64,
    pub k_star: Option<usize>,
}

pub(crate) fn connected_ratio(trace: &[usize]) -> f64 {
    if trace.is_empty() {
        return 1.0;
    }
    trace.iter().filter(|&&c| c == 1).count() as f64 / trace.len() as f64
}
