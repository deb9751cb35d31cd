use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::idb::{apply_ued, broadcast_round, center_gap};
use super::oneoff::advance;
use super::{connected_ratio, init_params, Metrics, Scenario};
use crate::channel::LinkPredicate;
use crate::error::{Error, Result};
use crate::gcn::gcn_train_online;
use crate::graph::{build_graph, centroid, cluster_count_with, laplacian, laplacian_zero_tol, zero_eig_multiplicity, TopologyMatrix};
use crate::meta::MetaParamStore;
use crate::scalar::{dist3, Vec3};
use crate::seed::rng_for;

use super::idb::SimState;

const STREAM_SPOT_CHECK: u64 = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Meta-GCN planning on each UAV's own database.
    CrMgcm,
    /// The same planner fed with ground truth every step.
    CrMgcmGlob,
    /// Fly to the centroid of the believed positions.
    Cen,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::CrMgcm, PolicyKind::CrMgcmGlob, PolicyKind::Cen];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::CrMgcm => "cr-mgcm",
            PolicyKind::CrMgcmGlob => "cr-mgcm-glob",
            PolicyKind::Cen => "cen",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub clusters: usize,
    pub alive: usize,
    /// UAVs that moved this step.
    pub moving: usize,
    /// GCN trainings run this step (after de-duplication).
    pub trainings: usize,
    pub max_center_gap_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralOutcome {
    pub policy: PolicyKind,
    pub metrics: Metrics,
    pub steps: Vec<StepRecord>,
    /// `(t, index, position)` for every alive UAV at `t = 0..=T`, if requested.
    pub trajectory: Vec<(usize, usize, Vec3<f64>)>,
    pub fallbacks: usize,
    pub store_misses: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_trajectory: bool,
    /// Steps on which the union-find cluster count is re-derived spectrally.
    pub spectral_spot_checks: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Inertia {
    counter: usize,
    target: Option<Vec3<f64>>,
}

fn topology_key(t: &TopologyMatrix<f64>) -> Vec<u64> {
    t.rows()
        .flat_map(|(i, p)| [i as u64, p[0].to_bits(), p[1].to_bits(), p[2].to_bits()])
        .collect()
}

struct Planner<'a> {
    scenario: &'a Scenario,
    store: Option<&'a MetaParamStore>,
    link: &'a LinkPredicate<f64>,
    cache: HashMap<Vec<u64>, TopologyMatrix<f64>>,
    trainings: usize,
    fallbacks: usize,
    store_misses: usize,
}

impl Planner<'_> {
    fn targets(&mut self, believed: &TopologyMatrix<f64>) -> Result<&TopologyMatrix<f64>> {
        let key = topology_key(believed);
        if !self.cache.contains_key(&key) {
            let cfg = &self.scenario.heal;
            let (init, hit) = init_params(self.store, believed.len(), cfg)?;
            let out = gcn_train_online(&init, believed, self.link, cfg.hyper.online_episodes, cfg.hyper.learning_rate)
                .map_err(|e| match e {
                    Error::NonConvergence { .. } | Error::Diverged { .. } => Error::HealFailed(e.to_string()),
                    other => other,
                })?;
            self.trainings += 1;
            self.fallbacks += usize::from(out.fallback);
            self.store_misses += usize::from(!hit);
            self.cache.insert(key.clone(), out.best.target_topology);
        }
        Ok(&self.cache[&key])
    }
}

pub fn run_general(scenario: &Scenario, policy: PolicyKind, store: Option<&MetaParamStore>) -> Result<GeneralOutcome> {
    run_general_with(scenario, policy, store, RunOptions::default(), |_| {})
}

/// Runs the scenario. Per step: due events, sensing of destroyed neighbors, broadcast
/// (ground truth for the global policy), policy, motion, metrics. `observer` sees the
/// state after every step.
pub fn run_general_with(
    scenario: &Scenario,
    policy: PolicyKind,
    store: Option<&MetaParamStore>,
    options: RunOptions,
    mut observer: impl FnMut(&SimState),
) -> Result<GeneralOutcome> {
    scenario.validate()?;
    let link = scenario.heal.link()?;
    let v0 = scenario.heal.v0;
    let kappa = scenario.heal.kappa;
    let horizon = scenario.horizon;

    let mut due: BTreeMap<usize, Vec<&super::UedEvent>> = BTreeMap::new();
    for e in &scenario.events {
        due.entry(e.time_step.max(1)).or_default().push(e);
    }
    let spot_steps: BTreeSet<usize> = if options.spectral_spot_checks > 0 {
        let mut rng = rng_for(scenario.seed, STREAM_SPOT_CHECK);
        sample(&mut rng, horizon, options.spectral_spot_checks.min(horizon))
            .iter()
            .map(|k| k + 1)
            .collect()
    } else {
        BTreeSet::new()
    };

    let mut state = SimState::new(&scenario.initial_topology);
    let mut inertia: BTreeMap<usize, Inertia> = state.positions.keys().map(|&i| (i, Inertia::default())).collect();
    let mut flown: BTreeMap<usize, f64> = state.positions.keys().map(|&i| (i, 0.0)).collect();
    let mut planner = Planner {
        scenario,
        store,
        link: &link,
        cache: HashMap::new(),
        trainings: 0,
        fallbacks: 0,
        store_misses: 0,
    };
    let mut trajectory = Vec::new();
    if options.record_trajectory {
        trajectory.extend(state.positions.iter().map(|(&i, p)| (0, i, *p)));
    }
    let mut cluster_trace = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    // (step applied, broke connectivity)
    let mut event_marks: Vec<(usize, bool)> = Vec::new();

    for t in 1..=horizon {
        state.t = t;
        if let Some(events) = due.get(&t) {
            for e in events {
                apply_ued(&mut state, e, &link)?;
            }
            let broke = state
                .truth()
                .map_or(false, |tr| cluster_count_with(&tr, |d| link.linked(d)) > 1);
            event_marks.extend(std::iter::repeat((t, broke)).take(events.len()));
        }

        if policy == PolicyKind::CrMgcmGlob {
            state.overwrite_with_truth();
        } else {
            broadcast_round(&mut state, &link);
        }
        if !state.iisr_sound() {
            return Err(Error::Invariant(format!("IISR lost an alive UAV at step {t}")));
        }
        let max_gap = state
            .idbs
            .values()
            .map(|idb| center_gap(idb, &state.positions))
            .fold(0.0, f64::max);

        planner.cache.clear();
        let trainings_before = planner.trainings;
        let mut next = BTreeMap::new();
        for (&i, idb) in &state.idbs {
            let p = state.positions[&i];
            let believed = idb.believed_topology()?;
            let connected = cluster_count_with(&believed, |d| link.linked(d)) == 1;
            let target = match policy {
                PolicyKind::Cen => (!connected).then(|| centroid(&believed)),
                PolicyKind::CrMgcm | PolicyKind::CrMgcmGlob => {
                    let mem = inertia.get_mut(&i).expect("alive UAV has inertia state");
                    if connected {
                        *mem = Inertia::default();
                        None
                    } else {
                        if mem.counter >= kappa {
                            mem.counter = 0;
                        }
                        if mem.counter == 0 || mem.target.is_none() {
                            let targets = planner.targets(&believed)?;
                            let row = targets.row_of(i).ok_or_else(|| {
                                Error::ProtocolCorruption(format!("UAV {i} missing from its own IISR"))
                            })?;
                            mem.target = Some(targets.positions()[row]);
                        }
                        mem.counter += 1;
                        mem.target
                    }
                }
            };
            next.insert(i, target.map_or(p, |q| advance(&p, &q, v0)));
        }

        let mut moving = 0;
        for (i, q) in next {
            let p = state.positions.get_mut(&i).expect("alive");
            let d = dist3(p, &q);
            if d > 0.0 {
                moving += 1;
                *flown.get_mut(&i).expect("tracked") += d;
            }
            *p = q;
        }
        if options.record_trajectory {
            trajectory.extend(state.positions.iter().map(|(&i, p)| (t, i, *p)));
        }

        let clusters = match state.truth() {
            Some(tr) => {
                let c = cluster_count_with(&tr, |d| link.linked(d));
                if spot_steps.contains(&t) {
                    let l = laplacian(&build_graph(tr, |d| link.linked(d)));
                    let m = zero_eig_multiplicity(&l, laplacian_zero_tol(&l))?;
                    if m != c {
                        return Err(Error::Invariant(format!(
                            "step {t}: union-find {c} clusters, spectrum {m}"
                        )));
                    }
                }
                c
            }
            None => 1,
        };
        cluster_trace.push(clusters);
        steps.push(StepRecord {
            t,
            clusters,
            alive: state.positions.len(),
            moving,
            trainings: planner.trainings - trainings_before,
            max_center_gap_m: max_gap,
        });
        observer(&state);
    }

    let j_s = event_marks
        .iter()
        .map(|&(e, broke)| {
            if !broke {
                return Some(0);
            }
            cluster_trace[e - 1..]
                .iter()
                .position(|&c| c == 1)
                .map(|k| k + 1)
        })
        .collect();
    Ok(GeneralOutcome {
        policy,
        metrics: Metrics {
            j_c: connected_ratio(&cluster_trace),
            cluster_trace,
            j_s,
            l_max: flown.values().copied().fold(0.0, f64::max),
            k_star: None,
        },
        steps,
        trajectory,
        fallbacks: planner.fallbacks,
        store_misses: planner.store_misses,
    })
}
