use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::UedEvent;
use crate::channel::LinkPredicate;
use crate::error::{Error, Result};
use crate::graph::{build_graph, centroid_of, TopologyMatrix};
use crate::scalar::{dist3, Vec3};

/// A UAV's individual database: believed positions and believed-alive index set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Idb {
    pub owner: usize,
    pub believed: BTreeMap<usize, Vec3<f64>>,
    pub iisr: BTreeSet<usize>,
}

impl Idb {
    /// Complete knowledge of `truth`.
    pub fn from_truth(owner: usize, truth: &BTreeMap<usize, Vec3<f64>>) -> Self {
        Self {
            owner,
            believed: truth.clone(),
            iisr: truth.keys().copied().collect(),
        }
    }

    pub fn drop_index(&mut self, j: usize) {
        self.iisr.remove(&j);
        self.believed.remove(&j);
    }

    /// Believed positions of every index in the IISR.
    pub fn believed_topology(&self) -> Result<TopologyMatrix<f64>> {
        if self.iisr.is_empty() {
            return Err(Error::ProtocolCorruption(format!("UAV {} has an empty IISR", self.owner)));
        }
        let rows = self
            .iisr
            .iter()
            .map(|&j| {
                self.believed
                    .get(&j)
                    .map(|p| (j, *p))
                    .ok_or_else(|| Error::ProtocolCorruption(format!("UAV {} has no belief for {j}", self.owner)))
            })
            .collect::<Result<Vec<_>>>()?;
        TopologyMatrix::new(rows)
    }
}

/// Ground truth plus every alive UAV's database.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: usize,
    pub positions: BTreeMap<usize, Vec3<f64>>,
    pub idbs: BTreeMap<usize, Idb>,
}

impl SimState {
    pub fn new(initial: &TopologyMatrix<f64>) -> Self {
        let positions: BTreeMap<_, _> = initial.rows().map(|(i, p)| (i, *p)).collect();
        let idbs = positions.keys().map(|&i| (i, Idb::from_truth(i, &positions))).collect();
        Self { t: 0, positions, idbs }
    }

    pub fn truth(&self) -> Option<TopologyMatrix<f64>> {
        if self.positions.is_empty() {
            return None;
        }
        TopologyMatrix::new(self.positions.iter().map(|(&i, p)| (i, *p)).collect()).ok()
    }

    /// Every alive UAV's IISR contains the true alive set.
    pub fn iisr_sound(&self) -> bool {
        self.idbs
            .values()
            .all(|idb| self.positions.keys().all(|i| idb.iisr.contains(i)))
    }

    /// Replaces every database with the ground truth.
    pub fn overwrite_with_truth(&mut self) {
        for (&i, idb) in self.idbs.iter_mut() {
            *idb = Idb::from_truth(i, &self.positions);
        }
    }
}

/// Removes the destroyed UAVs. Each survivor currently linked to a destroyed UAV
/// drops it from its IISR at once; other survivors learn only through broadcasts.
pub fn apply_ued(state: &mut SimState, event: &UedEvent, link: &LinkPredicate<f64>) -> Result<()> {
    for j in &event.destroyed {
        if !state.positions.contains_key(j) {
            return Err(Error::ScheduleInvalid(format!("UAV {j} is not alive at step {}", state.t)));
        }
    }
    for &j in &event.destroyed {
        let pj = state.positions[&j];
        for (&i, p) in &state.positions {
            if event.destroyed.contains(&i) || !link.linked(dist3(p, &pj)) {
                continue;
            }
            if let Some(idb) = state.idbs.get_mut(&i) {
                idb.drop_index(j);
            }
        }
    }
    for j in &event.destroyed {
        state.positions.remove(j);
        state.idbs.remove(j);
    }
    Ok(())
}

/// One zero-delay broadcast: inside each true cluster every member learns the true
/// positions of all members, and the IISRs are replaced by their intersection.
pub fn broadcast_round(state: &mut SimState, link: &LinkPredicate<f64>) {
    for (&i, idb) in state.idbs.iter_mut() {
        idb.believed.insert(i, state.positions[&i]);
    }
    let Some(truth) = state.truth() else {
        return;
    };
    let clusters = build_graph(truth, |d| link.linked(d)).clusters();
    for members in clusters {
        let mut inter: Option<BTreeSet<usize>> = None;
        for m in &members {
            let s = &state.idbs[m].iisr;
            inter = Some(match inter {
                None => s.clone(),
                Some(acc) => acc.intersection(s).copied().collect(),
            });
        }
        let inter = inter.unwrap_or_default();
        for m in &members {
            let idb = state.idbs.get_mut(m).expect("alive UAV has a database");
            for k in &members {
                idb.believed.insert(*k, state.positions[k]);
            }
            idb.iisr = inter.clone();
            idb.believed.retain(|k, _| inter.contains(k));
        }
    }
}

/// Distance between the centroid of the true alive positions and the centroid of the
/// positions believed by `idb`.
pub fn center_gap(idb: &Idb, truth: &BTreeMap<usize, Vec3<f64>>) -> f64 {
    let complete: Vec<_> = truth.values().copied().collect();
    let incomplete: Vec<_> = idb.iisr.iter().filter_map(|j| idb.believed.get(j).copied()).collect();
    dist3(&centroid_of(&complete), &centroid_of(&incomplete))
}
