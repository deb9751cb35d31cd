pub mod bench;
pub mod general;
pub mod heal;
pub mod meta_train;
pub mod sweeps;

use swarmheal::graph::TopologyMatrix;
use swarmheal::seed::{derive_seed, rng_for};
use swarmheal::sim::{sample_one_off_ued, UedEvent};
use swarmheal::{Error, LinkPredicate};

use crate::config::RunConfig;

const MAX_SWARM_REDRAWS: usize = 100;

/// A connected swarm and a destruction of `k` UAVs that disconnects it.
#[derive(Clone, Debug)]
pub struct BreakingSample {
    pub initial: TopologyMatrix<f64>,
    pub event: UedEvent,
    pub post: TopologyMatrix<f64>,
}

/// Sample for trial `trial` at destruction size `k`; depends only on the seed, `k`
/// and `trial`. Swarms with no breaking set of size `k` are redrawn.
pub fn breaking_sample(
    cfg: &RunConfig,
    link: &LinkPredicate<f64>,
    k: usize,
    trial: usize,
) -> swarmheal::Result<BreakingSample> {
    let mut rng = rng_for(derive_seed(cfg.seed, k as u64), trial as u64);
    for _ in 0..MAX_SWARM_REDRAWS {
        let initial = cfg.bounds.sample_connected(cfg.n, link, &mut rng)?;
        match sample_one_off_ued(&initial, k, link, &mut rng) {
            Ok(event) => {
                let post = initial.without(&event.destroyed).expect("survivors remain");
                return Ok(BreakingSample { initial, event, post });
            }
            Err(Error::NoBreakingSet { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoBreakingSet {
        attempts: MAX_SWARM_REDRAWS,
    })
}

pub(crate) fn check_sizes(cfg: &RunConfig, sizes: &[usize]) -> Result<(), crate::CliError> {
    for &k in sizes {
        if k == 0 || k + 2 > cfg.n {
            return Err(crate::CliError::Config(format!(
                "destruction size {k} outside 1..={} for n = {}",
                cfg.n.saturating_sub(2),
                cfg.n
            )));
        }
    }
    Ok(())
}

/// Shortest round-trip text of a float; empty for a missing value.
pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
