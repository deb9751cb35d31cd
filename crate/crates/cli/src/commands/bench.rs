use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;
use swarmheal::gcn::gcn_train_online;
use swarmheal::graph::centroid;
use swarmheal::meta::MetaParamStore;
use swarmheal::sim::init_params;

use super::{breaking_sample, check_sizes};
use crate::config::RunConfig;
use crate::stats::{median, summarize};
use crate::{CliError, OutDir};

pub const BENCH: &str = "bench.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub trials: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub destroyed: usize,
    pub online_episodes: usize,
    pub policies: BTreeMap<&'static str, Timing>,
}

fn timing(ms: &[f64]) -> Timing {
    let s = summarize(ms).expect("trials >= 1");
    Timing {
        trials: ms.len(),
        median_ms: median(ms).expect("trials >= 1"),
        mean_ms: s.mean,
        min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: ms.iter().copied().fold(0.0, f64::max),
    }
}

/// Wall-clock time of one healing decision on sampled post-destruction swarms:
/// meta-initialized on-line training for the GCN planner, the centroid for CEN.
/// Trials run one after another.
pub fn bench(cfg: &RunConfig, store: Option<&MetaParamStore>) -> Result<BenchReport, CliError> {
    let link = cfg.link()?;
    let heal = cfg.heal_config();
    let k = ((cfg.bench.destroy_fraction * cfg.n as f64).round_ties_even() as usize).max(1);
    check_sizes(cfg, &[k])?;
    let (mut gcn_ms, mut cen_ms) = (Vec::new(), Vec::new());
    for trial in 0..cfg.trials {
        let s = breaking_sample(cfg, &link, k, trial)?;

        let t0 = Instant::now();
        let (init, _) = init_params(store, s.post.len(), &heal)?;
        let out = gcn_train_online(&init, &s.post, &link, heal.hyper.online_episodes, heal.hyper.learning_rate)?;
        black_box(&out.best.target_topology);
        gcn_ms.push(t0.elapsed().as_secs_f64() * 1e3);

        let t0 = Instant::now();
        let c = centroid(black_box(&s.post));
        black_box(s.post.with_positions(vec![c; s.post.len()])?);
        cen_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mut policies = BTreeMap::new();
    policies.insert("cr-mgc", timing(&gcn_ms));
    policies.insert("cen", timing(&cen_ms));
    Ok(BenchReport {
        n: cfg.n,
        destroyed: k,
        online_episodes: heal.hyper.online_episodes,
        policies,
    })
}

pub fn cmd_bench(cfg: &RunConfig, store: Option<&MetaParamStore>, out: &mut OutDir) -> Result<String, CliError> {
    let r = bench(cfg, store)?;
    out.write_json(BENCH, &r)?;
    Ok(r.policies
        .iter()
        .map(|(p, t)| format!("{p:>7}: median {:.4} ms over {} trials", t.median_ms, t.trials))
        .collect::<Vec<_>>()
        .join("\n"))
}
