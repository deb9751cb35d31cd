//! Off-line meta learning of per-cardinality GCN initializations and their store.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, LinkPredicate};
use crate::error::{Error, Result};
use crate::gcn::{Block3, GcnHyper, GcnParams, GcnProblem};
use crate::graph::{cluster_count_with, TopologyMatrix};
use crate::scene::SceneBounds;
use crate::seed::{derive_seed, rng_for};

pub const STORE_FORMAT_VERSION: u32 = 1;
const MAX_GENERATION_REJECTIONS: usize = 1000;

const STREAM_TASKS: u64 = 1;
const STREAM_INIT: u64 = 2;

/// Support and query topologies for one cardinality.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask {
    pub n: usize,
    pub support: Vec<TopologyMatrix<f64>>,
    pub query: Vec<TopologyMatrix<f64>>,
}

/// Uniform topology in the scene that is *not* connected under `link`.
pub fn gen_disconnected_topology<R: Rng + ?Sized>(
    n: usize,
    bounds: &SceneBounds,
    link: &LinkPredicate<f64>,
    rng: &mut R,
) -> Result<TopologyMatrix<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("disconnected topologies need n >= 2, got {n}")));
    }
    bounds.validate()?;
    for _ in 0..MAX_GENERATION_REJECTIONS {
        let t = bounds.sample_uniform(n, rng)?;
        if cluster_count_with(&t, |d| link.linked(d)) > 1 {
            return Ok(t);
        }
    }
    Err(Error::GenerationInfeasible {
        attempts: MAX_GENERATION_REJECTIONS,
    })
}

pub fn gen_task<R: Rng + ?Sized>(
    n: usize,
    u0: usize,
    bounds: &SceneBounds,
    link: &LinkPredicate<f64>,
    rng: &mut R,
) -> Result<MetaTask> {
    let mut support = Vec::with_capacity(u0);
    let mut query = Vec::with_capacity(u0);
    for _ in 0..u0 {
        support.push(gen_disconnected_topology(n, bounds, link, rng)?);
        query.push(gen_disconnected_topology(n, bounds, link, rng)?);
    }
    Ok(MetaTask { n, support, query })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaEpisodeReport {
    /// Loss of the incoming parameters on the support topology.
    pub support_loss: f64,
    /// Loss of the adapted parameters on the query topology.
    pub query_loss: f64,
}

fn finite(grads: &[Block3<f64>]) -> bool {
    grads.iter().flatten().flatten().all(|v| v.is_finite())
}

/// One first-order meta step:
/// `P = G - a grad L(G, Y)`, then `G' = G - a grad L(P, Z)`.
pub fn meta_episode(
    prev: &GcnParams<f64>,
    support: &TopologyMatrix<f64>,
    query: &TopologyMatrix<f64>,
    alpha: f64,
    link: &LinkPredicate<f64>,
) -> Result<(GcnParams<f64>, MetaEpisodeReport)> {
    if support.len() != query.len() {
        return Err(Error::Contract(format!(
            "support has {} rows, query has {}",
            support.len(),
            query.len()
        )));
    }
    prev.validate()?;
    let y = GcnProblem::new(support.clone(), &prev.hyper, link)?;
    let eval_y = y.evaluate(prev).map_err(|_| Error::EpisodeDiverged)?;
    let g_y = y.scaled_gradient(prev, &eval_y)?;
    if !finite(&g_y) || !eval_y.terms.loss.is_finite() {
        return Err(Error::EpisodeDiverged);
    }
    let temp = prev.descend(&g_y, alpha);

    let z = GcnProblem::new(query.clone(), &prev.hyper, link)?;
    let eval_z = z.evaluate(&temp).map_err(|_| Error::EpisodeDiverged)?;
    let g_z = z.scaled_gradient(&temp, &eval_z)?;
    if !finite(&g_z) || !eval_z.terms.loss.is_finite() {
        return Err(Error::EpisodeDiverged);
    }
    let next = prev.descend(&g_z, alpha);
    if next.layers.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::EpisodeDiverged);
    }
    Ok((
        next,
        MetaEpisodeReport {
            support_loss: eval_y.terms.loss,
            query_loss: eval_z.terms.loss,
        },
    ))
}

/// Settings shared by every cardinality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub hyper: GcnHyper<f64>,
    /// Meta episodes per cardinality; also the support and query set sizes.
    pub u0: usize,
    pub meta_learning_rate: f64,
    pub bounds: SceneBounds,
    pub channel: ChannelParams<f64>,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        let hyper = GcnHyper::default();
        Self {
            u0: 200,
            meta_learning_rate: hyper.learning_rate,
            hyper,
            bounds: SceneBounds::DESK,
            channel: ChannelParams::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.bounds.validate()?;
        if self.u0 == 0 {
            return Err(Error::Domain("U0 must be at least 1".into()));
        }
        if !(self.meta_learning_rate >= 0.0 && self.meta_learning_rate.is_finite()) {
            return Err(Error::Domain("meta learning rate must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn link(&self) -> Result<LinkPredicate<f64>> {
        LinkPredicate::new(self.channel.clone())
    }
}

/// Meta parameters for one cardinality and the per-episode losses.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTrainResult {
    pub n: usize,
    pub params: GcnParams<f64>,
    pub trace: Vec<MetaEpisodeReport>,
}

/// Deterministic random initialization for cardinality `n`.
pub fn random_init_for(n: usize, hyper: GcnHyper<f64>, seed: u64) -> GcnParams<f64> {
    let mut rng = rng_for(derive_seed(seed, n as u64), STREAM_INIT);
    GcnParams::random_init(hyper, &mut rng)
}

/// `U0` meta episodes on fresh support/query pairs, starting from [`random_init_for`].
pub fn meta_train(n: usize, cfg: &MetaConfig) -> Result<MetaTrainResult> {
    cfg.validate()?;
    let link = cfg.link()?;
    let mut rng = rng_for(derive_seed(cfg.seed, n as u64), STREAM_TASKS);
    let mut params = random_init_for(n, cfg.hyper, cfg.seed);
    let mut trace = Vec::with_capacity(cfg.u0);
    for _ in 0..cfg.u0 {
        let y = gen_disconnected_topology(n, &cfg.bounds, &link, &mut rng)?;
        let z = gen_disconnected_topology(n, &cfg.bounds, &link, &mut rng)?;
        let (next, report) = meta_episode(&params, &y, &z, cfg.meta_learning_rate, &link)?;
        params = next;
        trace.push(report);
    }
    Ok(MetaTrainResult { n, params, trace })
}

/// Conventional pre-training on pooled support data: one plain gradient step per topology.
pub fn pretrain_pooled(n: usize, cfg: &MetaConfig) -> Result<GcnParams<f64>> {
    cfg.validate()?;
    let link = cfg.link()?;
    let mut rng = rng_for(derive_seed(cfg.seed, n as u64), STREAM_TASKS);
    let mut params = random_init_for(n, cfg.hyper, cfg.seed);
    for _ in 0..cfg.u0 {
        let y = gen_disconnected_topology(n, &cfg.bounds, &link, &mut rng)?;
        let problem = GcnProblem::new(y, &params.hyper, &link)?;
        let eval = problem.evaluate(&params)?;
        let g = problem.scaled_gradient(&params, &eval)?;
        if !finite(&g) {
            return Err(Error::EpisodeDiverged);
        }
        params = params.descend(&g, cfg.meta_learning_rate);
    }
    Ok(params)
}

/// Trains every cardinality in `2..=n_max` in parallel.
pub fn meta_train_all(n_max: usize, cfg: &MetaConfig) -> Result<(MetaParamStore, Vec<MetaTrainResult>)> {
    if n_max < 2 {
        return Err(Error::Domain(format!("N must be at least 2, got {n_max}")));
    }
    cfg.validate()?;
    let results: Vec<MetaTrainResult> = (2..=n_max)
        .into_par_iter()
        .map(|n| meta_train(n, cfg))
        .collect::<Result<_>>()?;
    let mut store = MetaParamStore::new(StoreMetadata::from_config(n_max, cfg));
    for r in &results {
        store.insert(r.n, r.params.clone())?;
    }
    Ok((store, results))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub n_max: usize,
    pub u0: usize,
    pub hyper: GcnHyper<f64>,
    pub meta_learning_rate: f64,
    pub bounds: SceneBounds,
    pub channel: ChannelParams<f64>,
    pub seed: u64,
}

impl StoreMetadata {
    pub fn from_config(n_max: usize, cfg: &MetaConfig) -> Self {
        Self {
            n_max,
            u0: cfg.u0,
            hyper: cfg.hyper,
            meta_learning_rate: cfg.meta_learning_rate,
            bounds: cfg.bounds,
            channel: cfg.channel.clone(),
            seed: cfg.seed,
        }
    }
}

/// Meta parameters keyed by swarm cardinality.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaParamStore {
    metadata: StoreMetadata,
    params: BTreeMap<usize, GcnParams<f64>>,
}

type Block3Text = [[String; 3]; 3];

#[derive(Serialize, Deserialize)]
struct StoreFile {
    format_version: u32,
    metadata: StoreMetadata,
    params: BTreeMap<usize, Vec<Block3Text>>,
}

fn encode(b: &Block3<f64>) -> Block3Text {
    // `{:?}` prints the shortest decimal that parses back to the same bits.
    b.map(|r| r.map(|v| format!("{v:?}")))
}

fn decode(b: &Block3Text) -> Result<Block3<f64>> {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = b[r][c]
                .parse::<f64>()
                .map_err(|e| Error::StoreFormat(format!("weight {:?}: {e}", b[r][c])))?;
        }
    }
    Ok(out)
}

impl MetaParamStore {
    pub fn new(metadata: StoreMetadata) -> Self {
        Self {
            metadata,
            params: BTreeMap::new(),
        }
    }

    pub fn metadata(&self) -> &StoreMetadata {
        &self.metadata
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.params.keys().copied()
    }

    pub fn insert(&mut self, n: usize, params: GcnParams<f64>) -> Result<()> {
        if n < 2 || n > self.metadata.n_max {
            return Err(Error::Contract(format!("key {n} outside 2..={}", self.metadata.n_max)));
        }
        if params.layers.len() != self.metadata.hyper.q {
            return Err(Error::Contract(format!(
                "expected {} layer blocks, found {}",
                self.metadata.hyper.q,
                params.layers.len()
            )));
        }
        self.params.insert(n, params);
        Ok(())
    }

    pub fn get(&self, n: usize) -> Result<&GcnParams<f64>> {
        self.params.get(&n).ok_or(Error::StoreMiss(n))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StoreFile {
            format_version: STORE_FORMAT_VERSION,
            metadata: self.metadata.clone(),
            params: self
                .params
                .iter()
                .map(|(&n, p)| (n, p.layers.iter().map(encode).collect()))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StoreFile = serde_json::from_str(text)?;
        if file.format_version != STORE_FORMAT_VERSION {
            return Err(Error::StoreFormat(format!(
                "format version {} (expected {STORE_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let q = file.metadata.hyper.q;
        let mut store = Self::new(file.metadata);
        for (n, blocks) in &file.params {
            if blocks.len() != q {
                return Err(Error::StoreFormat(format!("n = {n}: {} blocks, Q = {q}", blocks.len())));
            }
            let layers = blocks.iter().map(decode).collect::<Result<Vec<_>>>()?;
            store
                .insert(
                    *n,
                    GcnParams {
                        layers,
                        hyper: store.metadata.hyper,
                    },
                )
                .map_err(|e| Error::StoreFormat(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(u0: usize) -> MetaConfig {
        MetaConfig {
            u0,
            hyper: GcnHyper {
                q: 3,
                ..GcnHyper::default()
            },
            ..MetaConfig::default()
        }
    }

    #[test]
    fn two_node_generation_is_far_apart() {
        let link = LinkPredicate::radius(120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = gen_disconnected_topology(2, &SceneBounds::FULL, &link, &mut rng).unwrap();
            assert!(t.distance(0, 1) > 120.0);
        }
    }

    #[test]
    fn generation_rejects_small_n_and_tiny_scene() {
        let link = LinkPredicate::radius(120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gen_disconnected_topology(1, &SceneBounds::FULL, &link, &mut rng).is_err());
        let tiny = SceneBounds {
            x_m: 10.0,
            y_m: 10.0,
            z_m: 10.0,
        };
        assert!(matches!(
            gen_disconnected_topology(5, &tiny, &link, &mut rng),
            Err(Error::GenerationInfeasible { attempts: 1000 })
        ));
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let link = LinkPredicate::radius(120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = gen_disconnected_topology(5, &SceneBounds::DESK, &link, &mut rng).unwrap();
        let z = gen_disconnected_topology(5, &SceneBounds::DESK, &link, &mut rng).unwrap();
        let p = random_init_for(5, small_cfg(1).hyper, 0);
        let (next, _) = meta_episode(&p, &y, &z, 0.0, &link).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn mismatched_cardinality_rejected() {
        let link = LinkPredicate::radius(120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = gen_disconnected_topology(5, &SceneBounds::DESK, &link, &mut rng).unwrap();
        let z = gen_disconnected_topology(4, &SceneBounds::DESK, &link, &mut rng).unwrap();
        let p = random_init_for(5, small_cfg(1).hyper, 0);
        assert!(matches!(meta_episode(&p, &y, &z, 0.01, &link), Err(Error::Contract(_))));
    }

    #[test]
    fn store_keys_and_miss() {
        let (store, results) = meta_train_all(3, &small_cfg(2)).unwrap();
        assert_eq!(store.keys().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(results.len(), 2);
        assert!(matches!(store.get(5), Err(Error::StoreMiss(5))));
    }

    #[test]
    fn store_round_trip_is_byte_identical() {
        let (store, _) = meta_train_all(4, &small_cfg(3)).unwrap();
        let a = store.to_json().unwrap();
        let back = MetaParamStore::from_json(&a).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn store_rejects_version_and_q_mismatch() {
        let (store, _) = meta_train_all(2, &small_cfg(1)).unwrap();
        let text = store.to_json().unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(MetaParamStore::from_json(&bumped), Err(Error::StoreFormat(_))));
        let wrong_q = text.replace("\"q\": 3", "\"q\": 4");
        assert!(matches!(MetaParamStore::from_json(&wrong_q), Err(Error::StoreFormat(_))));
    }

    #[test]
    fn meta_train_is_deterministic() {
        let cfg = small_cfg(5);
        assert_eq!(meta_train(6, &cfg).unwrap(), meta_train(6, &cfg).unwrap());
        let single = meta_train(6, &small_cfg(1)).unwrap();
        assert_eq!(single.trace.len(), 1);
    }
}
