//! Run configuration: built-in defaults, optional paper-scale defaults, a JSON file
//! merged on top, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use swarmheal::meta::MetaConfig;
use swarmheal::sim::HealConfig;
use swarmheal::{ChannelParams, GcnHyper, LinkPredicate, SceneBounds};

use crate::CliError;

/// Event times and sizes of the reference 200-UAV general scenario.
pub const REFERENCE_SCHEDULE: [(usize, usize); 5] = [(10, 50), (90, 8), (100, 9), (131, 7), (230, 20)];
pub const REFERENCE_SWARM: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    /// Swarm size before any destruction.
    pub n: usize,
    pub bounds: SceneBounds,
    pub channel: ChannelParams<f64>,
    pub hyper: GcnHyper<f64>,
    pub u0: usize,
    pub meta_learning_rate: f64,
    pub v0: f64,
    pub kappa: usize,
    pub sweep_c: SweepCConfig,
    pub sweep_eta: SweepEtaConfig,
    pub sweep_eps: SweepEpsConfig,
    pub heal_oneoff: HealOneoffConfig,
    pub sim_general: SimGeneralConfig,
    pub bench: BenchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCConfig {
    pub c_grid: Vec<f64>,
    /// Fractions of `n` destroyed; used when `destroy_sizes` is absent.
    pub destroy_fractions: Vec<f64>,
    pub destroy_sizes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepEtaConfig {
    pub eta_grid: Vec<f64>,
    pub destroy_fractions: Vec<f64>,
    pub destroy_sizes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepEpsConfig {
    pub eps_grid: Vec<f64>,
    pub destroy_fractions: Vec<f64>,
    pub destroy_sizes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HealOneoffConfig {
    pub destroy_fractions: Vec<f64>,
    pub destroy_sizes: Option<Vec<usize>>,
    /// Trials per size whose per-UAV trajectories are written.
    pub trajectory_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimGeneralConfig {
    pub horizon: usize,
    /// `(step, destroyed count)` pairs; scaled from the reference schedule when absent.
    pub schedule: Option<Vec<(usize, usize)>>,
    /// Scenario file replacing the sampled scenarios.
    pub scenario: Option<PathBuf>,
    pub policies: Vec<swarmheal::sim::PolicyKind>,
    pub trajectory_seeds: usize,
    pub spectral_spot_checks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub destroy_fraction: f64,
}

fn grid(lo: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + step * i as f64).map(|v| (v * 1e9).round() / 1e9).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = GcnHyper::default();
        Self {
            seed: 0,
            trials: 20,
            n: 50,
            bounds: SceneBounds::DESK,
            channel: ChannelParams::default(),
            hyper,
            u0: 200,
            meta_learning_rate: hyper.learning_rate,
            v0: 1.0,
            kappa: 10,
            sweep_c: SweepCConfig::default(),
            sweep_eta: SweepEtaConfig::default(),
            sweep_eps: SweepEpsConfig::default(),
            heal_oneoff: HealOneoffConfig::default(),
            sim_general: SimGeneralConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

const SWEEP_FRACTIONS: [f64; 4] = [0.05, 0.25, 0.5, 0.75];

impl Default for SweepCConfig {
    fn default() -> Self {
        Self {
            c_grid: grid(0.0, 0.1, 11),
            destroy_fractions: SWEEP_FRACTIONS.to_vec(),
            destroy_sizes: None,
        }
    }
}

impl Default for SweepEtaConfig {
    fn default() -> Self {
        Self {
            eta_grid: grid(0.0, 0.1, 11),
            destroy_fractions: SWEEP_FRACTIONS.to_vec(),
            destroy_sizes: None,
        }
    }
}

impl Default for SweepEpsConfig {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0],
            destroy_fractions: SWEEP_FRACTIONS.to_vec(),
            destroy_sizes: None,
        }
    }
}

impl Default for HealOneoffConfig {
    fn default() -> Self {
        Self {
            destroy_fractions: grid(0.1, 0.1, 9),
            destroy_sizes: None,
            trajectory_trials: 1,
        }
    }
}

impl Default for SimGeneralConfig {
    fn default() -> Self {
        Self {
            horizon: 450,
            schedule: None,
            scenario: None,
            policies: swarmheal::sim::PolicyKind::ALL.to_vec(),
            trajectory_seeds: 1,
            spectral_spot_checks: 10,
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { destroy_fraction: 0.25 }
    }
}

/// Destruction sizes from explicit sizes or fractions of `n`, rounded half to even,
/// at least 1, deduplicated in order.
pub fn resolve_sizes(n: usize, sizes: &Option<Vec<usize>>, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<usize> = match sizes {
        Some(s) => s.clone(),
        None => fractions
            .iter()
            .map(|f| ((f * n as f64).round_ties_even() as usize).max(1))
            .collect(),
    };
    let mut out = Vec::new();
    for k in raw {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// The reference schedule scaled to a swarm of `n`.
pub fn scaled_schedule(n: usize) -> Vec<(usize, usize)> {
    REFERENCE_SCHEDULE
        .iter()
        .map(|&(t, k)| {
            let scaled = (k as f64 * n as f64 / REFERENCE_SWARM as f64).round_ties_even() as usize;
            (t, scaled.max(1))
        })
        .collect()
}

impl RunConfig {
    /// Defaults for the full-size experiments.
    pub fn paper_scale() -> Self {
        Self {
            trials: 100,
            n: 200,
            u0: 400,
            bounds: SceneBounds::FULL,
            ..Self::default()
        }
    }

    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig {
            hyper: self.hyper,
            u0: self.u0,
            meta_learning_rate: self.meta_learning_rate,
            bounds: self.bounds,
            channel: self.channel.clone(),
            seed: self.seed,
        }
    }

    pub fn heal_config(&self) -> HealConfig {
        HealConfig {
            hyper: self.hyper,
            v0: self.v0,
            kappa: self.kappa,
            channel: self.channel.clone(),
            init_seed: self.seed,
        }
    }

    pub fn link(&self) -> Result<LinkPredicate<f64>, CliError> {
        LinkPredicate::new(self.channel.clone()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Vec<(usize, usize)> {
        self.sim_general.schedule.clone().unwrap_or_else(|| scaled_schedule(self.n))
    }

    /// Checks everything a subcommand may need before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: swarmheal::Error| CliError::Config(e.to_string());
        self.meta_config().validate().map_err(cfg)?;
        self.heal_config().validate().map_err(cfg)?;
        self.link()?;
        if self.n < 2 {
            return Err(CliError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        let grids = [
            ("sweep_c.c_grid", &self.sweep_c.c_grid),
            ("sweep_eta.eta_grid", &self.sweep_eta.eta_grid),
            ("sweep_eps.eps_grid", &self.sweep_eps.eps_grid),
        ];
        for (name, g) in grids {
            if g.is_empty() || g.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CliError::Config(format!("{name} must be a nonempty list of nonnegative numbers")));
            }
        }
        if self.sweep_eta.eta_grid.iter().any(|&e| e > 1.0) {
            return Err(CliError::Config("sweep_eta.eta_grid values must lie in [0, 1]".into()));
        }
        if self.sweep_eps.eps_grid.iter().any(|&e| e == 0.0) {
            return Err(CliError::Config("sweep_eps.eps_grid values must be positive".into()));
        }
        let fractions = [
            &self.sweep_c.destroy_fractions,
            &self.sweep_eta.destroy_fractions,
            &self.sweep_eps.destroy_fractions,
            &self.heal_oneoff.destroy_fractions,
        ];
        for f in fractions {
            if f.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(CliError::Config("destroy fractions must lie in (0, 1)".into()));
            }
        }
        if !(self.bench.destroy_fraction > 0.0 && self.bench.destroy_fraction < 1.0) {
            return Err(CliError::Config("bench.destroy_fraction must lie in (0, 1)".into()));
        }
        if self.sim_general.horizon == 0 {
            return Err(CliError::Config("sim_general.horizon must be at least 1".into()));
        }
        if self.sim_general.policies.is_empty() {
            return Err(CliError::Config("sim_general.policies is empty".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Flags that override configuration values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub paper_scale: bool,
}

/// Resolves the configuration; relative scenario paths are taken relative to the
/// config file.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let base = if overrides.paper_scale {
        RunConfig::paper_scale()
    } else {
        RunConfig::default()
    };
    let mut value = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
        }
        merge(&mut value, patch);
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    if let (Some(dir), Some(s)) = (file.and_then(Path::parent), cfg.sim_general.scenario.as_mut()) {
        if s.is_relative() {
            *s = dir.join(&*s);
        }
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_schedule_scales_to_fifty() {
        assert_eq!(scaled_schedule(50), vec![(10, 12), (90, 2), (100, 2), (131, 2), (230, 5)]);
        assert_eq!(scaled_schedule(200), REFERENCE_SCHEDULE.to_vec());
    }

    #[test]
    fn sizes_from_fractions() {
        assert_eq!(resolve_sizes(50, &None, &[0.05, 0.25, 0.5, 0.75]), vec![2, 12, 25, 38]);
        assert_eq!(resolve_sizes(50, &Some(vec![10, 10, 20]), &[]), vec![10, 20]);
    }

    #[test]
    fn file_values_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 4, "n": 30, "hyper": {"tau": 5.0}, "sim_general": {"scenario": "s.json"}}"#)
            .unwrap();
        let cfg = resolve(
            Some(&p),
            &Overrides {
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.n, cfg.hyper.tau, cfg.hyper.q), (9, 30, 5.0, 8));
        assert_eq!(cfg.sim_general.scenario, Some(dir.path().join("s.json")));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sede": 4}"#).unwrap();
        assert!(matches!(resolve(Some(&p), &Overrides::default()), Err(CliError::Config(_))));
        std::fs::write(&p, r#"{"u0": 0}"#).unwrap();
        assert!(matches!(resolve(Some(&p), &Overrides::default()), Err(CliError::Config(_))));
    }

    #[test]
    fn paper_scale_defaults() {
        let cfg = resolve(
            None,
            &Overrides {
                paper_scale: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((cfg.n, cfg.u0, cfg.trials), (200, 400, 100));
        assert_eq!(cfg.bounds, SceneBounds::FULL);
    }
}
