use std::path::Path;

use serde::Serialize;
use swarmheal::meta::meta_train_all;

use crate::config::RunConfig;
use crate::{CliError, OutDir};

pub const STORE: &str = "store.json";
pub const TRACE: &str = "meta_trace.csv";

#[derive(Serialize)]
struct TraceRow {
    n: usize,
    episode: usize,
    support_loss: f64,
    query_loss: f64,
}

/// Meta-trains every size in `2..=cfg.n`, writing the store and the per-episode losses.
pub fn cmd_meta_train(cfg: &RunConfig, out: &mut OutDir, store_path: Option<&Path>) -> Result<String, CliError> {
    let (store, results) = meta_train_all(cfg.n, &cfg.meta_config())?;
    let rows: Vec<TraceRow> = results
        .iter()
        .flat_map(|r| {
            r.trace.iter().enumerate().map(move |(episode, rep)| TraceRow {
                n: r.n,
                episode,
                support_loss: rep.support_loss,
                query_loss: rep.query_loss,
            })
        })
        .collect();
    out.write_csv(TRACE, &rows)?;
    let text = store.to_json()?;
    match store_path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => out.write_bytes(STORE, text.as_bytes())?,
    }
    let last = results.last().expect("n >= 2 gives at least one size");
    let tail = &last.trace[last.trace.len().saturating_sub(20)..];
    let mean_tail = tail.iter().map(|r| r.query_loss).sum::<f64>() / tail.len().max(1) as f64;
    Ok(format!(
        "meta-trained sizes 2..={} with U0 = {}; mean query loss over the last {} episodes at n = {}: {mean_tail:.3}",
        cfg.n,
        cfg.u0,
        tail.len(),
        last.n
    ))
}
