//! Running resolved configs into output directories.
//!
//! A run directory holds `config.json` (the resolved config), `tasks.json`
//! (the task stream), the four report files, optional per-task artifacts and
//! `manifest.json`. The manifest is written last, so its presence with a
//! matching config hash marks a finished run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{OutputSettings, ResolvedRun};
use crate::error::{Error, Result};
use crate::metrics::{ExperimentReport, RunRecord};
use crate::pipeline::{run_scenario, RunConfig, RunOptions};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_digest: String,
    pub version: String,
}

/// Directory name of a run inside a sweep, e.g. `malcl_l1_cmean_fml/seed_10`.
pub fn run_dir_name(run: &RunConfig) -> PathBuf {
    PathBuf::from(run.label().replace('/', "_")).join(format!("seed_{}", run.seed))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one resolved config and writes everything under `dir`.
pub fn execute(resolved: &ResolvedRun, outputs: OutputSettings, dir: &Path) -> Result<RunRecord> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ds = resolved.dataset.load()?;
    let stream = resolved.build_stream(&ds)?;
    write_json(&dir.join("config.json"), resolved)?;
    stream.manifest().write(&dir.join("tasks.json"))?;

    let opts = RunOptions {
        checkpoint_dir: outputs.checkpoints.then(|| dir.join("checkpoints")),
        replay_dir: (outputs.replay_sets && resolved.run.scenario.uses_replay()).then(|| dir.join("replay")),
        loss_dir: (outputs.loss_history && resolved.run.scenario.uses_replay()).then(|| dir.join("losses")),
    };
    let out = run_scenario(&ds, &stream, &resolved.run, &opts)?;
    let report = ExperimentReport::build(serde_json::to_value(resolved)?, vec![out.record.clone()])?;
    report.emit(dir)?;
    write_json(
        &dir.join(MANIFEST_FILE),
        &RunManifest {
            label: resolved.run.label(),
            seed: resolved.run.seed,
            config_hash: resolved.hash(),
            dataset_digest: ds.digest(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;
    Ok(out.record)
}

/// The record of a finished run in `dir` whose config hash equals `hash`.
pub fn completed(dir: &Path, hash: &str) -> Option<RunRecord> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let manifest: RunManifest = serde_json::from_str(&text).ok()?;
    if manifest.config_hash != hash {
        return None;
    }
    let report = ExperimentReport::load(&dir.join("report.json")).ok()?;
    report.runs.into_iter().next()
}
