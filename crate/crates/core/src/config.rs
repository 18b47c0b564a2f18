//! Experiment configuration files and command-line overrides.
//!
//! A config file is TOML. Hyperparameter sections (`arch`, `classifier`,
//! `gan`, `selection`) are layered over the chosen `preset`, so a file only
//! needs to name the values it changes. Unknown keys are rejected with their
//! full dotted path.
//!
//! ```toml
//! preset = "desk"
//! scenario = "malcl"
//! seeds = [10, 20, 30, 40, 50]
//!
//! [dataset.synthetic]
//! class_count = 10
//! feature_dim = 64
//! samples_per_class = 200
//! cluster_separation = 8.0
//!
//! [tasks]
//! initial_classes = 4
//! increment = 2
//! task_count = 4
//!
//! [gan]
//! generator_loss = "fml"
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::datasets::{make_synthetic, Dataset, Format, SyntheticSpec};
use crate::error::{Error, Result};
use crate::models::ArchPreset;
use crate::gan::GeneratorLoss;
use crate::pipeline::{RunConfig, Scenario};
use crate::replay::Scheme;
use crate::tasks::{build_task_stream, Strategy, TaskLayout, TaskStream, DEFAULT_TEST_FRACTION};

const TOP_LEVEL: &[&str] = &[
    "preset", "scenario", "seed", "seeds", "scenarios", "out_dir", "dataset", "tasks", "outputs", "arch",
    "classifier", "gan", "selection",
];
const HYPER_SECTIONS: &[&str] = &["arch", "classifier", "gan", "selection"];
/// Keys that are valid but absent from a serialized default.
const OPTIONAL_KEYS: &[&str] = &["selection.distance", "dataset.format"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSettings {
    pub initial_classes: usize,
    pub increment: usize,
    pub task_count: usize,
    pub strategy: Strategy,
    pub test_fraction: f64,
}

impl TaskSettings {
    pub fn layout(&self) -> TaskLayout {
        TaskLayout::new(self.initial_classes, self.increment, self.task_count)
    }
}

impl Default for TaskSettings {
    fn default() -> Self {
        let l = TaskLayout::default();
        Self {
            initial_classes: l.initial_classes,
            increment: l.increment,
            task_count: l.task_count,
            strategy: Strategy::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

/// A scenario with optional selection scheme and generator loss, written like
/// a run label: `malcl`, `malcl/l2_labels`, `malcl/l1_cmean/bce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub scenario: Scenario,
    pub scheme: Option<Scheme>,
    pub loss: Option<GeneratorLoss>,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.trim().split('/');
        let scenario = Scenario::parse(parts.next().unwrap_or_default())?;
        let rest: Vec<&str> = parts.collect();
        let bad = || Error::config(format!("cannot parse scenario {s:?}"));
        let word = |w: &str| serde_json::Value::String(w.to_string());
        let (scheme, loss) = match (scenario, rest.as_slice()) {
            (_, []) => (None, None),
            (Scenario::Malcl, [scheme, tail @ ..]) if tail.len() <= 1 => {
                let scheme: Scheme = serde_json::from_value(word(scheme)).map_err(|_| bad())?;
                let loss = match tail {
                    [l] => Some(serde_json::from_value(word(l)).map_err(|_| bad())?),
                    _ => None,
                };
                (Some(scheme), loss)
            }
            // Unselected replay has a fixed method and loss.
            (Scenario::NaiveGr, ["random"]) | (Scenario::NaiveGr, ["random", "bce"]) => (None, None),
            _ => return Err(bad()),
        };
        Ok(Self { scenario, scheme, loss })
    }

    /// `run` with this variant's scenario, scheme and loss.
    pub fn apply(&self, run: &RunConfig) -> RunConfig {
        let mut r = run.clone();
        r.scenario = self.scenario;
        if let Some(s) = self.scheme {
            r.selection.scheme = s;
        }
        if let Some(l) = self.loss {
            r.gan.generator_loss = l;
        }
        r
    }
}

impl From<Scenario> for Variant {
    fn from(scenario: Scenario) -> Self {
        Self { scenario, scheme: None, loss: None }
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Variant::parse(&s)
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        let mut s = v.scenario.label().to_string();
        if let Some(sc) = v.scheme {
            s = format!("{s}/{}", sc.label());
        }
        if let Some(l) = v.loss {
            if v.scheme.is_none() {
                s = format!("{s}/{}", Scheme::default().label());
            }
            s = format!("{s}/{}", l.label());
        }
        s
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&String::from(*self))
    }
}

/// Which optional per-task artifacts a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub checkpoints: bool,
    pub replay_sets: bool,
    pub loss_history: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            checkpoints: false,
            replay_sets: true,
            loss_history: true,
        }
    }
}

/// Where a run's data comes from, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    File { path: PathBuf, format: Format },
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::File { path, format } => Dataset::load(path, *format),
            DatasetSource::Synthetic(spec) => make_synthetic(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    File { path: PathBuf, format: Format },
    /// With `seed: None` the data is redrawn from each run's seed.
    Synthetic { spec: SyntheticSpec, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: ArchPreset,
    pub out_dir: PathBuf,
    pub scenarios: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub tasks: TaskSettings,
    pub outputs: OutputSettings,
    /// Hyperparameters shared by every scenario and seed; `scenario` and
    /// `seed` hold the single-run values.
    pub run: RunConfig,
}

/// Everything that determines a single run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub run: RunConfig,
    pub dataset: DatasetSource,
    pub tasks: TaskSettings,
}

impl ResolvedRun {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_stream(&self, ds: &Dataset) -> Result<TaskStream> {
        build_task_stream(ds, self.tasks.layout(), self.tasks.strategy, self.run.seed, self.tasks.test_fraction)
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = Self::parse(&text, overrides)?;
        if let DatasetConfig::File { path, .. } = &mut cfg.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    /// Parses TOML text, then applies `key.path=value` overrides on top.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(format!("config is not valid TOML: {}", e.message())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(mut t: Table) -> Result<Self> {
        let mut unknown: Vec<String> = Vec::new();
        for (k, v) in &t {
            if !TOP_LEVEL.contains(&k.as_str()) {
                leaf_paths(k, v, &mut unknown);
            }
        }
        if !unknown.is_empty() {
            return Err(unknown_keys(&unknown));
        }

        let preset: ArchPreset = take(&mut t, "preset")?.unwrap_or(ArchPreset::Full);
        let variant: Variant = take(&mut t, "scenario")?.unwrap_or(Variant::from(Scenario::Malcl));
        let scenario = variant.scenario;
        let seed: u64 = take(&mut t, "seed")?.unwrap_or(10);
        let seeds: Vec<u64> = take(&mut t, "seeds")?.unwrap_or_else(|| vec![seed]);
        let scenarios: Vec<Variant> = take(&mut t, "scenarios")?.unwrap_or_else(|| vec![variant]);
        let out_dir: PathBuf = take(&mut t, "out_dir")?.unwrap_or_else(|| PathBuf::from("runs"));
        if seeds.is_empty() || scenarios.is_empty() {
            return Err(Error::config("`seeds` and `scenarios` must not be empty"));
        }

        // Hyperparameters: preset values overlaid with the file's sections.
        let mut run_table = match Value::try_from(RunConfig::preset(preset, scenario, seed)) {
            Ok(Value::Table(t)) => t,
            _ => return Err(Error::Serde("preset does not serialize to a table".into())),
        };
        for section in HYPER_SECTIONS {
            if let Some(user) = t.remove(*section) {
                let Some(known) = run_table.get_mut(*section) else {
                    return Err(Error::config(format!("unknown section `{section}`")));
                };
                check_keys(section, &user, known, &mut unknown);
                merge(known, user);
            }
        }
        let tasks_user = t.remove("tasks");
        if let Some(user) = &tasks_user {
            check_keys("tasks", user, &Value::try_from(TaskSettings::default()).expect("table"), &mut unknown);
        }
        let outputs_user = t.remove("outputs");
        if let Some(user) = &outputs_user {
            check_keys("outputs", user, &Value::try_from(OutputSettings::default()).expect("table"), &mut unknown);
        }
        let dataset_user = t.remove("dataset");
        if let Some(user) = &dataset_user {
            let known: Table = toml::toml! {
                path = ""
                format = "binary"
                [synthetic]
                class_count = 1
                feature_dim = 1
                samples_per_class = 1
                cluster_std = 1.0
                cluster_separation = 1.0
                seed = 0
            };
            check_keys("dataset", user, &Value::Table(known), &mut unknown);
        }
        if !unknown.is_empty() {
            return Err(unknown_keys(&unknown));
        }

        let run = variant.apply(&RunConfig {
            scenario,
            seed,
            arch: section(&mut run_table, "arch")?,
            classifier: section(&mut run_table, "classifier")?,
            gan: section(&mut run_table, "gan")?,
            selection: section(&mut run_table, "selection")?,
        });
        let tasks = match tasks_user {
            Some(v) => decode("tasks", v)?,
            None => TaskSettings::default(),
        };
        let outputs = match outputs_user {
            Some(v) => decode("outputs", v)?,
            None => OutputSettings::default(),
        };
        let dataset = dataset_config(dataset_user)?;

        let cfg = Self {
            preset,
            out_dir,
            scenarios,
            seeds,
            dataset,
            tasks,
            outputs,
            run,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.scenarios {
            v.apply(&self.run).validate()?;
        }
        if let DatasetConfig::Synthetic { spec, .. } = &self.dataset {
            spec.validate()?;
        }
        if !(self.tasks.test_fraction > 0.0 && self.tasks.test_fraction < 1.0) {
            return Err(Error::config("tasks.test_fraction must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    pub fn resolve(&self, variant: Variant, seed: u64) -> ResolvedRun {
        let dataset = match &self.dataset {
            DatasetConfig::File { path, format } => DatasetSource::File {
                path: path.clone(),
                format: *format,
            },
            DatasetConfig::Synthetic { spec, seed: fixed } => DatasetSource::Synthetic(SyntheticSpec {
                seed: fixed.unwrap_or(seed),
                ..spec.clone()
            }),
        };
        ResolvedRun {
            run: RunConfig {
                seed,
                ..variant.apply(&self.run)
            },
            dataset,
            tasks: self.tasks.clone(),
        }
    }

    /// The single run selected by `scenario` and `seed`.
    pub fn resolve_single(&self) -> ResolvedRun {
        self.resolve(self.run.scenario.into(), self.run.seed)
    }
}

fn dataset_config(v: Option<Value>) -> Result<DatasetConfig> {
    let Some(Value::Table(mut t)) = v else {
        return Err(Error::config("missing [dataset] section (give `path` or a [dataset.synthetic] table)"));
    };
    let path: Option<PathBuf> = take(&mut t, "dataset.path")?;
    let format: Option<Format> = take(&mut t, "dataset.format")?;
    let synthetic = t.remove("synthetic");
    match (path, synthetic) {
        (Some(path), None) => {
            let format = format.unwrap_or_else(|| Format::from_path(&path));
            Ok(DatasetConfig::File { path, format })
        }
        (None, Some(Value::Table(mut s))) => {
            let seed: Option<u64> = take(&mut s, "dataset.synthetic.seed")?;
            if format.is_some() {
                return Err(Error::config("`dataset.format` only applies to `dataset.path`"));
            }
            let spec: SyntheticSpec = decode("dataset.synthetic", Value::Table(s))?;
            Ok(DatasetConfig::Synthetic { spec, seed })
        }
        (Some(_), Some(_)) => Err(Error::config("give either `dataset.path` or [dataset.synthetic], not both")),
        (None, _) => Err(Error::config("[dataset] needs `path` or a [dataset.synthetic] table")),
    }
}

fn take<T: DeserializeOwned>(t: &mut Table, key: &str) -> Result<Option<T>> {
    let local = key.rsplit('.').next().unwrap_or(key);
    t.remove(local).map(|v| decode(key, v)).transpose()
}

fn section<T: DeserializeOwned>(t: &mut Table, key: &str) -> Result<T> {
    let v = t.remove(key).ok_or_else(|| Error::config(format!("missing `{key}`")))?;
    decode(key, v)
}

fn decode<T: DeserializeOwned>(key: &str, v: Value) -> Result<T> {
    v.try_into().map_err(|e: toml::de::Error| Error::config(format!("`{key}`: {}", e.message())))
}

fn unknown_keys(keys: &[String]) -> Error {
    let list: Vec<String> = keys.iter().map(|k| format!("`{k}`")).collect();
    Error::config(format!("unknown key {}", list.join(", ")))
}

fn leaf_paths(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Table(t) if !t.is_empty() => {
            for (k, v) in t {
                leaf_paths(&format!("{prefix}.{k}"), v, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Collects every key in `user` that has no counterpart in `known`.
fn check_keys(prefix: &str, user: &Value, known: &Value, out: &mut Vec<String>) {
    let (Value::Table(u), Value::Table(k)) = (user, known) else {
        return;
    };
    for (key, v) in u {
        let path = format!("{prefix}.{key}");
        match k.get(key) {
            Some(kv) => check_keys(&path, v, kv, out),
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => leaf_paths(&path, v, out),
        }
    }
}

fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(t: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = t;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(format!("override {key:?}: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
