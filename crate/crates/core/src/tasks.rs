//! Class-incremental task streams.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::numeric::RngStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskLayout {
    pub initial_classes: usize,
    pub increment: usize,
    pub task_count: usize,
}

impl Default for TaskLayout {
    fn default() -> Self {
        Self {
            initial_classes: 50,
            increment: 5,
            task_count: 11,
        }
    }
}

impl TaskLayout {
    pub fn new(initial_classes: usize, increment: usize, task_count: usize) -> Self {
        Self {
            initial_classes,
            increment,
            task_count,
        }
    }

    /// Classes seen through task `i` (1-based).
    pub fn seen_after(&self, i: usize) -> usize {
        self.initial_classes + self.increment * (i - 1)
    }

    pub fn total_classes(&self) -> usize {
        self.seen_after(self.task_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Random,
    /// Largest classes fixed into the first task, the rest shuffled.
    GiantFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// 1-based task index.
    pub index: usize,
    /// Dataset class ids introduced by this task.
    pub new_classes: Vec<usize>,
    /// Training samples (dataset indices) of the new classes only.
    pub train: Vec<usize>,
    /// Test samples of every class seen through this task.
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub layout: TaskLayout,
    pub strategy: Strategy,
    pub seed: u64,
    pub test_fraction: f64,
    /// Dataset class id at each classifier output position.
    pub class_order: Vec<usize>,
    pub tasks: Vec<Task>,
    local: Vec<Option<usize>>,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn content_key(ds: &Dataset, i: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in ds.row(i) {
        h.update(v.to_le_bytes());
    }
    h.update((ds.labels()[i] as u32).to_le_bytes());
    h.finalize().into()
}

pub fn build_task_stream(
    ds: &Dataset,
    layout: TaskLayout,
    strategy: Strategy,
    seed: u64,
    test_fraction: f64,
) -> Result<TaskStream> {
    if layout.task_count == 0 || layout.initial_classes == 0 {
        return Err(Error::config("task layout needs at least one task and one class"));
    }
    if layout.task_count > 1 && layout.increment == 0 {
        return Err(Error::config("task layout increment must be positive"));
    }
    let needed = layout.total_classes();
    if needed > ds.class_count() {
        return Err(Error::config(format!(
            "layout ({}, {}, {}) needs {needed} classes, dataset has {}",
            layout.initial_classes,
            layout.increment,
            layout.task_count,
            ds.class_count()
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!("test_fraction {test_fraction} outside (0, 1)")));
    }
    let sizes = ds.class_sizes();
    if let Some(c) = (0..ds.class_count()).find(|&c| sizes[c] < 2) {
        return Err(Error::config(format!(
            "class {c} has {} samples; at least 2 are needed for a train/test split",
            sizes[c]
        )));
    }

    let mut rngs = RngStreams::new(seed);
    let mut ids: Vec<usize> = (0..ds.class_count()).collect();
    let order: Vec<usize> = match strategy {
        Strategy::Random => {
            ids.shuffle(rngs.class_order());
            ids.truncate(needed);
            ids
        }
        Strategy::GiantFirst => {
            ids.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
            let mut first: Vec<usize> = ids[..layout.initial_classes].to_vec();
            first.sort_unstable();
            let mut rest = ids[layout.initial_classes..].to_vec();
            rest.sort_unstable();
            rest.shuffle(rngs.class_order());
            first.extend(rest);
            first.truncate(needed);
            first
        }
    };

    // Per-class split, keyed on sample content so it ignores dataset order.
    let by_class = ds.indices_by_class();
    let mut train_of = vec![Vec::new(); ds.class_count()];
    let mut test_of = vec![Vec::new(); ds.class_count()];
    let mut sorted_classes = order.clone();
    sorted_classes.sort_unstable();
    for &c in &sorted_classes {
        let mut idx = by_class[c].clone();
        let keys: Vec<[u8; 32]> = idx.iter().map(|&i| content_key(ds, i)).collect();
        let mut keyed: Vec<([u8; 32], usize)> = keys.into_iter().zip(idx.drain(..)).collect();
        keyed.sort();
        let mut idx: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
        idx.shuffle(rngs.data_shuffle());
        let n = idx.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        test_of[c] = idx[..n_test].to_vec();
        train_of[c] = idx[n_test..].to_vec();
        test_of[c].sort_unstable();
        train_of[c].sort_unstable();
    }

    let mut tasks = Vec::with_capacity(layout.task_count);
    for i in 1..=layout.task_count {
        let lo = if i == 1 { 0 } else { layout.seen_after(i - 1) };
        let hi = layout.seen_after(i);
        let new_classes = order[lo..hi].to_vec();
        let train = new_classes.iter().flat_map(|&c| train_of[c].iter().copied()).collect();
        let test = order[..hi].iter().flat_map(|&c| test_of[c].iter().copied()).collect();
        tasks.push(Task {
            index: i,
            new_classes,
            train,
            test,
        });
    }
    let mut local = vec![None; ds.class_count()];
    for (pos, &c) in order.iter().enumerate() {
        local[c] = Some(pos);
    }
    Ok(TaskStream {
        layout,
        strategy,
        seed,
        test_fraction,
        class_order: order,
        tasks,
        local,
    })
}

impl TaskStream {
    pub fn task(&self, i: usize) -> &Task {
        &self.tasks[i - 1]
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn seen_count(&self, i: usize) -> usize {
        self.layout.seen_after(i)
    }

    /// Classifier output position for a dataset class id.
    pub fn local_label(&self, class: usize) -> Option<usize> {
        self.local.get(class).copied().flatten()
    }

    /// Training samples of tasks `1..=i`.
    pub fn joint_view(&self, i: usize) -> Result<Vec<usize>> {
        if i == 0 || i > self.tasks.len() {
            return Err(Error::config(format!(
                "joint_view index {i} outside 1..={}",
                self.tasks.len()
            )));
        }
        Ok(self.tasks[..i].iter().flat_map(|t| t.train.iter().copied()).collect())
    }

    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            strategy: self.strategy,
            seed: self.seed,
            test_fraction: self.test_fraction,
            layout: self.layout,
            class_order: self.class_order.clone(),
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskManifestEntry {
                    index: t.index,
                    new_classes: t.new_classes.clone(),
                    seen_classes: self.seen_count(t.index),
                    train_count: t.train.len(),
                    test_count: t.test.len(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifestEntry {
    pub index: usize,
    pub new_classes: Vec<usize>,
    pub seen_classes: usize,
    pub train_count: usize,
    pub test_count: usize,
}

/// Audit record of a task stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub strategy: Strategy,
    pub seed: u64,
    pub test_fraction: f64,
    pub layout: TaskLayout,
    pub class_order: Vec<usize>,
    pub tasks: Vec<TaskManifestEntry>,
}

impl StreamManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
