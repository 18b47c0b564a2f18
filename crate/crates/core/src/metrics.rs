//! Accuracy metrics, cross-seed aggregation and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy over each class's samples; classes without samples report NaN.
pub fn per_class_accuracy(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    check_pair(predictions, labels)?;
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= classes {
            return Err(Error::config(format!("label {l} outside 0..{classes}")));
        }
        totals[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| if t == 0 { f64::NAN } else { h as f64 / t as f64 })
        .collect())
}

fn check_pair(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::config("accuracy of an empty set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::config(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: usize,
    pub seen_classes: usize,
    /// Accuracy over the test samples of every class seen so far.
    pub accuracy: f64,
    /// Indexed by class position in the stream's class order.
    pub per_class_accuracy: Vec<f64>,
    /// Classes covered by the replay set this task trained with (none at task 1).
    pub replay_coverage: Option<usize>,
    pub replay_samples: usize,
    pub train_samples: usize,
}

/// One scenario run under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub approach: String,
    pub method: String,
    pub loss: String,
    pub seed: u64,
    pub tasks: Vec<TaskMetrics>,
}

impl RunRecord {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.approach, self.method, self.loss)
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.tasks.iter().map(|t| t.accuracy).sum::<f64>() / self.tasks.len() as f64
    }

    pub fn min_accuracy(&self) -> f64 {
        self.tasks.iter().map(|t| t.accuracy).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub task: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregate over the seeds of one approach/method/loss combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub approach: String,
    pub method: String,
    pub loss: String,
    pub seeds: Vec<u64>,
    /// Mean over all (seed, task) accuracies.
    pub mean: f64,
    /// Smallest per-task accuracy of any seed.
    pub min: f64,
    pub per_seed_mean: Vec<f64>,
    pub per_seed_min: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

pub fn aggregate(runs: &[RunRecord]) -> Result<Aggregate> {
    let first = runs.first().ok_or_else(|| Error::config("no runs to aggregate"))?;
    let tasks = first.tasks.len();
    for r in runs {
        if r.key() != first.key() {
            return Err(Error::config(format!("cannot aggregate {} with {}", r.key(), first.key())));
        }
        let same_layout = r.tasks.len() == tasks
            && r.tasks.iter().zip(&first.tasks).all(|(a, b)| a.seen_classes == b.seen_classes);
        if !same_layout {
            return Err(Error::config(format!("seed {} has a different task layout", r.seed)));
        }
    }
    // Order by seed so the result does not depend on input order.
    let mut runs: Vec<&RunRecord> = runs.iter().collect();
    runs.sort_by_key(|r| r.seed);
    let mut curve = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let accs: Vec<f64> = runs.iter().map(|r| r.tasks[t].accuracy).collect();
        curve.push(CurvePoint {
            task: first.tasks[t].task,
            mean: accs.iter().sum::<f64>() / accs.len() as f64,
            min: accs.iter().copied().fold(f64::INFINITY, f64::min),
            max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let per_seed_mean: Vec<f64> = runs.iter().map(|r| r.mean_accuracy()).collect();
    let per_seed_min: Vec<f64> = runs.iter().map(|r| r.min_accuracy()).collect();
    Ok(Aggregate {
        approach: first.approach.clone(),
        method: first.method.clone(),
        loss: first.loss.clone(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        mean: per_seed_mean.iter().sum::<f64>() / per_seed_mean.len() as f64,
        min: per_seed_min.iter().copied().fold(f64::INFINITY, f64::min),
        per_seed_mean,
        per_seed_min,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub groups: Vec<Aggregate>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    /// Groups runs by approach/method/loss (sorted by key) and aggregates each.
    pub fn build(config: serde_json::Value, runs: Vec<RunRecord>) -> Result<Self> {
        let mut by_key: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
        for r in &runs {
            by_key.entry(r.key()).or_default().push(r.clone());
        }
        let groups = by_key.values().map(|g| aggregate(g)).collect::<Result<_>>()?;
        let mut runs = runs;
        runs.sort_by(|a, b| a.key().cmp(&b.key()).then(a.seed.cmp(&b.seed)));
        Ok(Self { config, groups, runs })
    }

    pub fn group(&self, approach: &str, method: &str, loss: &str) -> Option<&Aggregate> {
        self.groups
            .iter()
            .find(|g| g.approach == approach && g.method == method && g.loss == loss)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("approach,method,loss,mean,min\n");
        for g in &self.groups {
            let _ = writeln!(s, "{},{},{},{:.1},{:.1}", g.approach, g.method, g.loss, 100.0 * g.mean, 100.0 * g.min);
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut s = String::from("approach,method,loss,task,mean,min,max\n");
        for g in &self.groups {
            for p in &g.curve {
                let _ = writeln!(s, "{},{},{},{},{},{},{}", g.approach, g.method, g.loss, p.task, p.mean, p.min, p.max);
            }
        }
        s
    }

    /// Replay class coverage per run and task; the first task has no replay
    /// and is left out.
    pub fn coverage_csv(&self) -> String {
        let mut s = String::from("approach,method,loss,seed,task,coverage,seen_classes\n");
        for r in &self.runs {
            for t in &r.tasks {
                if let Some(c) = t.replay_coverage {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        r.approach, r.method, r.loss, r.seed, t.task, c, t.seen_classes
                    );
                }
            }
        }
        s
    }

    pub fn emit(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: &str| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("report.json", &serde_json::to_string_pretty(self)?)?;
        write("summary.csv", &self.summary_csv())?;
        write("curves.csv", &self.curves_csv())?;
        write("coverage.csv", &self.coverage_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u64, accs: &[f64]) -> RunRecord {
        RunRecord {
            approach: "MalCL".into(),
            method: "l1_cmean".into(),
            loss: "fml".into(),
            seed,
            tasks: accs
                .iter()
                .enumerate()
                .map(|(i, &a)| TaskMetrics {
                    task: i + 1,
                    seen_classes: 2 + i,
                    accuracy: a,
                    per_class_accuracy: vec![a; 2 + i],
                    replay_coverage: (i > 0).then_some(2 + i - 1),
                    replay_samples: 0,
                    train_samples: 10,
                })
                .collect(),
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert!((accuracy(&[0, 1, 0], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(per_class_accuracy(&[0, 1, 0], &[0, 1, 1], 2).unwrap(), vec![1.0, 0.5]);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn single_run_aggregate() {
        let a = aggregate(&[run(1, &[0.5, 0.7])]).unwrap();
        assert!((a.mean - 0.6).abs() < 1e-15);
        assert_eq!(a.min, 0.5);
    }

    #[test]
    fn duplicate_seeds_leave_mean_unchanged() {
        let one = aggregate(&[run(1, &[0.2, 0.9])]).unwrap();
        let two = aggregate(&[run(1, &[0.2, 0.9]), run(2, &[0.2, 0.9])]).unwrap();
        assert_eq!(one.mean, two.mean);
    }

    #[test]
    fn layout_mismatch_fails() {
        assert!(aggregate(&[run(1, &[0.2, 0.9]), run(2, &[0.2])]).is_err());
    }

    #[test]
    fn summary_shape() {
        let r = ExperimentReport::build(serde_json::Value::Null, vec![run(1, &[0.872, 0.218])]).unwrap();
        assert_eq!(r.summary_csv(), "approach,method,loss,mean,min\nMalCL,l1_cmean,fml,54.5,21.8\n");
        assert_eq!(r.coverage_csv().lines().count(), 2);
    }
}
