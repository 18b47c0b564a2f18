//! Continual-learning runs: generative replay with selection, unselected
//! generative replay, and the fine-tuning / joint-training baselines.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, GanSpaceTransform, ScalerMode, ScalerState};
use crate::error::{Error, Result};
use crate::gan::{train_gan, GanTrainConfig, GeneratorLoss, LossHistory};
use crate::metrics::{accuracy, per_class_accuracy, RunRecord, TaskMetrics};
use crate::models::{checkpoint, ArchConfig, ArchPreset, Classifier};
use crate::numeric::{softmax, AdamConfig, ForwardCtx, Module, RngStreams, Sgd, SgdConfig, Tensor};
use crate::replay::{
    class_mean_logits, batch_mean_logits, generate_pool, random_replay, replay_class_coverage, select_replay,
    ReplaySet, Scheme, SelectionConfig, SelectionContext,
};
use crate::tasks::TaskStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Malcl,
    None,
    Joint,
    NaiveGr,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Malcl => "malcl",
            Scenario::None => "none",
            Scenario::Joint => "joint",
            Scenario::NaiveGr => "naive_gr",
        }
    }

    /// Name used in report rows.
    pub fn approach(self) -> &'static str {
        match self {
            Scenario::Malcl => "MalCL",
            Scenario::None => "None",
            Scenario::Joint => "Joint",
            Scenario::NaiveGr => "GR",
        }
    }

    pub fn uses_replay(self) -> bool {
        matches!(self, Scenario::Malcl | Scenario::NaiveGr)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "malcl" => Ok(Scenario::Malcl),
            "none" => Ok(Scenario::None),
            "joint" => Ok(Scenario::Joint),
            "naive_gr" => Ok(Scenario::NaiveGr),
            other => Err(Error::config(format!(
                "unknown scenario {other:?} (expected malcl, none, joint or naive_gr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-7,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("classifier.epochs and classifier.batch_size must be positive"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::config("classifier optimiser settings out of range"));
        }
        Ok(())
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub arch: ArchConfig,
    pub classifier: ClassifierTrainConfig,
    pub gan: GanTrainConfig,
    pub selection: SelectionConfig,
}

impl RunConfig {
    /// Hyperparameters matched to an architecture preset. `Full` keeps the
    /// published settings; `Desk` and `Tiny` use smaller batches and faster
    /// learning rates so that short runs on small data still converge.
    pub fn preset(preset: ArchPreset, scenario: Scenario, seed: u64) -> Self {
        let arch = preset.config();
        match preset {
            ArchPreset::Full => Self {
                scenario,
                seed,
                arch,
                classifier: ClassifierTrainConfig::default(),
                gan: GanTrainConfig::default(),
                selection: SelectionConfig::default(),
            },
            ArchPreset::Desk | ArchPreset::Tiny => Self {
                scenario,
                seed,
                arch,
                classifier: ClassifierTrainConfig {
                    epochs: 10,
                    batch_size: 32,
                    lr: 0.01,
                    ..ClassifierTrainConfig::default()
                },
                gan: GanTrainConfig {
                    epochs: 50,
                    batch_size: 32,
                    generator_optim: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
                    discriminator_optim: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
                    ..GanTrainConfig::default()
                },
                selection: SelectionConfig {
                    k: 100,
                    ..SelectionConfig::default()
                },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.classifier.validate()?;
        if self.scenario.uses_replay() {
            self.gan.validate()?;
            self.selection.validate()?;
        }
        Ok(())
    }

    /// Generator loss actually used (unselected replay always trains with BCE).
    pub fn effective_loss(&self) -> Option<GeneratorLoss> {
        match self.scenario {
            Scenario::Malcl => Some(self.gan.generator_loss),
            Scenario::NaiveGr => Some(GeneratorLoss::Bce),
            _ => None,
        }
    }

    pub fn method_label(&self) -> &'static str {
        match self.scenario {
            Scenario::Malcl => self.selection.scheme.label(),
            Scenario::NaiveGr => "random",
            _ => "-",
        }
    }

    pub fn loss_label(&self) -> &'static str {
        self.effective_loss().map_or("-", GeneratorLoss::label)
    }

    /// `scenario/method/loss`, e.g. `malcl/l1_cmean/fml`.
    pub fn label(&self) -> String {
        match self.scenario {
            Scenario::Malcl | Scenario::NaiveGr => {
                format!("{}/{}/{}", self.scenario.label(), self.method_label(), self.loss_label())
            }
            s => s.label().to_string(),
        }
    }
}

/// Optional on-disk outputs of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Per-task classifier/generator/discriminator checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Per-task replay sets with provenance sidecars.
    pub replay_dir: Option<PathBuf>,
    /// Per-task GAN loss histories.
    pub loss_dir: Option<PathBuf>,
}

/// Where a training row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Real { task: usize },
    Replay { source_task: usize },
}

#[derive(Debug, Clone)]
pub struct TaskArtifacts {
    pub task: usize,
    pub metrics: TaskMetrics,
    pub scaler: ScalerState,
    /// Replay set this task trained with.
    pub replay_in: Option<ReplaySet>,
    /// Replay set this task produced for the next one.
    pub replay_out: Option<ReplaySet>,
    pub gan_history: Option<LossHistory>,
    pub origins: Vec<Origin>,
}

pub struct RunOutput {
    pub record: RunRecord,
    pub tasks: Vec<TaskArtifacts>,
    pub classifier: Classifier<f32>,
}

fn gather(ds: &Dataset, idx: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(idx.len() * ds.feature_dim());
    for &i in idx {
        out.extend_from_slice(ds.row(i));
    }
    out
}

fn local_labels(ds: &Dataset, stream: &TaskStream, idx: &[usize]) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            let c = ds.labels()[i];
            stream
                .local_label(c)
                .ok_or_else(|| Error::Invariant(format!("sample {i} of class {c} is outside the stream")))
        })
        .collect()
}

/// Mini-batch SGD on softmax cross-entropy. Returns the row indices of the
/// final epoch's batches.
pub fn train_classifier(
    clf: &mut Classifier<f32>,
    x: &[f32],
    y: &[usize],
    cfg: &ClassifierTrainConfig,
    rngs: &mut RngStreams,
) -> Result<Vec<Vec<usize>>> {
    let m = clf.feature_dim;
    let n = clf.class_count();
    if x.len() != y.len() * m || y.is_empty() {
        return Err(Error::config("classifier training data is empty or ragged"));
    }
    let mut opt = Sgd::new(cfg.sgd());
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut last = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(rngs.data_shuffle());
        last.clear();
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut xb = Tensor::zeros(&[b, m]);
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).copy_from_slice(&x[i * m..(i + 1) * m]);
            }
            let scores = clf.forward(&xb, &mut ForwardCtx::train(rngs.dropout()))?;
            let p = softmax(&scores.cast::<f64>());
            let mut loss = 0.0;
            let mut grad = Tensor::<f32>::zeros(&[b, n]);
            for (r, &i) in chunk.iter().enumerate() {
                let row = p.row(r);
                loss -= row[y[i]].max(1e-300).ln();
                for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                    let target = if j == y[i] { 1.0 } else { 0.0 };
                    *g = ((row[j] - target) / b as f64) as f32;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at epoch {epoch}")));
            }
            clf.zero_grad();
            clf.backward(&grad)?;
            opt.step(clf.params_mut())?;
            last.push(chunk.to_vec());
        }
    }
    Ok(last)
}

/// Eval-mode argmax predictions.
pub fn predict(clf: &mut Classifier<f32>, x: &[f32]) -> Result<Vec<usize>> {
    let m = clf.feature_dim;
    let mut out = Vec::with_capacity(x.len() / m);
    for chunk in x.chunks(512 * m) {
        let t = Tensor::new(vec![chunk.len() / m, m], chunk.to_vec())?;
        let s = clf.scores(&t)?;
        out.extend(crate::replay::select::argmax_rows(
            &s.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
            s.row_len(),
        ));
    }
    Ok(out)
}

fn check_isolation(scenario: Scenario, task: usize, origins: &[Origin], replay: Option<&ReplaySet>) -> Result<()> {
    if scenario != Scenario::Joint {
        if let Some(o) = origins.iter().find(|o| matches!(o, Origin::Real { task: t } if *t != task)) {
            return Err(Error::Invariant(format!("task {task} training input contains {o:?}")));
        }
    }
    if !scenario.uses_replay() && origins.iter().any(|o| matches!(o, Origin::Replay { .. })) {
        return Err(Error::Invariant(format!("{} run received replay samples", scenario.label())));
    }
    if let Some(r) = replay {
        if r.source_task + 1 != task {
            return Err(Error::Invariant(format!(
                "task {task} was handed replay from task {}",
                r.source_task
            )));
        }
    }
    Ok(())
}

fn task_of_sample(ds: &Dataset, stream: &TaskStream) -> Vec<Option<usize>> {
    let mut owner = vec![None; ds.len()];
    for t in &stream.tasks {
        for &i in &t.train {
            owner[i] = Some(t.index);
        }
    }
    owner
}

/// Runs `config.scenario` over every task of `stream`.
pub fn run_scenario(ds: &Dataset, stream: &TaskStream, config: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    for dir in [&opts.checkpoint_dir, &opts.replay_dir, &opts.loss_dir].into_iter().flatten() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let m = ds.feature_dim();
    let scenario = config.scenario;
    let rngs = RngStreams::new(config.seed);
    let owner = task_of_sample(ds, stream);
    let mut scaler = ScalerState::new(m, ScalerMode::Incremental);
    let mut clf: Option<Classifier<f32>> = None;
    let mut replay: Option<ReplaySet> = None;
    let mut artifacts = Vec::with_capacity(stream.task_count());
    let mut gan_cfg = config.gan.clone();
    if let Some(loss) = config.effective_loss() {
        gan_cfg.generator_loss = loss;
    }

    for task in &stream.tasks {
        let i = task.index;
        let run_task = |clf: &mut Option<Classifier<f32>>,
                        scaler: &mut ScalerState,
                        replay: &mut Option<ReplaySet>|
         -> Result<TaskArtifacts> {
            let mut task_rng = rngs.fork(i as u64);
            let seen = stream.seen_count(i);
            let train_idx = match scenario {
                Scenario::Joint => stream.joint_view(i)?,
                _ => task.train.clone(),
            };
            let raw = gather(ds, &train_idx);
            let prev_scaler = scaler.clone();
            match scenario {
                Scenario::Malcl | Scenario::NaiveGr => scaler.update(&raw)?,
                Scenario::None | Scenario::Joint => *scaler = ScalerState::fit(m, &raw, ScalerMode::Refit)?,
            }
            let mut x = scaler.apply(&raw)?;
            let mut y = local_labels(ds, stream, &train_idx)?;
            let mut origins: Vec<Origin> = train_idx
                .iter()
                .map(|&s| Origin::Real {
                    task: owner[s].expect("train samples belong to a task"),
                })
                .collect();

            // Replay from the previous task, re-expressed under the updated scaler.
            let replay_in = replay.take().map(|mut r| -> Result<ReplaySet> {
                if !r.is_empty() {
                    let raw_r = prev_scaler.invert(&r.features)?;
                    r.features = scaler.apply(&raw_r)?;
                }
                Ok(r)
            });
            let replay_in = replay_in.transpose()?;
            if let Some(r) = &replay_in {
                x.extend_from_slice(&r.features);
                y.extend_from_slice(&r.labels);
                origins.extend(r.labels.iter().map(|_| Origin::Replay {
                    source_task: r.source_task,
                }));
            }
            check_isolation(scenario, i, &origins, replay_in.as_ref())?;

            // Generator for this task's pool.
            let mut gan = None;
            let mut transform = GanSpaceTransform::new(m);
            if scenario.uses_replay() && i < stream.task_count() {
                transform.update(&x)?;
                let gx = transform.forward(&x)?;
                let mut gan_rng = rngs.fork(1_000 + i as u64);
                gan = Some(train_gan(&gx, m, &config.arch, &gan_cfg, &mut gan_rng)?);
            }

            // Classifier over all seen classes.
            let c = match clf.take() {
                None => Classifier::new(m, seen, &config.arch.classifier, task_rng.weight_init())?,
                Some(mut c) => {
                    if c.class_count() < seen {
                        c.grow(seen, task_rng.weight_init())?;
                    }
                    c
                }
            };
            let c = clf.insert(c);
            let batches = train_classifier(c, &x, &y, &config.classifier, &mut task_rng)?;

            // Evaluation on every class seen so far.
            let test_raw = gather(ds, &task.test);
            let test_x = scaler.apply(&test_raw)?;
            let test_y = local_labels(ds, stream, &task.test)?;
            let pred = predict(c, &test_x)?;
            let metrics = TaskMetrics {
                task: i,
                seen_classes: seen,
                accuracy: accuracy(&pred, &test_y)?,
                per_class_accuracy: per_class_accuracy(&pred, &test_y, seen)?,
                replay_coverage: replay_in.as_ref().map(|r| replay_class_coverage(r, r.seen_classes)),
                replay_samples: replay_in.as_ref().map_or(0, ReplaySet::len),
                train_samples: y.len(),
            };

            // Replay for the next task.
            let mut replay_out = None;
            if let Some(g) = gan.as_mut() {
                let sel = &config.selection;
                let pool_n = sel.pool_size(seen, batches.len());
                let mut sel_rng = rngs.fork(2_000 + i as u64);
                let pool = generate_pool(&mut g.generator, &transform, pool_n, sel_rng.noise(), i)?;
                let out = match scenario {
                    Scenario::NaiveGr => {
                        let budget = SelectionConfig { scheme: Scheme::L1Cmean, ..sel.clone() }.budget(seen, 0);
                        random_replay(&pool, c, budget, seen, sel_rng.data_shuffle())?
                    }
                    _ => match sel.scheme {
                        Scheme::L2Labels => select_replay(&pool, c, sel, seen, SelectionContext::Labels)?,
                        Scheme::L1Cmean => {
                            let cent = class_mean_logits(c, &x, &y, seen)?;
                            select_replay(&pool, c, sel, seen, SelectionContext::ClassCentroids(&cent))?
                        }
                        Scheme::L1Bmean => {
                            let cent = batch_mean_logits(c, &x, &batches)?;
                            select_replay(&pool, c, sel, seen, SelectionContext::BatchCentroids(&cent))?
                        }
                    },
                };
                replay_out = Some(out);
            }

            if let Some(dir) = &opts.checkpoint_dir {
                checkpoint::save(&*c, &dir.join(format!("task_{i:02}_classifier.rclm")))?;
                if let Some(g) = &gan {
                    checkpoint::save(&g.generator, &dir.join(format!("task_{i:02}_generator.rclm")))?;
                    checkpoint::save(&g.discriminator, &dir.join(format!("task_{i:02}_discriminator.rclm")))?;
                }
            }
            if let (Some(dir), Some(g)) = (&opts.loss_dir, &gan) {
                g.history.write_csv(&dir.join(format!("gan_loss_task_{i:02}.csv")))?;
            }
            if let (Some(dir), Some(r)) = (&opts.replay_dir, &replay_out) {
                r.export(&dir.join(format!("replay_task_{i:02}.rcl")), &stream.class_order, ds.class_count())?;
            }

            *replay = replay_out.clone();
            Ok(TaskArtifacts {
                task: i,
                metrics,
                scaler: scaler.clone(),
                replay_in,
                replay_out,
                gan_history: gan.map(|g| g.history),
                origins,
            })
        };
        let a = run_task(&mut clf, &mut scaler, &mut replay).map_err(|e| e.in_task(i))?;
        artifacts.push(a);
    }

    let record = RunRecord {
        approach: scenario.approach().to_string(),
        method: config.method_label().to_string(),
        loss: config.loss_label().to_string(),
        seed: config.seed,
        tasks: artifacts.iter().map(|a| a.metrics.clone()).collect(),
    };
    Ok(RunOutput {
        record,
        tasks: artifacts,
        classifier: clf.expect("at least one task"),
    })
}

fn with_scenario(config: &RunConfig, scenario: Scenario) -> RunConfig {
    RunConfig {
        scenario,
        ..config.clone()
    }
}

pub fn run_malcl(ds: &Dataset, stream: &TaskStream, config: &RunConfig) -> Result<RunOutput> {
    run_scenario(ds, stream, &with_scenario(config, Scenario::Malcl), &RunOptions::default())
}

pub fn run_none(ds: &Dataset, stream: &TaskStream, config: &RunConfig) -> Result<RunOutput> {
    run_scenario(ds, stream, &with_scenario(config, Scenario::None), &RunOptions::default())
}

pub fn run_joint(ds: &Dataset, stream: &TaskStream, config: &RunConfig) -> Result<RunOutput> {
    run_scenario(ds, stream, &with_scenario(config, Scenario::Joint), &RunOptions::default())
}

pub fn run_naive_gr(ds: &Dataset, stream: &TaskStream, config: &RunConfig) -> Result<RunOutput> {
    run_scenario(ds, stream, &with_scenario(config, Scenario::NaiveGr), &RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn replay_from(source_task: usize) -> ReplaySet {
        ReplaySet {
            source_task,
            ..ReplaySet::empty(8)
        }
    }

    #[test]
    fn isolation_rejects_old_real_rows() {
        let rows = [Origin::Real { task: 2 }, Origin::Real { task: 1 }];
        let err = check_isolation(Scenario::Malcl, 2, &rows, None).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
        assert!(check_isolation(Scenario::None, 2, &rows, None).is_err());
        assert!(check_isolation(Scenario::Joint, 2, &rows, None).is_ok());
    }

    #[test]
    fn isolation_rejects_replay_in_baselines() {
        let rows = [Origin::Real { task: 2 }, Origin::Replay { source_task: 1 }];
        assert!(check_isolation(Scenario::Malcl, 2, &rows, Some(&replay_from(1))).is_ok());
        assert!(check_isolation(Scenario::None, 2, &rows, None).is_err());
    }

    #[test]
    fn provenance_must_be_the_previous_task() {
        let rows = [Origin::Real { task: 3 }];
        assert!(check_isolation(Scenario::Malcl, 3, &rows, Some(&replay_from(2))).is_ok());
        let err = check_isolation(Scenario::Malcl, 3, &rows, Some(&replay_from(1))).unwrap_err();
        assert!(err.to_string().contains("replay from task 1"));
    }

    #[test]
    fn labels_follow_scenario() {
        let mut c = RunConfig::preset(ArchPreset::Desk, Scenario::NaiveGr, 1);
        c.gan.generator_loss = GeneratorLoss::Fml;
        assert_eq!(c.label(), "naive_gr/random/bce");
        c.scenario = Scenario::Malcl;
        assert_eq!(c.label(), "malcl/l1_cmean/fml");
        c.scenario = Scenario::Joint;
        assert_eq!(c.label(), "joint");
    }
}
