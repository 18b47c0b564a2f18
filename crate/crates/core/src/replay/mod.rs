//! Synthetic candidate pools and replay-set selection.

pub mod select;

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use select::{Distance, Pick};

use crate::datasets::{Dataset, GanSpaceTransform};
use crate::error::{Error, Result};
use crate::gan::sample_noise;
use crate::models::{Classifier, Generator};
use crate::numeric::{softmax, Tensor};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Softmax output nearest to each class's one-hot label.
    L2Labels,
    /// Logit tap nearest to each class centroid.
    #[default]
    L1Cmean,
    /// Logit tap nearest to any batch centroid, labelled by argmax.
    L1Bmean,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::L2Labels => "l2_labels",
            Scheme::L1Cmean => "l1_cmean",
            Scheme::L1Bmean => "l1_bmean",
        }
    }

    pub fn default_distance(self) -> Distance {
        match self {
            Scheme::L2Labels => Distance::L2,
            Scheme::L1Cmean | Scheme::L1Bmean => Distance::L1,
        }
    }

    pub fn per_class(self) -> bool {
        !matches!(self, Scheme::L1Bmean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub scheme: Scheme,
    /// Samples per class (per batch for the global scheme).
    pub k: usize,
    /// Candidates generated per requested sample.
    pub pool_factor: usize,
    /// Overrides the scheme's own metric.
    pub distance: Option<Distance>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::L1Cmean,
            k: 200,
            pool_factor: 10,
            distance: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("selection.k must be at least 1"));
        }
        if self.pool_factor == 0 {
            return Err(Error::config("selection.pool_factor must be at least 1"));
        }
        Ok(())
    }

    pub fn distance(&self) -> Distance {
        self.distance.unwrap_or(self.scheme.default_distance())
    }

    /// Number of samples the scheme aims to carry forward.
    pub fn budget(&self, seen_classes: usize, batch_count: usize) -> usize {
        if self.scheme.per_class() {
            self.k * seen_classes
        } else {
            self.k * batch_count
        }
    }

    pub fn pool_size(&self, seen_classes: usize, batch_count: usize) -> usize {
        self.pool_factor * self.budget(seen_classes, batch_count)
    }
}

/// Generator output in both coordinate systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPool {
    pub feature_dim: usize,
    /// `[0, 1]` rows as produced by the generator.
    pub gan: Vec<f32>,
    /// The same rows mapped back to standardised classifier space.
    pub classifier: Vec<f32>,
    pub source_task: usize,
}

impl SyntheticPool {
    pub fn len(&self) -> usize {
        self.gan.len() / self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.gan.is_empty()
    }

    pub fn classifier_row(&self, i: usize) -> &[f32] {
        &self.classifier[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Draws `count` noise vectors and runs them through the generator in eval mode.
pub fn generate_pool(
    generator: &mut Generator<f32>,
    transform: &GanSpaceTransform,
    count: usize,
    rng: &mut ChaCha8Rng,
    source_task: usize,
) -> Result<SyntheticPool> {
    let m = generator.feature_dim;
    let mut gan = Vec::with_capacity(count * m);
    let mut left = count;
    while left > 0 {
        let b = left.min(EVAL_CHUNK);
        let z = sample_noise(rng, b, generator.noise_dim());
        let x = generator.generate(&z)?;
        x.check_finite("generator output")?;
        gan.extend_from_slice(x.data());
        left -= b;
    }
    let classifier = if count == 0 { Vec::new() } else { transform.inverse(&gan)? };
    Ok(SyntheticPool {
        feature_dim: m,
        gan,
        classifier,
        source_task,
    })
}

fn chunked(
    rows: &[f32],
    m: usize,
    mut f: impl FnMut(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    let mut width = 0;
    for chunk in rows.chunks(EVAL_CHUNK * m) {
        let x = Tensor::new(vec![chunk.len() / m, m], chunk.to_vec())?;
        let y = f(&x)?;
        width = y.row_len();
        out.extend(y.data().iter().map(|&v| v as f64));
    }
    Ok((out, width))
}

/// Eval-mode logit taps and softmax outputs for a block of rows.
pub struct Embeddings {
    pub taps: Vec<f64>,
    pub tap_dim: usize,
    pub probs: Vec<f64>,
    pub classes: usize,
}

pub fn embed(classifier: &mut Classifier<f32>, rows: &[f32]) -> Result<Embeddings> {
    let m = classifier.feature_dim;
    let (taps, tap_dim) = chunked(rows, m, |x| classifier.logits(x))?;
    let classes = classifier.class_count();
    let mut probs = Vec::with_capacity(rows.len() / m * classes);
    for chunk in taps.chunks(EVAL_CHUNK * tap_dim) {
        let t = Tensor::new(vec![chunk.len() / tap_dim, tap_dim], chunk.iter().map(|&v| v as f32).collect())?;
        let s = classifier.scores_from_tap(&t)?.cast::<f64>();
        probs.extend_from_slice(softmax(&s).data());
    }
    Ok(Embeddings {
        taps,
        tap_dim: tap_dim.max(classifier.tap_dim()),
        probs,
        classes,
    })
}

/// Per-class mean logit tap over labelled rows (labels are class positions).
pub fn class_mean_logits(
    classifier: &mut Classifier<f32>,
    rows: &[f32],
    labels: &[usize],
    classes: usize,
) -> Result<Vec<f64>> {
    let e = embed(classifier, rows)?;
    select::group_means(&e.taps, e.tap_dim, labels, classes)
}

/// Mean logit tap of each batch; `batches` holds row indices into `rows`.
pub fn batch_mean_logits(
    classifier: &mut Classifier<f32>,
    rows: &[f32],
    batches: &[Vec<usize>],
) -> Result<Vec<f64>> {
    if batches.is_empty() || batches.iter().any(|b| b.is_empty()) {
        return Err(Error::config("batch centroids need nonempty batches"));
    }
    let e = embed(classifier, rows)?;
    let mut members = Vec::new();
    let mut selected_groups = Vec::new();
    for (g, b) in batches.iter().enumerate() {
        for &i in b {
            members.push(i);
            selected_groups.push(g);
        }
    }
    let w = e.tap_dim;
    let mut taps = Vec::with_capacity(members.len() * w);
    for &i in &members {
        taps.extend_from_slice(&e.taps[i * w..(i + 1) * w]);
    }
    select::group_means(&taps, w, &selected_groups, batches.len())
}

/// Carried-forward synthetic samples in classifier space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySet {
    pub feature_dim: usize,
    pub features: Vec<f32>,
    /// Class positions in the stream's class order.
    pub labels: Vec<usize>,
    pub distances: Vec<f64>,
    pub scheme: String,
    pub k: usize,
    pub source_task: usize,
    pub seen_classes: usize,
}

impl ReplaySet {
    pub fn empty(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            features: Vec::new(),
            labels: Vec::new(),
            distances: Vec::new(),
            scheme: String::new(),
            k: 0,
            source_task: 0,
            seen_classes: 0,
        }
    }

    fn from_picks(pool: &SyntheticPool, picks: &[Pick], scheme: &str, k: usize, seen: usize) -> Self {
        let mut features = Vec::with_capacity(picks.len() * pool.feature_dim);
        for p in picks {
            features.extend_from_slice(pool.classifier_row(p.candidate));
        }
        Self {
            feature_dim: pool.feature_dim,
            features,
            labels: picks.iter().map(|p| p.label).collect(),
            distances: picks.iter().map(|p| p.distance).collect(),
            scheme: scheme.to_string(),
            k,
            source_task: pool.source_task,
            seen_classes: seen,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self, seen_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; seen_classes];
        for &l in &self.labels {
            if l < seen_classes {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Writes the samples as a binary dataset (labels mapped through
    /// `class_order` to dataset ids) plus a JSON provenance sidecar.
    pub fn export(&self, path: &Path, class_order: &[usize], dataset_classes: usize) -> Result<PathBuf> {
        let labels: Vec<usize> = self
            .labels
            .iter()
            .map(|&l| class_order.get(l).copied().ok_or_else(|| Error::config(format!("label {l} outside class order"))))
            .collect::<Result<_>>()?;
        let ds = Dataset::new(self.feature_dim, dataset_classes, self.features.clone(), labels)?;
        ds.save(path, crate::datasets::Format::Binary)?;
        let sidecar = PathBuf::from(format!("{}.json", path.display()));
        let meta = serde_json::json!({
            "scheme": self.scheme,
            "k": self.k,
            "source_task": self.source_task,
            "samples": self.len(),
            "coverage": replay_class_coverage(self, self.seen_classes),
            "seen_classes": self.seen_classes,
            "class_counts": self.class_counts(self.seen_classes),
            "class_order": &class_order[..self.seen_classes.min(class_order.len())],
        });
        std::fs::write(&sidecar, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&sidecar, e))?;
        Ok(sidecar)
    }
}

/// Number of seen classes with at least one replay sample.
pub fn replay_class_coverage(set: &ReplaySet, seen_classes: usize) -> usize {
    set.class_counts(seen_classes).iter().filter(|&&c| c > 0).count()
}

/// What a selection scheme needs besides the pool.
pub enum SelectionContext<'a> {
    /// Nothing extra: label distance uses the classifier's softmax.
    Labels,
    /// Flattened per-class centroids, `seen_classes` rows.
    ClassCentroids(&'a [f64]),
    /// Flattened batch centroids.
    BatchCentroids(&'a [f64]),
}

/// Runs the configured scheme over `pool` with classifier `C_i`.
pub fn select_replay(
    pool: &SyntheticPool,
    classifier: &mut Classifier<f32>,
    config: &SelectionConfig,
    seen_classes: usize,
    context: SelectionContext<'_>,
) -> Result<ReplaySet> {
    if pool.is_empty() {
        return Err(Error::config("candidate pool is empty"));
    }
    if classifier.class_count() < seen_classes {
        return Err(Error::config(format!(
            "classifier covers {} classes, {seen_classes} seen",
            classifier.class_count()
        )));
    }
    let e = embed(classifier, &pool.classifier)?;
    let d = config.distance();
    let picks = match (config.scheme, context) {
        (Scheme::L2Labels, _) => {
            let probs = narrow(&e.probs, e.classes, seen_classes);
            select::select_by_label_distance(&probs, seen_classes, config.k, d)?
        }
        (Scheme::L1Cmean, SelectionContext::ClassCentroids(c)) => {
            if c.len() != seen_classes * e.tap_dim {
                return Err(Error::config("one centroid per seen class is required"));
            }
            select::select_by_class_centroid(&e.taps, c, e.tap_dim, config.k, d)?
        }
        (Scheme::L1Bmean, SelectionContext::BatchCentroids(c)) => {
            let batches = c.len() / e.tap_dim;
            let labels = select::argmax_rows(&narrow(&e.probs, e.classes, seen_classes), seen_classes);
            select::select_by_batch_centroid(&e.taps, c, e.tap_dim, &labels, config.k * batches, d)?
        }
        (s, _) => return Err(Error::config(format!("scheme {} given the wrong centroids", s.label()))),
    };
    Ok(ReplaySet::from_picks(pool, &picks, config.scheme.label(), config.k, seen_classes))
}

/// Unselected replay: a uniform draw of `budget` candidates labelled by argmax.
pub fn random_replay(
    pool: &SyntheticPool,
    classifier: &mut Classifier<f32>,
    budget: usize,
    seen_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ReplaySet> {
    if pool.is_empty() {
        return Err(Error::config("candidate pool is empty"));
    }
    let mut chosen = sample(rng, pool.len(), budget.min(pool.len())).into_vec();
    chosen.sort_unstable();
    let rows: Vec<f32> = chosen.iter().flat_map(|&i| pool.classifier_row(i).to_vec()).collect();
    let e = embed(classifier, &rows)?;
    let labels = select::argmax_rows(&narrow(&e.probs, e.classes, seen_classes), seen_classes);
    let picks: Vec<Pick> = chosen
        .iter()
        .zip(labels)
        .map(|(&candidate, label)| Pick {
            candidate,
            label,
            distance: 0.0,
        })
        .collect();
    Ok(ReplaySet::from_picks(pool, &picks, "random", budget, seen_classes))
}

/// Keeps the first `keep` columns of each row.
fn narrow(rows: &[f64], width: usize, keep: usize) -> Vec<f64> {
    if keep == width {
        return rows.to_vec();
    }
    rows.chunks(width).flat_map(|r| r[..keep].to_vec()).collect()
}
