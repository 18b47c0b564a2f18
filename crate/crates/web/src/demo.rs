use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use replaycl::config::Variant;
use replaycl::datasets::{make_synthetic, GanSpaceTransform, ScalerMode, ScalerState, SyntheticSpec};
use replaycl::gan::{train_gan, GanTrainConfig, GeneratorLoss};
use replaycl::models::{ArchConfig, ArchPreset};
use replaycl::numeric::{AdamConfig, RngStreams};
use replaycl::pipeline::{run_scenario, RunConfig, RunOptions};
use replaycl::replay::select::{
    argmax_rows, select_by_batch_centroid, select_by_class_centroid, select_by_label_distance, Pick,
};
use replaycl::replay::Scheme;
use replaycl::tasks::{build_task_stream, Strategy, TaskLayout};

type Out = Result<Value, String>;

const CENTROIDS: [[f64; 2]; 3] = [[-1.0, -0.6], [1.0, -0.6], [0.0, 1.1]];

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    [Scheme::L2Labels, Scheme::L1Cmean, Scheme::L1Bmean]
        .into_iter()
        .find(|x| x.label() == s)
        .ok_or_else(|| format!("unknown scheme {s:?}"))
}

fn parse_loss(s: &str) -> Result<GeneratorLoss, String> {
    [GeneratorLoss::Fml, GeneratorLoss::Bce]
        .into_iter()
        .find(|x| x.label() == s)
        .ok_or_else(|| format!("unknown loss {s:?}"))
}

pub fn selection_playground(seed: u64, scheme: &str, k: usize, pool: usize) -> Out {
    let scheme = parse_scheme(scheme)?;
    if !(1..=2000).contains(&pool) || k == 0 {
        return Err("pool must be 1..=2000 and k positive".into());
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    // Candidates scatter widely around a random class, as an imperfect
    // generator's output would.
    let points: Vec<f64> = (0..pool)
        .flat_map(|_| {
            let c = CENTROIDS[r.random_range(0..3)];
            let sx: f64 = r.sample(StandardNormal);
            let sy: f64 = r.sample(StandardNormal);
            [c[0] + 0.8 * sx, c[1] + 0.8 * sy]
        })
        .collect();
    let cents: Vec<f64> = CENTROIDS.iter().flatten().copied().collect();
    // Softmax over negative squared distance stands in for classifier output.
    let probs: Vec<f64> = points
        .chunks(2)
        .flat_map(|p| {
            let s: Vec<f64> = CENTROIDS.iter().map(|c| (-(p[0] - c[0]).powi(2) - (p[1] - c[1]).powi(2)).exp()).collect();
            let z: f64 = s.iter().sum();
            s.into_iter().map(move |v| v / z)
        })
        .collect();
    let d = scheme.default_distance();
    let (picks, batch_centroids): (Vec<Pick>, Vec<f64>) = match scheme {
        Scheme::L2Labels => (select_by_label_distance(&probs, 3, k, d).map_err(|e| e.to_string())?, vec![]),
        Scheme::L1Cmean => (select_by_class_centroid(&points, &cents, 2, k, d).map_err(|e| e.to_string())?, vec![]),
        Scheme::L1Bmean => {
            // Two "batches" of real data, both drawn mostly from class 0.
            let batches = vec![-0.8, -0.5, -0.3, -0.4];
            let labels = argmax_rows(&probs, 3);
            let picks = select_by_batch_centroid(&points, &batches, 2, &labels, 2 * k, d).map_err(|e| e.to_string())?;
            (picks, batches)
        }
    };
    let mut coverage = [0usize; 3];
    for p in &picks {
        coverage[p.label] += 1;
    }
    Ok(json!({
        "scheme": scheme.label(),
        "points": points.chunks(2).map(|p| [p[0], p[1]]).collect::<Vec<_>>(),
        "centroids": CENTROIDS,
        "batch_centroids": batch_centroids.chunks(2).map(|p| [p[0], p[1]]).collect::<Vec<_>>(),
        "picks": picks.iter().map(|p| json!({"candidate": p.candidate, "label": p.label, "distance": p.distance})).collect::<Vec<_>>(),
        "per_class": coverage,
    }))
}

pub fn gan_losses(seed: u64, epochs: usize, loss: &str) -> Out {
    let loss = parse_loss(loss)?;
    if !(1..=50).contains(&epochs) {
        return Err("epochs must be 1..=50".into());
    }
    let m = 16;
    let ds = make_synthetic(&SyntheticSpec::new(2, m, 100, 8.0, seed)).map_err(|e| e.to_string())?;
    let z = ScalerState::fit(m, ds.features(), ScalerMode::Refit)
        .and_then(|s| s.apply(ds.features()))
        .map_err(|e| e.to_string())?;
    let mut t = GanSpaceTransform::new(m);
    t.update(&z).map_err(|e| e.to_string())?;
    let data = t.forward(&z).map_err(|e| e.to_string())?;
    let adam = AdamConfig {
        lr: 1e-3,
        ..AdamConfig::default()
    };
    let cfg = GanTrainConfig {
        epochs,
        batch_size: 32,
        generator_loss: loss,
        generator_optim: adam,
        discriminator_optim: adam,
        ..GanTrainConfig::default()
    };
    let gan = train_gan(&data, m, &ArchConfig::desk(), &cfg, &mut RngStreams::new(seed)).map_err(|e| e.to_string())?;
    let h = &gan.history;
    Ok(json!({
        "loss": loss.label(),
        "d_loss": h.epochs.iter().map(|e| e.d_loss).collect::<Vec<_>>(),
        "g_loss": h.epochs.iter().map(|e| e.g_loss).collect::<Vec<_>>(),
        "batches": h.batches,
    }))
}

pub fn continual_run(seed: u64, scenario: &str) -> Out {
    let variant = Variant::parse(scenario).map_err(|e| e.to_string())?;
    let ds = make_synthetic(&SyntheticSpec::new(6, 16, 40, 8.0, seed)).map_err(|e| e.to_string())?;
    let stream = build_task_stream(&ds, TaskLayout::new(2, 2, 3), Strategy::Random, seed, 0.25).map_err(|e| e.to_string())?;
    let mut base = RunConfig::preset(ArchPreset::Tiny, variant.scenario, seed);
    base.classifier.epochs = 6;
    base.gan.epochs = 4;
    base.gan.batch_size = 16;
    base.selection.k = 6;
    let cfg = variant.apply(&base);
    cfg.validate().map_err(|e| e.to_string())?;
    let out = run_scenario(&ds, &stream, &cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
    let rec = &out.record;
    Ok(json!({
        "label": cfg.label(),
        "accuracy": rec.tasks.iter().map(|t| t.accuracy).collect::<Vec<_>>(),
        "coverage": rec.tasks.iter().map(|t| t.replay_coverage).collect::<Vec<_>>(),
        "seen": rec.tasks.iter().map(|t| t.seen_classes).collect::<Vec<_>>(),
        "mean": rec.mean_accuracy(),
        "min": rec.min_accuracy(),
    }))
}
