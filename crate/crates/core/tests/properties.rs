//! Randomized properties checked against independent reference computations.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replaycl::datasets::{Dataset, ScalerMode, ScalerState};
use replaycl::metrics::{ExperimentReport, RunRecord, TaskMetrics};
use replaycl::models::{ArchConfig, Generator};
use replaycl::numeric::{softmax, Conv1d, Deconv1d, Tensor};
use replaycl::replay::select::{select_by_batch_centroid, select_by_class_centroid, select_by_label_distance};
use replaycl::replay::Distance;
use replaycl::tasks::{build_task_stream, Strategy, TaskLayout};

mod common;
use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- scaler

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn incremental_scaler_matches_one_shot(seed in any::<u64>(), rows in 1usize..120, m in 1usize..6, cuts in 0usize..6) {
        let mut r = rng(seed);
        let shift: f64 = r.random_range(-1e3..1e3);
        let data: Vec<f32> = (0..rows * m).map(|_| (shift + r.random_range(-5.0..5.0)) as f32).collect();
        let mut bounds: Vec<usize> = (0..cuts).map(|_| r.random_range(0..=rows)).collect();
        bounds.extend([0, rows]);
        bounds.sort_unstable();

        let mut inc = ScalerState::new(m, ScalerMode::Incremental);
        for w in bounds.windows(2) {
            inc.update(&data[w[0] * m..w[1] * m]).unwrap();
        }
        // Two-pass reference in f64.
        for j in 0..m {
            let col: Vec<f64> = (0..rows).map(|i| data[i * m + j] as f64).collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!((inc.mean()[j] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!((inc.variance()[j] - var).abs() <= 1e-6 * var.max(1e-12));
        }
        prop_assert_eq!(inc.count(), rows as u64);
    }
}

// ---------------------------------------------------------------- layers

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn deconv_is_the_adjoint_of_conv(
        seed in any::<u64>(), a in 1usize..4, b in 1usize..4, k in 1usize..6,
        stride in 1usize..4, pad in 0usize..3, len in 1usize..20, batch in 1usize..3,
    ) {
        prop_assume!(len + 2 * pad >= k && pad < k);
        prop_assume!((len + 2 * pad - k) % stride == 0);
        let mut r = rng(seed);
        let w = Tensor::<f64>::from_fn(&[a, b, k], |_| r.random_range(-1.0..1.0));
        let conv = Conv1d::from_weights(w.clone(), Tensor::zeros(&[a]), stride, pad).unwrap();
        let deconv = Deconv1d::from_weights(w, Tensor::zeros(&[b]), stride, pad, None).unwrap();
        let x = Tensor::<f64>::from_fn(&[batch, b, len], |_| r.random_range(-1.0..1.0));
        let cx = conv.apply(&x).unwrap();
        let y = Tensor::<f64>::from_fn(cx.shape(), |_| r.random_range(-1.0..1.0));
        let dy = deconv.apply(&y).unwrap();
        prop_assert_eq!(dy.shape(), x.shape());
        let lhs = cx.dot(&y);
        let rhs = x.dot(&dy);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn softmax_rows_lie_on_the_simplex(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..10, scale in 0.0f64..200.0) {
        let mut r = rng(seed);
        let t = Tensor::<f64>::from_fn(&[rows, cols], |_| scale * r.random_range(-1.0..1.0));
        let p = softmax(&t);
        for i in 0..rows {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_emits_exactly_m_features(m in 8usize..512, seed in any::<u64>()) {
        let arch = ArchConfig::tiny().generator;
        let mut g = Generator::<f32>::new(m, &arch, &mut rng(seed)).unwrap();
        let z = Tensor::<f32>::from_fn(&[2, arch.noise_dim], |i| (i as f32).sin());
        let out = g.generate(&z).unwrap();
        prop_assert_eq!(out.shape(), &[2, m][..]);
        prop_assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

// ---------------------------------------------------------------- selection oracles

fn any_distance(r: &mut ChaCha8Rng) -> Distance {
    if r.random() { Distance::L1 } else { Distance::L2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn label_distance_matches_oracle(seed in any::<u64>(), pool in 1usize..=64, classes in 1usize..=8, k in 1usize..=70) {
        let mut r = rng(seed);
        let d = any_distance(&mut r);
        let probs = grid_rows(&mut r, pool, classes);
        let got = select_by_label_distance(&probs, classes, k, d).unwrap();
        prop_assert_eq!(pairs(&got), oracle_label(&probs, classes, k, d));
    }

    #[test]
    fn class_centroid_matches_oracle(seed in any::<u64>(), pool in 1usize..=64, classes in 1usize..=8, w in 1usize..=6, k in 1usize..=70) {
        let mut r = rng(seed);
        let d = any_distance(&mut r);
        let emb = grid_rows(&mut r, pool, w);
        let cents = grid_rows(&mut r, classes, w);
        let got = select_by_class_centroid(&emb, &cents, w, k, d).unwrap();
        prop_assert_eq!(pairs(&got), oracle_centroid(&emb, &cents, w, k, d));
    }

    #[test]
    fn batch_centroid_matches_oracle(seed in any::<u64>(), pool in 1usize..=64, classes in 1usize..=8, batches in 1usize..=6, w in 1usize..=6, budget in 0usize..=80) {
        let mut r = rng(seed);
        let d = any_distance(&mut r);
        let emb = grid_rows(&mut r, pool, w);
        let cents = grid_rows(&mut r, batches, w);
        let labels: Vec<usize> = (0..pool).map(|_| r.random_range(0..classes)).collect();
        let got = select_by_batch_centroid(&emb, &cents, w, &labels, budget, d).unwrap();
        prop_assert_eq!(pairs(&got), oracle_batch(&emb, &cents, w, &labels, budget, d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn per_class_schemes_are_balanced(seed in any::<u64>(), pool in 1usize..=64, classes in 1usize..=8, k in 1usize..=64) {
        prop_assume!(pool >= k);
        let mut r = rng(seed);
        let probs = grid_rows(&mut r, pool, classes);
        let cents = grid_rows(&mut r, classes, 3);
        let emb = grid_rows(&mut r, pool, 3);
        for picks in [
            select_by_label_distance(&probs, classes, k, Distance::L2).unwrap(),
            select_by_class_centroid(&emb, &cents, 3, k, Distance::L1).unwrap(),
        ] {
            let mut counts = vec![0usize; classes];
            for p in &picks {
                counts[p.label] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == k), "{:?}", counts);
            // No duplicates within a class.
            for c in 0..classes {
                let set: BTreeSet<usize> = picks.iter().filter(|p| p.label == c).map(|p| p.candidate).collect();
                prop_assert_eq!(set.len(), k);
            }
        }
    }

    #[test]
    fn global_scheme_total_is_bounded_by_budget(seed in any::<u64>(), pool in 1usize..=64, budget in 0usize..=100) {
        let mut r = rng(seed);
        let emb = grid_rows(&mut r, pool, 2);
        let cents = grid_rows(&mut r, 3, 2);
        let labels: Vec<usize> = (0..pool).map(|i| i % 4).collect();
        let got = select_by_batch_centroid(&emb, &cents, 2, &labels, budget, Distance::L1).unwrap();
        prop_assert_eq!(got.len(), budget.min(pool));
    }

    #[test]
    fn enlarging_the_pool_never_raises_the_best_distance(seed in any::<u64>(), pool in 1usize..=40, extra in 1usize..=24, classes in 1usize..=8, k in 1usize..=10) {
        let mut r = rng(seed);
        let emb = grid_rows(&mut r, pool + extra, 3);
        let cents = grid_rows(&mut r, classes, 3);
        let small = select_by_class_centroid(&emb[..pool * 3], &cents, 3, k, Distance::L1).unwrap();
        let big = select_by_class_centroid(&emb, &cents, 3, k, Distance::L1).unwrap();
        for c in 0..classes {
            let best = |p: &[replaycl::replay::Pick]| p.iter().filter(|p| p.label == c).map(|p| p.distance).fold(f64::INFINITY, f64::min);
            prop_assert!(best(&big) <= best(&small));
        }
        let probs = grid_rows(&mut r, pool + extra, classes);
        let small = select_by_label_distance(&probs[..pool * classes], classes, k, Distance::L2).unwrap();
        let big = select_by_label_distance(&probs, classes, k, Distance::L2).unwrap();
        for c in 0..classes {
            let best = |p: &[replaycl::replay::Pick]| p.iter().filter(|p| p.label == c).map(|p| p.distance).fold(f64::INFINITY, f64::min);
            prop_assert!(best(&big) <= best(&small));
        }
    }

    #[test]
    fn selection_ignores_pool_order(seed in any::<u64>(), pool in 1usize..=64, classes in 1usize..=8, k in 1usize..=10) {
        let mut r = rng(seed);
        // Continuous values: distinct distances with probability one.
        let emb: Vec<f64> = (0..pool * 4).map(|_| r.random_range(-1.0..1.0)).collect();
        let cents: Vec<f64> = (0..classes * 4).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..pool).collect();
        perm.shuffle(&mut r);
        let shuffled: Vec<f64> = perm.iter().flat_map(|&i| emb[i * 4..(i + 1) * 4].to_vec()).collect();
        let a = select_by_class_centroid(&emb, &cents, 4, k, Distance::L1).unwrap();
        let b = select_by_class_centroid(&shuffled, &cents, 4, k, Distance::L1).unwrap();
        let back: Vec<(usize, usize)> = b.iter().map(|p| (perm[p.candidate], p.label)).collect();
        prop_assert_eq!(pairs(&a), back);

        let labels: Vec<usize> = (0..pool).map(|i| i % classes).collect();
        let shuffled_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let a = select_by_batch_centroid(&emb, &cents, 4, &labels, k, Distance::L1).unwrap();
        let b = select_by_batch_centroid(&shuffled, &cents, 4, &shuffled_labels, k, Distance::L1).unwrap();
        let back: Vec<(usize, usize)> = b.iter().map(|p| (perm[p.candidate], p.label)).collect();
        prop_assert_eq!(pairs(&a), back);
    }
}

// ---------------------------------------------------------------- datasets and tasks

fn random_dataset(r: &mut ChaCha8Rng, m: usize, classes: usize, per: usize) -> Dataset {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per {
            features.extend((0..m).map(|_| r.random_range(-10.0f32..10.0)));
            labels.push(c);
        }
    }
    Dataset::new(m, classes, features, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn binary_dataset_round_trips(seed in any::<u64>(), m in 1usize..8, classes in 1usize..6, per in 1usize..6) {
        let ds = random_dataset(&mut rng(seed), m, classes, per);
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.digest(), ds.digest());
    }

    #[test]
    fn task_streams_ignore_row_order_and_keep_splits_disjoint(seed in any::<u64>(), per in 2usize..12) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 3, 7, per);
        let mut perm: Vec<usize> = (0..ds.len()).collect();
        perm.shuffle(&mut r);
        let shuffled = ds.subset(&perm);
        let layout = TaskLayout::new(3, 2, 3);
        let a = build_task_stream(&ds, layout, Strategy::Random, 5, 0.25).unwrap();
        let b = build_task_stream(&shuffled, layout, Strategy::Random, 5, 0.25).unwrap();
        prop_assert_eq!(&a.class_order, &b.class_order);
        for i in 1..=3 {
            let rows = |ds: &Dataset, idx: &[usize]| -> BTreeSet<Vec<u32>> {
                idx.iter().map(|&j| ds.row(j).iter().map(|v| v.to_bits()).collect()).collect()
            };
            prop_assert_eq!(rows(&ds, &a.task(i).train), rows(&shuffled, &b.task(i).train));
            prop_assert_eq!(rows(&ds, &a.task(i).test), rows(&shuffled, &b.task(i).test));
            let train: BTreeSet<usize> = a.task(i).train.iter().copied().collect();
            for j in 1..=3 {
                prop_assert!(a.task(j).test.iter().all(|t| !train.contains(t)));
            }
        }
    }
}

// ---------------------------------------------------------------- reports

fn record(r: &mut ChaCha8Rng, approach: &str, seed: u64, tasks: usize) -> RunRecord {
    RunRecord {
        approach: approach.into(),
        method: "-".into(),
        loss: "-".into(),
        seed,
        tasks: (1..=tasks)
            .map(|t| {
                let acc: f64 = r.random_range(0.0..1.0);
                TaskMetrics {
                    task: t,
                    seen_classes: 2 * t,
                    accuracy: acc,
                    per_class_accuracy: vec![acc; 2 * t],
                    replay_coverage: (t > 1).then_some(t),
                    replay_samples: 0,
                    train_samples: 10,
                }
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn report_round_trips_and_curves_reproduce_mean_and_min(seed in any::<u64>(), seeds in 1u64..6, tasks in 1usize..6) {
        let mut r = rng(seed);
        let mut runs = Vec::new();
        for s in 0..seeds {
            runs.push(record(&mut r, "None", s, tasks));
            runs.push(record(&mut r, "Joint", s, tasks));
        }
        let report = ExperimentReport::build(serde_json::json!({"seed": seed}), runs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.emit(dir.path()).unwrap();
        prop_assert_eq!(&ExperimentReport::load(&dir.path().join("report.json")).unwrap(), &report);

        let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        for g in &report.groups {
            let rows: Vec<Vec<String>> = curves
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
                .filter(|f| f[0] == g.approach)
                .collect();
            prop_assert_eq!(rows.len(), tasks);
            let means: Vec<f64> = rows.iter().map(|f| f[4].parse().unwrap()).collect();
            let mins: Vec<f64> = rows.iter().map(|f| f[5].parse().unwrap()).collect();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let min = mins.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!((mean - g.mean).abs() < 1e-9);
            prop_assert!((min - g.min).abs() < 1e-9);
        }

        // Aggregation does not depend on the order runs arrive in.
        let mut shuffled = report.runs.clone();
        shuffled.shuffle(&mut r);
        let again = ExperimentReport::build(serde_json::json!({"seed": seed}), shuffled).unwrap();
        prop_assert_eq!(again.summary_csv(), report.summary_csv());
        prop_assert_eq!(&again.groups, &report.groups);
    }
}
