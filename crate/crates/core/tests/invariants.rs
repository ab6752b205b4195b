use std::collections::HashSet;

use lagcl::augment::{build_dropped_graph, edge_scores, sample_budgets, EdgeScoreParams, TransferLayer, TransferParams};
use lagcl::dataset::{generate_synthetic, split_dataset};
use lagcl::eval::{degree_group_report, uniformity_report, EvalTarget};
use lagcl::graph::{build_graph, partition_degree, BipartiteGraph};
use lagcl::ssl::{augmented_embeddings, noise_vector, KtScope, NoiseDraws, NoiseSpec};
use lagcl::trainer::{run_variant, sample_bpr_batch, train, Checkpoint, Hyperparams, Variant};
use lagcl::{LagclError, SplitDataset, SyntheticConfig};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_split(seed: u64) -> SplitDataset {
    let cfg = SyntheticConfig {
        num_users: 120,
        num_items: 80,
        power_exponent: 2.1,
        num_blocks: 4,
        edges_target: 1500,
        seed,
    };
    split_dataset(&generate_synthetic(&cfg).unwrap(), [0.7, 0.1, 0.2], seed).unwrap()
}

fn quick_hp(seed: u64) -> Hyperparams {
    Hyperparams {
        dim: 8,
        batch_size: 256,
        epochs: 2,
        k: 10,
        seed,
        ..Hyperparams::default()
    }
}

proptest! {
    #[test]
    fn noise_has_radius_eps_and_follows_signs(
        h in prop::collection::vec(-2.0f64..2.0, 1..16),
        seed in any::<u64>(),
        eps in 0.01f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Array1<f64> = (0..h.len()).map(|_| rng.gen::<f64>()).collect();
        let h = Array1::from(h);
        let delta = noise_vector(h.view(), raw.view(), eps);
        let norm = delta.dot(&delta).sqrt();
        if h.iter().zip(&raw).any(|(&x, &r)| x != 0.0 && r > 0.0) {
            prop_assert!((norm - eps).abs() < 1e-6);
        }
        for (&x, &d) in h.iter().zip(&delta) {
            prop_assert!(x * d >= 0.0);
            if x == 0.0 {
                prop_assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn top_k_retains_the_highest_scores((nu, ni, seed) in (1usize..12, 1usize..12, any::<u64>())) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(u32, u32)> = (0..rng.gen_range(1..=nu * ni))
            .map(|_| (rng.gen_range(0..nu as u32), rng.gen_range(0..ni as u32)))
            .collect();
        let g: BipartiteGraph<f64> = build_graph(&edges, nu, ni).unwrap();
        let d = 3;
        let h0 = Array2::from_shape_simple_fn((nu + ni, d), || rng.gen_range(-1.0..1.0));
        let ws = Array2::from_shape_simple_fn((d, d), || rng.gen_range(-1.0..1.0));
        let k = rng.gen_range(1..5);
        let part = partition_degree(&g, k);
        let budgets = sample_budgets(&g, &part, k, &mut rng);
        let scores = edge_scores(&g, &h0, &EdgeScoreParams { ws }).unwrap();
        let dg = build_dropped_graph(&g, &scores, &budgets, 1.0).unwrap();
        for i in 0..g.num_nodes() {
            let deg = g.degree(i);
            if part.is_head(i) {
                prop_assert!((1..=k).contains(&budgets[i]));
            } else {
                prop_assert_eq!(budgets[i], deg);
            }
            let kept: HashSet<usize> = dg.base_edges(i).iter().copied().collect();
            prop_assert_eq!(kept.len(), budgets[i].min(deg));
            let all: Vec<usize> = g.edge_range(i).collect();
            prop_assert!(kept.iter().all(|e| all.contains(e)));
            for &a in &kept {
                for &b in all.iter().filter(|e| !kept.contains(e)) {
                    prop_assert!(scores[a] >= scores[b]);
                }
            }
        }
    }

    #[test]
    fn splits_partition_the_edges(seed in 0u64..1000) {
        let cfg = SyntheticConfig { num_users: 60, num_items: 40, num_blocks: 3, edges_target: 500, seed, ..SyntheticConfig::default() };
        let ds = generate_synthetic(&cfg).unwrap();
        let split = split_dataset(&ds, [0.7, 0.1, 0.2], seed).unwrap();
        let parts = [&split.train, &split.val, &split.test, &split.dropped];
        let mut seen = HashSet::new();
        for part in parts {
            for e in part.iter() {
                prop_assert!(seen.insert(*e), "edge {:?} in two parts", e);
            }
        }
        let all: HashSet<(u32, u32)> = ds.edges.iter().copied().collect();
        prop_assert_eq!(seen, all);
    }
}

#[test]
fn head_budgets_are_uniform() {
    let edges: Vec<(u32, u32)> = (0..30).map(|i| (0, i)).collect();
    let g: BipartiteGraph<f64> = build_graph(&edges, 1, 30).unwrap();
    let part = partition_degree(&g, 20);
    assert!(part.is_head(0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    let mut counts = [0usize; 20];
    for _ in 0..draws {
        counts[sample_budgets(&g, &part, 20, &mut rng)[0] - 1] += 1;
    }
    let p = 1.0 / 20.0;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let expected = draws as f64 * p;
    let mut chi2 = 0.0;
    for &c in &counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma + 1.0, "{counts:?}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 19 degrees of freedom, p = 0.001
    assert!(chi2 < 43.82, "chi-square {chi2}");
}

#[test]
fn negatives_are_uniform_over_the_complement() {
    let train = vec![(0u32, 0u32), (0, 1)];
    let positives = vec![vec![0u32, 1]];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = sample_bpr_batch(&train, &positives, 5, 100_000, &mut rng);
    assert_eq!(batch.len(), 100_000);
    let mut counts = [0usize; 5];
    for t in &batch {
        counts[t.neg as usize] += 1;
    }
    assert_eq!(counts[0] + counts[1], 0);
    let expected = 100_000.0 / 3.0;
    let sigma = (100_000.0 * (1.0 / 3.0) * (2.0 / 3.0f64)).sqrt();
    let mut chi2 = 0.0;
    for &c in &counts[2..] {
        assert!((c as f64 - expected).abs() < 3.0 * sigma);
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 2 degrees of freedom, p = 0.001
    assert!(chi2 < 13.82);
}

#[test]
fn noise_views_are_reproducible_and_independent() {
    let spec = NoiseSpec { eps: 0.1, seed: 42 };
    let a = NoiseDraws::<f64>::sample(&spec, 7, 4, 2, 3, 0);
    let b = NoiseDraws::<f64>::sample(&spec, 7, 4, 2, 3, 0);
    let c = NoiseDraws::<f64>::sample(&spec, 7, 4, 2, 3, 1);
    assert_eq!(a, b);
    assert_ne!(a.raw, c.raw);
    let h = array![[0.6f64, -0.8]];
    let delta = noise_vector(h.row(0), array![0.3f64, 0.9].view(), 0.1);
    assert!(delta[0] > 0.0 && delta[1] < 0.0);
    assert!((delta.dot(&delta).sqrt() - 0.1).abs() < 1e-12);
}

#[test]
fn augmented_embeddings_match_scalar_oracle() {
    // u0-i0, u0-i1, u1-i0 with d = 1
    let g: BipartiteGraph<f64> = build_graph(&[(0, 0), (0, 1), (1, 0)], 2, 2).unwrap();
    let part = partition_degree(&g, 1);
    let layer = TransferLayer {
        w1: array![[0.7], [-0.4]],
        b1: array![0.1],
        w2: array![[1.3]],
        b2: array![-0.2],
    };
    let tp = TransferParams { layers: vec![layer] };
    let h0 = array![[1.0], [2.0], [3.0], [4.0]];
    let stack = augmented_embeddings(&g, &h0, &tp, 1, KtScope::TailOnly, &part).unwrap();
    let leaky = |x: f64| if x > 0.0 { x } else { 0.2 * x };
    let f = |c: f64, m: f64| leaky(0.7 * c - 0.4 * m + 0.1) * 1.3 - 0.2;
    let s2 = 1.0 / 2f64.sqrt();
    // degrees: u0 2, u1 1, i0 2, i1 1; tail (degree ≤ 1): u1, i1
    let expected = [
        0.5 * 3.0 + s2 * 4.0,
        s2 * 3.0 + f(2.0, 3.0),
        0.5 * 1.0 + s2 * 2.0,
        s2 * 1.0 + f(4.0, 1.0),
    ];
    for (i, e) in expected.iter().enumerate() {
        assert!((stack.layers[1][[i, 0]] - e).abs() < 1e-9, "node {i}");
    }
    let zero = TransferParams::zeros(1, 1);
    let plain = augmented_embeddings(&g, &h0, &zero, 1, KtScope::AllNodes, &part).unwrap();
    assert!((plain.layers[1][[1, 0]] - s2 * 3.0).abs() < 1e-12);
}

#[test]
fn synthetic_degrees_are_long_tailed() {
    let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let mut deg = ds.user_degrees();
    deg.sort_unstable();
    let decile = deg.len() / 10;
    let low: usize = deg[..decile].iter().sum();
    let high: usize = deg[deg.len() - decile..].iter().sum();
    assert!(high > 10 * low, "top decile {high}, bottom decile {low}");

    // least-squares slope of log degree against log rank
    let mut desc = deg.clone();
    desc.reverse();
    let pts: Vec<(f64, f64)> = desc
        .iter()
        .enumerate()
        .map(|(r, &d)| (((r + 1) as f64).ln(), (d as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let target = -1.0 / (2.1 - 1.0);
    assert!((slope - target).abs() <= 0.4, "slope {slope}, target {target}");
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let split = small_split(1);
    let hp = Hyperparams { epochs: 1, ..quick_hp(1) };
    let outcome = train::<f32>(&split, &hp, |_| {}).unwrap();
    let ckpt = outcome.checkpoint(&hp, split.num_users, split.num_items);
    let dir = tempfile::tempdir().unwrap();
    let [manifest, tensors] = ckpt.save(dir.path()).unwrap();
    let loaded = Checkpoint::load(dir.path()).unwrap();
    assert_eq!(loaded, ckpt);

    let wrong_d = Hyperparams { dim: 16, ..hp.clone() };
    assert!(matches!(Checkpoint::load_for(dir.path(), &wrong_d), Err(LagclError::Shape(_))));
    assert!(Checkpoint::load_for(dir.path(), &hp).is_ok());

    let bytes = std::fs::read(&tensors).unwrap();
    std::fs::write(&tensors, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(Checkpoint::load(dir.path()), Err(LagclError::Corrupt(_))));
    std::fs::write(&tensors, &bytes).unwrap();

    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replacen("\"version\": 1", "\"version\": 99", 1)).unwrap();
    assert!(matches!(Checkpoint::load(dir.path()), Err(LagclError::Version { found: 99, .. })));
}

#[test]
fn fixed_seed_training_is_bit_identical() {
    let split = small_split(2);
    let hp = quick_hp(7);
    let a = train::<f32>(&split, &hp, |_| {}).unwrap();
    let b = train::<f32>(&split, &hp, |_| {}).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.embeddings, b.embeddings);
    let strip = |o: &lagcl::TrainOutcome<f32>| {
        o.log
            .iter()
            .map(|r| (r.epoch, r.loss.clone(), r.val_recall, r.val_ndcg))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.checkpoint(&hp, split.num_users, split.num_items).save(da.path()).unwrap();
    b.checkpoint(&hp, split.num_users, split.num_items).save(db.path()).unwrap();
    for name in ["checkpoint.json", "tensors.bin"] {
        assert_eq!(std::fs::read(da.path().join(name)).unwrap(), std::fs::read(db.path().join(name)).unwrap());
    }

    let other = train::<f32>(&split, &Hyperparams { seed: 8, ..hp }, |_| {}).unwrap();
    assert_ne!(other.params, a.params);
}

#[test]
fn zero_weights_without_transfer_reproduce_lightgcn() {
    let split = small_split(3);
    let base = quick_hp(5);
    let zeroed = Hyperparams {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        use_kt: false,
        ..base.clone()
    };
    let (plain, plain_out) = run_variant(&split, &zeroed, Variant::Full).unwrap();
    let (light, light_out) = run_variant(&split, &base, Variant::LightGcn).unwrap();
    assert_eq!(plain_out.embeddings, light_out.embeddings);
    assert_eq!((plain.recall, plain.ndcg), (light.recall, light.ndcg));
}

#[test]
fn training_improves_on_initialization() {
    let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let split = split_dataset(&ds, [0.7, 0.1, 0.2], 0).unwrap();
    let hp = Hyperparams { epochs: 3, ..Hyperparams::default() };
    let out = train::<f32>(&split, &hp, |_| {}).unwrap();
    let initial = out.summary.initial_val_recall.unwrap();
    let best = out.summary.best_val_recall.unwrap();
    assert!(best > initial, "best {best} vs initial {initial}");
    assert!(out.log.iter().all(|r| r.loss.non_finite().is_none()));
}

#[test]
fn lowest_degree_group_has_lowest_mean_degree() {
    let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let split = split_dataset(&ds, [0.7, 0.1, 0.2], 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let emb = Array2::from_shape_simple_fn((split.num_nodes(), 8), || rng.gen_range(-1.0..1.0));
    let report = degree_group_report(&split, &emb, 10, 20, EvalTarget::Test).unwrap();
    assert_eq!(report.groups.len(), 10);
    assert!(report.groups[0].mean_train_degree < report.groups[9].mean_train_degree);
}

#[test]
fn spread_embeddings_are_more_uniform_than_a_cluster() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spread: Array2<f64> = Array2::from_shape_simple_fn((10_000, 8), || rng.gen_range(-1.0..1.0));
    let cluster: Array2<f64> = Array2::from_shape_simple_fn((10_000, 8), || 5.0 + rng.gen_range(-0.1..0.1));
    let a = uniformity_report(&spread, 20_000, 1).unwrap();
    let b = uniformity_report(&cluster, 20_000, 1).unwrap();
    assert!(a.statistic < b.statistic);
    assert_eq!(a.angle_histogram.iter().sum::<u64>() as usize, a.samples);
}
