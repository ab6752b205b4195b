//! Full-ranking top-K evaluation, degree-group breakdowns, and uniformity
//! diagnostics.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitDataset;
use crate::error::{LagclError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 20;
pub const ANGLE_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: u32,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub evaluated_users: usize,
    pub per_user: Vec<UserMetrics>,
}

/// Descending score, then ascending index.
fn rank_order<T: Scalar>(scores: &[T], a: u32, b: u32) -> Ordering {
    let (sa, sb) = (scores[a as usize], scores[b as usize]);
    sb.partial_cmp(&sa)
        .unwrap_or_else(|| sa.is_nan().cmp(&sb.is_nan()))
        .then(a.cmp(&b))
}

/// Top-`k` items by descending score (ties by ascending index), skipping
/// `exclusions` (sorted ascending).
pub fn rank_items<T: Scalar>(scores: &[T], exclusions: &[u32], k: usize) -> Result<Vec<u32>> {
    if k < 1 {
        return Err(LagclError::config("k", "K must be at least 1"));
    }
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| exclusions.binary_search(i).is_err())
        .collect();
    let cmp = |a: &u32, b: &u32| rank_order(scores, *a, *b);
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    Ok(candidates)
}

/// Recall and binary-gain NDCG of one ranked list against sorted relevant
/// items, with the ideal DCG over `min(|relevant|, k)` positions.
pub fn user_metrics(ranked: &[u32], relevant: &[u32], k: usize) -> (f64, f64) {
    if relevant.is_empty() {
        return (0.0, 0.0);
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.binary_search(item).is_ok() {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..relevant.len().min(k))
        .map(|pos| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    (hits as f64 / relevant.len() as f64, dcg / idcg)
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}

/// Relevant and excluded item lists for every user.
fn targets(split: &SplitDataset, target: EvalTarget) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let train = split.train_by_user();
    match target {
        EvalTarget::Validation => (split.val_by_user(), train),
        EvalTarget::Test => {
            let val = split.val_by_user();
            let excl = train.iter().zip(&val).map(|(t, v)| merge_sorted(t, v)).collect();
            (split.test_by_user(), excl)
        }
    }
}

fn check_embeddings<T: Scalar>(split: &SplitDataset, emb: &Array2<T>) -> Result<()> {
    if emb.nrows() != split.num_nodes() {
        return Err(LagclError::Shape(format!(
            "embeddings have {} rows, dataset has {} nodes",
            emb.nrows(),
            split.num_nodes()
        )));
    }
    Ok(())
}

fn evaluate_users<T: Scalar>(
    split: &SplitDataset,
    emb: &Array2<T>,
    k: usize,
    users: &[u32],
    relevant: &[Vec<u32>],
    excluded: &[Vec<u32>],
) -> Result<Vec<UserMetrics>> {
    let items = emb.slice(ndarray::s![split.num_users.., ..]);
    users
        .par_iter()
        .map(|&u| {
            let scores = items.dot(&emb.row(u as usize));
            let scores = scores.as_slice().expect("fresh vector");
            let ranked = rank_items(scores, &excluded[u as usize], k)?;
            let (recall, ndcg) = user_metrics(&ranked, &relevant[u as usize], k);
            Ok(UserMetrics { user: u, recall, ndcg })
        })
        .collect()
}

fn summarize(k: usize, per_user: Vec<UserMetrics>) -> MetricsReport {
    let n = per_user.len().max(1) as f64;
    MetricsReport {
        k,
        recall: per_user.iter().map(|m| m.recall).sum::<f64>() / n,
        ndcg: per_user.iter().map(|m| m.ndcg).sum::<f64>() / n,
        evaluated_users: per_user.len(),
        per_user,
    }
}

/// Recall@K / NDCG@K averaged over users with a nonempty target set.
/// `embeddings` has users in rows `0..num_users` and items after them.
pub fn metrics<T: Scalar>(
    split: &SplitDataset,
    embeddings: &Array2<T>,
    k: usize,
    target: EvalTarget,
) -> Result<MetricsReport> {
    check_embeddings(split, embeddings)?;
    if k < 1 || k > split.num_items {
        return Err(LagclError::config(
            "k",
            format!("K = {k} must lie in 1..={}", split.num_items),
        ));
    }
    let (relevant, excluded) = targets(split, target);
    let users: Vec<u32> = (0..split.num_users as u32)
        .filter(|&u| !relevant[u as usize].is_empty())
        .collect();
    if users.is_empty() {
        return Err(LagclError::Eval("no users with a nonempty target set".into()));
    }
    let per_user = evaluate_users(split, embeddings, k, &users, &relevant, &excluded)?;
    Ok(summarize(k, per_user))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    /// 1-based, ascending training degree.
    pub group: usize,
    pub users: usize,
    pub mean_train_degree: f64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub k: usize,
    pub groups: Vec<GroupMetrics>,
}

impl GroupReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,users,recall,ndcg\n");
        for g in &self.groups {
            writeln!(out, "{},{},{},{}", g.group, g.users, g.recall, g.ndcg).unwrap();
        }
        out
    }
}

/// Split evaluated users into `groups` near-equal slices by ascending
/// training degree and report metrics per slice.
pub fn degree_group_report<T: Scalar>(
    split: &SplitDataset,
    embeddings: &Array2<T>,
    groups: usize,
    k: usize,
    target: EvalTarget,
) -> Result<GroupReport> {
    let report = metrics(split, embeddings, k, target)?;
    if groups == 0 || report.per_user.len() < groups {
        return Err(LagclError::Eval(format!(
            "{} evaluable users cannot form {groups} groups",
            report.per_user.len()
        )));
    }
    let degree = split.train_user_degrees();
    let mut order = report.per_user;
    order.sort_by(|a, b| {
        degree[a.user as usize]
            .cmp(&degree[b.user as usize])
            .then(a.user.cmp(&b.user))
    });
    let n = order.len();
    let groups = (0..groups)
        .map(|g| {
            let slice = &order[g * n / groups..(g + 1) * n / groups];
            let len = slice.len() as f64;
            GroupMetrics {
                group: g + 1,
                users: slice.len(),
                mean_train_degree: slice.iter().map(|m| degree[m.user as usize] as f64).sum::<f64>() / len,
                recall: slice.iter().map(|m| m.recall).sum::<f64>() / len,
                ndcg: slice.iter().map(|m| m.ndcg).sum::<f64>() / len,
            }
        })
        .collect();
    Ok(GroupReport { k, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    /// `log E[exp(−2‖x̂−ŷ‖²)]` over sampled pairs of L2-normalized rows.
    pub statistic: f64,
    pub sampled_pairs: usize,
    pub samples: usize,
    pub angle_histogram: Vec<u64>,
    pub projection: String,
}

impl UniformityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_bin,count\n");
        for (b, c) in self.angle_histogram.iter().enumerate() {
            writeln!(out, "{b},{c}").unwrap();
        }
        out
    }
}

/// Uniformity statistic plus a 64-bin angle histogram of the rows projected
/// onto their top-2 principal directions and pushed to the unit circle.
/// All-zero rows are ignored.
pub fn uniformity_report<T: Scalar>(
    embeddings: &Array2<T>,
    sample_pairs: usize,
    seed: u64,
) -> Result<UniformityReport> {
    let rows: Vec<Vec<f64>> = embeddings
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<f64>>())
        .filter(|r| r.iter().any(|&v| v != 0.0))
        .collect();
    if rows.len() < 2 {
        return Err(LagclError::Eval("uniformity needs at least 2 nonzero rows".into()));
    }
    let d = rows[0].len();
    let unit: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| v / n).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = unit.len();
    let mut acc = 0.0;
    let pairs = sample_pairs.max(1);
    for _ in 0..pairs {
        let i = rng.gen_range(0..m);
        let mut j = rng.gen_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let sq: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += (-2.0 * sq).exp();
    }
    let statistic = (acc / pairs as f64).ln();

    let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / m as f64).collect();
    let centered = DMatrix::from_fn(m, d, |r, c| rows[r][c] - mean[c]);
    let cov = centered.transpose() * &centered / (m as f64);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        match order.get(k) {
            Some(&c) => eig.eigenvectors.column(c).iter().copied().collect(),
            None => vec![0.0; d],
        }
    };
    let (ax, ay) = (axis(0), axis(1));
    let mut histogram = vec![0u64; ANGLE_BINS];
    for r in 0..m {
        let row = centered.row(r);
        let x: f64 = row.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let y: f64 = row.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let n = (x * x + y * y).sqrt();
        let (x, y) = if n > 0.0 { (x / n, y / n) } else { (x, y) };
        let theta = y.atan2(x);
        let two_pi = 2.0 * std::f64::consts::PI;
        let bin = (((theta + std::f64::consts::PI) / two_pi) * ANGLE_BINS as f64).floor() as usize;
        histogram[bin.min(ANGLE_BINS - 1)] += 1;
    }
    Ok(UniformityReport {
        statistic,
        sampled_pairs: pairs,
        samples: m,
        angle_histogram: histogram,
        projection: "top-2 principal directions of the centered table, unit-circle normalized".into(),
    })
}
