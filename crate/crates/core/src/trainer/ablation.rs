//! Train-and-evaluate runs for ablation variants and the degree-threshold
//! sweep.

use serde::{Deserialize, Serialize};

use crate::dataset::SplitDataset;
use crate::error::Result;
use crate::eval::{degree_group_report, metrics, uniformity_report, EvalTarget};

use super::config::{Hyperparams, Variant};
use super::{train, TrainOutcome};

/// Degree groups used for the tail breakdown.
pub const DEGREE_GROUPS: usize = 10;
/// Lowest-degree groups averaged into `tail_recall`.
pub const TAIL_GROUPS: usize = 3;
pub const UNIFORMITY_PAIRS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    pub k: usize,
    pub seed: u64,
    pub recall: f64,
    pub ndcg: f64,
    /// Mean test Recall over the lowest-degree user groups.
    pub tail_recall: f64,
    /// Uniformity statistic of the user embeddings (lower is more uniform).
    pub user_uniformity: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

impl VariantResult {
    pub const CSV_HEADER: &'static str = "variant,k,seed,recall,ndcg,tail_recall,user_uniformity,best_epoch,epochs_run";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.variant,
            self.k,
            self.seed,
            self.recall,
            self.ndcg,
            self.tail_recall,
            self.user_uniformity,
            self.best_epoch,
            self.epochs_run
        )
    }
}

/// Test-split summary of a finished run.
pub fn summarize_run(
    split: &SplitDataset,
    hp: &Hyperparams,
    name: &str,
    outcome: &TrainOutcome<f32>,
) -> Result<VariantResult> {
    let k = hp.eval_k.min(split.num_items);
    let report = metrics(split, &outcome.embeddings, k, EvalTarget::Test)?;
    let groups = degree_group_report(split, &outcome.embeddings, DEGREE_GROUPS, k, EvalTarget::Test)?;
    let tail_recall = groups.groups[..TAIL_GROUPS].iter().map(|g| g.recall).sum::<f64>() / TAIL_GROUPS as f64;
    let users = outcome.embeddings.slice(ndarray::s![..split.num_users, ..]).to_owned();
    let uniformity = uniformity_report(&users, UNIFORMITY_PAIRS, hp.seed)?;
    Ok(VariantResult {
        variant: name.to_string(),
        k: hp.k,
        seed: hp.seed,
        recall: report.recall,
        ndcg: report.ndcg,
        tail_recall,
        user_uniformity: uniformity.statistic,
        best_epoch: outcome.summary.best_epoch,
        epochs_run: outcome.summary.epochs_run,
    })
}

/// Train `variant` over `base` and summarize it on the test split.
pub fn run_variant(split: &SplitDataset, base: &Hyperparams, variant: Variant) -> Result<(VariantResult, TrainOutcome<f32>)> {
    let hp = variant.apply(base);
    let outcome = train::<f32>(split, &hp, |_| {})?;
    let result = summarize_run(split, &hp, variant.name(), &outcome)?;
    Ok((result, outcome))
}

/// `variant` at each degree threshold `k`.
pub fn k_sweep(split: &SplitDataset, base: &Hyperparams, variant: Variant, ks: &[usize]) -> Result<Vec<VariantResult>> {
    ks.iter()
        .map(|&k| {
            let hp = Hyperparams { k, ..base.clone() };
            run_variant(split, &hp, variant).map(|(r, _)| r)
        })
        .collect()
}
