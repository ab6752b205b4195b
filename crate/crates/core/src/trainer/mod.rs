//! Multi-task training: BPR plus translation, adversarial and contrastive
//! terms, alternating discriminator/generator updates, early stopping on
//! validation Recall@K, checkpoints, and the finite-difference oracle.

mod ablation;
mod bpr;
mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod params;

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{k_sweep, run_variant, summarize_run, VariantResult, DEGREE_GROUPS, TAIL_GROUPS, UNIFORMITY_PAIRS};
pub use bpr::{bpr_loss, bpr_loss_grad, sample_bpr_batch, BprTriple, MAX_NEGATIVE_TRIES};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{Hyperparams, Variant};
pub use gradcheck::{gradient_check, toy_split, GradInstance, LossSelector};
pub use model::{total_loss, ForwardPass, LossBreakdown, LossWeights, Model, StepInputs};
pub use params::{Adam, ParameterSet};

use crate::augment::{build_dropped_graph, edge_scores, random_dropped_graph, restrict_sides, sample_budgets};
use crate::dataset::SplitDataset;
use crate::error::{LagclError, Result};
use crate::eval::{metrics, EvalTarget};
use crate::graph::{build_graph, partition_degree, BipartiteGraph, DegreePartition};
use crate::scalar::Scalar;
use crate::ssl::{stream_seed, ClDenominator, NoiseDraws, NoiseSpec};

/// Independent random streams, so switching one module off never shifts
/// the draws seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Stream {
    Init = 1,
    Batch = 2,
    Budget = 3,
    Selection = 4,
    Noise = 5,
}

fn stream_rng(seed: u64, s: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, s as u64, 0, 0, 0))
}

/// One line of the epoch log. Epoch 0 is the evaluation at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Mean per-step component losses.
    pub loss: LossBreakdown,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub initial_val_recall: Option<f64>,
    pub epochs_run: usize,
    pub total_steps: usize,
    pub stopped_early: bool,
    pub final_loss: LossBreakdown,
}

pub struct TrainOutcome<T> {
    pub params: ParameterSet<T>,
    pub embeddings: Array2<T>,
    pub log: Vec<EpochRecord>,
    pub summary: TrainingSummary,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn checkpoint(&self, hp: &Hyperparams, num_users: usize, num_items: usize) -> Checkpoint {
        Checkpoint {
            hyperparams: hp.clone(),
            num_users,
            num_items,
            summary: self.summary.clone(),
            params: self.params.cast(),
            embeddings: self.embeddings.mapv(|v| v.as_f64() as f32),
        }
    }
}

/// Training graph and degree partition of a split.
pub fn training_graph<T: Scalar>(split: &SplitDataset, k: usize) -> Result<(BipartiteGraph<T>, DegreePartition)> {
    let g = build_graph::<T>(&split.train, split.num_users, split.num_items)?;
    let part = partition_degree(&g, k);
    Ok((g, part))
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Draws for one optimization step.
struct StepSampler<'a, T> {
    hp: &'a Hyperparams,
    split: &'a SplitDataset,
    graph: &'a BipartiteGraph<T>,
    partition: &'a DegreePartition,
    positives: Vec<Vec<u32>>,
    batch_rng: ChaCha8Rng,
    budget_rng: ChaCha8Rng,
    select_rng: ChaCha8Rng,
    noise_root: u64,
}

impl<'a, T: Scalar> StepSampler<'a, T> {
    fn new(hp: &'a Hyperparams, split: &'a SplitDataset, graph: &'a BipartiteGraph<T>, partition: &'a DegreePartition) -> Self {
        StepSampler {
            hp,
            split,
            graph,
            partition,
            positives: split.train_by_user(),
            batch_rng: stream_rng(hp.seed, Stream::Batch),
            budget_rng: stream_rng(hp.seed, Stream::Budget),
            select_rng: stream_rng(hp.seed, Stream::Selection),
            noise_root: stream_seed(hp.seed, Stream::Noise as u64, 0, 0, 0),
        }
    }

    fn draw(&mut self, params: &ParameterSet<T>, step: u64) -> Result<StepInputs<T>> {
        let hp = self.hp;
        let triples = sample_bpr_batch(
            &self.split.train,
            &self.positives,
            self.split.num_items,
            hp.batch_size,
            &mut self.batch_rng,
        );
        let selection = if hp.dropped_active() {
            let mut budgets = sample_budgets(self.graph, self.partition, hp.k, &mut self.budget_rng);
            restrict_sides(self.graph, &mut budgets, hp.augment_sides);
            Some(if hp.use_auto_drop {
                let scores = edge_scores(self.graph, &params.h0, &params.edge)?;
                build_dropped_graph(self.graph, &scores, &budgets, T::of(hp.delta))?
            } else {
                random_dropped_graph(self.graph, &budgets, &mut self.select_rng)
            })
        } else {
            None
        };
        let (views, cl_users, cl_items) = if hp.cl_active() {
            let spec = NoiseSpec { eps: hp.eps, seed: self.noise_root };
            let n = self.graph.num_nodes();
            let views = [0, 1].map(|v| NoiseDraws::sample(&spec, n, hp.dim, hp.layers, step, v));
            let nu = self.split.num_users;
            let (users, items) = match hp.cl_denominator {
                ClDenominator::Batch => (
                    sorted_unique(triples.iter().map(|t| t.user as usize).collect()),
                    sorted_unique(triples.iter().map(|t| nu + t.pos as usize).collect()),
                ),
                ClDenominator::All => ((0..nu).collect(), (nu..n).collect()),
            };
            (Some(views), users, items)
        } else {
            (None, Vec::new(), Vec::new())
        };
        Ok(StepInputs {
            triples,
            selection,
            views,
            cl_users,
            cl_items,
        })
    }
}

fn validation<T: Scalar>(split: &SplitDataset, emb: &Array2<T>, k: usize) -> Result<Option<(f64, f64)>> {
    if split.val.is_empty() {
        return Ok(None);
    }
    let k = k.min(split.num_items);
    let r = metrics(split, emb, k, EvalTarget::Validation)?;
    Ok(Some((r.recall, r.ndcg)))
}

/// Train on `split.train`, selecting parameters by validation Recall@K.
/// `on_epoch` sees every log record as soon as it is produced.
pub fn train<T: Scalar>(
    split: &SplitDataset,
    hp: &Hyperparams,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(LagclError::EmptyDataset("training split has no interactions".into()));
    }
    let (graph, partition) = training_graph::<T>(split, hp.k)?;
    let model = Model::new(&graph, &partition, hp);
    let mut init_rng = stream_rng(hp.seed, Stream::Init);
    let mut params = ParameterSet::<T>::init(split.num_users, split.num_items, hp.dim, hp.layers, &mut init_rng);
    let weights = LossWeights::from_hyperparams(hp);
    let mut sampler = StepSampler::new(hp, split, &graph, &partition);
    let mut gen_opt = Adam::<T>::new(hp.learning_rate);
    let mut disc_opt = Adam::<T>::new(hp.disc_learning_rate);
    let gen_count = params.generator_tensor_count();
    let steps_per_epoch = split.train.len().div_ceil(hp.batch_size);

    let started = Instant::now();
    let init_val = validation(split, &model.embeddings(&params)?, hp.eval_k)?;
    let mut best = (0usize, init_val.map(|v| v.0), params.clone());
    let mut log = vec![EpochRecord {
        epoch: 0,
        steps: 0,
        loss: LossBreakdown::default(),
        val_recall: init_val.map(|v| v.0),
        val_ndcg: init_val.map(|v| v.1),
        best_epoch: 0,
        wall_seconds: started.elapsed().as_secs_f64(),
    }];
    on_epoch(&log[0]);

    let mut step: u64 = 0;
    let mut stopped_early = false;
    let mut last_loss = LossBreakdown::default();
    let mut epochs_run = 0;
    // reused so the discriminator update does not reallocate H0-sized zeros
    let mut disc_grad_holder: Option<ParameterSet<T>> = None;
    for epoch in 1..=hp.epochs {
        let epoch_start = Instant::now();
        let mut sum = LossBreakdown::default();
        for s in 0..steps_per_epoch {
            let inputs = sampler.draw(&params, step)?;
            let fwd = model.forward(&params, &inputs)?;
            let mut disc_loss = 0.0;
            if hp.adversarial_active() {
                for round in 0..hp.disc_steps {
                    let Some(ds) = model.discriminator_step(&fwd, &params)? else { break };
                    if round == 0 {
                        disc_loss = (ds.tail_loss + ds.head_loss).as_f64();
                    }
                    let mut grads = disc_grad_holder.take().unwrap_or_else(|| params.zeros_like());
                    grads.disc_tail = ds.tail_grad;
                    grads.disc_head = ds.head_grad;
                    let g = grads.tensors().into_iter().skip(gen_count).map(|(_, t)| t).collect();
                    let p = params.tensors_mut().into_iter().skip(gen_count).collect();
                    disc_opt.step(p, g);
                    disc_grad_holder = Some(grads);
                }
            }
            let (mut loss, grads) = model.objective(&fwd, &params, &inputs, &weights, true)?;
            loss.disc = disc_loss;
            if let Some(component) = loss.non_finite() {
                return Err(LagclError::Divergence { epoch, step: s, component: component.into() });
            }
            let grads = grads.expect("requested");
            if !grads.all_finite() {
                return Err(LagclError::Divergence { epoch, step: s, component: "gradient".into() });
            }
            let g: Vec<&[T]> = grads.tensors().into_iter().take(gen_count).map(|(_, t)| t).collect();
            let p: Vec<&mut [T]> = params.tensors_mut().into_iter().take(gen_count).collect();
            gen_opt.step(p, g);
            sum.add(&loss);
            step += 1;
        }
        epochs_run = epoch;
        last_loss = sum.scaled(1.0 / steps_per_epoch as f64);
        let val = validation(split, &model.embeddings(&params)?, hp.eval_k)?;
        match (val, best.1) {
            (Some((r, _)), Some(b)) if r > b => best = (epoch, Some(r), params.clone()),
            (None, _) => best = (epoch, None, params.clone()),
            _ => {}
        }
        let record = EpochRecord {
            epoch,
            steps: steps_per_epoch,
            loss: last_loss,
            val_recall: val.map(|v| v.0),
            val_ndcg: val.map(|v| v.1),
            best_epoch: best.0,
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} val recall {:?} (best epoch {})",
            record.loss.total,
            record.val_recall,
            best.0
        );
        on_epoch(&record);
        log.push(record);
        if val.is_some() && epoch - best.0 >= hp.patience {
            stopped_early = epoch < hp.epochs;
            break;
        }
    }

    let (best_epoch, best_val_recall, best_params) = best;
    let embeddings = model.embeddings(&best_params)?;
    Ok(TrainOutcome {
        params: best_params,
        embeddings,
        log,
        summary: TrainingSummary {
            best_epoch,
            best_val_recall,
            initial_val_recall: init_val.map(|v| v.0),
            epochs_run,
            total_steps: step as usize,
            stopped_early,
            final_loss: last_loss,
        },
    })
}
