//! Central finite-difference verification of the reverse pass.

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{split_dataset, InteractionDataset, SplitDataset};
use crate::error::{LagclError, Result};
use crate::graph::{BipartiteGraph, DegreePartition};
use crate::ssl::ClDenominator;

use super::config::Hyperparams;
use super::model::{LossWeights, Model, StepInputs};
use super::params::ParameterSet;
use super::{training_graph, StepSampler};

/// Which objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSelector {
    Rec,
    Trans,
    /// Generator side of the adversarial game.
    Gen,
    /// Discriminator objective, differentiated with respect to the
    /// discriminator parameters.
    Disc,
    Cl,
    Reg,
    /// The full weighted generator objective.
    Total,
}

impl LossSelector {
    pub const ALL: [LossSelector; 7] = [
        LossSelector::Rec,
        LossSelector::Trans,
        LossSelector::Gen,
        LossSelector::Disc,
        LossSelector::Cl,
        LossSelector::Reg,
        LossSelector::Total,
    ];

    fn weights(self, hp: &Hyperparams) -> LossWeights {
        let zero = LossWeights { rec: 0.0, trans: 0.0, gen: 0.0, cl: 0.0, reg: 0.0 };
        match self {
            LossSelector::Rec => LossWeights::only_rec(),
            LossSelector::Trans => LossWeights { trans: 1.0, ..zero },
            LossSelector::Gen => LossWeights { gen: 1.0, ..zero },
            LossSelector::Cl => LossWeights { cl: 1.0, ..zero },
            LossSelector::Reg => LossWeights { reg: 1.0, ..zero },
            LossSelector::Total => LossWeights::from_hyperparams(hp),
            LossSelector::Disc => zero,
        }
    }
}

/// 12 users × 10 items, every user with 3 to 6 interactions, every item
/// covered at least once.
pub fn toy_split(seed: u64) -> Result<SplitDataset> {
    let (nu, ni) = (12usize, 10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..nu {
        let count = rng.gen_range(3..=6);
        let picked = rand::seq::index::sample(&mut rng, ni, count);
        let mut items: Vec<u32> = picked.into_iter().map(|i| i as u32).collect();
        items.sort_unstable();
        edges.extend(items.into_iter().map(|i| (u as u32, i)));
    }
    for i in 0..ni as u32 {
        if !edges.iter().any(|&(_, it)| it == i) {
            edges.push((rng.gen_range(0..nu as u32), i));
        }
    }
    let ds = InteractionDataset {
        num_users: nu,
        num_items: ni,
        edges,
        user_map: (0..nu).map(|u| format!("u{u}")).collect::<IndexSet<_>>(),
        item_map: (0..ni).map(|i| format!("i{i}")).collect::<IndexSet<_>>(),
    };
    split_dataset(&ds, [0.8, 0.1, 0.1], seed)
}

/// A small 64-bit problem with every stochastic element of one step drawn
/// and frozen.
pub struct GradInstance {
    pub split: SplitDataset,
    pub hp: Hyperparams,
    pub graph: BipartiteGraph<f64>,
    pub partition: DegreePartition,
    pub params: ParameterSet<f64>,
    pub inputs: StepInputs<f64>,
}

impl GradInstance {
    /// d = 4, L = 2, k = 3 on [`toy_split`]; all parameters (biases
    /// included) randomized so that no gradient path is trivially zero.
    pub fn toy(seed: u64) -> Result<Self> {
        let split = toy_split(seed)?;
        let hp = Hyperparams {
            dim: 4,
            layers: 2,
            k: 3,
            batch_size: 16,
            cl_denominator: ClDenominator::Batch,
            seed,
            ..Hyperparams::default()
        };
        let (graph, partition) = training_graph::<f64>(&split, hp.k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut params = ParameterSet::<f64>::init(split.num_users, split.num_items, hp.dim, hp.layers, &mut rng);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
        let inputs = {
            let mut sampler = StepSampler::new(&hp, &split, &graph, &partition);
            sampler.draw(&params, 0)?
        };
        Ok(GradInstance { split, hp, graph, partition, params, inputs })
    }

    fn model(&self) -> Model<'_, f64> {
        Model::new(&self.graph, &self.partition, &self.hp)
    }

    /// Loss value at `params` with everything else frozen.
    pub fn loss(&self, selector: LossSelector, params: &ParameterSet<f64>) -> Result<f64> {
        let model = self.model();
        let fwd = model.forward(params, &self.inputs)?;
        let value = if selector == LossSelector::Disc {
            let step = model
                .discriminator_step(&fwd, params)?
                .ok_or_else(|| LagclError::config("lambda2", "adversarial branch is inactive"))?;
            step.tail_loss + step.head_loss
        } else {
            model
                .objective(&fwd, params, &self.inputs, &selector.weights(&self.hp), false)?
                .0
                .total
        };
        if !value.is_finite() {
            return Err(LagclError::Divergence { epoch: 0, step: 0, component: format!("{selector:?}") });
        }
        Ok(value)
    }

    /// Implemented gradient; only the tensors `selector` differentiates are
    /// filled.
    pub fn analytic_gradient(&self, selector: LossSelector) -> Result<ParameterSet<f64>> {
        let model = self.model();
        let fwd = model.forward(&self.params, &self.inputs)?;
        if selector == LossSelector::Disc {
            let step = model
                .discriminator_step(&fwd, &self.params)?
                .ok_or_else(|| LagclError::config("lambda2", "adversarial branch is inactive"))?;
            let mut g = self.params.zeros_like();
            g.disc_tail = step.tail_grad;
            g.disc_head = step.head_grad;
            return Ok(g);
        }
        let (_, g) = model.objective(&fwd, &self.params, &self.inputs, &selector.weights(&self.hp), true)?;
        Ok(g.expect("requested"))
    }

    /// Tensor indices perturbed for `selector`.
    fn tensor_range(&self, selector: LossSelector) -> std::ops::Range<usize> {
        let gen = self.params.generator_tensor_count();
        let total = self.params.tensors().len();
        if selector == LossSelector::Disc {
            gen..total
        } else {
            0..gen
        }
    }

    /// `(L(θ+h) − L(θ−h)) / 2h` for every scalar in the selected group.
    pub fn finite_difference_gradient(&self, selector: LossSelector, h: f64) -> Result<ParameterSet<f64>> {
        let mut out = self.params.zeros_like();
        let mut probe = self.params.clone();
        let range = self.tensor_range(selector);
        for t in range {
            let len = self.params.tensors()[t].1.len();
            for e in 0..len {
                let orig = probe.tensors_mut()[t][e];
                probe.tensors_mut()[t][e] = orig + h;
                let plus = self.loss(selector, &probe)?;
                probe.tensors_mut()[t][e] = orig - h;
                let minus = self.loss(selector, &probe)?;
                probe.tensors_mut()[t][e] = orig;
                out.tensors_mut()[t][e] = (plus - minus) / (2.0 * h);
            }
        }
        Ok(out)
    }
}

/// Max over parameters of `|g − g_fd| / max(1e-8, |g_fd| + |g|)`.
pub fn gradient_check(selector: LossSelector, instance: &GradInstance, h: f64) -> Result<f64> {
    let analytic = instance.analytic_gradient(selector)?;
    let numeric = instance.finite_difference_gradient(selector, h)?;
    let range = instance.tensor_range(selector);
    let mut worst = 0.0f64;
    for ((_, a), (_, n)) in analytic
        .tensors()
        .into_iter()
        .zip(numeric.tensors())
        .skip(range.start)
        .take(range.len())
    {
        for (&g, &f) in a.iter().zip(n) {
            let err = (g - f).abs() / (f.abs() + g.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
