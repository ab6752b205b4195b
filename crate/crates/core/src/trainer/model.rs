//! One optimization step's forward branches, the combined objective, and its
//! reverse pass.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::adversarial::{discriminator_loss_grad, generator_loss_grad, DiscriminatorStep};
use crate::augment::{edge_scores, edge_scores_backward, DroppedGraph};
use crate::error::Result;
use crate::graph::{readout, BipartiteGraph, DegreePartition};
use crate::scalar::Scalar;
use crate::ssl::{info_nce_grad, perturbed_trace, view_readout, NoiseDraws};
use crate::stack::{backward_stack, forward_stack, Operator, StackTrace};

use super::bpr::{bpr_loss_grad, BprTriple};
use super::config::Hyperparams;
use super::params::{zero_transfer_grads, ParameterSet};

/// Per-component loss values of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub trans: f64,
    pub gen: f64,
    pub cl: f64,
    pub reg: f64,
    pub disc: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// First non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("rec", self.rec),
            ("trans", self.trans),
            ("gen", self.gen),
            ("cl", self.cl),
            ("reg", self.reg),
            ("disc", self.disc),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(k, _)| k)
    }

    pub fn scaled(&self, s: f64) -> Self {
        LossBreakdown {
            rec: self.rec * s,
            trans: self.trans * s,
            gen: self.gen * s,
            cl: self.cl * s,
            reg: self.reg * s,
            disc: self.disc * s,
            total: self.total * s,
        }
    }

    pub fn add(&mut self, o: &LossBreakdown) {
        self.rec += o.rec;
        self.trans += o.trans;
        self.gen += o.gen;
        self.cl += o.cl;
        self.reg += o.reg;
        self.disc += o.disc;
        self.total += o.total;
    }
}

/// Multipliers of the generator objective components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub trans: f64,
    pub gen: f64,
    pub cl: f64,
    pub reg: f64,
}

impl LossWeights {
    /// Weights of the training objective; switched-off modules weigh zero.
    pub fn from_hyperparams(hp: &Hyperparams) -> Self {
        LossWeights {
            rec: 1.0,
            trans: if hp.trans_active() { hp.lambda1 } else { 0.0 },
            gen: if hp.adversarial_active() { hp.lambda2 } else { 0.0 },
            cl: if hp.cl_active() { hp.lambda3 } else { 0.0 },
            reg: hp.lambda4,
        }
    }

    pub fn only_rec() -> Self {
        LossWeights { rec: 1.0, trans: 0.0, gen: 0.0, cl: 0.0, reg: 0.0 }
    }
}

/// `L_rec + λ1 L_trans + λ2 L_gen + λ3 L_cl + λ4 ‖Θ‖²`.
pub fn total_loss(rec: f64, trans: f64, gen: f64, cl: f64, theta_sq: f64, w: &LossWeights) -> f64 {
    w.rec * rec + w.trans * trans + w.gen * gen + w.cl * cl + w.reg * theta_sq
}

/// Stochastic state of one step, frozen across the forward and reverse
/// passes (and across finite-difference probes).
#[derive(Debug, Clone)]
pub struct StepInputs<T> {
    pub triples: Vec<BprTriple>,
    /// Retained neighbor sets; learnable weights are recomputed from the
    /// current scores on every forward.
    pub selection: Option<DroppedGraph<T>>,
    pub views: Option<[NoiseDraws<T>; 2]>,
    /// Node indices entering the user-side and item-side InfoNCE terms.
    pub cl_users: Vec<usize>,
    pub cl_items: Vec<usize>,
}

/// Forward traces of every active branch.
pub struct ForwardPass<T> {
    dropped: Option<DroppedGraph<T>>,
    full: Option<StackTrace<T>>,
    rec: StackTrace<T>,
    pub rec_embeddings: Array2<T>,
    hat: Option<StackTrace<T>>,
    /// Separate pseudo-tail trace; absent when it coincides with `hat`.
    tilde: Option<StackTrace<T>>,
    views: Option<[StackTrace<T>; 2]>,
}

impl<T: Scalar> ForwardPass<T> {
    fn tilde_trace(&self) -> Option<&StackTrace<T>> {
        self.tilde.as_ref().or(self.hat.as_ref())
    }

    pub fn dropped(&self) -> Option<&DroppedGraph<T>> {
        self.dropped.as_ref()
    }
}

pub struct Model<'a, T> {
    pub graph: &'a BipartiteGraph<T>,
    pub partition: &'a DegreePartition,
    pub hp: &'a Hyperparams,
    kt_rows: Vec<usize>,
    all_rows: Vec<usize>,
}

fn scaled<T: Scalar>(g: &Array2<T>, s: f64) -> Array2<T> {
    let s = T::of(s);
    g.mapv(|v| v * s)
}

fn zero_layers<T: Scalar>(n: usize, d: usize, layers: usize) -> Vec<Array2<T>> {
    (0..=layers).map(|_| Array2::zeros((n, d))).collect()
}

impl<'a, T: Scalar> Model<'a, T> {
    pub fn new(graph: &'a BipartiteGraph<T>, partition: &'a DegreePartition, hp: &'a Hyperparams) -> Self {
        Model {
            graph,
            partition,
            hp,
            kt_rows: hp.kt_scope.rows(partition),
            all_rows: (0..graph.num_nodes()).collect(),
        }
    }

    fn transfer<'p>(&self, params: &'p ParameterSet<T>) -> Option<&'p crate::augment::TransferParams<T>> {
        if self.hp.kt_active() {
            Some(&params.transfer)
        } else {
            None
        }
    }

    /// Recommendation embeddings: full-graph propagation with the transfer
    /// term on the configured rows, averaged over layers `0..=L`.
    pub fn embeddings(&self, params: &ParameterSet<T>) -> Result<Array2<T>> {
        let trace = forward_stack(
            Operator::Full(self.graph),
            &params.h0,
            self.transfer(params),
            &self.kt_rows,
            None,
            self.hp.layers,
        );
        readout(&trace.stack)
    }

    pub fn forward(&self, params: &ParameterSet<T>, inputs: &StepInputs<T>) -> Result<ForwardPass<T>> {
        let layers = self.hp.layers;
        let transfer = self.transfer(params);
        let rec = forward_stack(Operator::Full(self.graph), &params.h0, transfer, &self.kt_rows, None, layers);
        let rec_embeddings = readout(&rec.stack)?;

        let mut dropped = inputs.selection.clone();
        if let Some(dg) = dropped.as_mut() {
            if dg.is_learnable() {
                dg.reweight(&edge_scores(self.graph, &params.h0, &params.edge)?);
            }
        }
        let (full, hat, tilde) = match &dropped {
            Some(dg) => {
                let full = forward_stack(Operator::Full(self.graph), &params.h0, None, &[], None, layers);
                let hat = forward_stack(Operator::Dropped(dg), &params.h0, transfer, &self.all_rows, None, layers);
                let tilde = transfer.map(|_| forward_stack(Operator::Dropped(dg), &params.h0, None, &[], None, layers));
                (Some(full), Some(hat), tilde)
            }
            None => (None, None, None),
        };
        let views = inputs.views.as_ref().map(|draws| {
            [0, 1].map(|v| perturbed_trace(self.graph, &params.h0, transfer, &self.kt_rows, &draws[v], layers))
        });
        Ok(ForwardPass {
            dropped,
            full,
            rec,
            rec_embeddings,
            hat,
            tilde,
            views,
        })
    }

    /// Discriminator objective on detached real / pseudo-tail / pseudo-head
    /// readouts.
    pub fn discriminator_step(&self, fwd: &ForwardPass<T>, params: &ParameterSet<T>) -> Result<Option<DiscriminatorStep<T>>> {
        let (Some(full), Some(tilde), Some(hat)) = (&fwd.full, fwd.tilde_trace(), &fwd.hat) else {
            return Ok(None);
        };
        let h = readout(&full.stack)?;
        let ht = readout(&tilde.stack)?;
        let hh = readout(&hat.stack)?;
        Ok(Some(discriminator_loss_grad(
            &h,
            &ht,
            &hh,
            self.partition,
            &params.disc_tail,
            &params.disc_head,
        )))
    }

    /// Weighted objective and, when `need_grad`, its gradient with respect
    /// to the generator group (discriminator entries stay zero).
    pub fn objective(
        &self,
        fwd: &ForwardPass<T>,
        params: &ParameterSet<T>,
        inputs: &StepInputs<T>,
        w: &LossWeights,
        need_grad: bool,
    ) -> Result<(LossBreakdown, Option<ParameterSet<T>>)> {
        let n = self.graph.num_nodes();
        let d = params.dim();
        let layers = self.hp.layers;
        let mut out = LossBreakdown::default();

        let mut g_rec = zero_layers::<T>(n, d, layers);
        let mut g_full = zero_layers::<T>(n, d, layers);
        let mut g_hat = zero_layers::<T>(n, d, layers);
        let mut g_tilde = zero_layers::<T>(n, d, layers);
        let mut g_views = [zero_layers::<T>(n, d, layers), zero_layers::<T>(n, d, layers)];
        let (mut use_full, mut use_hat, mut use_tilde, mut use_views) = (false, false, false, false);

        // recommendation
        let (rec_loss, rec_grad) = bpr_loss_grad(&fwd.rec_embeddings, &inputs.triples, self.graph.num_users);
        out.rec = rec_loss.as_f64();
        if need_grad && w.rec != 0.0 {
            let g = scaled(&rec_grad, w.rec / (layers + 1) as f64);
            for gl in g_rec.iter_mut() {
                gl.assign(&g);
            }
        }

        // translation on head nodes, layers 1..=L
        if let (Some(full), Some(hat), true) = (&fwd.full, &fwd.hat, self.hp.kt_active()) {
            let mut loss = T::zero();
            let two_w = T::of(2.0 * w.trans);
            for l in 1..=layers {
                let (a, b) = (&full.layers()[l], &hat.layers()[l]);
                for i in self.partition.head_nodes() {
                    for c in 0..d {
                        let diff = a[[i, c]] - b[[i, c]];
                        loss += diff * diff;
                        if need_grad && w.trans != 0.0 {
                            g_full[l][[i, c]] += two_w * diff;
                            g_hat[l][[i, c]] -= two_w * diff;
                        }
                    }
                }
            }
            out.trans = loss.as_f64();
            use_full |= need_grad && w.trans != 0.0;
            use_hat |= need_grad && w.trans != 0.0;
        }

        // generator side of the adversarial game
        if let (Some(tilde), Some(hat), true) = (fwd.tilde_trace(), &fwd.hat, self.hp.adversarial_active()) {
            let ht = readout(&tilde.stack)?;
            let hh = readout(&hat.stack)?;
            let (loss, gt, gh) = generator_loss_grad(&ht, &hh, self.partition, &params.disc_tail, &params.disc_head);
            out.gen = loss.as_f64();
            if need_grad && w.gen != 0.0 {
                let s = w.gen / (layers + 1) as f64;
                let (gt, gh) = (scaled(&gt, s), scaled(&gh, s));
                let tilde_target = if fwd.tilde.is_some() { &mut g_tilde } else { &mut g_hat };
                for gl in tilde_target.iter_mut() {
                    *gl += &gt;
                }
                for gl in g_hat.iter_mut() {
                    *gl += &gh;
                }
                use_hat = true;
                use_tilde = fwd.tilde.is_some();
            }
        }

        // contrastive views, readout over layers 1..=L
        if let Some(views) = &fwd.views {
            let a = view_readout(&views[0].stack);
            let b = view_readout(&views[1].stack);
            let tau = T::of(self.hp.tau);
            let (lu, gau, gbu) = info_nce_grad(&a, &b, &inputs.cl_users, tau)?;
            let (li, gai, gbi) = info_nce_grad(&a, &b, &inputs.cl_items, tau)?;
            out.cl = (lu + li).as_f64();
            if need_grad && w.cl != 0.0 {
                let s = w.cl / layers as f64;
                let ga = scaled(&(gau + gai), s);
                let gb = scaled(&(gbu + gbi), s);
                for l in 1..=layers {
                    g_views[0][l].assign(&ga);
                    g_views[1][l].assign(&gb);
                }
                use_views = true;
            }
        }

        let theta_sq = params.generator_sq_norm();
        out.reg = theta_sq.as_f64();
        out.total = total_loss(out.rec, out.trans, out.gen, out.cl, out.reg, w);
        if !need_grad {
            return Ok((out, None));
        }

        let mut grads = params.zeros_like();
        let transfer = self.transfer(params);
        let mut tgrads = zero_transfer_grads::<T>(d, layers);
        let mut norm_grad = fwd.dropped.as_ref().map(|dg| vec![T::zero(); dg.num_edges()]);

        if w.rec != 0.0 {
            grads.h0 += &backward_stack(Operator::Full(self.graph), &fwd.rec, transfer, g_rec, Some(&mut tgrads), None);
        }
        if use_full {
            if let Some(full) = &fwd.full {
                grads.h0 += &backward_stack(Operator::Full(self.graph), full, None, g_full, None, None);
            }
        }
        if let Some(dg) = &fwd.dropped {
            if use_hat {
                let hat = fwd.hat.as_ref().expect("hat exists with a dropped graph");
                grads.h0 += &backward_stack(
                    Operator::Dropped(dg),
                    hat,
                    transfer,
                    g_hat,
                    Some(&mut tgrads),
                    norm_grad.as_mut(),
                );
            }
            if use_tilde {
                let tilde = fwd.tilde.as_ref().expect("checked");
                grads.h0 += &backward_stack(Operator::Dropped(dg), tilde, None, g_tilde, None, norm_grad.as_mut());
            }
            if dg.is_learnable() && (use_hat || use_tilde) {
                let ng = norm_grad.as_ref().expect("allocated with the dropped graph");
                let gs = dg.norm_backward(ng, self.graph.num_directed_edges());
                let (dh, dws) = edge_scores_backward(self.graph, &params.h0, &params.edge, &gs);
                grads.h0 += &dh;
                grads.edge.ws += &dws;
            }
        }
        if use_views {
            let views = fwd.views.as_ref().expect("checked");
            let [g0, g1] = g_views;
            for (trace, g) in views.iter().zip([g0, g1]) {
                grads.h0 += &backward_stack(Operator::Full(self.graph), trace, transfer, g, Some(&mut tgrads), None);
            }
        }
        if transfer.is_some() {
            grads.add_transfer_grads(&tgrads);
        }
        if w.reg != 0.0 {
            let count = params.generator_tensor_count();
            let two_w = T::of(2.0 * w.reg);
            for (dst, (_, src)) in grads.tensors_mut().into_iter().zip(params.tensors()).take(count) {
                for (g, &p) in dst.iter_mut().zip(src) {
                    *g += two_w * p;
                }
            }
        }
        Ok((out, Some(grads)))
    }
}
