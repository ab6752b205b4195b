//! Layer-wise propagation with optional knowledge transfer and embedding
//! noise, and its reverse pass. Shared by every branch of the model.

use ndarray::Array2;

use crate::augment::{transfer_backward, transfer_forward, DroppedGraph, TransferCache, TransferGrad, TransferParams};
use crate::graph::{BipartiteGraph, LayerStack};
use crate::scalar::Scalar;

/// Linear propagation operator of one branch.
#[derive(Debug, Clone, Copy)]
pub enum Operator<'a, T> {
    Full(&'a BipartiteGraph<T>),
    Dropped(&'a DroppedGraph<T>),
}

impl<T: Scalar> Operator<'_, T> {
    pub fn num_nodes(&self) -> usize {
        match self {
            Operator::Full(g) => g.num_nodes(),
            Operator::Dropped(dg) => dg.num_nodes(),
        }
    }

    fn apply(&self, x: &Array2<T>) -> Array2<T> {
        match self {
            Operator::Full(g) => crate::graph::propagate(g, x).expect("row count checked"),
            Operator::Dropped(dg) => dg.aggregate(x),
        }
    }

    fn apply_transpose(&self, g: &Array2<T>) -> Array2<T> {
        match self {
            // symmetric weights on a symmetric pattern
            Operator::Full(graph) => crate::graph::propagate(graph, g).expect("row count checked"),
            Operator::Dropped(dg) => dg.aggregate_transpose(g),
        }
    }

    fn mean(&self, x: &Array2<T>) -> Array2<T> {
        match self {
            Operator::Full(g) => g.neighbor_mean(x),
            Operator::Dropped(dg) => dg.neighbor_mean(x),
        }
    }

    fn mean_transpose(&self, g: &Array2<T>) -> Array2<T> {
        match self {
            Operator::Full(graph) => graph.neighbor_mean_transpose(g),
            Operator::Dropped(dg) => dg.neighbor_mean_transpose(g),
        }
    }
}

/// Per-layer noise offsets to add after propagation (layers 1..L).
pub type NoiseFn<'a, T> = &'a dyn Fn(usize, &Array2<T>) -> Array2<T>;

/// Forward trace of one propagation branch.
#[derive(Debug, Clone)]
pub struct StackTrace<T> {
    pub stack: LayerStack<T>,
    transfer: Vec<Option<TransferCache<T>>>,
}

impl<T: Scalar> StackTrace<T> {
    pub fn layers(&self) -> &[Array2<T>] {
        &self.stack.layers
    }
}

/// `x⁽ˡ⁾ = Op·x⁽ˡ⁻¹⁾ + f_t(x⁽ˡ⁻¹⁾, mean_N(x⁽ˡ⁻¹⁾))[kt_rows] + noise(l, ·)`.
pub fn forward_stack<T: Scalar>(
    op: Operator<'_, T>,
    h0: &Array2<T>,
    transfer: Option<&TransferParams<T>>,
    kt_rows: &[usize],
    noise: Option<NoiseFn<'_, T>>,
    layers: usize,
) -> StackTrace<T> {
    let mut out = vec![h0.clone()];
    let mut caches = Vec::with_capacity(layers);
    for l in 0..layers {
        let prev = &out[l];
        let mut next = op.apply(prev);
        let cache = match transfer {
            Some(tp) if !kt_rows.is_empty() => {
                let means = op.mean(prev);
                let cache = transfer_forward(&tp.layers[l], prev, &means, kt_rows);
                for (r, &i) in cache.rows.iter().enumerate() {
                    let mut row = next.row_mut(i);
                    row += &cache.output.row(r);
                }
                Some(cache)
            }
            _ => None,
        };
        caches.push(cache);
        if let Some(noise) = noise {
            let delta = noise(l + 1, &next);
            next += &delta;
        }
        out.push(next);
    }
    StackTrace {
        stack: LayerStack { layers: out },
        transfer: caches,
    }
}

/// Reverse pass. `grad_layers[l]` is the loss gradient with respect to
/// layer `l`'s output. Transfer gradients are added into `transfer_grads`;
/// for a learnable dropped operator the gradient on its per-edge
/// normalization weights is added into `norm_grad`. Returns the gradient with
/// respect to `H⁽⁰⁾`.
pub fn backward_stack<T: Scalar>(
    op: Operator<'_, T>,
    trace: &StackTrace<T>,
    transfer: Option<&TransferParams<T>>,
    mut grad_layers: Vec<Array2<T>>,
    mut transfer_grads: Option<&mut [TransferGrad<T>]>,
    mut norm_grad: Option<&mut Vec<T>>,
) -> Array2<T> {
    let layers = trace.stack.num_layers();
    assert_eq!(grad_layers.len(), layers + 1);
    for l in (1..=layers).rev() {
        let g = std::mem::take(&mut grad_layers[l]);
        let prev = &trace.stack.layers[l - 1];
        let mut g_prev = op.apply_transpose(&g);
        if let (Operator::Dropped(dg), Some(acc)) = (op, norm_grad.as_deref_mut()) {
            if dg.is_learnable() {
                dg.accumulate_norm_grad(&g, prev, acc);
            }
        }
        if let (Some(cache), Some(tp)) = (&trace.transfer[l - 1], transfer) {
            let g_out = g.select(ndarray::Axis(0), &cache.rows);
            let (gc, gm, gp) = transfer_backward(&tp.layers[l - 1], cache, &g_out);
            let mut gm_full = Array2::zeros(prev.dim());
            for (r, &i) in cache.rows.iter().enumerate() {
                let mut row = g_prev.row_mut(i);
                row += &gc.row(r);
                gm_full.row_mut(i).assign(&gm.row(r));
            }
            g_prev += &op.mean_transpose(&gm_full);
            if let Some(acc) = transfer_grads.as_deref_mut() {
                let a = &mut acc[l - 1];
                a.w1 += &gp.w1;
                a.b1 += &gp.b1;
                a.w2 += &gp.w2;
                a.b2 += &gp.b2;
            }
        }
        grad_layers[l - 1] += &g_prev;
    }
    std::mem::take(&mut grad_layers[0])
}
