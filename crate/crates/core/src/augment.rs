//! Long-tail augmentation: learnable edge scoring, neighbor budgets, the
//! smoothed top-k dropped graph, and the knowledge-transfer predictor.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LagclError, Result};
use crate::graph::{sparse_matmul, transpose_csr, BipartiteGraph, DegreePartition, LayerStack};
use crate::scalar::{leaky_relu, leaky_relu_grad, sigmoid, Scalar};

/// Bilinear edge-scoring matrix `W_s` (d × d).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScoreParams<T> {
    pub ws: Array2<T>,
}

/// Which side of the bipartite graph receives neighbor dropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentSides {
    Users,
    Items,
    Both,
}

impl std::str::FromStr for AugmentSides {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "users" => Ok(AugmentSides::Users),
            "items" => Ok(AugmentSides::Items),
            "both" => Ok(AugmentSides::Both),
            other => Err(format!("expected users|items|both, got `{other}`")),
        }
    }
}

impl AugmentSides {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentSides::Users => "users",
            AugmentSides::Items => "items",
            AugmentSides::Both => "both",
        }
    }
}

/// `S_ij = H0_i · W_s · H0_jᵀ` for every directed edge, in CSR edge order.
pub fn edge_scores<T: Scalar>(
    g: &BipartiteGraph<T>,
    h0: &Array2<T>,
    params: &EdgeScoreParams<T>,
) -> Result<Vec<T>> {
    let d = h0.ncols();
    if h0.nrows() != g.num_nodes() || params.ws.dim() != (d, d) {
        return Err(LagclError::Shape(format!(
            "edge scores: H0 {:?}, W_s {:?}, nodes {}",
            h0.dim(),
            params.ws.dim(),
            g.num_nodes()
        )));
    }
    let hw = h0.dot(&params.ws);
    let mut scores = Vec::with_capacity(g.num_directed_edges());
    for i in 0..g.num_nodes() {
        let left = hw.row(i);
        for &j in g.neighbors(i) {
            scores.push(left.dot(&h0.row(j as usize)));
        }
    }
    Ok(scores)
}

/// Backpropagate per-edge score gradients into `(dH0, dW_s)`.
pub fn edge_scores_backward<T: Scalar>(
    g: &BipartiteGraph<T>,
    h0: &Array2<T>,
    params: &EdgeScoreParams<T>,
    grad_scores: &[T],
) -> (Array2<T>, Array2<T>) {
    // G[i,j] = dS_ij ; dW = H0ᵀ G H0 ; dH0 = G H0 W_sᵀ + Gᵀ H0 W_s
    let gh = sparse_matmul(g.offsets(), g.targets(), grad_scores, h0);
    let dws = h0.t().dot(&gh);
    let reversed: Vec<T> = (0..grad_scores.len())
        .map(|e| grad_scores[g.reverse_edge(e)])
        .collect();
    let hw = h0.dot(&params.ws);
    let gt_hw = sparse_matmul(g.offsets(), g.targets(), &reversed, &hw);
    let dh0 = gh.dot(&params.ws.t()) + gt_hw;
    (dh0, dws)
}

/// Neighbor budget per node: uniform on `1..=k` for head nodes, the full
/// degree for tail nodes.
pub fn sample_budgets<T: Scalar, R: Rng + ?Sized>(
    g: &BipartiteGraph<T>,
    partition: &DegreePartition,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let k = k.max(1);
    (0..g.num_nodes())
        .map(|i| {
            if partition.is_head(i) {
                rng.gen_range(1..=k)
            } else {
                g.degree(i)
            }
        })
        .collect()
}

/// Reset budgets on the side that is not augmented to the full degree.
pub fn restrict_sides<T: Scalar>(g: &BipartiteGraph<T>, budgets: &mut [usize], sides: AugmentSides) {
    for (i, b) in budgets.iter_mut().enumerate() {
        let keep_all = match sides {
            AugmentSides::Both => false,
            AugmentSides::Users => !g.is_user(i),
            AugmentSides::Items => g.is_user(i),
        };
        if keep_all {
            *b = g.degree(i);
        }
    }
}

/// `exp(δs) / (1 + exp(δs))`.
#[inline]
pub fn smoothed_weight<T: Scalar>(score: T, delta: T) -> T {
    sigmoid(delta * score)
}

/// Sparse graph retaining each node's top-`k_i` scored neighbors with
/// smoothed weights `Â_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedGraph<T> {
    num_nodes: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    /// Directed-edge id in the base graph for each retained edge.
    base_edges: Vec<usize>,
    /// Smoothed weights `Â_ij`; constant 1/2 for random dropping.
    weights: Vec<T>,
    learnable: bool,
    row_sum: Vec<T>,
    norm: Vec<T>,
    budgets: Vec<usize>,
    delta: T,
    t_offsets: Vec<usize>,
    t_sources: Vec<u32>,
    t_edges: Vec<usize>,
}

impl<T: Scalar> DroppedGraph<T> {
    fn from_selection(
        g: &BipartiteGraph<T>,
        kept: Vec<Vec<usize>>,
        scores: Option<&[T]>,
        budgets: Vec<usize>,
        delta: T,
    ) -> Self {
        let n = g.num_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut base_edges = Vec::new();
        offsets.push(0);
        for edges in kept {
            for e in edges {
                base_edges.push(e);
                targets.push(g.targets()[e]);
            }
            offsets.push(targets.len());
        }
        let (t_offsets, t_sources, t_edges) = transpose_csr(&offsets, &targets, n);
        let mut dg = DroppedGraph {
            num_nodes: n,
            offsets,
            targets,
            weights: Vec::new(),
            learnable: scores.is_some(),
            row_sum: Vec::new(),
            norm: Vec::new(),
            base_edges,
            budgets,
            delta,
            t_offsets,
            t_sources,
            t_edges,
        };
        match scores {
            Some(s) => dg.reweight(s),
            None => dg.set_weights(vec![T::of(0.5); dg.targets.len()]),
        }
        dg
    }

    /// Every edge retained with `Â_ij = 1`, which reproduces the plain
    /// symmetric normalization. Not learnable.
    pub fn retain_all_unit(g: &BipartiteGraph<T>) -> Self {
        let kept = (0..g.num_nodes()).map(|i| g.edge_range(i).collect()).collect();
        let mut dg = DroppedGraph::from_selection(g, kept, None, g.degrees(), T::one());
        dg.set_weights(vec![T::one(); dg.targets.len()]);
        dg
    }

    /// Recompute `Â` (and the derived normalization) from fresh base-graph
    /// scores, keeping the retained neighbor sets fixed.
    pub fn reweight(&mut self, scores: &[T]) {
        if !self.learnable {
            return;
        }
        let delta = self.delta;
        let w = self
            .base_edges
            .iter()
            .map(|&e| smoothed_weight(scores[e], delta))
            .collect();
        self.set_weights(w);
    }

    fn set_weights(&mut self, weights: Vec<T>) {
        let n = self.num_nodes;
        self.row_sum = (0..n)
            .map(|i| weights[self.offsets[i]..self.offsets[i + 1]].iter().copied().sum())
            .collect();
        self.norm = (0..n)
            .flat_map(|i| {
                let rs = &self.row_sum;
                self.targets[self.offsets[i]..self.offsets[i + 1]]
                    .iter()
                    .map(move |&j| {
                        let p = rs[i] * rs[j as usize];
                        if p > T::zero() {
                            T::one() / p.sqrt()
                        } else {
                            T::zero()
                        }
                    })
            })
            .collect();
        self.weights = weights;
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn retained_weights(&self, node: usize) -> &[T] {
        &self.weights[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn base_edges(&self, node: usize) -> &[usize] {
        &self.base_edges[self.offsets[node]..self.offsets[node + 1]]
    }

    /// `|Â_i| = Σ_{j∈N̂_i} Â_ij`.
    pub fn row_sum(&self, node: usize) -> T {
        self.row_sum[node]
    }

    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn is_learnable(&self) -> bool {
        self.learnable
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    /// `Σ_{j∈N̂_i} x_j / (√|Â_i| √|Â_j|)`.
    pub fn aggregate(&self, x: &Array2<T>) -> Array2<T> {
        sparse_matmul(&self.offsets, &self.targets, &self.norm, x)
    }

    /// Transpose of [`aggregate`](Self::aggregate).
    pub fn aggregate_transpose(&self, g: &Array2<T>) -> Array2<T> {
        let w: Vec<T> = self.t_edges.iter().map(|&e| self.norm[e]).collect();
        sparse_matmul(&self.t_offsets, &self.t_sources, &w, g)
    }

    fn mean_weights(&self) -> Vec<T> {
        (0..self.num_nodes)
            .flat_map(|i| {
                let len = self.offsets[i + 1] - self.offsets[i];
                let w = T::one() / T::of(len.max(1) as f64);
                std::iter::repeat(w).take(len)
            })
            .collect()
    }

    /// Unweighted mean over retained neighbors (zero for empty sets).
    pub fn neighbor_mean(&self, x: &Array2<T>) -> Array2<T> {
        sparse_matmul(&self.offsets, &self.targets, &self.mean_weights(), x)
    }

    pub fn neighbor_mean_transpose(&self, g: &Array2<T>) -> Array2<T> {
        let mw = self.mean_weights();
        let w: Vec<T> = self.t_edges.iter().map(|&e| mw[e]).collect();
        sparse_matmul(&self.t_offsets, &self.t_sources, &w, g)
    }

    /// Chain the gradient on per-retained-edge normalization weights back to
    /// base-graph edge scores (zero when weights are not learnable).
    pub fn norm_backward(&self, grad_norm: &[T], base_edge_count: usize) -> Vec<T> {
        let mut grad_scores = vec![T::zero(); base_edge_count];
        if !self.learnable {
            return grad_scores;
        }
        let half = T::of(0.5);
        let mut grad_rs = vec![T::zero(); self.num_nodes];
        for i in 0..self.num_nodes {
            for e in self.offsets[i]..self.offsets[i + 1] {
                let j = self.targets[e] as usize;
                let w = self.norm[e];
                if w == T::zero() {
                    continue;
                }
                let gw = grad_norm[e];
                grad_rs[i] -= half * gw * w / self.row_sum[i];
                grad_rs[j] -= half * gw * w / self.row_sum[j];
            }
        }
        for i in 0..self.num_nodes {
            for e in self.offsets[i]..self.offsets[i + 1] {
                let a = self.weights[e];
                grad_scores[self.base_edges[e]] += grad_rs[i] * self.delta * a * (T::one() - a);
            }
        }
        grad_scores
    }

    /// `∂L/∂norm_e = grad_out_i · x_j` for every retained edge `e = i → j`,
    /// accumulated into `acc`.
    pub fn accumulate_norm_grad(&self, grad_out: &Array2<T>, x: &Array2<T>, acc: &mut [T]) {
        for i in 0..self.num_nodes {
            let gi = grad_out.row(i);
            for e in self.offsets[i]..self.offsets[i + 1] {
                acc[e] += gi.dot(&x.row(self.targets[e] as usize));
            }
        }
    }
}

fn top_k_edges<T: Scalar>(g: &BipartiteGraph<T>, node: usize, scores: &[T], k: usize) -> Vec<usize> {
    let mut edges: Vec<usize> = g.edge_range(node).collect();
    let targets = g.targets();
    edges.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(targets[a].cmp(&targets[b]))
    });
    edges.truncate(k.min(edges.len()));
    edges.sort_unstable();
    edges
}

/// Keep each node's `k_i` highest-scoring neighbors (ties by ascending
/// neighbor index) with weights `Â_ij = σ(δ S_ij)`.
pub fn build_dropped_graph<T: Scalar>(
    g: &BipartiteGraph<T>,
    scores: &[T],
    budgets: &[usize],
    delta: T,
) -> Result<DroppedGraph<T>> {
    if scores.len() != g.num_directed_edges() || budgets.len() != g.num_nodes() {
        return Err(LagclError::Shape("scores/budgets do not match the graph".into()));
    }
    if !(delta > T::zero()) {
        return Err(LagclError::config("delta", "smoothness must be positive"));
    }
    let kept = (0..g.num_nodes())
        .map(|i| top_k_edges(g, i, scores, budgets[i]))
        .collect();
    Ok(DroppedGraph::from_selection(g, kept, Some(scores), budgets.to_vec(), delta))
}

/// Uniformly random neighbor subsets of size `k_i` with constant weights;
/// the auto-drop ablation.
pub fn random_dropped_graph<T: Scalar, R: Rng + ?Sized>(
    g: &BipartiteGraph<T>,
    budgets: &[usize],
    rng: &mut R,
) -> DroppedGraph<T> {
    use rand::seq::index::sample;
    let kept = (0..g.num_nodes())
        .map(|i| {
            let range = g.edge_range(i);
            let deg = range.len();
            let take = budgets[i].min(deg);
            let mut picked: Vec<usize> = sample(rng, deg, take)
                .into_iter()
                .map(|p| range.start + p)
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    DroppedGraph::from_selection(g, kept, None, budgets.to_vec(), T::one())
}

/// Per-layer knowledge-transfer MLP `θ_t⁽ˡ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferLayer<T> {
    /// 2d × d
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// d × d
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferParams<T> {
    pub layers: Vec<TransferLayer<T>>,
}

impl<T: Scalar> TransferLayer<T> {
    pub fn zeros(d: usize) -> Self {
        TransferLayer {
            w1: Array2::zeros((2 * d, d)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.w2.nrows()
    }
}

impl<T: Scalar> TransferParams<T> {
    pub fn zeros(d: usize, layers: usize) -> Self {
        TransferParams {
            layers: (0..layers).map(|_| TransferLayer::zeros(d)).collect(),
        }
    }
}

/// Predicted missing-neighbor message
/// `W2ᵀ · LeakyReLU(W1ᵀ · [center ; neigh_mean] + b1) + b2`.
pub fn knowledge_transfer<T: Scalar>(
    center: ArrayView1<T>,
    neigh_mean: ArrayView1<T>,
    layer: &TransferLayer<T>,
) -> Array1<T> {
    let d = layer.dim();
    let pre = center.dot(&layer.w1.slice(s![..d, ..]))
        + neigh_mean.dot(&layer.w1.slice(s![d.., ..]))
        + &layer.b1;
    let hidden = pre.mapv(leaky_relu);
    hidden.dot(&layer.w2) + &layer.b2
}

/// Batched transfer over a subset of rows, keeping what backward needs.
#[derive(Debug, Clone)]
pub struct TransferCache<T> {
    pub rows: Vec<usize>,
    input: Array2<T>,
    pre: Array2<T>,
    hidden: Array2<T>,
    pub output: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferGrad<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

pub fn transfer_forward<T: Scalar>(
    layer: &TransferLayer<T>,
    centers: &Array2<T>,
    means: &Array2<T>,
    rows: &[usize],
) -> TransferCache<T> {
    let d = layer.dim();
    let mut input = Array2::zeros((rows.len(), 2 * d));
    for (r, &i) in rows.iter().enumerate() {
        input.slice_mut(s![r, ..d]).assign(&centers.row(i));
        input.slice_mut(s![r, d..]).assign(&means.row(i));
    }
    let pre = input.dot(&layer.w1) + &layer.b1;
    let hidden = pre.mapv(leaky_relu);
    let output = hidden.dot(&layer.w2) + &layer.b2;
    TransferCache {
        rows: rows.to_vec(),
        input,
        pre,
        hidden,
        output,
    }
}

/// Returns `(d center, d neigh_mean, parameter gradients)` for the cached
/// rows; `grad_out` is row-aligned with `cache.rows`.
pub fn transfer_backward<T: Scalar>(
    layer: &TransferLayer<T>,
    cache: &TransferCache<T>,
    grad_out: &Array2<T>,
) -> (Array2<T>, Array2<T>, TransferGrad<T>) {
    let d = layer.dim();
    let gw2 = cache.hidden.t().dot(grad_out);
    let gb2 = grad_out.sum_axis(Axis(0));
    let mut gpre = grad_out.dot(&layer.w2.t());
    gpre.zip_mut_with(&cache.pre, |g, &p| *g *= leaky_relu_grad(p));
    let gw1 = cache.input.t().dot(&gpre);
    let gb1 = gpre.sum_axis(Axis(0));
    let gin = gpre.dot(&layer.w1.t());
    let gc = gin.slice(s![.., ..d]).to_owned();
    let gm = gin.slice(s![.., d..]).to_owned();
    (
        gc,
        gm,
        TransferGrad {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    )
}

/// Propagate over the dropped graph. With `transfer`, every node also adds
/// the knowledge-transfer prediction from its previous-layer embedding and
/// retained-neighbor mean (pseudo-head); without it the result is the
/// pseudo-tail stack.
pub fn aggregate_dropped<T: Scalar>(
    dg: &DroppedGraph<T>,
    h0: &Array2<T>,
    transfer: Option<&TransferParams<T>>,
    layers: usize,
) -> Result<LayerStack<T>> {
    if h0.nrows() != dg.num_nodes() {
        return Err(LagclError::Shape("H0 rows differ from dropped graph nodes".into()));
    }
    if let Some(tp) = transfer {
        if tp.layers.len() < layers {
            return Err(LagclError::Shape(format!(
                "{} transfer layers for {layers} propagation layers",
                tp.layers.len()
            )));
        }
    }
    let all: Vec<usize> = (0..dg.num_nodes()).collect();
    let mut out = vec![h0.clone()];
    for l in 0..layers {
        let prev = &out[l];
        let mut next = dg.aggregate(prev);
        if let Some(tp) = transfer {
            let means = dg.neighbor_mean(prev);
            let cache = transfer_forward(&tp.layers[l], prev, &means, &all);
            next += &cache.output;
        }
        out.push(next);
    }
    Ok(LayerStack { layers: out })
}

/// `Σ_{i∈head} Σ_{l=1..L} ‖h_i⁽ˡ⁾ − ĥ_i⁽ˡ⁾‖²`.
pub fn translation_loss<T: Scalar>(
    full: &LayerStack<T>,
    reconstructed: &LayerStack<T>,
    partition: &DegreePartition,
) -> Result<T> {
    if full.layers.len() != reconstructed.layers.len()
        || full.layers.iter().zip(&reconstructed.layers).any(|(a, b)| a.dim() != b.dim())
    {
        return Err(LagclError::Shape("translation loss stacks differ in shape".into()));
    }
    let mut total = T::zero();
    for i in partition.head_nodes() {
        for (a, b) in full.layers.iter().zip(&reconstructed.layers).skip(1) {
            for (x, y) in a.row(i).iter().zip(b.row(i).iter()) {
                let diff = *x - *y;
                total += diff * diff;
            }
        }
    }
    Ok(total)
}
