//! Knowledge-transfer augmented embeddings, sign-aligned noise views, and the
//! InfoNCE objective.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::TransferParams;
use crate::error::{LagclError, Result};
use crate::graph::{BipartiteGraph, DegreePartition, LayerStack};
use crate::scalar::Scalar;
use crate::stack::{forward_stack, Operator, StackTrace};

/// Perturbation radius and the root of the noise seed stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub eps: f64,
    pub seed: u64,
}

/// Which nodes receive the knowledge-transfer term on the full graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KtScope {
    TailOnly,
    AllNodes,
}

impl std::str::FromStr for KtScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tail_only" => Ok(KtScope::TailOnly),
            "all_nodes" => Ok(KtScope::AllNodes),
            other => Err(format!("expected tail_only|all_nodes, got `{other}`")),
        }
    }
}

impl KtScope {
    pub fn as_str(self) -> &'static str {
        match self {
            KtScope::TailOnly => "tail_only",
            KtScope::AllNodes => "all_nodes",
        }
    }

    pub fn rows(self, partition: &DegreePartition) -> Vec<usize> {
        match self {
            KtScope::TailOnly => partition.tail_nodes(),
            KtScope::AllNodes => (0..partition.len()).collect(),
        }
    }
}

/// Contrastive denominator: nodes of the current batch, or the whole side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClDenominator {
    Batch,
    All,
}

impl std::str::FromStr for ClDenominator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "batch" => Ok(ClDenominator::Batch),
            "all" => Ok(ClDenominator::All),
            other => Err(format!("expected batch|all, got `{other}`")),
        }
    }
}

impl ClDenominator {
    pub fn as_str(self) -> &'static str {
        match self {
            ClDenominator::Batch => "batch",
            ClDenominator::All => "all",
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based seed for one `(step, view, layer, node)` draw.
pub fn stream_seed(root: u64, step: u64, view: u64, layer: u64, node: u64) -> u64 {
    [step, view, layer, node]
        .iter()
        .fold(splitmix64(root), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Raw `Δ̄ ~ U(0,1)^d` draws for layers `1..=L` of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws<T> {
    pub eps: T,
    pub raw: Vec<Array2<T>>,
}

impl<T: Scalar> NoiseDraws<T> {
    pub fn sample(spec: &NoiseSpec, n: usize, d: usize, layers: usize, step: u64, view: u64) -> Self {
        let raw = (1..=layers)
            .map(|l| {
                let mut table = Array2::zeros((n, d));
                for (i, mut row) in table.axis_iter_mut(Axis(0)).enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, step, view, l as u64, i as u64));
                    for v in row.iter_mut() {
                        *v = T::of(rng.gen::<f64>());
                    }
                }
                table
            })
            .collect();
        NoiseDraws { eps: T::of(spec.eps), raw }
    }

    /// Offsets for layer `layer` (1-based) given pre-noise embeddings.
    pub fn offsets(&self, layer: usize, h: &Array2<T>) -> Array2<T> {
        let raw = &self.raw[layer - 1];
        let mut out = Array2::zeros(h.dim());
        for ((mut o, hr), rr) in out.axis_iter_mut(Axis(0)).zip(h.axis_iter(Axis(0))).zip(raw.axis_iter(Axis(0))) {
            o.assign(&noise_vector(hr, rr, self.eps));
        }
        out
    }
}

/// `Δ = ε · (Δ̄ ⊙ sign(h)) / ‖Δ̄ ⊙ sign(h)‖₂` (zero when the product vanishes).
pub fn noise_vector<T: Scalar>(h: ArrayView1<T>, raw: ArrayView1<T>, eps: T) -> Array1<T> {
    let mut v: Array1<T> = h
        .iter()
        .zip(raw.iter())
        .map(|(&x, &r)| {
            if x > T::zero() {
                r
            } else if x < T::zero() {
                -r
            } else {
                T::zero()
            }
        })
        .collect();
    let norm = v.dot(&v).sqrt();
    if norm > T::zero() {
        v.mapv_inplace(|x| eps * x / norm);
    }
    v
}

/// Full-graph propagation where nodes in `kt_rows` also receive the
/// knowledge-transfer prediction from their neighbor mean.
pub fn augmented_embeddings<T: Scalar>(
    g: &BipartiteGraph<T>,
    h0: &Array2<T>,
    transfer: &TransferParams<T>,
    layers: usize,
    scope: KtScope,
    partition: &DegreePartition,
) -> Result<LayerStack<T>> {
    if h0.nrows() != g.num_nodes() || transfer.layers.len() < layers {
        return Err(LagclError::Shape("augmented embeddings: inconsistent shapes".into()));
    }
    let rows = scope.rows(partition);
    Ok(forward_stack(Operator::Full(g), h0, Some(transfer), &rows, None, layers).stack)
}

/// Noisy propagation for one contrastive view; returns the trace so the
/// caller can also backpropagate.
pub fn perturbed_trace<T: Scalar>(
    g: &BipartiteGraph<T>,
    h0: &Array2<T>,
    transfer: Option<&TransferParams<T>>,
    kt_rows: &[usize],
    draws: &NoiseDraws<T>,
    layers: usize,
) -> StackTrace<T> {
    let noise = |l: usize, h: &Array2<T>| draws.offsets(l, h);
    forward_stack(Operator::Full(g), h0, transfer, kt_rows, Some(&noise), layers)
}

/// Mean over noisy layers `1..=L`.
pub fn view_readout<T: Scalar>(stack: &LayerStack<T>) -> Array2<T> {
    let layers = &stack.layers[1..];
    let mut acc = layers[0].clone();
    for l in &layers[1..] {
        acc += l;
    }
    let scale = T::one() / T::of(layers.len() as f64);
    acc.mapv_inplace(|v| v * scale);
    acc
}

/// One contrastive view's readout.
pub fn perturbed_view<T: Scalar>(
    g: &BipartiteGraph<T>,
    h0: &Array2<T>,
    transfer: Option<&TransferParams<T>>,
    kt_rows: &[usize],
    draws: &NoiseDraws<T>,
    layers: usize,
) -> Array2<T> {
    view_readout(&perturbed_trace(g, h0, transfer, kt_rows, draws, layers).stack)
}

fn normalized_rows<T: Scalar>(x: &Array2<T>) -> (Array2<T>, Vec<T>) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.nrows());
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        norms.push(n);
        if n > T::zero() {
            row.mapv_inplace(|v| v / n);
        }
    }
    (out, norms)
}

/// Σ_{i∈S} −log softmax_j(cos(a_i, b_j)/τ)[i] over the subset `S`, with
/// gradients with respect to every row of `a` and `b`.
pub fn info_nce_grad<T: Scalar>(
    a: &Array2<T>,
    b: &Array2<T>,
    subset: &[usize],
    tau: T,
) -> Result<(T, Array2<T>, Array2<T>)> {
    if !(tau > T::zero()) {
        return Err(LagclError::config("tau", "temperature must be positive"));
    }
    if a.dim() != b.dim() {
        return Err(LagclError::Shape("views differ in shape".into()));
    }
    let mut ga = Array2::zeros(a.dim());
    let mut gb = Array2::zeros(b.dim());
    if subset.is_empty() {
        return Ok((T::zero(), ga, gb));
    }
    let (an, a_norm) = normalized_rows(&a.select(Axis(0), subset));
    let (bn, b_norm) = normalized_rows(&b.select(Axis(0), subset));
    let inv_tau = T::one() / tau;
    let mut logits = an.dot(&bn.t());
    logits.mapv_inplace(|v| v * inv_tau);
    let mut loss = T::zero();
    // logits becomes d loss / d logits
    for (i, mut row) in logits.axis_iter_mut(Axis(0)).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        let pos = row[i];
        loss += denom.ln() - pos.ln();
        row.mapv_inplace(|v| v / denom);
        row[i] -= T::one();
    }
    let mut g_an = logits.dot(&bn);
    g_an.mapv_inplace(|v| v * inv_tau);
    let mut g_bn = logits.t().dot(&an);
    g_bn.mapv_inplace(|v| v * inv_tau);
    let unnormalize = |g: &mut Array2<T>, unit: &Array2<T>, norms: &[T]| {
        for ((mut gr, ur), &n) in g.axis_iter_mut(Axis(0)).zip(unit.axis_iter(Axis(0))).zip(norms) {
            if n > T::zero() {
                let proj = ur.dot(&gr);
                gr.zip_mut_with(&ur, |gv, &uv| *gv = (*gv - uv * proj) / n);
            } else {
                gr.fill(T::zero());
            }
        }
    };
    unnormalize(&mut g_an, &an, &a_norm);
    unnormalize(&mut g_bn, &bn, &b_norm);
    for (r, &i) in subset.iter().enumerate() {
        let mut row = ga.row_mut(i);
        row += &g_an.row(r);
        let mut row = gb.row_mut(i);
        row += &g_bn.row(r);
    }
    Ok((loss, ga, gb))
}

pub fn info_nce<T: Scalar>(a: &Array2<T>, b: &Array2<T>, subset: &[usize], tau: T) -> Result<T> {
    if subset.is_empty() {
        return Err(LagclError::Shape("InfoNCE over an empty node subset".into()));
    }
    Ok(info_nce_grad(a, b, subset, tau)?.0)
}
