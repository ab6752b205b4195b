//! User-item bipartite graph, symmetric-normalized propagation, readout, and
//! the head/tail degree partition.
//!
//! Nodes `0..num_users` are users, nodes `num_users..n` are items.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{LagclError, Result};
use crate::scalar::Scalar;

/// CSR adjacency of the training graph with precomputed `1/√(D_i·D_j)`
/// weights. Neighbor lists are sorted by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph<T> {
    pub num_users: usize,
    pub num_items: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    norm: Vec<T>,
    reverse: Vec<usize>,
}

impl<T: Scalar> BipartiteGraph<T> {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Number of directed edges (twice the interaction count).
    pub fn num_directed_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn norm_weights(&self, node: usize) -> &[T] {
        &self.norm[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Range of directed-edge ids owned by `node`.
    pub fn edge_range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    /// Id of the directed edge `j → i` for edge `e = i → j`.
    pub fn reverse_edge(&self, e: usize) -> usize {
        self.reverse[e]
    }

    pub fn is_user(&self, node: usize) -> bool {
        node < self.num_users
    }

    /// Unweighted mean of each node's neighbors (zero rows for isolated nodes).
    pub fn neighbor_mean(&self, x: &Array2<T>) -> Array2<T> {
        let w: Vec<T> = (0..self.num_nodes())
            .flat_map(|i| {
                let deg = self.degree(i);
                std::iter::repeat(T::one() / T::of(deg.max(1) as f64)).take(deg)
            })
            .collect();
        sparse_matmul(&self.offsets, &self.targets, &w, x)
    }

    /// Transpose of [`neighbor_mean`](Self::neighbor_mean).
    pub fn neighbor_mean_transpose(&self, g: &Array2<T>) -> Array2<T> {
        let w: Vec<T> = self
            .targets
            .iter()
            .map(|&j| T::one() / T::of(self.degree(j as usize).max(1) as f64))
            .collect();
        sparse_matmul(&self.offsets, &self.targets, &w, g)
    }

    /// Dense `n × n` normalized adjacency, for tests and small diagnostics.
    pub fn dense_normalized(&self) -> Array2<T> {
        let n = self.num_nodes();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for (e, &j) in self.edge_range(i).zip(self.neighbors(i)) {
                m[[i, j as usize]] = self.norm[e];
            }
        }
        m
    }
}

/// Build the symmetric bipartite graph from training `(user, item)` edges.
/// Duplicate edges are collapsed. Zero-degree nodes are kept (and logged).
pub fn build_graph<T: Scalar>(
    train_edges: &[(u32, u32)],
    num_users: usize,
    num_items: usize,
) -> Result<BipartiteGraph<T>> {
    let n = num_users + num_items;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, i) in train_edges {
        if u as usize >= num_users || i as usize >= num_items {
            return Err(LagclError::IndexOutOfRange(format!(
                "edge ({u}, {i}) outside {num_users} users × {num_items} items"
            )));
        }
        let item_node = (num_users + i as usize) as u32;
        adj[u as usize].push(item_node);
        adj[item_node as usize].push(u);
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(train_edges.len() * 2);
    offsets.push(0);
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
        targets.extend_from_slice(list);
        offsets.push(targets.len());
    }
    let isolated = adj.iter().filter(|l| l.is_empty()).count();
    if isolated > 0 {
        log::warn!("{isolated} nodes have no training edges; they propagate to zero");
    }
    let degree: Vec<T> = adj.iter().map(|l| T::of(l.len() as f64)).collect();
    let mut norm = Vec::with_capacity(targets.len());
    for i in 0..n {
        for &j in &targets[offsets[i]..offsets[i + 1]] {
            norm.push(T::one() / (degree[i] * degree[j as usize]).sqrt());
        }
    }
    let (_, _, slot_edge) = transpose_csr(&offsets, &targets, n);
    // The pattern is symmetric, so slot k of the transpose is edge k's reverse.
    let reverse = slot_edge;
    Ok(BipartiteGraph {
        num_users,
        num_items,
        offsets,
        targets,
        norm,
        reverse,
    })
}

/// Transpose a CSR pattern with `cols` columns. Returns `(offsets, sources,
/// edge_ids)` where `edge_ids[k]` is the original edge stored at slot `k`.
pub(crate) fn transpose_csr(
    offsets: &[usize],
    targets: &[u32],
    cols: usize,
) -> (Vec<usize>, Vec<u32>, Vec<usize>) {
    let mut counts = vec![0usize; cols + 1];
    for &t in targets {
        counts[t as usize + 1] += 1;
    }
    for c in 0..cols {
        counts[c + 1] += counts[c];
    }
    let t_offsets = counts.clone();
    let mut fill = counts;
    let mut sources = vec![0u32; targets.len()];
    let mut edge_ids = vec![0usize; targets.len()];
    for row in 0..offsets.len() - 1 {
        for e in offsets[row]..offsets[row + 1] {
            let t = targets[e] as usize;
            let slot = fill[t];
            fill[t] += 1;
            sources[slot] = row as u32;
            edge_ids[slot] = e;
        }
    }
    (t_offsets, sources, edge_ids)
}

/// `out_i = Σ_e weights[e] · x[targets[e]]` over each row's CSR range.
pub(crate) fn sparse_matmul<T: Scalar>(
    offsets: &[usize],
    targets: &[u32],
    weights: &[T],
    x: &Array2<T>,
) -> Array2<T> {
    let (n, d) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let rows = offsets.len() - 1;
    let mut out = Array2::<T>::zeros((rows, d));
    if d == 0 {
        return out;
    }
    out.as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            for e in offsets[i]..offsets[i + 1] {
                let j = targets[e] as usize;
                debug_assert!(j < n);
                let w = weights[e];
                for (o, &v) in row.iter_mut().zip(&xs[j * d..(j + 1) * d]) {
                    *o += w * v;
                }
            }
        });
    out
}

/// One layer of symmetric-normalized propagation.
pub fn propagate<T: Scalar>(g: &BipartiteGraph<T>, x: &Array2<T>) -> Result<Array2<T>> {
    if x.nrows() != g.num_nodes() {
        return Err(LagclError::Shape(format!(
            "embedding table has {} rows, graph has {} nodes",
            x.nrows(),
            g.num_nodes()
        )));
    }
    Ok(sparse_matmul(&g.offsets, &g.targets, &g.norm, x))
}

/// Per-layer embedding tables `H⁽⁰⁾ … H⁽ᴸ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T> {
    pub layers: Vec<Array2<T>>,
}

impl<T: Scalar> LayerStack<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    /// Plain propagation stack `H⁽ˡ⁾ = Â H⁽ˡ⁻¹⁾`.
    pub fn propagated(g: &BipartiteGraph<T>, h0: &Array2<T>, layers: usize) -> Result<Self> {
        let mut out = vec![h0.clone()];
        for l in 0..layers {
            let next = propagate(g, &out[l])?;
            out.push(next);
        }
        Ok(LayerStack { layers: out })
    }
}

/// Elementwise mean over all layers of the stack.
pub fn readout<T: Scalar>(stack: &LayerStack<T>) -> Result<Array2<T>> {
    let first = stack
        .layers
        .first()
        .ok_or_else(|| LagclError::Shape("readout of an empty layer stack".into()))?;
    let mut acc = first.clone();
    for layer in &stack.layers[1..] {
        if layer.dim() != acc.dim() {
            return Err(LagclError::Shape("layers differ in shape".into()));
        }
        acc += layer;
    }
    let scale = T::one() / T::of(stack.layers.len() as f64);
    acc.mapv_inplace(|v| v * scale);
    Ok(acc)
}

/// Head/tail split of all nodes by degree threshold `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreePartition {
    pub k: usize,
    is_head: Vec<bool>,
}

impl DegreePartition {
    pub fn from_flags(k: usize, is_head: Vec<bool>) -> Self {
        DegreePartition { k, is_head }
    }

    pub fn is_head(&self, node: usize) -> bool {
        self.is_head[node]
    }

    pub fn is_tail(&self, node: usize) -> bool {
        !self.is_head[node]
    }

    pub fn len(&self) -> usize {
        self.is_head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_head.is_empty()
    }

    pub fn head_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_head[i]).collect()
    }

    pub fn tail_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_head[i]).collect()
    }

    pub fn head_flags(&self) -> &[bool] {
        &self.is_head
    }
}

/// `head = {i : D_ii > k}`, `tail = {i : D_ii ≤ k}` on both sides of the graph.
pub fn partition_degree<T: Scalar>(g: &BipartiteGraph<T>, k: usize) -> DegreePartition {
    DegreePartition {
        k,
        is_head: (0..g.num_nodes()).map(|i| g.degree(i) > k).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> BipartiteGraph<f64> {
        // users u1=0, u2=1; items i1=2, i2=3
        build_graph(&[(0, 0), (0, 1), (1, 0)], 2, 2).unwrap()
    }

    #[test]
    fn single_edge_has_unit_weight() {
        let g: BipartiteGraph<f64> = build_graph(&[(0, 0)], 1, 1).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
        assert_eq!(g.norm_weights(0), &[1.0]);
    }

    #[test]
    fn toy_weights() {
        let g = toy();
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.degree(2), 2);
        assert_eq!(g.norm_weights(0)[0], 0.5);
    }

    #[test]
    fn toy_propagation_values() {
        let g = toy();
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = propagate(&g, &x).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [0.5 * 3.0 + s * 4.0, s * 3.0, 0.5 * 1.0 + s * 2.0, s * 1.0];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((y[[1, 0]] - 2.1213).abs() < 1e-4);
        assert!((y[[3, 0]] - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn zeros_stay_zero() {
        let g = toy();
        let y = propagate(&g, &Array2::zeros((4, 3))).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn regular_graph_preserves_constants() {
        // complete 3×3 bipartite graph is 3-regular
        let edges: Vec<_> = (0..3).flat_map(|u| (0..3).map(move |i| (u, i))).collect();
        let g: BipartiteGraph<f64> = build_graph(&edges, 3, 3).unwrap();
        let y = propagate(&g, &Array2::from_elem((6, 2), 0.7)).unwrap();
        assert!(y.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn isolated_node_propagates_to_zero() {
        let g: BipartiteGraph<f64> = build_graph(&[(0, 0)], 2, 1).unwrap();
        let y = propagate(&g, &Array2::ones((3, 2))).unwrap();
        assert_eq!(y.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(build_graph::<f64>(&[(0, 5)], 1, 2).is_err());
        assert!(propagate(&toy(), &Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn readout_cases() {
        let a = array![[1.0, -2.0]];
        let single = LayerStack { layers: vec![a.clone()] };
        assert_eq!(readout(&single).unwrap(), a);
        let pair = LayerStack {
            layers: vec![a.clone(), -a.clone()],
        };
        assert!(readout(&pair).unwrap().iter().all(|&v| v == 0.0));
        assert!(readout(&LayerStack::<f64> { layers: vec![] }).is_err());
    }

    #[test]
    fn partition_boundaries() {
        let edges: Vec<_> = (0..21).map(|i| (0, i)).chain((0..20).map(|i| (1, i))).collect();
        let g: BipartiteGraph<f64> = build_graph(&edges, 2, 21).unwrap();
        let p = partition_degree(&g, 20);
        assert!(p.is_head(0));
        assert!(p.is_tail(1));
        let all_tail = partition_degree(&g, 100);
        assert!(all_tail.head_nodes().is_empty());
        assert_eq!(all_tail.tail_nodes().len(), g.num_nodes());
    }
}
