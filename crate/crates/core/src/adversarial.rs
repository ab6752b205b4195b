//! Discriminators matching pseudo-tail ↔ real-tail and pseudo-head ↔
//! real-head embedding distributions, and the generator-side objective.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::graph::DegreePartition;
use crate::scalar::{cross_entropy_logit, leaky_relu, leaky_relu_grad, sigmoid, Scalar};

/// `f_d(h) = σ(w_dᵀ · LeakyReLU(W_d · h + b_d))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub v: Array1<T>,
}

pub type DiscriminatorGrad<T> = DiscriminatorParams<T>;

impl<T: Scalar> DiscriminatorParams<T> {
    pub fn zeros(d: usize) -> Self {
        DiscriminatorParams {
            w: Array2::zeros((d, d)),
            b: Array1::zeros(d),
            v: Array1::zeros(d),
        }
    }
}

pub fn discriminate<T: Scalar>(h: ArrayView1<T>, p: &DiscriminatorParams<T>) -> T {
    let hidden = (p.w.dot(&h) + &p.b).mapv(leaky_relu);
    sigmoid(hidden.dot(&p.v))
}

/// Batched discriminator pass over selected rows.
#[derive(Debug, Clone)]
pub struct DiscCache<T> {
    pub rows: Vec<usize>,
    input: Array2<T>,
    pre: Array2<T>,
    hidden: Array2<T>,
    pub probs: Array1<T>,
}

pub fn disc_forward<T: Scalar>(p: &DiscriminatorParams<T>, x: &Array2<T>, rows: &[usize]) -> DiscCache<T> {
    let input = x.select(Axis(0), rows);
    let pre = input.dot(&p.w.t()) + &p.b;
    let hidden = pre.mapv(leaky_relu);
    let probs = hidden.dot(&p.v).mapv(sigmoid);
    DiscCache {
        rows: rows.to_vec(),
        input,
        pre,
        hidden,
        probs,
    }
}

/// Summed clamped cross-entropy against a single label, with per-row
/// logit gradients.
pub fn bce_sum<T: Scalar>(cache: &DiscCache<T>, label: bool) -> (T, Array1<T>) {
    let mut total = T::zero();
    let grads = cache
        .probs
        .iter()
        .map(|&q| {
            let (l, g) = cross_entropy_logit(label, q);
            total += l;
            g
        })
        .collect();
    (total, grads)
}

/// Returns `(d input rows, d params)` for per-row logit gradients.
pub fn disc_backward<T: Scalar>(
    p: &DiscriminatorParams<T>,
    cache: &DiscCache<T>,
    grad_logits: &Array1<T>,
) -> (Array2<T>, DiscriminatorGrad<T>) {
    let gv = cache.hidden.t().dot(grad_logits);
    let col = grad_logits.view().insert_axis(Axis(1));
    let mut gpre = col.dot(&p.v.view().insert_axis(Axis(0)));
    gpre.zip_mut_with(&cache.pre, |g, &z| *g *= leaky_relu_grad(z));
    let gw = gpre.t().dot(&cache.input);
    let gb = gpre.sum_axis(Axis(0));
    let gx = gpre.dot(&p.w);
    (gx, DiscriminatorParams { w: gw, b: gb, v: gv })
}

fn ce_sum<T: Scalar>(p: &DiscriminatorParams<T>, x: &Array2<T>, rows: &[usize], label: bool) -> T {
    if rows.is_empty() {
        return T::zero();
    }
    bce_sum(&disc_forward(p, x, rows), label).0
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Σ_{i∉tail} CE(0, f(h̃_i)) + Σ_{i∈tail} CE(1, f(h_i)).
pub fn tail_adversarial_loss<T: Scalar>(
    h: &Array2<T>,
    h_tilde: &Array2<T>,
    partition: &DegreePartition,
    p: &DiscriminatorParams<T>,
) -> T {
    ce_sum(p, h_tilde, &partition.head_nodes(), false) + ce_sum(p, h, &partition.tail_nodes(), true)
}

/// Σ_{i∈V} CE(0, f(ĥ_i)) + Σ_{i∈head} CE(1, f(h_i)).
pub fn head_adversarial_loss<T: Scalar>(
    h: &Array2<T>,
    h_hat: &Array2<T>,
    partition: &DegreePartition,
    p: &DiscriminatorParams<T>,
) -> T {
    ce_sum(p, h_hat, &all_rows(h_hat.nrows()), false) + ce_sum(p, h, &partition.head_nodes(), true)
}

/// Label-flipped objective for the generator:
/// Σ_{i∉tail} CE(1, f_tail(h̃_i)) + Σ_{i∈V} CE(1, f_head(ĥ_i)).
pub fn generator_adversarial_loss<T: Scalar>(
    h_tilde: &Array2<T>,
    h_hat: &Array2<T>,
    partition: &DegreePartition,
    p_tail: &DiscriminatorParams<T>,
    p_head: &DiscriminatorParams<T>,
) -> T {
    ce_sum(p_tail, h_tilde, &partition.head_nodes(), true)
        + ce_sum(p_head, h_hat, &all_rows(h_hat.nrows()), true)
}

/// One labelled group of rows fed to a discriminator.
struct Term<'a, T> {
    x: &'a Array2<T>,
    rows: Vec<usize>,
    label: bool,
}

fn accumulate_param_grad<T: Scalar>(acc: &mut DiscriminatorGrad<T>, g: &DiscriminatorGrad<T>) {
    acc.w += &g.w;
    acc.b += &g.b;
    acc.v += &g.v;
}

fn terms_param_grad<T: Scalar>(p: &DiscriminatorParams<T>, terms: &[Term<'_, T>]) -> (T, DiscriminatorGrad<T>) {
    let d = p.b.len();
    let mut loss = T::zero();
    let mut grad = DiscriminatorParams::zeros(d);
    for term in terms {
        if term.rows.is_empty() {
            continue;
        }
        let cache = disc_forward(p, term.x, &term.rows);
        let (l, gl) = bce_sum(&cache, term.label);
        loss += l;
        let (_, gp) = disc_backward(p, &cache, &gl);
        accumulate_param_grad(&mut grad, &gp);
    }
    (loss, grad)
}

/// Discriminator objective `L_tail-disc + L_head-disc` with gradients for
/// both discriminators; embeddings are treated as constants.
pub struct DiscriminatorStep<T> {
    pub tail_loss: T,
    pub head_loss: T,
    pub tail_grad: DiscriminatorGrad<T>,
    pub head_grad: DiscriminatorGrad<T>,
}

pub fn discriminator_loss_grad<T: Scalar>(
    h: &Array2<T>,
    h_tilde: &Array2<T>,
    h_hat: &Array2<T>,
    partition: &DegreePartition,
    p_tail: &DiscriminatorParams<T>,
    p_head: &DiscriminatorParams<T>,
) -> DiscriminatorStep<T> {
    let head = partition.head_nodes();
    let tail = partition.tail_nodes();
    let (tail_loss, tail_grad) = terms_param_grad(
        p_tail,
        &[
            Term { x: h_tilde, rows: head.clone(), label: false },
            Term { x: h, rows: tail, label: true },
        ],
    );
    let (head_loss, head_grad) = terms_param_grad(
        p_head,
        &[
            Term { x: h_hat, rows: all_rows(h_hat.nrows()), label: false },
            Term { x: h, rows: head, label: true },
        ],
    );
    DiscriminatorStep {
        tail_loss,
        head_loss,
        tail_grad,
        head_grad,
    }
}

/// Generator objective and its gradients with respect to `h̃` and `ĥ`.
pub fn generator_loss_grad<T: Scalar>(
    h_tilde: &Array2<T>,
    h_hat: &Array2<T>,
    partition: &DegreePartition,
    p_tail: &DiscriminatorParams<T>,
    p_head: &DiscriminatorParams<T>,
) -> (T, Array2<T>, Array2<T>) {
    let mut g_tilde = Array2::zeros(h_tilde.dim());
    let mut g_hat = Array2::zeros(h_hat.dim());
    let mut loss = T::zero();
    let head = partition.head_nodes();
    if !head.is_empty() {
        let cache = disc_forward(p_tail, h_tilde, &head);
        let (l, gl) = bce_sum(&cache, true);
        loss += l;
        let (gx, _) = disc_backward(p_tail, &cache, &gl);
        for (r, &i) in head.iter().enumerate() {
            g_tilde.row_mut(i).assign(&gx.row(r));
        }
    }
    let all = all_rows(h_hat.nrows());
    if !all.is_empty() {
        let cache = disc_forward(p_head, h_hat, &all);
        let (l, gl) = bce_sum(&cache, true);
        loss += l;
        let (gx, _) = disc_backward(p_head, &cache, &gl);
        g_hat.assign(&gx);
    }
    (loss, g_tilde, g_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DegreePartition;
    use ndarray::array;

    const LN2: f64 = std::f64::consts::LN_2;

    fn partition(head: &[bool]) -> DegreePartition {
        DegreePartition::from_flags(1, head.to_vec())
    }

    #[test]
    fn zero_input_zero_bias_gives_half() {
        let mut p = DiscriminatorParams::<f64>::zeros(3);
        p.w.fill(0.4);
        p.v.fill(-1.3);
        assert_eq!(discriminate(array![0.0, 0.0, 0.0].view(), &p), 0.5);
        let p = DiscriminatorParams::<f64> { v: Array1::zeros(3), ..p };
        assert_eq!(discriminate(array![5.0, -1.0, 2.0].view(), &p), 0.5);
    }

    #[test]
    fn half_outputs_give_ln2_counts() {
        let p = DiscriminatorParams::<f64>::zeros(2);
        let h = Array2::from_elem((8, 2), 0.3);
        let part = partition(&[true, true, true, false, false, false, false, false]);
        assert!((head_adversarial_loss(&h, &h, &part, &p) - 11.0 * LN2).abs() < 1e-12);
        assert!((tail_adversarial_loss(&h, &h, &part, &p) - 8.0 * LN2).abs() < 1e-12);
        assert!((generator_adversarial_loss(&h, &h, &part, &p, &p) - 11.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn all_tail_uses_real_terms_only() {
        let mut p = DiscriminatorParams::<f64>::zeros(2);
        p.w = array![[0.5, -0.2], [0.1, 0.9]];
        p.v = array![1.0, -0.5];
        let h = array![[0.3, 0.1], [-0.4, 0.8]];
        let h_tilde = array![[9.0, 9.0], [9.0, 9.0]];
        let part = partition(&[false, false]);
        let expected: f64 = (0..2).map(|i| -discriminate(h.row(i), &p).ln()).sum();
        assert!((tail_adversarial_loss(&h, &h_tilde, &part, &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn fooled_discriminator_drives_generator_loss_to_zero() {
        let mut p = DiscriminatorParams::<f64>::zeros(1);
        p.b = array![1.0];
        p.v = array![40.0];
        let h = array![[0.0], [0.0]];
        let part = partition(&[true, false]);
        assert!(generator_adversarial_loss(&h, &h, &part, &p, &p) < 1e-6);
    }
}
