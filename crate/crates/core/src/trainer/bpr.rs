//! Pairwise ranking triples and the BPR objective.

use ndarray::Array2;
use rand::Rng;

use crate::scalar::{cross_entropy_logit, sigmoid, Scalar};

/// Negative draws per triple before the triple is abandoned.
pub const MAX_NEGATIVE_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Draw `size` training interactions uniformly with replacement, each
/// paired with a uniformly drawn item the user has not interacted with.
/// `positives[u]` must be sorted.
pub fn sample_bpr_batch<R: Rng + ?Sized>(
    train: &[(u32, u32)],
    positives: &[Vec<u32>],
    num_items: usize,
    size: usize,
    rng: &mut R,
) -> Vec<BprTriple> {
    let mut out = Vec::with_capacity(size);
    if train.is_empty() || num_items == 0 {
        return out;
    }
    let mut abandoned = 0usize;
    for _ in 0..size {
        let (u, i) = train[rng.gen_range(0..train.len())];
        let pos_set = &positives[u as usize];
        let mut neg = None;
        for _ in 0..MAX_NEGATIVE_TRIES {
            let j = rng.gen_range(0..num_items as u32);
            if pos_set.binary_search(&j).is_err() {
                neg = Some(j);
                break;
            }
        }
        match neg {
            Some(j) => out.push(BprTriple { user: u, pos: i, neg: j }),
            None => abandoned += 1,
        }
    }
    if abandoned > 0 {
        log::warn!("{abandoned} triples had no negative after {MAX_NEGATIVE_TRIES} draws");
    }
    out
}

fn score<T: Scalar>(emb: &Array2<T>, u: usize, item_node: usize) -> T {
    emb.row(u).dot(&emb.row(item_node))
}

/// `Σ −log σ(ŷ_ui − ŷ_uj)` with the same probability clamp as every other
/// cross-entropy in the model.
pub fn bpr_loss<T: Scalar>(emb: &Array2<T>, triples: &[BprTriple], num_users: usize) -> T {
    triples
        .iter()
        .map(|t| {
            let u = t.user as usize;
            let x = score(emb, u, num_users + t.pos as usize) - score(emb, u, num_users + t.neg as usize);
            cross_entropy_logit(true, sigmoid(x)).0
        })
        .sum()
}

/// Loss and its gradient with respect to every embedding row.
pub fn bpr_loss_grad<T: Scalar>(emb: &Array2<T>, triples: &[BprTriple], num_users: usize) -> (T, Array2<T>) {
    let mut grad = Array2::zeros(emb.dim());
    let mut total = T::zero();
    for t in triples {
        let u = t.user as usize;
        let i = num_users + t.pos as usize;
        let j = num_users + t.neg as usize;
        let x = score(emb, u, i) - score(emb, u, j);
        let (loss, g) = cross_entropy_logit(true, sigmoid(x));
        total += loss;
        if g == T::zero() {
            continue;
        }
        let diff = &emb.row(i) - &emb.row(j);
        let eu = emb.row(u).to_owned();
        grad.row_mut(u).scaled_add(g, &diff);
        grad.row_mut(i).scaled_add(g, &eu);
        grad.row_mut(j).scaled_add(-g, &eu);
    }
    (total, grad)
}
