//! Trainable parameters, their flat tensor view, initialization, and Adam.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::adversarial::DiscriminatorParams;
use crate::augment::{EdgeScoreParams, TransferGrad, TransferLayer, TransferParams};
use crate::scalar::Scalar;

/// Every trainable tensor of the model. The generator group (`h0`, `ws`,
/// transfer layers) is regularized and updated on the main objective; the
/// two discriminators are updated on their own objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    pub h0: Array2<T>,
    pub edge: EdgeScoreParams<T>,
    pub transfer: TransferParams<T>,
    pub disc_tail: DiscriminatorParams<T>,
    pub disc_head: DiscriminatorParams<T>,
}

/// Uniform `±√(6 / (fan_in + fan_out))` fill.
fn xavier<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-bound..bound)))
}

fn xavier_vec<T: Scalar, R: Rng + ?Sized>(len: usize, rng: &mut R) -> Array1<T> {
    let bound = (6.0 / (len + 1) as f64).sqrt();
    Array1::from_shape_simple_fn(len, || T::of(rng.gen_range(-bound..bound)))
}

fn disc_init<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> DiscriminatorParams<T> {
    DiscriminatorParams {
        w: xavier(d, d, rng),
        b: Array1::zeros(d),
        v: xavier_vec(d, rng),
    }
}

impl<T: Scalar> ParameterSet<T> {
    /// Xavier-uniform weights (users and items initialized as separate
    /// blocks), zero biases. The transfer output layer starts at zero, so
    /// every stack begins as the plain propagation.
    pub fn init<R: Rng + ?Sized>(num_users: usize, num_items: usize, dim: usize, layers: usize, rng: &mut R) -> Self {
        let users: Array2<T> = xavier(num_users, dim, rng);
        let items: Array2<T> = xavier(num_items, dim, rng);
        let h0 = ndarray::concatenate(ndarray::Axis(0), &[users.view(), items.view()]).expect("same width");
        let ws = xavier(dim, dim, rng);
        let transfer = TransferParams {
            layers: (0..layers)
                .map(|_| TransferLayer {
                    w1: xavier(2 * dim, dim, rng),
                    b1: Array1::zeros(dim),
                    w2: Array2::zeros((dim, dim)),
                    b2: Array1::zeros(dim),
                })
                .collect(),
        };
        let disc_tail = disc_init(dim, rng);
        let disc_head = disc_init(dim, rng);
        ParameterSet {
            h0,
            edge: EdgeScoreParams { ws },
            transfer,
            disc_tail,
            disc_head,
        }
    }

    pub fn zeros(num_nodes: usize, dim: usize, layers: usize) -> Self {
        ParameterSet {
            h0: Array2::zeros((num_nodes, dim)),
            edge: EdgeScoreParams {
                ws: Array2::zeros((dim, dim)),
            },
            transfer: TransferParams::zeros(dim, layers),
            disc_tail: DiscriminatorParams::zeros(dim),
            disc_head: DiscriminatorParams::zeros(dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.h0.nrows(), self.dim(), self.num_layers())
    }

    pub fn dim(&self) -> usize {
        self.h0.ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.transfer.layers.len()
    }

    /// Tensor names in storage order.
    pub fn tensor_names(layers: usize) -> Vec<String> {
        let mut names = vec!["h0".to_string(), "ws".to_string()];
        for l in 0..layers {
            for p in ["w1", "b1", "w2", "b2"] {
                names.push(format!("transfer.{l}.{p}"));
            }
        }
        for disc in ["disc_tail", "disc_head"] {
            for p in ["w", "b", "v"] {
                names.push(format!("{disc}.{p}"));
            }
        }
        names
    }

    /// Number of leading tensors that belong to the generator group.
    pub fn generator_tensor_count(&self) -> usize {
        2 + 4 * self.num_layers()
    }

    /// Shape of every tensor in storage order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors().iter().map(|(s, _)| s.clone()).collect()
    }

    /// `(shape, data)` for every tensor in storage order.
    pub fn tensors(&self) -> Vec<(Vec<usize>, &[T])> {
        fn m<T>(a: &Array2<T>) -> (Vec<usize>, &[T]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v<T>(a: &Array1<T>) -> (Vec<usize>, &[T]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out = vec![m(&self.h0), m(&self.edge.ws)];
        for layer in &self.transfer.layers {
            out.extend([m(&layer.w1), v(&layer.b1), m(&layer.w2), v(&layer.b2)]);
        }
        for disc in [&self.disc_tail, &self.disc_head] {
            out.extend([m(&disc.w), v(&disc.b), v(&disc.v)]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        fn m<T>(a: &mut Array2<T>) -> &mut [T] {
            a.as_slice_mut().expect("standard layout")
        }
        fn v<T>(a: &mut Array1<T>) -> &mut [T] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out = vec![m(&mut self.h0), m(&mut self.edge.ws)];
        for layer in &mut self.transfer.layers {
            out.push(m(&mut layer.w1));
            out.push(v(&mut layer.b1));
            out.push(m(&mut layer.w2));
            out.push(v(&mut layer.b2));
        }
        for disc in [&mut self.disc_tail, &mut self.disc_head] {
            out.push(m(&mut disc.w));
            out.push(v(&mut disc.b));
            out.push(v(&mut disc.v));
        }
        out
    }

    /// `‖Θ‖²` over the generator group.
    pub fn generator_sq_norm(&self) -> T {
        let count = self.generator_tensor_count();
        self.tensors()
            .iter()
            .take(count)
            .map(|(_, t)| t.iter().map(|&x| x * x).sum::<T>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Add transfer-layer gradients accumulated by the propagation stacks.
    pub fn add_transfer_grads(&mut self, grads: &[TransferGrad<T>]) {
        for (layer, g) in self.transfer.layers.iter_mut().zip(grads) {
            layer.w1 += &g.w1;
            layer.b1 += &g.b1;
            layer.w2 += &g.w2;
            layer.b2 += &g.b2;
        }
    }

    /// Element-wise cast to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::<U>::zeros(self.h0.nrows(), self.dim(), self.num_layers());
        for (dst, (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = U::of(s.as_f64());
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn zero_transfer_grads<T: Scalar>(d: usize, layers: usize) -> Vec<TransferGrad<T>> {
    (0..layers)
        .map(|_| TransferGrad {
            w1: Array2::zeros((2 * d, d)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
        })
        .collect()
}

/// Adam with bias correction over a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_match_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ParameterSet::<f32>::init(5, 4, 3, 2, &mut rng);
        assert_eq!(ParameterSet::<f32>::tensor_names(2).len(), p.tensors().len());
        assert_eq!(p.generator_tensor_count(), 10);
        assert_eq!(p.h0.dim(), (9, 3));
        assert!(p.transfer.layers[0].b1.iter().all(|&b| b == 0.0));
        assert!(p.transfer.layers.iter().all(|l| l.w2.iter().all(|&w| w == 0.0)));
        let user_bound = (6.0f32 / 8.0).sqrt();
        let item_bound = (6.0f32 / 7.0).sqrt();
        assert!(p.h0.rows().into_iter().take(5).flatten().all(|v| v.abs() <= user_bound));
        assert!(p.h0.rows().into_iter().skip(5).flatten().all(|v| v.abs() <= item_bound));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut x = vec![1.0f64, -2.0];
        let mut opt = Adam::new(0.1);
        opt.step(vec![&mut x[..]], vec![&[3.0, -0.5][..]]);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![5.0f64];
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.5)];
            opt.step(vec![&mut x[..]], vec![&g[..]]);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }
}
