//! Fully connected ReLU network with a linear head, trained with Adam.

use nalgebra::{DMatrix, DVector, RealField};
use rand::Rng;

use crate::{Error, Result};

/// Network scalar with a strided GEMM kernel.
pub trait NetScalar: RealField + Copy {
    /// `C ← α·A·B + β·C` over raw strided storage (`m×k` times `k×n`).
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    );
}

impl NetScalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: (*const f32, isize, isize),
        b: (*const f32, isize, isize),
        beta: f32,
        c: (*mut f32, isize, isize),
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2);
    }
}

impl NetScalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: (*const f64, isize, isize),
        b: (*const f64, isize, isize),
        beta: f64,
        c: (*mut f64, isize, isize),
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2);
    }
}

/// `op(a)·op(b)` into a fresh matrix, `op` optionally transposing.
fn matmul<T: NetScalar>(a: &DMatrix<T>, ta: bool, b: &DMatrix<T>, tb: bool) -> DMatrix<T> {
    let view = |x: &DMatrix<T>, t: bool| {
        let (r, c, ld) = (x.nrows(), x.ncols(), x.nrows() as isize);
        if t {
            (c, r, ld, 1)
        } else {
            (r, c, 1, ld)
        }
    };
    let (m, k, rsa, csa) = view(a, ta);
    let (k2, n, rsb, csb) = view(b, tb);
    assert_eq!(k, k2, "inner dimensions");
    let mut c = DMatrix::zeros(m, n);
    if m > 0 && n > 0 {
        // SAFETY: shapes and strides come from the matrices themselves and `c` is fresh
        unsafe {
            T::gemm_raw(
                m,
                k,
                n,
                T::one(),
                (a.as_ptr(), rsa, csa),
                (b.as_ptr(), rsb, csb),
                T::zero(),
                (c.as_mut_ptr(), 1, m as isize),
            );
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
struct Dense<T: NetScalar> {
    /// `out × in`
    w: DMatrix<T>,
    b: DVector<T>,
}

/// MLP: `input → hidden… (ReLU) → output (linear)`. Batches are column-major,
/// one sample per column.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T: NetScalar = f32> {
    layers: Vec<Dense<T>>,
}

/// Parameter-shaped buffers (gradients, Adam moments).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T: NetScalar> {
    w: Vec<DMatrix<T>>,
    b: Vec<DVector<T>>,
}

impl<T: NetScalar> Gradient<T> {
    fn zeros_like(net: &QNetwork<T>) -> Self {
        Self {
            w: net.layers.iter().map(|l| DMatrix::zeros(l.w.nrows(), l.w.ncols())).collect(),
            b: net.layers.iter().map(|l| DVector::zeros(l.b.len())).collect(),
        }
    }

    /// Flat view in [`QNetwork::param`] order.
    pub fn get(&self, index: usize) -> T {
        let mut i = index;
        for (w, b) in self.w.iter().zip(&self.b) {
            if i < w.len() {
                return w.as_slice()[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("gradient index {index} out of range");
    }
}

fn cast<T: NetScalar>(x: f64) -> T {
    nalgebra::convert(x)
}

fn to_f64<T: NetScalar>(x: T) -> f64 {
    x.to_subset().expect("real scalar converts to f64")
}

impl<T: NetScalar> QNetwork<T> {
    /// He-style uniform init: `U(±√(6 / fan_in))`, zero biases.
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &width in hidden.iter().chain(std::iter::once(&output)) {
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = DMatrix::from_fn(width, fan_in, |_, _| cast(rng.random_range(-bound..bound)));
            layers.push(Dense {
                w,
                b: DVector::zeros(width),
            });
            fan_in = width;
        }
        Self { layers }
    }

    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut fan_in = input;
        let layers = hidden
            .iter()
            .chain(std::iter::once(&output))
            .map(|&width| {
                let l = Dense {
                    w: DMatrix::zeros(width, fan_in),
                    b: DVector::zeros(width),
                };
                fan_in = width;
                l
            })
            .collect();
        Self { layers }
    }

    /// Builds a network from explicit `(weights, biases)` per layer.
    pub fn from_layers(layers: Vec<(DMatrix<T>, DVector<T>)>) -> Result<Self> {
        for (i, (w, b)) in layers.iter().enumerate() {
            if w.nrows() != b.len() || (i > 0 && w.ncols() != layers[i - 1].0.nrows()) {
                return Err(Error::DimensionMismatch {
                    expected: w.nrows(),
                    got: b.len(),
                });
            }
        }
        Ok(Self {
            layers: layers.into_iter().map(|(w, b)| Dense { w, b }).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn locate(&mut self, index: usize) -> &mut T {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.w.len() {
                return &mut l.w.as_mut_slice()[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return &mut l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Parameter `index` in flat order: per layer, weights column-major then biases.
    pub fn param(&self, index: usize) -> T {
        let mut i = index;
        for l in &self.layers {
            if i < l.w.len() {
                return l.w.as_slice()[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        *self.locate(index) = value;
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| to_f64(*x).is_finite()))
    }

    /// Forward pass on a batch (`input_dim × B`).
    pub fn forward_batch(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = affine(l, &a);
            if i < last {
                z.apply(|v| *v = v.max(T::zero()));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.forward_batch(&m)?.as_slice().to_vec())
    }

    /// Loss `Σ_i w_i (Q(x_i, a_i) − y_i)² / B` and its gradient.
    /// Returns `(loss, gradient, Q(x_i, a_i))`.
    pub fn loss_gradient(
        &self,
        x: &DMatrix<T>,
        actions: &[usize],
        targets: &[T],
        weights: &[T],
    ) -> Result<(T, Gradient<T>, Vec<T>)> {
        let batch = x.ncols();
        if actions.len() != batch || targets.len() != batch || weights.len() != batch || batch == 0 {
            return Err(Error::DimensionMismatch {
                expected: batch,
                got: actions.len(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: a,
            });
        }
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = affine(l, acts.last().unwrap());
            if i < last {
                z.apply(|v| *v = v.max(T::zero()));
            }
            acts.push(z);
        }
        let out = acts.last().unwrap();
        let inv_b = cast::<T>(1.0 / batch as f64);
        let two = cast::<T>(2.0);
        let mut delta = DMatrix::zeros(out.nrows(), batch);
        let mut loss = T::zero();
        let mut taken = Vec::with_capacity(batch);
        for j in 0..batch {
            let q = out[(actions[j], j)];
            let e = q - targets[j];
            loss += weights[j] * e * e * inv_b;
            delta[(actions[j], j)] = two * weights[j] * e * inv_b;
            taken.push(q);
        }

        let mut grad = Gradient::zeros_like(self);
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            grad.w[i] = matmul(&delta, false, input, true);
            grad.b[i] = delta.column_sum();
            if i > 0 {
                let mut prev = matmul(&self.layers[i].w, true, &delta, false);
                // ReLU derivative from the stored activation
                prev.zip_apply(input, |d, a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = prev;
            }
        }
        Ok((loss, grad, taken))
    }
}

fn affine<T: NetScalar>(l: &Dense<T>, a: &DMatrix<T>) -> DMatrix<T> {
    let mut z = if a.ncols() == 1 { &l.w * a } else { matmul(&l.w, false, a, false) };
    for mut col in z.column_iter_mut() {
        col += &l.b;
    }
    z
}

#[derive(Clone, Debug)]
pub struct Adam<T: NetScalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Gradient<T>,
    v: Gradient<T>,
}

impl<T: NetScalar> Adam<T> {
    pub fn new(net: &QNetwork<T>, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradient::zeros_like(net),
            v: Gradient::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut QNetwork<T>, g: &Gradient<T>) {
        self.t += 1;
        let (b1, b2) = (cast::<T>(self.beta1), cast::<T>(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let step = cast::<T>(self.lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t)));
        let eps = cast::<T>(self.eps);
        let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + c1 * g[k];
                v[k] = b2 * v[k] + c2 * g[k] * g[k];
                p[k] -= step * m[k] / (v[k].sqrt() + eps);
            }
        };
        for (i, l) in net.layers.iter_mut().enumerate() {
            update(l.w.as_mut_slice(), g.w[i].as_slice(), self.m.w[i].as_mut_slice(), self.v.w[i].as_mut_slice());
            update(l.b.as_mut_slice(), g.b[i].as_slice(), self.m.b[i].as_mut_slice(), self.v.b[i].as_mut_slice());
        }
    }
}
