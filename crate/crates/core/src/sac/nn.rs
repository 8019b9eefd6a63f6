//! Minimal dense layers with hand-written reverse mode, over a flat
//! parameter vector.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors laid out back to back in one `Vec<f64>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub specs: Vec<TensorSpec>,
    pub data: Vec<f64>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.data.len();
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.data.resize(offset + spec.len(), 0.0);
        self.specs.push(spec);
        offset
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }
}

/// Affine layer `y = x W + b` with `W` stored `n_in x n_out` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn register(ps: &mut ParamSet, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = ps.push(format!("{name}.weight"), &[n_in, n_out]);
        let b = ps.push(format!("{name}.bias"), &[n_out]);
        Self { w, b, n_in, n_out }
    }

    /// Uniform in `+-1/sqrt(n_in)` for weights and biases.
    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        let bound = 1.0 / (self.n_in as f64).sqrt();
        for v in &mut p[self.w..self.w + self.n_in * self.n_out] {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut p[self.b..self.b + self.n_out] {
            *v = rng.random_range(-bound..bound);
        }
    }

    pub fn weight<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.n_in, self.n_out), &p[self.w..self.w + self.n_in * self.n_out])
            .expect("weight shape")
    }

    fn weight_mut<'a>(&self, g: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape(
            (self.n_in, self.n_out),
            &mut g[self.w..self.w + self.n_in * self.n_out],
        )
        .expect("weight shape")
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.n_out]
    }

    pub fn forward(&self, p: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = Array2::zeros((x.nrows(), self.n_out));
        for mut row in y.rows_mut() {
            row.as_slice_mut().expect("contiguous").copy_from_slice(self.bias(p));
        }
        general_mat_mul(1.0, &x, &self.weight(p), 1.0, &mut y);
        y
    }

    /// Forward over sparse input rows `(index, value)`.
    pub fn forward_sparse(&self, p: &[f64], rows: &[Vec<(u32, f64)>]) -> Array2<f64> {
        let mut y = Array2::zeros((rows.len(), self.n_out));
        for (r, mut out) in rows.iter().zip(y.rows_mut()) {
            let out = out.as_slice_mut().expect("contiguous");
            out.copy_from_slice(self.bias(p));
            for &(k, v) in r {
                let w = &p[self.w + k as usize * self.n_out..self.w + (k as usize + 1) * self.n_out];
                for (o, wk) in out.iter_mut().zip(w) {
                    *o += v * wk;
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx` when asked.
    pub fn backward(
        &self,
        p: &[f64],
        g: Option<&mut [f64]>,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        if let Some(g) = g {
            general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut self.weight_mut(g));
            let db = dy.sum_axis(Axis(0));
            for (gb, d) in g[self.b..self.b + self.n_out].iter_mut().zip(db.iter()) {
                *gb += d;
            }
        }
        need_dx.then(|| dy.dot(&self.weight(p).t()))
    }

    pub fn backward_sparse(&self, g: &mut [f64], rows: &[Vec<(u32, f64)>], dy: ArrayView2<f64>) {
        for (r, d) in rows.iter().zip(dy.rows()) {
            for &(k, v) in r {
                let gw = &mut g[self.w + k as usize * self.n_out..self.w + (k as usize + 1) * self.n_out];
                for (gi, di) in gw.iter_mut().zip(d.iter()) {
                    *gi += v * di;
                }
            }
            for (gb, di) in g[self.b..self.b + self.n_out].iter_mut().zip(d.iter()) {
                *gb += di;
            }
        }
    }

    /// Gradient with respect to input columns `cols` only.
    pub fn input_grad_columns(&self, p: &[f64], dy: ArrayView2<f64>, cols: Range<usize>) -> Array2<f64> {
        let w = self.weight(p);
        dy.dot(&w.slice(s![cols, ..]).t())
    }

    /// Range of weight row `k` in the flat vector.
    pub fn row_range(&self, k: usize) -> Range<usize> {
        self.w + k * self.n_out..self.w + (k + 1) * self.n_out
    }
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `dy` where the post-activation output was not positive.
pub fn relu_backward(dy: &mut Array2<f64>, post: &Array2<f64>) {
    ndarray::Zip::from(dy).and(post).for_each(|d, &y| {
        if y <= 0.0 {
            *d = 0.0;
        }
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One step over `ranges`. Entries outside the ranges must have zero
    /// gradient and zero moments, so skipping them is exact.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], ranges: &[Range<usize>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr / bc1;
        for r in ranges {
            for i in r.clone() {
                let g = grads[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                params[i] -= step * self.m[i] / ((self.v[i] / bc2).sqrt() + self.eps);
            }
        }
    }
}

/// `target <- target + tau (online - target)` over `ranges`; `tau = 1` copies.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64, ranges: &[Range<usize>]) {
    for r in ranges {
        if tau == 1.0 {
            target[r.clone()].copy_from_slice(&online[r.clone()]);
        } else {
            for i in r.clone() {
                target[i] += tau * (online[i] - target[i]);
            }
        }
    }
}

pub fn zero_ranges(v: &mut [f64], ranges: &[Range<usize>]) {
    for r in ranges {
        v[r.clone()].fill(0.0);
    }
}
