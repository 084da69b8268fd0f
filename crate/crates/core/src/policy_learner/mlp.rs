//! Fully connected ReLU network over row-major batches.
//!
//! Parameters live in one flat vector, layer by layer: the `in x out`
//! weight matrix (row-major) followed by the `out` biases.

use rand::{Rng, RngCore};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], a_trans: bool, b: &[f64], b_trans: bool, beta: f64, c: &mut [f64]) {
    // Row-major `m x k` has strides (k, 1); its transpose view swaps them.
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices hold at least the m*k, k*n and m*n elements the
    // strides above address.
    unsafe {
        matrixmultiply::dgemm(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn new(sizes: &[usize], rng: &mut dyn RngCore) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|s| *s > 0), "invalid layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|s| *s > 0) && params.len() == param_count(sizes))
            .then(|| Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Forward pass on `batch` rows; returns the outputs and the cache.
    pub fn forward(&self, input: &[f64], batch: usize) -> (Vec<f64>, Cache) {
        assert_eq!(input.len(), batch * self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut x = input.to_vec();
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            gemm(batch, fan_in, fan_out, 1.0, &x, false, weights, false, 1.0, &mut z);
            if l + 1 < layers {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            inputs.push(std::mem::replace(&mut x, z));
        }
        (x, Cache { batch, inputs })
    }

    pub fn predict(&self, input: &[f64], batch: usize) -> Vec<f64> {
        self.forward(input, batch).0
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d output`,
    /// and return `d loss / d input`.
    pub fn backward(&self, cache: &Cache, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let batch = cache.batch;
        assert_eq!(grad_output.len(), batch * self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.inputs[l];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                gemm(fan_in, batch, fan_out, 1.0, x, true, &delta, false, 1.0, gw);
                for row in delta.chunks_exact(fan_out) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut dx = vec![0.0; batch * fan_in];
            gemm(batch, fan_out, fan_in, 1.0, &delta, false, weights, true, 0.0, &mut dx);
            if l > 0 {
                // `x` is the ReLU output of the previous layer.
                for (d, xi) in dx.iter_mut().zip(x) {
                    if *xi <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        delta
    }

    /// `self = tau * source + (1 - tau) * self`, elementwise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.sizes, source.sizes);
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}
