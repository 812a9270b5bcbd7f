use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Feed-forward network with tanh hidden layers and a linear output.
/// Parameters are stored flat, layer by layer: row-major weights
/// (`out x in`) followed by biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Layer inputs kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

/// Layer inputs of a batched forward pass, one column per sample.
#[derive(Debug, Clone)]
pub struct BatchCache {
    acts: Vec<DMatrix<f64>>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Mlp {
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        }
    }

    /// Gaussian weights with variance `1 / fan_in`, the last layer further
    /// scaled by `out_gain`; zero biases.
    pub fn init<R: Rng>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Mlp {
        let mut net = Mlp::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == layers { out_gain } else { 1.0 };
            let std = gain / (n_in as f64).sqrt();
            for p in &mut net.params[off..off + n_in * n_out] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * std;
            }
            off += n_in * n_out + n_out;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut next = bias.to_vec();
            for (o, row) in weights.chunks_exact(n_in).enumerate() {
                next[o] += row.iter().zip(&cur).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut next {
                    *v = v.tanh();
                }
            }
            acts.push(cur);
            cur = next;
            off += n_in * n_out + n_out;
        }
        (cur, MlpCache { acts })
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets
    }

    /// Forward pass over the columns of `x` (`input_dim x batch`).
    pub fn forward_batch(&self, x: DMatrix<f64>) -> (DMatrix<f64>, BatchCache) {
        debug_assert_eq!(x.nrows(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let batch = x.ncols();
        let mut acts = Vec::with_capacity(layers);
        let mut cur = x;
        for (l, off) in self.layer_offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            // row-major `out x in` read column-major is its transpose
            let wt = DMatrixView::from_slice(&self.params[off..off + n_in * n_out], n_in, n_out);
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut next = DMatrix::from_fn(n_out, batch, |o, _| bias[o]);
            next.gemm_tr(1.0, &wt, &cur, 1.0);
            if l + 1 < layers {
                next.apply(|v| *v = v.tanh());
            }
            acts.push(cur);
            cur = next;
        }
        (cur, BatchCache { acts })
    }

    /// Batched [`Mlp::backward`]: adds the gradient summed over the columns
    /// of `d_out` (`output_dim x batch`).
    pub fn backward_batch(&self, cache: &BatchCache, d_out: DMatrix<f64>, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let offsets = self.layer_offsets();
        let mut delta = d_out;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            {
                let mut gw = nalgebra::DMatrixViewMut::from_slice(&mut grad[off..off + n_in * n_out], n_in, n_out);
                gw.gemm(1.0, input, &delta.transpose(), 1.0);
            }
            for (o, row) in delta.row_iter().enumerate() {
                grad[off + n_in * n_out + o] += row.sum();
            }
            if l > 0 {
                let wt = DMatrixView::from_slice(&self.params[off..off + n_in * n_out], n_in, n_out);
                let mut prev = &wt * &delta;
                // input of layer l is tanh output of layer l-1
                prev.zip_apply(input, |p, a| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }

    /// Adds `d loss / d params` to `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let offsets = self.layer_offsets();
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, row) in weights.chunks_exact(n_in).enumerate() {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                // input of layer l is tanh output of layer l-1
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}
