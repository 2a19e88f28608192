//! Layers: linear, ReLU, 1-D convolution, affine-free layer norm.
//!
//! Convention shared by all layers:
//! * `forward(&mut self, x)` caches what `backward` needs and returns the
//!   output; calling `backward(&mut self, upstream)` consumes the cache,
//!   accumulates parameter gradients, and returns the input gradient.
//! * `infer(&self, x)` is the cache-free forward for read-only prediction.
//!
//! A single instance must not run `forward` from two threads; clones share
//! nothing and may run in parallel.

use rand::Rng;

use super::tensor::Tensor;
use crate::{Error, Result};

fn shape_err(context: &'static str, expected: String, t: &Tensor) -> Error {
    Error::Shape {
        context,
        expected,
        got: format!("{:?}", t.shape()),
    }
}

/// Fully connected layer over the trailing dimension: `y = x Wᵀ + b`,
/// weight shape `out × in`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    cache: Option<Tensor>,
}

impl LinearLayer {
    /// Weights `U(±1/√in_dim)`, bias zero; both with gradient buffers.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "linear dims must be positive");
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut weight = Tensor::uniform(&[out_dim, in_dim], bound, rng);
        weight.enable_grad();
        let mut bias = Tensor::zeros(&[out_dim]);
        bias.enable_grad();
        LinearLayer {
            weight,
            bias,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor> {
        let (in_dim, out_dim) = (self.in_dim(), self.out_dim());
        if x.rank() > 2 || x.cols() != in_dim {
            return Err(shape_err(
                "LinearLayer::forward",
                format!("[rows, {in_dim}]"),
                x,
            ));
        }
        let rows = x.rows();
        let (w, b, xd) = (self.weight.data(), self.bias.data(), x.data());
        let mut y = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xrow = &xd[r * in_dim..(r + 1) * in_dim];
            let yrow = &mut y[r * out_dim..(r + 1) * out_dim];
            for o in 0..out_dim {
                let wrow = &w[o * in_dim..(o + 1) * in_dim];
                let mut acc = b[o];
                for i in 0..in_dim {
                    acc += wrow[i] * xrow[i];
                }
                yrow[o] = acc;
            }
        }
        let shape: Vec<usize> = if x.rank() == 1 {
            vec![out_dim]
        } else {
            vec![rows, out_dim]
        };
        Tensor::from_vec(&shape, y)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.compute(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.compute(x)
    }

    pub fn backward(&mut self, upstream: &Tensor) -> Tensor {
        let x = self
            .cache
            .take()
            .expect("LinearLayer::backward called without a cached forward");
        let (in_dim, out_dim) = (self.in_dim(), self.out_dim());
        let rows = x.rows();
        assert_eq!(
            upstream.data().len(),
            rows * out_dim,
            "LinearLayer::backward upstream shape {:?} does not match output [{rows}, {out_dim}]",
            upstream.shape()
        );
        let up = upstream.data();
        let xd = x.data();
        let mut dx = vec![0.0; rows * in_dim];
        {
            let dw = self.weight.grad_mut();
            for r in 0..rows {
                let urow = &up[r * out_dim..(r + 1) * out_dim];
                let xrow = &xd[r * in_dim..(r + 1) * in_dim];
                for o in 0..out_dim {
                    let u = urow[o];
                    let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        dwrow[i] += u * xrow[i];
                    }
                }
            }
        }
        {
            let db = self.bias.grad_mut();
            for r in 0..rows {
                for o in 0..out_dim {
                    db[o] += up[r * out_dim + o];
                }
            }
        }
        let w = self.weight.data();
        for r in 0..rows {
            let urow = &up[r * out_dim..(r + 1) * out_dim];
            let dxrow = &mut dx[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let u = urow[o];
                let wrow = &w[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    dxrow[i] += u * wrow[i];
                }
            }
        }
        let shape: Vec<usize> = if x.rank() == 1 {
            vec![in_dim]
        } else {
            vec![rows, in_dim]
        };
        Tensor::from_vec(&shape, dx).expect("dx shape is consistent by construction")
    }

    /// Drop any cached activation (used when cloning a trained model for
    /// worker threads).
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Elementwise `max(0, x)`; the subgradient at exactly 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    mask: Option<Vec<bool>>,
}

impl ReluLayer {
    pub fn new() -> Self {
        ReluLayer { mask: None }
    }

    fn compute(x: &Tensor) -> Tensor {
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_vec(x.shape(), data).expect("same shape")
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        Self::compute(x)
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        Self::compute(x)
    }

    pub fn backward(&mut self, upstream: &Tensor) -> Tensor {
        let mask = self
            .mask
            .take()
            .expect("ReluLayer::backward called without a cached forward");
        assert_eq!(mask.len(), upstream.numel(), "ReLU upstream length mismatch");
        let data = upstream
            .data()
            .iter()
            .zip(&mask)
            .map(|(&u, &m)| if m { u } else { 0.0 })
            .collect();
        Tensor::from_vec(upstream.shape(), data).expect("same shape")
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}

/// 1-D convolution over `channels × time` input with zero same-padding.
/// Kernel shape `out_ch × in_ch × ksize`, `ksize` odd.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: Tensor,
    pub bias: Tensor,
    pad: usize,
    cache: Option<Tensor>,
}

impl Conv1d {
    /// Weights `U(±1/√(in_ch·ksize))`, bias zero.
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, ksize: usize, rng: &mut R) -> Result<Self> {
        if ksize == 0 || ksize.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "conv kernel size must be odd and positive, got {ksize}"
            )));
        }
        let bound = 1.0 / ((in_ch * ksize) as f64).sqrt();
        let mut kernel = Tensor::uniform(&[out_ch, in_ch, ksize], bound, rng);
        kernel.enable_grad();
        let mut bias = Tensor::zeros(&[out_ch]);
        bias.enable_grad();
        Ok(Conv1d {
            kernel,
            bias,
            pad: ksize / 2,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn ksize(&self) -> usize {
        self.kernel.shape()[2]
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor> {
        let (in_ch, out_ch, k, pad) = (self.in_channels(), self.out_channels(), self.ksize(), self.pad);
        if x.rank() != 2 || x.shape()[0] != in_ch {
            return Err(shape_err("Conv1d::forward", format!("[{in_ch}, time]"), x));
        }
        let time = x.shape()[1];
        let (kd, b, xd) = (self.kernel.data(), self.bias.data(), x.data());
        let mut y = vec![0.0; out_ch * time];
        for o in 0..out_ch {
            let yrow = &mut y[o * time..(o + 1) * time];
            yrow.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..in_ch {
                let xrow = &xd[c * time..(c + 1) * time];
                for j in 0..k {
                    let w = kd[(o * in_ch + c) * k + j];
                    // y[o, t] += w * x[c, t + off] over t where t + off is valid
                    let off = j as isize - pad as isize;
                    let t_lo = if off < 0 { (-off) as usize } else { 0 };
                    let t_hi = if off > 0 { time.saturating_sub(off as usize) } else { time };
                    for t in t_lo..t_hi {
                        yrow[t] += w * xrow[(t as isize + off) as usize];
                    }
                }
            }
        }
        Tensor::from_vec(&[out_ch, time], y)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.compute(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.compute(x)
    }

    pub fn backward(&mut self, upstream: &Tensor) -> Tensor {
        let x = self
            .cache
            .take()
            .expect("Conv1d::backward called without a cached forward");
        let (in_ch, out_ch, k, pad) = (self.in_channels(), self.out_channels(), self.ksize(), self.pad);
        let time = x.shape()[1];
        assert_eq!(
            upstream.shape(),
            &[out_ch, time],
            "Conv1d::backward upstream shape mismatch"
        );
        let (up, xd) = (upstream.data(), x.data());
        {
            let dk = self.kernel.grad_mut();
            for o in 0..out_ch {
                let urow = &up[o * time..(o + 1) * time];
                for c in 0..in_ch {
                    let xrow = &xd[c * time..(c + 1) * time];
                    for j in 0..k {
                        let off = j as isize - pad as isize;
                        let t_lo = if off < 0 { (-off) as usize } else { 0 };
                        let t_hi = if off > 0 { time.saturating_sub(off as usize) } else { time };
                        let mut acc = 0.0;
                        for t in t_lo..t_hi {
                            acc += urow[t] * xrow[(t as isize + off) as usize];
                        }
                        dk[(o * in_ch + c) * k + j] += acc;
                    }
                }
            }
        }
        {
            let db = self.bias.grad_mut();
            for o in 0..out_ch {
                db[o] += up[o * time..(o + 1) * time].iter().sum::<f64>();
            }
        }
        let kd = self.kernel.data();
        let mut dx = vec![0.0; in_ch * time];
        for c in 0..in_ch {
            let dxrow = &mut dx[c * time..(c + 1) * time];
            for o in 0..out_ch {
                let urow = &up[o * time..(o + 1) * time];
                for j in 0..k {
                    let w = kd[(o * in_ch + c) * k + j];
                    // dx[c, s] += w * up[o, s - (j - pad)] over valid s
                    let off = j as isize - pad as isize;
                    let s_lo = if off > 0 { off as usize } else { 0 };
                    let s_hi = if off < 0 { time.saturating_sub((-off) as usize) } else { time };
                    for s in s_lo..s_hi {
                        dxrow[s] += w * urow[(s as isize - off) as usize];
                    }
                }
            }
        }
        Tensor::from_vec(&[in_ch, time], dx).expect("dx shape consistent")
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Affine-free layer normalization over the trailing dimension, with
/// population variance and `eps` added inside the square root.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub eps: f64,
    cache: Option<LnCache>,
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl LayerNorm {
    pub fn new(eps: f64) -> Self {
        LayerNorm { eps, cache: None }
    }

    fn stats(&self, x: &Tensor) -> (Vec<f64>, Vec<f64>, usize, usize) {
        let cols = x.cols();
        let rows = x.numel() / cols;
        let xd = x.data();
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                xhat[r * cols + c] = (row[c] - mean) * inv;
            }
        }
        (xhat, inv_std, rows, cols)
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let (xhat, inv_std, rows, cols) = self.stats(x);
        let out = Tensor::from_vec(x.shape(), xhat.clone()).expect("same shape");
        self.cache = Some(LnCache {
            xhat,
            inv_std,
            rows,
            cols,
        });
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let (xhat, _, _, _) = self.stats(x);
        Tensor::from_vec(x.shape(), xhat).expect("same shape")
    }

    pub fn backward(&mut self, upstream: &Tensor) -> Tensor {
        let cache = self
            .cache
            .take()
            .expect("LayerNorm::backward called without a cached forward");
        let (rows, cols) = (cache.rows, cache.cols);
        assert_eq!(
            upstream.numel(),
            rows * cols,
            "LayerNorm::backward upstream shape mismatch"
        );
        let up = upstream.data();
        let mut dx = vec![0.0; rows * cols];
        for r in 0..rows {
            let g = &up[r * cols..(r + 1) * cols];
            let xh = &cache.xhat[r * cols..(r + 1) * cols];
            let inv = cache.inv_std[r];
            let mg = g.iter().sum::<f64>() / cols as f64;
            let mgx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
            let drow = &mut dx[r * cols..(r + 1) * cols];
            for c in 0..cols {
                drow[c] = inv * (g[c] - mg - xh[c] * mgx);
            }
        }
        Tensor::from_vec(upstream.shape(), dx).expect("same shape")
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_forward_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = LinearLayer::new(2, 3, &mut rng);
        lin.weight = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        lin.weight.enable_grad();
        lin.bias = Tensor::from_vec(&[3], vec![0.5, -0.5, 0.0]).unwrap();
        lin.bias.enable_grad();
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 2.0, -1.0]).unwrap();
        let y = lin.forward(&x).unwrap();
        // row 0: [1+2+0.5, 3+4-0.5, 5+6] ; row 1: [2-2+0.5, 6-4-0.5, 10-6]
        assert_eq!(y.data(), &[3.5, 6.5, 11.0, 0.5, 1.5, 4.0]);
    }

    #[test]
    fn linear_rejects_wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = LinearLayer::new(4, 2, &mut rng);
        let x = Tensor::zeros(&[3, 5]);
        assert!(lin.forward(&x).is_err());
    }

    #[test]
    fn relu_zeroes_negatives_and_subgradient_at_zero_is_zero() {
        let mut relu = ReluLayer::new();
        let x = Tensor::from_vec(&[4], vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        let y = relu.forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0]);
        let up = Tensor::from_vec(&[4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let dx = relu.backward(&up);
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn conv_same_padding_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv1d::new(1, 1, 3, &mut rng).unwrap();
        conv.kernel = Tensor::from_vec(&[1, 1, 3], vec![1.0, 10.0, 100.0]).unwrap();
        conv.kernel.enable_grad();
        conv.bias = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        conv.bias.enable_grad();
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x).unwrap();
        // y[t] = 1*x[t-1] + 10*x[t] + 100*x[t+1], zero-padded
        assert_eq!(y.data(), &[210.0, 321.0, 432.0, 43.0]);
    }

    #[test]
    fn conv_requires_odd_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Conv1d::new(2, 2, 4, &mut rng).is_err());
        assert!(Conv1d::new(2, 2, 3, &mut rng).is_ok());
    }

    #[test]
    fn layernorm_rows_become_zero_mean_unit_scale() {
        let mut ln = LayerNorm::new(1e-5);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = ln.forward(&x);
        // mean 2.5, population var 1.25
        let scale = (1.25f64 + 1e-5).sqrt();
        for (a, b) in y.data().iter().zip([-1.5, -0.5, 0.5, 1.5]) {
            assert!((a - b / scale).abs() < 1e-12);
        }
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn infer_matches_forward_for_all_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x2 = Tensor::uniform(&[5, 6], 1.0, &mut rng);
        let mut lin = LinearLayer::new(6, 4, &mut rng);
        assert_eq!(lin.infer(&x2).unwrap().data(), lin.forward(&x2).unwrap().data());
        let mut conv = Conv1d::new(5, 5, 3, &mut rng).unwrap();
        assert_eq!(conv.infer(&x2).unwrap().data(), conv.forward(&x2).unwrap().data());
        let mut ln = LayerNorm::new(1e-5);
        assert_eq!(ln.infer(&x2).data(), ln.forward(&x2).data());
        let mut relu = ReluLayer::new();
        assert_eq!(relu.infer(&x2).data(), relu.forward(&x2).data());
    }
}
