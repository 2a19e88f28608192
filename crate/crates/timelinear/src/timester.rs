//! TimeSter: a forecaster that predicts each variable purely from encoded
//! calendar features.
//!
//! The encoder lifts a `time × r` feature sequence to `time × V` virtual
//! variables:
//!
//! ```text
//! U (time × r)
//!   → Linear(r → h1) → LayerNorm → ReLU      (hidden block 1)
//!   → Linear(h1 → V) → LayerNorm → ReLU      (hidden block 2)
//!   → transpose → Conv1d(V → V, odd k, same padding) → transpose
//!   → Linear(V → V)                          (projection)
//! ```
//!
//! with `h1 = max(1, round(V / reduction_rate))`. The decoder then maps the
//! encoded history window (length `L`) to the horizon (length `T`) with a
//! single linear layer applied along the time axis, shared across the `V`
//! columns. Hidden blocks, the conv, layer norms and ReLUs can be toggled
//! off for ablations; the projection and decoder are always present.

use rand::Rng;

use crate::nncore::{Conv1d, LayerNorm, LinearLayer, ReluLayer, Tensor};
use crate::{Error, Result};

/// Epsilon used by every layer norm in the encoder.
pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSterConfig {
    /// Number of encoded calendar features, `r`.
    pub in_features: usize,
    /// Number of data variables, `V`.
    pub n_vars: usize,
    /// History window length, `L`.
    pub seq_len: usize,
    /// Forecast horizon, `T`.
    pub pred_len: usize,
    /// First hidden width is `max(1, round(V / reduction_rate))`.
    pub reduction_rate: f64,
    /// Conv kernel size; odd.
    pub ksize: usize,
    /// Number of hidden blocks: 0, 1 or 2.
    pub hidden_layers: u8,
    pub use_relu: bool,
    pub use_conv: bool,
    pub use_layernorm: bool,
}

impl TimeSterConfig {
    /// The standard architecture: two hidden blocks, conv, norms and ReLUs on.
    pub fn standard(
        in_features: usize,
        n_vars: usize,
        seq_len: usize,
        pred_len: usize,
        reduction_rate: f64,
        ksize: usize,
    ) -> Self {
        TimeSterConfig {
            in_features,
            n_vars,
            seq_len,
            pred_len,
            reduction_rate,
            ksize,
            hidden_layers: 2,
            use_relu: true,
            use_conv: true,
            use_layernorm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_features", self.in_features),
            ("n_vars", self.n_vars),
            ("seq_len", self.seq_len),
            ("pred_len", self.pred_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.reduction_rate.is_finite() && self.reduction_rate > 0.0) {
            return Err(Error::Config(format!(
                "reduction_rate must be a positive finite number, got {}",
                self.reduction_rate
            )));
        }
        if self.use_conv && (self.ksize == 0 || self.ksize.is_multiple_of(2)) {
            return Err(Error::Config(format!(
                "ksize must be odd and positive, got {}",
                self.ksize
            )));
        }
        if self.hidden_layers > 2 {
            return Err(Error::Config(format!(
                "hidden_layers must be 0, 1 or 2, got {}",
                self.hidden_layers
            )));
        }
        Ok(())
    }

    /// Width of the first hidden layer.
    pub fn hidden1_width(&self) -> usize {
        ((self.n_vars as f64 / self.reduction_rate).round() as usize).max(1)
    }

    /// Channel count after the hidden blocks (input to conv/projection).
    fn encoder_channels(&self) -> usize {
        if self.hidden_layers == 0 {
            self.in_features
        } else {
            self.n_vars
        }
    }
}

/// The stamp forecaster. See the module docs for the architecture.
#[derive(Debug, Clone)]
pub struct TimeSter {
    cfg: TimeSterConfig,
    hidden1: Option<LinearLayer>,
    norm1: Option<LayerNorm>,
    relu1: Option<ReluLayer>,
    hidden2: Option<LinearLayer>,
    norm2: Option<LayerNorm>,
    relu2: Option<ReluLayer>,
    conv: Option<Conv1d>,
    proj: LinearLayer,
    decoder: LinearLayer,
}

impl TimeSter {
    /// Build with weights `U(±1/√fan_in)` and zero biases, drawn from `rng`
    /// in canonical parameter order (hidden1, hidden2, conv, proj, decoder).
    pub fn new<R: Rng>(cfg: TimeSterConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let v = cfg.n_vars;
        let r = cfg.in_features;
        let h1 = cfg.hidden1_width();
        let (hidden1, hidden2) = match cfg.hidden_layers {
            0 => (None, None),
            // A single hidden block maps straight to V channels.
            1 => (Some(LinearLayer::new(r, v, rng)), None),
            _ => (
                Some(LinearLayer::new(r, h1, rng)),
                Some(LinearLayer::new(h1, v, rng)),
            ),
        };
        let mk_norm = |present: bool| {
            (present && cfg.use_layernorm).then(|| LayerNorm::new(LAYERNORM_EPS))
        };
        let mk_relu = |present: bool| (present && cfg.use_relu).then(ReluLayer::new);
        let norm1 = mk_norm(hidden1.is_some());
        let relu1 = mk_relu(hidden1.is_some());
        let norm2 = mk_norm(hidden2.is_some());
        let relu2 = mk_relu(hidden2.is_some());
        let c = cfg.encoder_channels();
        let conv = if cfg.use_conv {
            Some(Conv1d::new(c, c, cfg.ksize, rng)?)
        } else {
            None
        };
        let proj = LinearLayer::new(c, v, rng);
        let decoder = LinearLayer::new(cfg.seq_len, cfg.pred_len, rng);
        Ok(TimeSter {
            cfg,
            hidden1,
            norm1,
            relu1,
            hidden2,
            norm2,
            relu2,
            conv,
            proj,
            decoder,
        })
    }

    pub fn config(&self) -> &TimeSterConfig {
        &self.cfg
    }

    /// Encode a stamp-feature sequence of any length: `time × r → time × V`.
    pub fn encode(&mut self, u: &Tensor) -> Result<Tensor> {
        if u.rank() != 2 || u.cols() != self.cfg.in_features {
            return Err(Error::Shape {
                context: "TimeSter::encode",
                expected: format!("[time, {}]", self.cfg.in_features),
                got: format!("{:?}", u.shape()),
            });
        }
        let mut x = u.clone();
        if let Some(h) = &mut self.hidden1 {
            x = h.forward(&x)?;
            if let Some(n) = &mut self.norm1 {
                x = n.forward(&x);
            }
            if let Some(a) = &mut self.relu1 {
                x = a.forward(&x);
            }
        }
        if let Some(h) = &mut self.hidden2 {
            x = h.forward(&x)?;
            if let Some(n) = &mut self.norm2 {
                x = n.forward(&x);
            }
            if let Some(a) = &mut self.relu2 {
                x = a.forward(&x);
            }
        }
        if let Some(c) = &mut self.conv {
            x = c.forward(&x.transposed2())?.transposed2();
        }
        self.proj.forward(&x)
    }

    /// Decode an encoded history window: `L × V → T × V`, one linear map
    /// along time shared across columns.
    pub fn decode(&mut self, encoded: &Tensor) -> Result<Tensor> {
        if encoded.rank() != 2 || encoded.shape()[0] != self.cfg.seq_len {
            return Err(Error::Shape {
                context: "TimeSter::decode",
                expected: format!("[{}, {}]", self.cfg.seq_len, self.cfg.n_vars),
                got: format!("{:?}", encoded.shape()),
            });
        }
        Ok(self.decoder.forward(&encoded.transposed2())?.transposed2())
    }

    /// Full forward: `U (L × r) → Ŷ (T × V)`.
    pub fn forward(&mut self, u: &Tensor) -> Result<Tensor> {
        let encoded = self.encode(u)?;
        self.decode(&encoded)
    }

    /// Cache-free [`Self::encode`] for read-only prediction; safe to call
    /// concurrently on a shared reference.
    pub fn infer_encode(&self, u: &Tensor) -> Result<Tensor> {
        if u.rank() != 2 || u.cols() != self.cfg.in_features {
            return Err(Error::Shape {
                context: "TimeSter::encode",
                expected: format!("[time, {}]", self.cfg.in_features),
                got: format!("{:?}", u.shape()),
            });
        }
        let mut x = u.clone();
        if let Some(h) = &self.hidden1 {
            x = h.infer(&x)?;
            if let Some(n) = &self.norm1 {
                x = n.infer(&x);
            }
            if let Some(a) = &self.relu1 {
                x = a.infer(&x);
            }
        }
        if let Some(h) = &self.hidden2 {
            x = h.infer(&x)?;
            if let Some(n) = &self.norm2 {
                x = n.infer(&x);
            }
            if let Some(a) = &self.relu2 {
                x = a.infer(&x);
            }
        }
        if let Some(c) = &self.conv {
            x = c.infer(&x.transposed2())?.transposed2();
        }
        self.proj.infer(&x)
    }

    /// Cache-free [`Self::decode`].
    pub fn infer_decode(&self, encoded: &Tensor) -> Result<Tensor> {
        if encoded.rank() != 2 || encoded.shape()[0] != self.cfg.seq_len {
            return Err(Error::Shape {
                context: "TimeSter::decode",
                expected: format!("[{}, {}]", self.cfg.seq_len, self.cfg.n_vars),
                got: format!("{:?}", encoded.shape()),
            });
        }
        Ok(self.decoder.infer(&encoded.transposed2())?.transposed2())
    }

    /// Cache-free full forward.
    pub fn infer(&self, u: &Tensor) -> Result<Tensor> {
        self.infer_decode(&self.infer_encode(u)?)
    }

    /// Conditioning probe for finite-difference gradient verification: runs
    /// the encoder cache-free on `u` and returns `(kink_margin, min_norm_var)`
    /// where `kink_margin` is the smallest `|pre-activation|` entering any
    /// ReLU and `min_norm_var` the smallest per-row variance entering any
    /// layer norm (`f64::INFINITY` when the corresponding layers are absent).
    ///
    /// A central-difference step that straddles a ReLU kink measures a slope
    /// the analytic gradient legitimately disagrees with, and layer-norm
    /// truncation error grows like `h² / (var + eps)`, so finite-difference
    /// checks are only meaningful where both values comfortably exceed the
    /// step size scale.
    pub fn fd_conditioning(&self, u: &Tensor) -> Result<(f64, f64)> {
        if u.rank() != 2 || u.cols() != self.cfg.in_features {
            return Err(Error::Shape {
                context: "TimeSter::fd_conditioning",
                expected: format!("[time, {}]", self.cfg.in_features),
                got: format!("{:?}", u.shape()),
            });
        }
        let min_abs = |t: &Tensor| t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let min_row_var = |t: &Tensor| {
            let cols = t.cols();
            t.data()
                .chunks_exact(cols)
                .map(|row| {
                    let mean = row.iter().sum::<f64>() / cols as f64;
                    row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64
                })
                .fold(f64::INFINITY, f64::min)
        };
        let mut kink = f64::INFINITY;
        let mut var_min = f64::INFINITY;
        let mut x = u.clone();
        for (hidden, norm, relu) in [
            (&self.hidden1, &self.norm1, &self.relu1),
            (&self.hidden2, &self.norm2, &self.relu2),
        ] {
            if let Some(h) = hidden {
                x = h.infer(&x)?;
                if let Some(n) = norm {
                    var_min = var_min.min(min_row_var(&x));
                    x = n.infer(&x);
                }
                if let Some(a) = relu {
                    kink = kink.min(min_abs(&x));
                    x = a.infer(&x);
                }
            }
        }
        Ok((kink, var_min))
    }

    /// Backward through the decoder only: upstream `T × V → L × V`.
    pub fn backward_decode(&mut self, upstream: &Tensor) -> Tensor {
        self.decoder.backward(&upstream.transposed2()).transposed2()
    }

    /// Backward through the encoder: upstream `time × V → time × r`.
    pub fn backward_encode(&mut self, upstream: &Tensor) -> Tensor {
        let mut g = self.proj.backward(upstream);
        if let Some(c) = &mut self.conv {
            g = c.backward(&g.transposed2()).transposed2();
        }
        if let Some(h2) = &mut self.hidden2 {
            if let Some(a) = &mut self.relu2 {
                g = a.backward(&g);
            }
            if let Some(n) = &mut self.norm2 {
                g = n.backward(&g);
            }
            g = h2.backward(&g);
        }
        if let Some(h1) = &mut self.hidden1 {
            if let Some(a) = &mut self.relu1 {
                g = a.backward(&g);
            }
            if let Some(n) = &mut self.norm1 {
                g = n.backward(&g);
            }
            g = h1.backward(&g);
        }
        g
    }

    /// Backward through decoder then encoder: upstream `T × V → L × r`.
    pub fn backward(&mut self, upstream: &Tensor) -> Tensor {
        let g = self.backward_decode(upstream);
        self.backward_encode(&g)
    }

    /// Parameters in canonical order with their qualified names.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        if let Some(l) = &self.hidden1 {
            out.push(("hidden1.weight".into(), &l.weight));
            out.push(("hidden1.bias".into(), &l.bias));
        }
        if let Some(l) = &self.hidden2 {
            out.push(("hidden2.weight".into(), &l.weight));
            out.push(("hidden2.bias".into(), &l.bias));
        }
        if let Some(c) = &self.conv {
            out.push(("conv.kernel".into(), &c.kernel));
            out.push(("conv.bias".into(), &c.bias));
        }
        out.push(("proj.weight".into(), &self.proj.weight));
        out.push(("proj.bias".into(), &self.proj.bias));
        out.push(("decoder.weight".into(), &self.decoder.weight));
        out.push(("decoder.bias".into(), &self.decoder.bias));
        out
    }

    /// Mutable view of the parameters in the same canonical order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(l) = &mut self.hidden1 {
            out.push(("hidden1.weight".into(), &mut l.weight));
            out.push(("hidden1.bias".into(), &mut l.bias));
        }
        if let Some(l) = &mut self.hidden2 {
            out.push(("hidden2.weight".into(), &mut l.weight));
            out.push(("hidden2.bias".into(), &mut l.bias));
        }
        if let Some(c) = &mut self.conv {
            out.push(("conv.kernel".into(), &mut c.kernel));
            out.push(("conv.bias".into(), &mut c.bias));
        }
        out.push(("proj.weight".into(), &mut self.proj.weight));
        out.push(("proj.bias".into(), &mut self.proj.bias));
        out.push(("decoder.weight".into(), &mut self.decoder.weight));
        out.push(("decoder.bias".into(), &mut self.decoder.bias));
        out
    }

    /// Drop cached activations (when cloning for worker threads).
    pub fn clear_caches(&mut self) {
        if let Some(l) = &mut self.hidden1 {
            l.clear_cache();
        }
        if let Some(l) = &mut self.hidden2 {
            l.clear_cache();
        }
        if let Some(n) = &mut self.norm1 {
            n.clear_cache();
        }
        if let Some(n) = &mut self.norm2 {
            n.clear_cache();
        }
        if let Some(a) = &mut self.relu1 {
            a.clear_cache();
        }
        if let Some(a) = &mut self.relu2 {
            a.clear_cache();
        }
        if let Some(c) = &mut self.conv {
            c.clear_cache();
        }
        self.proj.clear_cache();
        self.decoder.clear_cache();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(r: usize, v: usize, l: usize, t: usize) -> TimeSterConfig {
        TimeSterConfig::standard(r, v, l, t, 1.0, 3)
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ts = TimeSter::new(cfg(3, 5, 8, 4), &mut rng).unwrap();
        let u = Tensor::uniform(&[8, 3], 0.5, &mut rng);
        let enc = ts.encode(&u).unwrap();
        assert_eq!(enc.shape(), &[8, 5]);
        let y = ts.decode(&enc).unwrap();
        assert_eq!(y.shape(), &[4, 5]);
        // Encoding also works on horizon-length sequences.
        let p = Tensor::uniform(&[4, 3], 0.5, &mut rng);
        assert_eq!(ts.encode(&p).unwrap().shape(), &[4, 5]);
    }

    #[test]
    fn hidden1_width_follows_reduction_rate() {
        let mut c = cfg(2, 7, 8, 4);
        assert_eq!(c.hidden1_width(), 7);
        c.reduction_rate = 2.0;
        assert_eq!(c.hidden1_width(), 4); // round(3.5) = 4
        c.reduction_rate = 100.0;
        assert_eq!(c.hidden1_width(), 1); // clamped to 1
    }

    #[test]
    fn fd_conditioning_reports_the_relu_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = cfg(3, 4, 6, 2);
        c.hidden_layers = 1;
        c.use_layernorm = false;
        c.use_conv = false;
        let ts = TimeSter::new(c, &mut rng).unwrap();
        let u = Tensor::uniform(&[6, 3], 1.0, &mut rng);
        let (kink, var_min) = ts.fd_conditioning(&u).unwrap();
        // No layer norm anywhere, so the variance slot is vacuous.
        assert_eq!(var_min, f64::INFINITY);
        // The margin is the smallest |entry| of the one pre-activation map,
        // recomputed here by hand in the same accumulation order.
        let h = ts.hidden1.as_ref().unwrap();
        let (w, b) = (h.weight.data(), h.bias.data());
        let mut expected = f64::INFINITY;
        for row in 0..6 {
            for o in 0..4 {
                let mut acc = b[o];
                for i in 0..3 {
                    acc += w[o * 3 + i] * u.data()[row * 3 + i];
                }
                expected = expected.min(acc.abs());
            }
        }
        assert!(expected.is_finite() && expected > 0.0);
        assert_eq!(kink, expected);
    }

    #[test]
    fn fd_conditioning_flags_degenerate_norm_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut ts = TimeSter::new(cfg(2, 3, 5, 2), &mut rng).unwrap();
        // Zeroing the first hidden layer sends constant rows into the first
        // layer norm, so the variance and the downstream ReLU margin both
        // collapse to zero.
        for (name, t) in ts.params_mut() {
            if name.starts_with("hidden1") {
                t.data_mut().fill(0.0);
            }
        }
        let u = Tensor::uniform(&[5, 2], 1.0, &mut rng);
        let (kink, var_min) = ts.fd_conditioning(&u).unwrap();
        assert_eq!(var_min, 0.0);
        assert_eq!(kink, 0.0);
    }

    #[test]
    fn canonical_parameter_order_and_init_determinism() {
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = TimeSter::new(cfg(2, 3, 6, 4), &mut r1).unwrap();
        let b = TimeSter::new(cfg(2, 3, 6, 4), &mut r2).unwrap();
        let names: Vec<String> = a.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "hidden1.weight",
                "hidden1.bias",
                "hidden2.weight",
                "hidden2.bias",
                "conv.kernel",
                "conv.bias",
                "proj.weight",
                "proj.bias",
                "decoder.weight",
                "decoder.bias"
            ]
        );
        for ((_, ta), (_, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(ta.data(), tb.data());
        }
        // Biases start at zero.
        for (name, t) in a.params() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn toggles_shrink_the_parameter_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = cfg(2, 3, 6, 4);
        c.hidden_layers = 0;
        c.use_conv = false;
        let ts = TimeSter::new(c, &mut rng).unwrap();
        let names: Vec<String> = ts.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["proj.weight", "proj.bias", "decoder.weight", "decoder.bias"]);
        // With no hidden blocks the projection consumes r channels directly.
        assert_eq!(ts.proj.in_dim(), 2);

        let mut c1 = cfg(2, 3, 6, 4);
        c1.hidden_layers = 1;
        let ts1 = TimeSter::new(c1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(ts1.params().iter().any(|(n, _)| n == "hidden1.weight"));
        assert!(ts1.params().iter().all(|(n, _)| n != "hidden2.weight"));
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ts = TimeSter::new(cfg(2, 3, 8, 4), &mut rng).unwrap();
        let bad = Tensor::zeros(&[5, 3]);
        assert!(ts.decode(&bad).is_err());
        let bad_u = Tensor::zeros(&[8, 4]);
        assert!(ts.encode(&bad_u).is_err());
    }

    #[test]
    fn decoder_bias_broadcasts_across_columns() {
        // With zero decoder weight and a fixed bias, every column of the
        // decoded output equals the bias vector.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ts = TimeSter::new(cfg(2, 3, 4, 2), &mut rng).unwrap();
        ts.decoder.weight = Tensor::zeros(&[2, 4]);
        ts.decoder.weight.enable_grad();
        ts.decoder.bias = Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap();
        ts.decoder.bias.enable_grad();
        let enc = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let y = ts.decode(&enc).unwrap();
        for v in 0..3 {
            assert_eq!(y.at(&[0, v]), 1.5);
            assert_eq!(y.at(&[1, v]), -2.0);
        }
    }
}
