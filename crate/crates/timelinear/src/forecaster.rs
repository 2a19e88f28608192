//! The combined forecaster: instance normalization around a linear backbone
//! and the TimeSter stamp forecaster, blended with a fixed weight.
//!
//! For an input window `X (L × V)` with encoded stamps `U (L × r)`:
//!
//! ```text
//! μ, σ²  = per-column mean / population variance of X
//! X̂      = (X − μ) / √(σ² + ε)
//! Y_U    = TimeSter(U)                 (stamp branch, T × V)
//! Y_B    = Backbone(X̂)                 (history branch, T × V)
//! Y′     = β·Y_B + (1−β)·Y_U
//! Ŷ      = Y′·√(σ² + ε) + μ            (denormalize the combined output)
//! ```
//!
//! Only the combined output is denormalized; the stamp branch sees no input
//! statistics at all, which is what lets it model pure calendar structure.
//! Alternative decoder wirings used in ablations are provided as
//! [`DecoderVariant`]s; all of them share the same normalization wrapper.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nncore::{serialize, LinearLayer, Tensor};
use crate::timefeat::FeatureSpec;
use crate::timester::{TimeSter, TimeSterConfig};
use crate::{Error, Result};

/// Epsilon inside the square root of the normalization scale.
pub const REVIN_EPS: f64 = 1e-5;

/// Per-window normalization statistics.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// `√(σ² + ε)` per column.
    pub scale: Vec<f64>,
}

/// Normalize each column of `x (L × V)` by its own mean and
/// `√(population variance + ε)`.
pub fn revin_normalize(x: &Tensor) -> (Tensor, NormStats) {
    assert_eq!(x.rank(), 2, "revin_normalize expects a rank-2 window");
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    let xd = x.data();
    let mut mean = vec![0.0; cols];
    let mut scale = vec![0.0; cols];
    for v in 0..cols {
        let mut s = 0.0;
        for t in 0..rows {
            s += xd[t * cols + v];
        }
        let m = s / rows as f64;
        let mut var = 0.0;
        for t in 0..rows {
            let d = xd[t * cols + v] - m;
            var += d * d;
        }
        mean[v] = m;
        scale[v] = (var / rows as f64 + REVIN_EPS).sqrt();
    }
    let mut out = vec![0.0; xd.len()];
    for t in 0..rows {
        for v in 0..cols {
            out[t * cols + v] = (xd[t * cols + v] - mean[v]) / scale[v];
        }
    }
    (
        Tensor::from_vec(x.shape(), out).expect("same shape"),
        NormStats { mean, scale },
    )
}

/// Undo [`revin_normalize`] on a horizon block: `y·scale + mean` per column.
pub fn revin_denormalize(y: &Tensor, stats: &NormStats) -> Tensor {
    assert_eq!(y.rank(), 2, "revin_denormalize expects a rank-2 block");
    let (rows, cols) = (y.shape()[0], y.shape()[1]);
    assert_eq!(cols, stats.mean.len(), "stats column count mismatch");
    let yd = y.data();
    let mut out = vec![0.0; yd.len()];
    for t in 0..rows {
        for v in 0..cols {
            out[t * cols + v] = yd[t * cols + v] * stats.scale[v] + stats.mean[v];
        }
    }
    Tensor::from_vec(y.shape(), out).expect("same shape")
}

/// The history branch: anything that maps a normalized window `L × V` to a
/// horizon block `T × V` and can push gradients back through itself.
pub trait Backbone: Send {
    fn forward(&mut self, xhat: &Tensor) -> Result<Tensor>;
    /// Cache-free forward for read-only prediction.
    fn infer(&self, xhat: &Tensor) -> Result<Tensor>;
    /// Consume the forward cache; accumulate parameter gradients; return the
    /// gradient w.r.t. the input window.
    fn backward(&mut self, upstream: &Tensor) -> Tensor;
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;
    fn clear_caches(&mut self);
}

/// One shared linear map along the time axis (weight `T × L`, bias `T`,
/// broadcast across variables) — a strong baseline on its own.
#[derive(Debug, Clone)]
pub struct LinearBackbone {
    inner: LinearLayer,
}

impl LinearBackbone {
    pub fn new(seq_len: usize, pred_len: usize, rng: &mut ChaCha8Rng) -> Self {
        LinearBackbone {
            inner: LinearLayer::new(seq_len, pred_len, rng),
        }
    }
}

impl Backbone for LinearBackbone {
    fn forward(&mut self, xhat: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(&xhat.transposed2())?.transposed2())
    }

    fn infer(&self, xhat: &Tensor) -> Result<Tensor> {
        Ok(self.inner.infer(&xhat.transposed2())?.transposed2())
    }

    fn backward(&mut self, upstream: &Tensor) -> Tensor {
        self.inner.backward(&upstream.transposed2()).transposed2()
    }

    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("weight".into(), &self.inner.weight),
            ("bias".into(), &self.inner.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weight".into(), &mut self.inner.weight),
            ("bias".into(), &mut self.inner.bias),
        ]
    }

    fn clear_caches(&mut self) {
        self.inner.clear_cache();
    }
}

/// Alternative decoder wirings (ablation modes). `f` is the backbone over
/// the normalized window `X̂`, `E` the stamp encoder, `D` the stamp decoder,
/// `U`/`P` the historical/future stamp features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderVariant {
    /// 1: `f(X̂)` — history only.
    BackboneOnly,
    /// 2: `E(P)` — future stamps only, decoder bypassed.
    StampsOnly,
    /// 3: `f(E(U))` — backbone reads encoded stamps instead of history.
    BackboneOverStamps,
    /// 4: `β·f(X̂) + (1−β)·E(P)` — blend with future-stamp encoding.
    MixFutureStamps,
    /// 5: `f(X̂ + E(U))` — stamps added to the history, no blend.
    SumThenBackbone,
    /// 6: `β·f(X̂) + (1−β)·D(E(U))` — the full model.
    Full,
}

impl DecoderVariant {
    pub const ALL: [DecoderVariant; 6] = [
        DecoderVariant::BackboneOnly,
        DecoderVariant::StampsOnly,
        DecoderVariant::BackboneOverStamps,
        DecoderVariant::MixFutureStamps,
        DecoderVariant::SumThenBackbone,
        DecoderVariant::Full,
    ];

    pub fn index(&self) -> u8 {
        match self {
            DecoderVariant::BackboneOnly => 1,
            DecoderVariant::StampsOnly => 2,
            DecoderVariant::BackboneOverStamps => 3,
            DecoderVariant::MixFutureStamps => 4,
            DecoderVariant::SumThenBackbone => 5,
            DecoderVariant::Full => 6,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.index() == i)
            .ok_or_else(|| Error::Config(format!("decoder variant must be 1..=6, got {i}")))
    }

    /// Whether this variant consumes future stamp features `P`.
    pub fn needs_future_stamps(&self) -> bool {
        matches!(
            self,
            DecoderVariant::StampsOnly | DecoderVariant::MixFutureStamps
        )
    }
}

/// Complete architecture description; everything needed to rebuild a model
/// (up to its learned weights).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_spec: FeatureSpec,
    pub seq_len: usize,
    pub pred_len: usize,
    pub n_vars: usize,
    /// Blend weight on the history branch, in `[0, 1]`.
    pub beta: f64,
    pub ksize: usize,
    pub reduction_rate: f64,
    pub hidden_layers: u8,
    pub use_relu: bool,
    pub use_conv: bool,
    pub use_layernorm: bool,
}

impl ModelConfig {
    /// The standard architecture with all blocks enabled.
    pub fn new(
        feature_spec: FeatureSpec,
        seq_len: usize,
        pred_len: usize,
        n_vars: usize,
        beta: f64,
    ) -> Self {
        ModelConfig {
            feature_spec,
            seq_len,
            pred_len,
            n_vars,
            beta,
            ksize: 3,
            reduction_rate: 1.0,
            hidden_layers: 2,
            use_relu: true,
            use_conv: true,
            use_layernorm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        self.timester_config().validate()
    }

    pub fn timester_config(&self) -> TimeSterConfig {
        TimeSterConfig {
            in_features: self.feature_spec.dim(),
            n_vars: self.n_vars,
            seq_len: self.seq_len,
            pred_len: self.pred_len,
            reduction_rate: self.reduction_rate,
            ksize: self.ksize,
            hidden_layers: self.hidden_layers,
            use_relu: self.use_relu,
            use_conv: self.use_conv,
            use_layernorm: self.use_layernorm,
        }
    }
}

/// The full forecaster. Generic in its history branch; the standard model
/// uses [`LinearBackbone`].
#[derive(Debug, Clone)]
pub struct TimeLinear<B: Backbone = LinearBackbone> {
    cfg: ModelConfig,
    pub timester: TimeSter,
    pub backbone: B,
}

impl TimeLinear<LinearBackbone> {
    /// Build the standard model. All weights come from one ChaCha8 stream
    /// seeded with `seed`, drawn in canonical parameter order, so a seed
    /// fully determines the initialization.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        Self::new_with_rng(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Build the standard model drawing its weights from a caller-owned
    /// stream, so init and any later draws (data shuffles) share one
    /// reproducible sequence.
    pub fn new_with_rng(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let timester = TimeSter::new(cfg.timester_config(), rng)?;
        let backbone = LinearBackbone::new(cfg.seq_len, cfg.pred_len, rng);
        Ok(TimeLinear {
            cfg,
            timester,
            backbone,
        })
    }

    /// Serialize to the binary model format (config header + parameters).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        serialize::write_model(&mut buf, &self.config_text(), &self.params())?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        serialize::write_model(&mut w, &self.config_text(), &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let (config_text, file_params) = serialize::read_model(&mut r)?;
        let cfg = parse_config_text(&config_text)?;
        let mut model = TimeLinear::new(cfg, 0)?;
        let mut by_name: HashMap<String, Tensor> = file_params.into_iter().collect();
        for (name, tensor) in model.params_mut() {
            let stored = by_name.remove(&name).ok_or_else(|| {
                Error::ModelFormat(format!("parameter {name:?} missing from model file"))
            })?;
            if stored.shape() != tensor.shape() {
                return Err(Error::ModelFormat(format!(
                    "parameter {name:?} has shape {:?} in the file, expected {:?}",
                    stored.shape(),
                    tensor.shape()
                )));
            }
            tensor.data_mut().copy_from_slice(stored.data());
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::ModelFormat(format!(
                "model file contains unknown parameter {extra:?}"
            )));
        }
        Ok(model)
    }

    fn config_text(&self) -> String {
        let c = &self.cfg;
        format!(
            "features={}\nr={}\nseq_len={}\npred_len={}\nn_vars={}\nbeta={}\nksize={}\nreduction_rate={}\nhidden_layers={}\nuse_relu={}\nuse_conv={}\nuse_layernorm={}\n",
            c.feature_spec.label(),
            c.feature_spec.dim(),
            c.seq_len,
            c.pred_len,
            c.n_vars,
            c.beta,
            c.ksize,
            c.reduction_rate,
            c.hidden_layers,
            c.use_relu,
            c.use_conv,
            c.use_layernorm,
        )
    }
}

fn parse_config_text(text: &str) -> Result<ModelConfig> {
    let mut kv = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::ModelFormat(format!("bad config line {line:?} in model file"))
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<'a>(kv: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
        kv.get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::ModelFormat(format!("config key {key:?} missing from model file")))
    }
    fn parse<T: std::str::FromStr>(kv: &HashMap<String, String>, key: &str) -> Result<T> {
        get(kv, key)?.parse().map_err(|_| {
            Error::ModelFormat(format!("config key {key:?} has invalid value {:?}", kv[key]))
        })
    }
    let feature_spec = FeatureSpec::parse(get(&kv, "features")?)?;
    let r: usize = parse(&kv, "r")?;
    if r != feature_spec.dim() {
        return Err(Error::ModelFormat(format!(
            "config says r={r} but feature spec {:?} encodes {} columns",
            feature_spec.label(),
            feature_spec.dim()
        )));
    }
    Ok(ModelConfig {
        feature_spec,
        seq_len: parse(&kv, "seq_len")?,
        pred_len: parse(&kv, "pred_len")?,
        n_vars: parse(&kv, "n_vars")?,
        beta: parse(&kv, "beta")?,
        ksize: parse(&kv, "ksize")?,
        reduction_rate: parse(&kv, "reduction_rate")?,
        hidden_layers: parse(&kv, "hidden_layers")?,
        use_relu: parse(&kv, "use_relu")?,
        use_conv: parse(&kv, "use_conv")?,
        use_layernorm: parse(&kv, "use_layernorm")?,
    })
}

impl<B: Backbone + Clone> TimeLinear<B> {
    /// Assemble from parts (for custom backbones in tests/extensions).
    pub fn from_parts(cfg: ModelConfig, timester: TimeSter, backbone: B) -> Result<Self> {
        cfg.validate()?;
        if *timester.config() != cfg.timester_config() {
            return Err(Error::Config(
                "timester configuration does not match the model configuration".into(),
            ));
        }
        Ok(TimeLinear {
            cfg,
            timester,
            backbone,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn beta(&self) -> f64 {
        self.cfg.beta
    }

    /// Change the blend weight (validated) without touching parameters.
    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be in [0, 1], got {beta}")));
        }
        self.cfg.beta = beta;
        Ok(())
    }

    /// All parameters, `timester.*` then `backbone.*`, in canonical order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .timester
            .params()
            .into_iter()
            .map(|(n, t)| (format!("timester.{n}"), t))
            .collect();
        out.extend(
            self.backbone
                .params()
                .into_iter()
                .map(|(n, t)| (format!("backbone.{n}"), t)),
        );
        out
    }

    /// Mutable parameter view in the same canonical order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = self
            .timester
            .params_mut()
            .into_iter()
            .map(|(n, t)| (format!("timester.{n}"), t))
            .collect();
        out.extend(
            self.backbone
                .params_mut()
                .into_iter()
                .map(|(n, t)| (format!("backbone.{n}"), t)),
        );
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.params_mut() {
            t.zero_grad();
        }
    }

    /// Clone for a worker thread: same parameters, no cached activations,
    /// zeroed gradients.
    pub fn worker_clone(&self) -> Self {
        let mut c = self.clone();
        c.timester.clear_caches();
        c.backbone.clear_caches();
        c.zero_grads();
        c
    }

    fn check_window(&self, x: &Tensor, u: &Tensor, p: Option<&Tensor>) -> Result<()> {
        let c = &self.cfg;
        let expect = |cond: bool, context: &'static str, expected: String, t: &Tensor| {
            if cond {
                Ok(())
            } else {
                Err(Error::Shape {
                    context,
                    expected,
                    got: format!("{:?}", t.shape()),
                })
            }
        };
        expect(
            x.rank() == 2 && x.shape() == [c.seq_len, c.n_vars],
            "TimeLinear input window",
            format!("[{}, {}]", c.seq_len, c.n_vars),
            x,
        )?;
        let r = c.feature_spec.dim();
        expect(
            u.rank() == 2 && u.shape() == [c.seq_len, r],
            "TimeLinear stamp features",
            format!("[{}, {r}]", c.seq_len),
            u,
        )?;
        if let Some(p) = p {
            expect(
                p.rank() == 2 && p.shape() == [c.pred_len, r],
                "TimeLinear future stamp features",
                format!("[{}, {r}]", c.pred_len),
                p,
            )?;
        }
        Ok(())
    }

    /// Training forward pass for a decoder variant. Returns the prediction
    /// in the input's original (denormalized) space and the window
    /// statistics needed by [`Self::backward`].
    pub fn forward(
        &mut self,
        variant: DecoderVariant,
        x: &Tensor,
        u: &Tensor,
        p: Option<&Tensor>,
    ) -> Result<(Tensor, NormStats)> {
        self.check_window(x, u, p)?;
        if variant.needs_future_stamps() && p.is_none() {
            return Err(Error::Config(format!(
                "decoder variant {} requires future stamp features",
                variant.index()
            )));
        }
        let beta = self.cfg.beta;
        let (xhat, stats) = revin_normalize(x);
        let combined = match variant {
            DecoderVariant::BackboneOnly => self.backbone.forward(&xhat)?,
            DecoderVariant::StampsOnly => self.timester.encode(p.expect("checked above"))?,
            DecoderVariant::BackboneOverStamps => {
                let enc = self.timester.encode(u)?;
                self.backbone.forward(&enc)?
            }
            DecoderVariant::SumThenBackbone => {
                let enc = self.timester.encode(u)?;
                let sum_data: Vec<f64> = xhat
                    .data()
                    .iter()
                    .zip(enc.data())
                    .map(|(a, b)| a + b)
                    .collect();
                let sum = Tensor::from_vec(xhat.shape(), sum_data)?;
                self.backbone.forward(&sum)?
            }
            DecoderVariant::MixFutureStamps | DecoderVariant::Full => {
                // With beta pinned to an endpoint, skip the dead branch
                // entirely; the blend reduces to the live branch exactly.
                let stamp_branch = |me: &mut Self| -> Result<Tensor> {
                    match variant {
                        DecoderVariant::MixFutureStamps => {
                            me.timester.encode(p.expect("checked above"))
                        }
                        _ => me.timester.forward(u),
                    }
                };
                if beta == 1.0 {
                    self.backbone.forward(&xhat)?
                } else if beta == 0.0 {
                    stamp_branch(self)?
                } else {
                    let yb = self.backbone.forward(&xhat)?;
                    let yu = stamp_branch(self)?;
                    let data: Vec<f64> = yb
                        .data()
                        .iter()
                        .zip(yu.data())
                        .map(|(b, s)| beta * b + (1.0 - beta) * s)
                        .collect();
                    Tensor::from_vec(yb.shape(), data)?
                }
            }
        };
        Ok((revin_denormalize(&combined, &stats), stats))
    }

    /// Push the loss gradient (w.r.t. the denormalized prediction) back
    /// through the variant used in the matching [`Self::forward`] call,
    /// accumulating parameter gradients.
    pub fn backward(
        &mut self,
        variant: DecoderVariant,
        upstream: &Tensor,
        stats: &NormStats,
    ) -> Result<()> {
        let beta = self.cfg.beta;
        // Through denormalization: d(y·scale + mean)/dy = scale per column.
        let cols = stats.scale.len();
        let mut up = vec![0.0; upstream.numel()];
        for (i, g) in upstream.data().iter().enumerate() {
            up[i] = g * stats.scale[i % cols];
        }
        let up = Tensor::from_vec(upstream.shape(), up)?;
        match variant {
            DecoderVariant::BackboneOnly => {
                self.backbone.backward(&up);
            }
            DecoderVariant::StampsOnly => {
                self.timester.backward_encode(&up);
            }
            DecoderVariant::BackboneOverStamps => {
                let g = self.backbone.backward(&up);
                self.timester.backward_encode(&g);
            }
            DecoderVariant::SumThenBackbone => {
                // Input was X̂ + E(U); the gradient w.r.t. the sum flows
                // unchanged into the encoder (X̂ is data, not parameters).
                let g = self.backbone.backward(&up);
                self.timester.backward_encode(&g);
            }
            DecoderVariant::MixFutureStamps | DecoderVariant::Full => {
                let scale_tensor = |t: &Tensor, f: f64| {
                    Tensor::from_vec(t.shape(), t.data().iter().map(|v| v * f).collect())
                        .expect("same shape")
                };
                if beta != 0.0 {
                    let gb = if beta == 1.0 {
                        up.clone()
                    } else {
                        scale_tensor(&up, beta)
                    };
                    self.backbone.backward(&gb);
                }
                if beta != 1.0 {
                    let gu = if beta == 0.0 {
                        up.clone()
                    } else {
                        scale_tensor(&up, 1.0 - beta)
                    };
                    match variant {
                        DecoderVariant::MixFutureStamps => {
                            self.timester.backward_encode(&gu);
                        }
                        _ => {
                            self.timester.backward(&gu);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Cache-free prediction with the full decoder. `x (L × V)`,
    /// `u (L × r)` → `Ŷ (T × V)`. Writes no caches, so it is reentrant
    /// across threads on a shared `&self`.
    pub fn predict(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        self.predict_variant(DecoderVariant::Full, x, u, None)
    }

    /// Cache-free prediction with any decoder variant. Produces exactly the
    /// same numbers as [`Self::forward`] on the same inputs.
    pub fn predict_variant(
        &self,
        variant: DecoderVariant,
        x: &Tensor,
        u: &Tensor,
        p: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.check_window(x, u, p)?;
        if variant.needs_future_stamps() && p.is_none() {
            return Err(Error::Config(format!(
                "decoder variant {} requires future stamp features",
                variant.index()
            )));
        }
        let beta = self.cfg.beta;
        let (xhat, stats) = revin_normalize(x);
        let combined = match variant {
            DecoderVariant::BackboneOnly => self.backbone.infer(&xhat)?,
            DecoderVariant::StampsOnly => self.timester.infer_encode(p.expect("checked above"))?,
            DecoderVariant::BackboneOverStamps => {
                let enc = self.timester.infer_encode(u)?;
                self.backbone.infer(&enc)?
            }
            DecoderVariant::SumThenBackbone => {
                let enc = self.timester.infer_encode(u)?;
                let sum_data: Vec<f64> = xhat
                    .data()
                    .iter()
                    .zip(enc.data())
                    .map(|(a, b)| a + b)
                    .collect();
                let sum = Tensor::from_vec(xhat.shape(), sum_data)?;
                self.backbone.infer(&sum)?
            }
            DecoderVariant::MixFutureStamps | DecoderVariant::Full => {
                let stamp_branch = |me: &Self| -> Result<Tensor> {
                    match variant {
                        DecoderVariant::MixFutureStamps => {
                            me.timester.infer_encode(p.expect("checked above"))
                        }
                        _ => me.timester.infer(u),
                    }
                };
                if beta == 1.0 {
                    self.backbone.infer(&xhat)?
                } else if beta == 0.0 {
                    stamp_branch(self)?
                } else {
                    let yb = self.backbone.infer(&xhat)?;
                    let yu = stamp_branch(self)?;
                    let data: Vec<f64> = yb
                        .data()
                        .iter()
                        .zip(yu.data())
                        .map(|(b, s)| beta * b + (1.0 - beta) * s)
                        .collect();
                    Tensor::from_vec(yb.shape(), data)?
                }
            }
        };
        Ok(revin_denormalize(&combined, &stats))
    }
}
