//! Mini-batch training with Adam, validation-based early stopping, and
//! deterministic, order-independent parallel gradient accumulation.
//!
//! Determinism contract: a `(ModelConfig, TrainConfig, data)` triple fully
//! determines the trained model, bit for bit, regardless of whether the
//! parallel or sequential execution path runs. Batches are cut into
//! fixed-size chunks ([`crate::exec::GRAD_CHUNK`]); each chunk accumulates
//! its gradients sequentially on a worker copy of the model, and chunk
//! results are merged in chunk order. Floating-point addition order is
//! therefore identical on every path.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, WindowSet};
use crate::exec::{map_chunks, EVAL_CHUNK, GRAD_CHUNK};
use crate::forecaster::{DecoderVariant, ModelConfig, TimeLinear};
use crate::nncore::Adam;
use crate::{Error, Result};

/// Optimization settings for one run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation MSE.
    pub patience: usize,
    pub seed: u64,
    pub variant: DecoderVariant,
}

impl TrainConfig {
    /// Generic defaults. Per-dataset values (learning rate, batch size)
    /// come from the config files under `configs/` or CLI flags; the ETT
    /// benchmarks train with lr=0.002 and batch_size=256.
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            lr: 5e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed,
            variant: DecoderVariant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub elapsed_ms: u128,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model restored to its best-validation state.
    pub model: TimeLinear,
    pub log: Vec<EpochLog>,
    /// 1-based epoch with the lowest validation MSE.
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Aggregate error metrics over a window set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
}

/// Accumulate gradients for the windows at `indices`, in fixed-size chunks
/// merged in chunk order. Returns the per-parameter gradient vectors (in
/// the model's canonical parameter order) and the total squared error of
/// the batch. The gradients correspond to the loss
/// `Σ (pred − y)² / (indices.len() · T · V)`.
pub fn batch_gradients(
    model: &TimeLinear,
    data: &WindowSet,
    indices: &[usize],
    variant: DecoderVariant,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let denom = (indices.len() * data.pred_len() * data.n_vars()) as f64;
    let chunks: Vec<Result<(Vec<Vec<f64>>, f64)>> =
        map_chunks(indices.len(), GRAD_CHUNK, |range| {
            let mut worker = model.worker_clone();
            let mut sse = 0.0;
            for &idx in &indices[range] {
                let s = data.get(idx);
                let p = if variant.needs_future_stamps() {
                    Some(&s.p)
                } else {
                    None
                };
                let (pred, stats) = worker.forward(variant, &s.x, &s.u, p)?;
                let mut up = vec![0.0; pred.numel()];
                for (i, (pv, yv)) in pred.data().iter().zip(s.y.data()).enumerate() {
                    let d = pv - yv;
                    sse += d * d;
                    up[i] = 2.0 * d / denom;
                }
                let upstream = crate::nncore::Tensor::from_vec(pred.shape(), up)?;
                worker.backward(variant, &upstream, &stats)?;
            }
            let grads: Vec<Vec<f64>> = worker
                .params()
                .into_iter()
                .map(|(_, t)| t.grad().to_vec())
                .collect();
            Ok((grads, sse))
        });

    let template: Vec<usize> = model.params().iter().map(|(_, t)| t.numel()).collect();
    let mut merged: Vec<Vec<f64>> = template.iter().map(|&n| vec![0.0; n]).collect();
    let mut total_sse = 0.0;
    for chunk in chunks {
        let (grads, sse) = chunk?;
        for (acc, g) in merged.iter_mut().zip(&grads) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        total_sse += sse;
    }
    Ok((merged, total_sse))
}

/// Mean squared / absolute error of `model` over every window in `ws`,
/// chunked and merged in fixed order for cross-path determinism.
pub fn evaluate(model: &TimeLinear, ws: &WindowSet, variant: DecoderVariant) -> Result<Metrics> {
    let n = ws.len();
    let chunks: Vec<Result<(f64, f64)>> = map_chunks(n, EVAL_CHUNK, |range| {
        let (mut sse, mut sae) = (0.0, 0.0);
        for idx in range {
            let s = ws.get(idx);
            let p = if variant.needs_future_stamps() {
                Some(&s.p)
            } else {
                None
            };
            let pred = model.predict_variant(variant, &s.x, &s.u, p)?;
            for (pv, yv) in pred.data().iter().zip(s.y.data()) {
                let d = pv - yv;
                sse += d * d;
                sae += d.abs();
            }
        }
        Ok((sse, sae))
    });
    let (mut sse, mut sae) = (0.0, 0.0);
    for c in chunks {
        let (a, b) = c?;
        sse += a;
        sae += b;
    }
    let denom = (n * ws.pred_len() * ws.n_vars()) as f64;
    Ok(Metrics {
        mse: sse / denom,
        mae: sae / denom,
        n_windows: n,
    })
}

/// Train a fresh model. One ChaCha8 stream seeded with `train_cfg.seed`
/// drives both weight initialization and every epoch shuffle. Returns the
/// model restored to its best-validation snapshot.
pub fn train_model(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &WindowSet,
    val: &WindowSet,
) -> Result<TrainOutcome> {
    train_cfg.validate()?;
    let variant = train_cfg.variant;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut model = TimeLinear::new_with_rng(model_cfg.clone(), &mut rng)?;
    let mut optimizer = Adam::new(train_cfg.lr);

    let n = train.len();
    let denom_epoch = (n * train.pred_len() * train.n_vars()) as f64;
    let mut indices: Vec<usize> = (0..n).collect();

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, TimeLinear)> = None;
    let mut epochs_since_best = 0usize;
    let started = Instant::now();

    for epoch in 1..=train_cfg.max_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        for (batch_no, batch) in indices.chunks(train_cfg.batch_size).enumerate() {
            let (grads, sse) = batch_gradients(&model, train, batch, variant)?;
            let batch_denom = (batch.len() * train.pred_len() * train.n_vars()) as f64;
            if !(sse / batch_denom).is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            epoch_sse += sse;
            let mut params = model.params_mut();
            for ((_, t), g) in params.iter_mut().zip(&grads) {
                t.zero_grad();
                t.add_to_grad(g);
            }
            let mut refs: Vec<&mut crate::nncore::Tensor> =
                params.into_iter().map(|(_, t)| t).collect();
            optimizer.step(&mut refs);
        }
        let train_mse = epoch_sse / denom_epoch;
        let val_mse = evaluate(&model, val, variant)?.mse;
        log.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
            elapsed_ms: started.elapsed().as_millis(),
        });

        let improved = match &best {
            None => true,
            Some((_, best_val, _)) => val_mse < *best_val,
        };
        if improved {
            best = Some((epoch, val_mse, model.worker_clone()));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= train_cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_mse, best_model) =
        best.expect("at least one epoch ran, so a best snapshot exists");
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
        best_val_mse,
    })
}

/// One seed's result within a multi-seed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub test: Metrics,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Mean and population standard deviation of test metrics across seeds.
#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub runs: Vec<SeedRun>,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train and test once per seed (all other settings shared) and summarize.
pub fn run_seeds(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    data: &DatasetBundle,
) -> Result<SeedSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..train_cfg.clone()
        };
        let outcome = train_model(model_cfg, &cfg, &data.train, &data.val)?;
        let test = evaluate(&outcome.model, &data.test, cfg.variant)?;
        runs.push(SeedRun {
            seed,
            test,
            best_epoch: outcome.best_epoch,
            best_val_mse: outcome.best_val_mse,
        });
    }
    let (mse_mean, mse_std) = mean_std(&runs.iter().map(|r| r.test.mse).collect::<Vec<_>>());
    let (mae_mean, mae_std) = mean_std(&runs.iter().map(|r| r.test.mae).collect::<Vec<_>>());
    Ok(SeedSummary {
        runs,
        mse_mean,
        mse_std,
        mae_mean,
        mae_std,
    })
}

/// Write the per-epoch log as CSV.
pub fn write_train_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_mse,val_mse,elapsed_ms")?;
    for e in log {
        writeln!(f, "{},{},{},{}", e.epoch, e.train_mse, e.val_mse, e.elapsed_ms)?;
    }
    Ok(())
}

/// One evaluated configuration, as written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    #[serde(rename = "L")]
    pub seq_len: usize,
    #[serde(rename = "T")]
    pub pred_len: usize,
    pub features: String,
    pub beta: f64,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
}

impl MetricsRecord {
    pub fn write_json(path: &Path, records: &[MetricsRecord]) -> Result<()> {
        let json = serde_json::to_string_pretty(records)
            .map_err(|e| Error::Data(format!("cannot serialize metrics: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Vec<MetricsRecord>> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("cannot parse metrics file: {e}")))
    }
}
