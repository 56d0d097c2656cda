//! Masked-MSE training with Adam, gradient clipping and validation-based
//! early stopping.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureCube;
use crate::model::{self, GraphContext, ModelConfig, ModelError, ModelParams};
use crate::railnet::RailGraph;
use crate::windows::{collect_samples, Sample, Splits, WindowError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training samples")]
    Empty,
    #[error("non-finite {what} in epoch {epoch}, batch {batch}")]
    Diverged {
        what: String,
        epoch: usize,
        batch: usize,
        /// Best parameters seen before the failure, if any epoch completed.
        best: Option<Box<ModelParams>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            learning_rate: 0.001,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config(format!("learning_rate {} is not a finite nonnegative number", self.learning_rate)));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// `sum mask (pred - y)^2 / sum mask`, or 0 when nothing is masked.
pub fn masked_mse(pred: ArrayView2<f64>, y: ArrayView2<f64>, mask: ArrayView2<u8>) -> f64 {
    let (sq, cnt) = masked_sq_sum(pred, y, mask);
    if cnt == 0 {
        0.0
    } else {
        sq / cnt as f64
    }
}

fn masked_sq_sum(pred: ArrayView2<f64>, y: ArrayView2<f64>, mask: ArrayView2<u8>) -> (f64, usize) {
    assert_eq!(pred.dim(), y.dim(), "prediction and target shapes differ");
    assert_eq!(pred.dim(), mask.dim(), "prediction and mask shapes differ");
    let mut sq = 0.0;
    let mut cnt = 0;
    for ((&p, &t), &m) in pred.iter().zip(y.iter()).zip(mask.iter()) {
        if m != 0 {
            sq += (p - t) * (p - t);
            cnt += 1;
        }
    }
    (sq, cnt)
}

/// First-order optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, size: usize) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; size],
            v: vec![0.0; size],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.step += 1;
                let c1 = 1.0 - self.beta1.powi(self.step);
                let c2 = 1.0 - self.beta2.powi(self.step);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
                }
            }
        }
    }
}

/// Scales `grads` in place so its norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Loss and flat gradient of one batch. Members are evaluated in parallel
/// and summed in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[Sample],
    model_cfg: &ModelConfig,
    ctx: &GraphContext,
) -> Result<(f64, Vec<f64>), ModelError> {
    let passes: Vec<_> = batch
        .par_iter()
        .map(|s| model::forward_cached(s, params, model_cfg, ctx))
        .collect::<Result<_, _>>()?;
    let mut sq = 0.0;
    let mut cnt = 0usize;
    for ((pred, _), s) in passes.iter().zip(batch) {
        let (a, b) = masked_sq_sum(pred.view(), s.y.view(), s.mask.view());
        sq += a;
        cnt += b;
    }
    if cnt == 0 {
        return Ok((0.0, vec![0.0; params.num_scalars()]));
    }
    let denom = cnt as f64;
    let grads: Vec<Vec<f64>> = passes
        .par_iter()
        .zip(batch.par_iter())
        .map(|((pred, cache), s)| {
            let mut d = Array2::zeros(pred.raw_dim());
            ndarray::Zip::from(&mut d).and(pred).and(&s.y).and(&s.mask).for_each(|d, &p, &y, &m| {
                if m != 0 {
                    *d = 2.0 * (p - y) / denom;
                }
            });
            model::backward(cache, params, ctx, &d).map(|g| g.to_flat())
        })
        .collect::<Result<_, _>>()?;
    let mut total = vec![0.0; params.num_scalars()];
    for g in &grads {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    Ok((sq / denom, total))
}

/// One pass over `samples` in order. Returns the mean batch loss. On a
/// non-finite loss or gradient the parameters keep their last good values.
pub fn train_epoch(
    params: &mut ModelParams,
    opt: &mut Optimizer,
    samples: &[Sample],
    model_cfg: &ModelConfig,
    ctx: &GraphContext,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut flat = params.to_flat();
    let mut losses = Vec::new();
    for (b, batch) in samples.chunks(cfg.batch_size).enumerate() {
        let diverged = |what: &str| TrainError::Diverged { what: what.into(), epoch, batch: b, best: None };
        let (loss, mut grads) = match batch_gradient(params, batch, model_cfg, ctx) {
            Ok(r) => r,
            Err(ModelError::NonFinite(what)) => return Err(diverged(&what)),
            Err(e) => return Err(e.into()),
        };
        if !loss.is_finite() {
            return Err(diverged("loss"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(diverged("gradient"));
        }
        if let Some(c) = cfg.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        opt.step(&mut flat, &grads);
        params.assign_flat(&flat)?;
        losses.push(loss);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Masked MSE pooled over all cells of all samples.
pub fn evaluate_loss(params: &ModelParams, samples: &[Sample], model_cfg: &ModelConfig, ctx: &GraphContext) -> Result<f64, ModelError> {
    let parts: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| model::forward(s, params, model_cfg, ctx).map(|p| masked_sq_sum(p.view(), s.y.view(), s.mask.view())))
        .collect::<Result<_, _>>()?;
    let (sq, cnt) = parts.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(if cnt == 0 { 0.0 } else { sq / cnt as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub wall_seconds: f64,
}

/// Progress events, one JSON object per line on the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainEvent {
    Start { train_samples: usize, val_samples: usize, parameters: usize },
    Epoch { epoch: usize, train_loss: f64, val_loss: f64, best_epoch: usize, seconds: f64 },
    EarlyStop { epoch: usize, best_epoch: usize },
    Done { best_epoch: usize, best_val_loss: f64, seconds: f64 },
}

/// Trains from a seeded initialization and returns the parameters of the
/// epoch with the lowest validation loss.
pub fn fit(
    cube: &FeatureCube,
    splits: &Splits,
    graph: &RailGraph,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_event: &mut dyn FnMut(&TrainEvent),
) -> Result<(ModelParams, TrainReport), TrainError> {
    model_cfg.validate()?;
    cfg.validate()?;
    if cube.num_stations() != graph.num_stations() {
        return Err(ModelError::Shape(format!(
            "cube has {} stations but graph has {}",
            cube.num_stations(),
            graph.num_stations()
        ))
        .into());
    }
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(TrainError::Empty);
    }
    let ctx = GraphContext::new(graph, model_cfg)?;
    let train = collect_samples(cube, &splits.train, &model_cfg.window)?;
    let val = collect_samples(cube, &splits.val, &model_cfg.window)?;
    let params = ModelParams::init(model_cfg, graph.num_stations(), cfg.seed);
    fit_samples(params, &train, &val, model_cfg, &ctx, cfg, on_event)
}

/// [`fit`] on prepared samples and initial parameters.
pub fn fit_samples(
    mut params: ModelParams,
    train: &[Sample],
    val: &[Sample],
    model_cfg: &ModelConfig,
    ctx: &GraphContext,
    cfg: &TrainConfig,
    on_event: &mut dyn FnMut(&TrainEvent),
) -> Result<(ModelParams, TrainReport), TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Empty);
    }
    let started = Instant::now();
    on_event(&TrainEvent::Start { train_samples: train.len(), val_samples: val.len(), parameters: params.num_scalars() });
    let mut opt = Optimizer::new(cfg, params.num_scalars());
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        wall_seconds: 0.0,
    };
    for epoch in 1..=cfg.max_epochs {
        let t = Instant::now();
        let keep_best = |e: TrainError, best: &ModelParams| match e {
            TrainError::Diverged { what, epoch, batch, .. } => TrainError::Diverged {
                what,
                epoch,
                batch,
                best: (best_epoch > 0).then(|| Box::new(best.clone())),
            },
            other => other,
        };
        let train_loss = train_epoch(&mut params, &mut opt, train, model_cfg, ctx, cfg, epoch).map_err(|e| keep_best(e, &best))?;
        let val_loss = match evaluate_loss(&params, val, model_cfg, ctx) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(ModelError::NonFinite(_)) => {
                return Err(keep_best(
                    TrainError::Diverged { what: "validation loss".into(), epoch, batch: 0, best: None },
                    &best,
                ))
            }
            Err(e) => return Err(e.into()),
        };
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = params.clone();
        }
        on_event(&TrainEvent::Epoch { epoch, train_loss, val_loss, best_epoch, seconds: t.elapsed().as_secs_f64() });
        if epoch - best_epoch > cfg.patience {
            report.stopped_early = true;
            on_event(&TrainEvent::EarlyStop { epoch, best_epoch });
            break;
        }
    }
    report.best_epoch = best_epoch;
    report.best_val_loss = best_val;
    report.wall_seconds = started.elapsed().as_secs_f64();
    on_event(&TrainEvent::Done { best_epoch, best_val_loss: best_val, seconds: report.wall_seconds });
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn masked_mse_examples() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let m = array![[1u8, 0], [1, 1]];
        assert_eq!(masked_mse(y.view(), y.view(), m.view()), 0.0);
        let p = &y + 1.0;
        assert_eq!(masked_mse(p.view(), y.view(), m.view()), 1.0);
        let p = array![[0.0, 9.0], [3.5, 2.0]];
        let want = (1.0 + 0.25 + 4.0) / 3.0;
        assert!((masked_mse(p.view(), y.view(), m.view()) - want).abs() < 1e-15);
        assert_eq!(masked_mse(p.view(), y.view(), Array2::zeros((2, 2)).view()), 0.0);
    }

    #[test]
    fn clip_scales_to_ceiling() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut h = vec![0.3, 0.4];
        clip_global_norm(&mut h, 1.0);
        assert_eq!(h, vec![0.3, 0.4]);
    }

    #[test]
    fn adam_descends_linear_regression() {
        // y = 2 x0 - x1 + 0.5; squared loss is convex so full-batch Adam with
        // a small step keeps decreasing it.
        let xs: Vec<[f64; 2]> = (0..20).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.71).cos()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1] + 0.5).collect();
        let loss_grad = |w: &[f64]| {
            let mut g = vec![0.0; 3];
            let mut l = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                let r = w[0] * x[0] + w[1] * x[1] + w[2] - y;
                l += r * r / xs.len() as f64;
                g[0] += 2.0 * r * x[0] / xs.len() as f64;
                g[1] += 2.0 * r * x[1] / xs.len() as f64;
                g[2] += 2.0 * r / xs.len() as f64;
            }
            (l, g)
        };
        let cfg = TrainConfig { learning_rate: 0.01, ..Default::default() };
        let mut opt = Optimizer::new(&cfg, 3);
        let mut w = vec![0.0; 3];
        let mut prev = f64::INFINITY;
        for _ in 0..8 {
            let (l, g) = loss_grad(&w);
            assert!(l < prev);
            prev = l;
            opt.step(&mut w, &g);
        }
    }

    #[test]
    fn sgd_with_zero_rate_is_identity() {
        let cfg = TrainConfig { learning_rate: 0.0, optimizer: OptimizerKind::Sgd, ..Default::default() };
        let mut opt = Optimizer::new(&cfg, 2);
        let mut w = vec![1.0, -2.0];
        opt.step(&mut w, &[5.0, 7.0]);
        assert_eq!(w, vec![1.0, -2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
