//! Masked forecasting metrics and per-horizon report tables.
//!
//! MAE and RMSE are in hours. MAPE is a percentage: a cell with a positive
//! actual delay contributes `|pred - actual| / actual`, a cell with zero
//! actual delay contributes `|pred - actual|`, and the mean of these terms
//! is multiplied by 100.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineError, BaselineKind};
use crate::model::{self, GraphContext, ModelConfig, ModelError, ModelParams};
use crate::windows::Sample;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("no samples to evaluate")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Running sums for the three metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricAccumulator {
    abs: f64,
    sq: f64,
    pct: f64,
    count: usize,
}

impl MetricAccumulator {
    pub fn push(&mut self, pred: f64, actual: f64) {
        let err = (pred - actual).abs();
        self.abs += err;
        self.sq += err * err;
        self.pct += if actual > 0.0 { err / actual } else { err };
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn metrics(&self) -> HorizonMetrics {
        let n = self.count as f64;
        let some = |v: f64| (self.count > 0).then_some(v);
        HorizonMetrics {
            mae: some(self.abs / n),
            mape: some(100.0 * self.pct / n),
            rmse: some((self.sq / n).sqrt()),
            cells: self.count,
        }
    }
}

fn accumulate(pred: ArrayView2<f64>, actual: ArrayView2<f64>, mask: ArrayView2<u8>) -> MetricAccumulator {
    assert_eq!(pred.dim(), actual.dim(), "prediction and target shapes differ");
    assert_eq!(pred.dim(), mask.dim(), "prediction and mask shapes differ");
    let mut acc = MetricAccumulator::default();
    for ((&p, &a), &m) in pred.iter().zip(actual.iter()).zip(mask.iter()) {
        if m != 0 {
            acc.push(p, a);
        }
    }
    acc
}

/// Mean absolute error over masked cells; `None` when nothing is masked.
pub fn mae(pred: ArrayView2<f64>, actual: ArrayView2<f64>, mask: ArrayView2<u8>) -> Option<f64> {
    accumulate(pred, actual, mask).metrics().mae
}

pub fn mape(pred: ArrayView2<f64>, actual: ArrayView2<f64>, mask: ArrayView2<u8>) -> Option<f64> {
    accumulate(pred, actual, mask).metrics().mape
}

pub fn rmse(pred: ArrayView2<f64>, actual: ArrayView2<f64>, mask: ArrayView2<u8>) -> Option<f64> {
    accumulate(pred, actual, mask).metrics().rmse
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub mae: Option<f64>,
    pub mape: Option<f64>,
    pub rmse: Option<f64>,
    /// Masked cells behind the values; 0 for averaged entries.
    pub cells: usize,
}

impl HorizonMetrics {
    fn mean_of(items: &[HorizonMetrics]) -> HorizonMetrics {
        let avg = |f: fn(&HorizonMetrics) -> Option<f64>| {
            let vals: Option<Vec<f64>> = items.iter().map(f).collect();
            vals.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        HorizonMetrics { mae: avg(|m| m.mae), mape: avg(|m| m.mape), rmse: avg(|m| m.rmse), cells: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneMetrics {
    /// Zone code, or `ALL` for the whole network.
    pub zone: String,
    /// Metrics of horizon slice `h`, pooled over samples and stations.
    pub per_horizon: Vec<HorizonMetrics>,
    /// Entry `i` is the mean of the per-horizon values `1..=i+1`.
    pub cumulative: Vec<HorizonMetrics>,
    /// Mean over all horizons.
    pub average: HorizonMetrics,
}

impl ZoneMetrics {
    fn from_accumulators(zone: String, accs: &[MetricAccumulator]) -> Self {
        let per_horizon: Vec<HorizonMetrics> = accs.iter().map(|a| a.metrics()).collect();
        let cumulative: Vec<HorizonMetrics> = (1..=per_horizon.len()).map(|i| HorizonMetrics::mean_of(&per_horizon[..i])).collect();
        let average = HorizonMetrics::mean_of(&per_horizon);
        ZoneMetrics { zone, per_horizon, cumulative, average }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub predictor: String,
    pub horizon: usize,
    pub samples: usize,
    pub overall: ZoneMetrics,
    pub zones: Vec<ZoneMetrics>,
}

fn cell(values: impl Iterator<Item = Option<f64>>, decimals: usize) -> String {
    values
        .map(|v| v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}")))
        .collect::<Vec<_>>()
        .join(" / ")
}

impl MetricReport {
    /// Rows `ALL` then each zone; columns MAE, MAPE, RMSE with one
    /// `h1 / h2 / ...` cell each.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("zone,MAE,MAPE,RMSE\n");
        for z in std::iter::once(&self.overall).chain(&self.zones) {
            let ph = &z.per_horizon;
            let _ = writeln!(
                out,
                "{},{},{},{}",
                z.zone,
                cell(ph.iter().map(|m| m.mae), 4),
                cell(ph.iter().map(|m| m.mape), 2),
                cell(ph.iter().map(|m| m.rmse), 4)
            );
        }
        out
    }

    /// Network-wide metrics averaged over horizons `1..=i`, one row per `i`.
    pub fn cumulative_csv(&self) -> String {
        let mut out = String::from("horizon,MAE,MAPE,RMSE\n");
        for (i, m) in self.overall.cumulative.iter().enumerate() {
            let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
            let _ = writeln!(out, "{},{},{},{}", i + 1, f(m.mae), f(m.mape), f(m.rmse));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    /// Every reported RMSE is at least the matching MAE and nothing is
    /// negative.
    pub fn is_consistent(&self) -> bool {
        std::iter::once(&self.overall).chain(&self.zones).all(|z| {
            z.per_horizon.iter().chain(&z.cumulative).chain(std::iter::once(&z.average)).all(|m| {
                let nonneg = [m.mae, m.mape, m.rmse].iter().flatten().all(|&v| v >= 0.0);
                let ordered = match (m.mae, m.rmse) {
                    (Some(a), Some(r)) => r >= a - 1e-12 * a.abs().max(1.0),
                    _ => true,
                };
                nonneg && ordered
            })
        })
    }
}

/// Anything that maps a sample to an `N x horizon` forecast.
pub trait Predictor: Sync {
    fn name(&self) -> String;
    fn predict(&self, sample: &Sample) -> Result<Array2<f64>, EvalError>;
}

pub struct ModelPredictor<'a> {
    pub params: &'a ModelParams,
    pub config: &'a ModelConfig,
    pub graph: &'a GraphContext,
}

impl Predictor for ModelPredictor<'_> {
    fn name(&self) -> String {
        "rstgcn".into()
    }

    /// Forecasts `t_p` slots and keeps the first `sample.horizon()` of them.
    fn predict(&self, sample: &Sample) -> Result<Array2<f64>, EvalError> {
        let pred = model::forward(sample, self.params, self.config, self.graph)?;
        let h = sample.horizon();
        if h > pred.ncols() {
            return Err(EvalError::Shape(format!("model forecasts {} slots, {h} requested", pred.ncols())));
        }
        Ok(pred.slice(ndarray::s![.., ..h]).to_owned())
    }
}

pub struct BaselinePredictor {
    pub kind: BaselineKind,
    /// Restrict the historical average to the recent window.
    pub recent_only: bool,
}

impl Predictor for BaselinePredictor {
    fn name(&self) -> String {
        match (self.kind, self.recent_only) {
            (BaselineKind::HistoricalAverage, true) => "historical_average_recent".into(),
            (k, _) => k.name().into(),
        }
    }

    fn predict(&self, sample: &Sample) -> Result<Array2<f64>, EvalError> {
        Ok(match (self.kind, self.recent_only) {
            (BaselineKind::HistoricalAverage, true) => baselines::ha_predict_recent(sample),
            (k, _) => k.predict(sample)?,
        })
    }
}

/// Wraps a closure as a predictor.
pub struct FnPredictor<F>(pub String, pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&Sample) -> Array2<f64> + Sync,
{
    fn name(&self) -> String {
        self.0.clone()
    }

    fn predict(&self, sample: &Sample) -> Result<Array2<f64>, EvalError> {
        Ok((self.1)(sample))
    }
}

/// Scores `predictor` on `samples`, per horizon slice, network-wide and,
/// when `station_zones` is given, per zone (in sorted zone order).
pub fn horizon_report(
    predictor: &dyn Predictor,
    samples: &[Sample],
    station_zones: Option<&[String]>,
) -> Result<MetricReport, EvalError> {
    let first = samples.first().ok_or(EvalError::Empty)?;
    let horizon = first.horizon();
    let n = first.num_stations();
    if let Some(z) = station_zones {
        if z.len() != n {
            return Err(EvalError::Shape(format!("{} zone labels for {n} stations", z.len())));
        }
    }
    let preds: Vec<Array2<f64>> = samples.par_iter().map(|s| predictor.predict(s)).collect::<Result<_, _>>()?;
    let zone_names: Vec<String> = station_zones
        .map(|z| {
            let mut v = z.to_vec();
            v.sort();
            v.dedup();
            v
        })
        .unwrap_or_default();
    let zone_idx: Vec<usize> = station_zones
        .map(|z| z.iter().map(|c| zone_names.binary_search(c).unwrap()).collect())
        .unwrap_or_default();
    let mut all = vec![MetricAccumulator::default(); horizon];
    let mut by_zone = vec![vec![MetricAccumulator::default(); horizon]; zone_names.len()];
    for (pred, s) in preds.iter().zip(samples) {
        if pred.dim() != (n, horizon) || s.y.dim() != (n, horizon) {
            return Err(EvalError::Shape(format!("prediction {:?} vs target {:?}", pred.dim(), s.y.dim())));
        }
        for i in 0..n {
            for h in 0..horizon {
                if s.mask[[i, h]] == 0 {
                    continue;
                }
                all[h].push(pred[[i, h]], s.y[[i, h]]);
                if !zone_idx.is_empty() {
                    by_zone[zone_idx[i]][h].push(pred[[i, h]], s.y[[i, h]]);
                }
            }
        }
    }
    Ok(MetricReport {
        predictor: predictor.name(),
        horizon,
        samples: samples.len(),
        overall: ZoneMetrics::from_accumulators("ALL".into(), &all),
        zones: zone_names.into_iter().zip(&by_zone).map(|(z, a)| ZoneMetrics::from_accumulators(z, a)).collect(),
    })
}
