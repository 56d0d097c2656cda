//! Recent, daily and weekly input windows and chronological splits.
//!
//! An anchor `t0` is the last observed slot of a sample; its targets are the
//! slots `t0+1 ..= t0+t_p`. The daily window takes the same clock hours as
//! the targets on previous days, the weekly window the same hours on
//! previous weeks.

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureCube;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("invalid window config: {0}")]
    Config(String),
    #[error("anchor {t0} lacks history; earliest valid anchor is {earliest}")]
    InsufficientHistory { t0: usize, earliest: usize },
    #[error("anchor {t0} targets run past the last slot {last}")]
    PastEnd { t0: usize, last: usize },
    #[error("{slots} slots leave {anchors} valid anchors, too few for train/validation/test splits")]
    TooFewAnchors { slots: usize, anchors: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Slots per day.
    pub q: usize,
    /// Prediction horizon in slots.
    pub t_p: usize,
    pub t_h: usize,
    /// Daily window length; a multiple of `t_p`.
    pub t_d: usize,
    /// Weekly window length; a multiple of `t_p`.
    pub t_w: usize,
    /// Leading slots used only as history, never as targets.
    pub history_prefix: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { q: 24, t_p: 3, t_h: 3, t_d: 3, t_w: 3, history_prefix: 168 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), WindowError> {
        if self.t_p == 0 || self.q < self.t_p {
            return Err(WindowError::Config(format!("need q >= t_p >= 1, got q={} t_p={}", self.q, self.t_p)));
        }
        if self.t_d % self.t_p != 0 || self.t_w % self.t_p != 0 {
            return Err(WindowError::Config(format!(
                "t_d={} and t_w={} must be multiples of t_p={}",
                self.t_d, self.t_w, self.t_p
            )));
        }
        if self.t_h + self.t_d + self.t_w == 0 {
            return Err(WindowError::Config("all windows are empty".into()));
        }
        Ok(())
    }

    /// Smallest anchor with full recent/daily/weekly history.
    pub fn min_window_anchor(&self) -> usize {
        let need = |span: usize| span.saturating_sub(1);
        need(self.t_h)
            .max(need(self.t_d / self.t_p * self.q))
            .max(need(7 * (self.t_w / self.t_p) * self.q))
    }

    /// Smallest anchor used for samples, honouring the history prefix.
    pub fn first_anchor(&self) -> usize {
        self.min_window_anchor().max(self.history_prefix.saturating_sub(1))
    }
}

/// Slots of the recent window, chronological.
pub fn recent_indices(t0: usize, cfg: &WindowConfig) -> Result<Vec<usize>, WindowError> {
    if t0 + 1 < cfg.t_h {
        return Err(WindowError::InsufficientHistory { t0, earliest: cfg.t_h - 1 });
    }
    Ok((t0 + 1 - cfg.t_h..=t0).collect())
}

fn periodic_indices(t0: usize, groups: usize, stride: usize, t_p: usize) -> Result<Vec<usize>, WindowError> {
    if groups == 0 {
        return Ok(Vec::new());
    }
    if t0 + 1 < groups * stride {
        return Err(WindowError::InsufficientHistory { t0, earliest: groups * stride - 1 });
    }
    let mut out = Vec::with_capacity(groups * t_p);
    for m in (1..=groups).rev() {
        let first = t0 + 1 - m * stride;
        out.extend(first..first + t_p);
    }
    Ok(out)
}

/// Slots of the daily window: for `m = t_d/t_p ..= 1`, slots
/// `t0 - m q + 1 ..= t0 - m q + t_p`.
pub fn daily_indices(t0: usize, cfg: &WindowConfig) -> Result<Vec<usize>, WindowError> {
    periodic_indices(t0, cfg.t_d / cfg.t_p, cfg.q, cfg.t_p)
}

/// Slots of the weekly window, as [`daily_indices`] with stride `7 q`.
pub fn weekly_indices(t0: usize, cfg: &WindowConfig) -> Result<Vec<usize>, WindowError> {
    periodic_indices(t0, cfg.t_w / cfg.t_p, 7 * cfg.q, cfg.t_p)
}

fn gather(cube: &FeatureCube, slots: &[usize]) -> Array3<f64> {
    cube.x.select(Axis(2), slots)
}

pub fn recent_window(cube: &FeatureCube, t0: usize, cfg: &WindowConfig) -> Result<Array3<f64>, WindowError> {
    Ok(gather(cube, &recent_indices(t0, cfg)?))
}

pub fn daily_window(cube: &FeatureCube, t0: usize, cfg: &WindowConfig) -> Result<Array3<f64>, WindowError> {
    Ok(gather(cube, &daily_indices(t0, cfg)?))
}

pub fn weekly_window(cube: &FeatureCube, t0: usize, cfg: &WindowConfig) -> Result<Array3<f64>, WindowError> {
    Ok(gather(cube, &weekly_indices(t0, cfg)?))
}

/// One training or evaluation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x_h: Array3<f64>,
    pub x_d: Array3<f64>,
    pub x_w: Array3<f64>,
    /// `N x horizon` targets for slots `t0+1 ..`.
    pub y: Array2<f64>,
    pub mask: Array2<u8>,
    pub t0: usize,
}

impl Sample {
    pub fn horizon(&self) -> usize {
        self.y.ncols()
    }

    pub fn num_stations(&self) -> usize {
        self.y.nrows()
    }
}

/// Builds the sample anchored at `t0` with `horizon` target slots.
pub fn sample_at(cube: &FeatureCube, t0: usize, cfg: &WindowConfig, horizon: usize) -> Result<Sample, WindowError> {
    let last = cube.num_slots().saturating_sub(1);
    if t0 + horizon > last {
        return Err(WindowError::PastEnd { t0, last });
    }
    let targets: Vec<usize> = (t0 + 1..=t0 + horizon).collect();
    Ok(Sample {
        x_h: recent_window(cube, t0, cfg)?,
        x_d: daily_window(cube, t0, cfg)?,
        x_w: weekly_window(cube, t0, cfg)?,
        y: cube.y.select(Axis(1), &targets),
        mask: cube.mask.select(Axis(1), &targets),
        t0,
    })
}

/// Chronological anchor lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// All anchors with full history and `t_p` target slots inside the cube.
pub fn valid_anchors(slots: usize, cfg: &WindowConfig) -> Vec<usize> {
    let first = cfg.first_anchor();
    if slots < cfg.t_p + 1 {
        return Vec::new();
    }
    (first..slots - cfg.t_p).collect()
}

/// Splits valid anchors chronologically: the last 20% (floor) is the test
/// set, the last 20% (floor) of the remainder is validation, the rest train.
pub fn split_dataset(slots: usize, cfg: &WindowConfig) -> Result<Splits, WindowError> {
    cfg.validate()?;
    split_anchors(valid_anchors(slots, cfg)).map_err(|anchors| WindowError::TooFewAnchors { slots, anchors })
}

/// Applies the 20%/20% floor rule to an ordered anchor list; returns the
/// anchor count when any part would be empty.
pub fn split_anchors(anchors: Vec<usize>) -> Result<Splits, usize> {
    let n = anchors.len();
    let n_test = n / 5;
    let rest = n - n_test;
    let n_val = rest / 5;
    if n_test == 0 || n_val == 0 || rest - n_val == 0 {
        return Err(n);
    }
    let test = anchors[rest..].to_vec();
    let val = anchors[rest - n_val..rest].to_vec();
    let mut train = anchors;
    train.truncate(rest - n_val);
    Ok(Splits { train, val, test })
}

/// Samples for each anchor in order.
pub fn enumerate_samples<'a>(
    cube: &'a FeatureCube,
    anchors: &'a [usize],
    cfg: &'a WindowConfig,
) -> impl Iterator<Item = Result<Sample, WindowError>> + 'a {
    anchors.iter().map(move |&t0| sample_at(cube, t0, cfg, cfg.t_p))
}

/// Collects samples, failing on the first window error.
pub fn collect_samples(cube: &FeatureCube, anchors: &[usize], cfg: &WindowConfig) -> Result<Vec<Sample>, WindowError> {
    enumerate_samples(cube, anchors, cfg).collect()
}
