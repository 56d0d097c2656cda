//! Parameter-free reference predictors.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::windows::Sample;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("persistence needs a nonempty recent window")]
    EmptyRecentWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    HistoricalAverage,
    Persistence,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::HistoricalAverage => "historical_average",
            BaselineKind::Persistence => "persistence",
        }
    }

    pub fn predict(self, sample: &Sample) -> Result<Array2<f64>, BaselineError> {
        match self {
            BaselineKind::HistoricalAverage => Ok(ha_predict(sample)),
            BaselineKind::Persistence => persistence_predict(sample),
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ha" | "historical_average" | "historical-average" => Ok(BaselineKind::HistoricalAverage),
            "persistence" | "last" => Ok(BaselineKind::Persistence),
            other => Err(format!("unknown baseline '{other}' (ha, persistence)")),
        }
    }
}

fn broadcast(values: impl Iterator<Item = f64>, stations: usize, horizon: usize) -> Array2<f64> {
    let v: Vec<f64> = values.collect();
    debug_assert_eq!(v.len(), stations);
    Array2::from_shape_fn((stations, horizon), |(n, _)| v[n])
}

/// Per-station mean of the target channel over the recent, daily and
/// weekly windows, repeated over the horizon. Empty windows are skipped;
/// with no history at all the prediction is zero.
pub fn ha_predict(sample: &Sample) -> Array2<f64> {
    ha_over(sample, &[&sample.x_h, &sample.x_d, &sample.x_w])
}

/// Historical average restricted to the recent window.
pub fn ha_predict_recent(sample: &Sample) -> Array2<f64> {
    ha_over(sample, &[&sample.x_h])
}

fn ha_over(sample: &Sample, windows: &[&ndarray::Array3<f64>]) -> Array2<f64> {
    let n = sample.num_stations();
    let slots: usize = windows.iter().map(|w| w.dim().2).sum();
    let means = (0..n).map(|i| {
        if slots == 0 {
            return 0.0;
        }
        let total: f64 = windows.iter().map(|w| w.slice(s![i, 0, ..]).sum()).sum();
        total / slots as f64
    });
    broadcast(means, n, sample.horizon())
}

/// Last recent-window target value, repeated over the horizon.
pub fn persistence_predict(sample: &Sample) -> Result<Array2<f64>, BaselineError> {
    let t = sample.x_h.dim().2;
    if t == 0 {
        return Err(BaselineError::EmptyRecentWindow);
    }
    let n = sample.num_stations();
    Ok(broadcast(sample.x_h.slice(s![.., 0, t - 1]).iter().copied(), n, sample.horizon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample(x_h: Array3<f64>, x_d: Array3<f64>, x_w: Array3<f64>, horizon: usize) -> Sample {
        let n = x_h.dim().0;
        Sample { x_h, x_d, x_w, y: Array2::zeros((n, horizon)), mask: Array2::ones((n, horizon)), t0: 0 }
    }

    #[test]
    fn ha_constant_series() {
        let s = sample(Array3::from_elem((2, 5, 3), 0.4), Array3::from_elem((2, 5, 3), 0.4), Array3::from_elem((2, 5, 3), 0.4), 3);
        assert!(ha_predict(&s).iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn ha_recent_only_mean() {
        let mut x_h = Array3::zeros((1, 5, 3));
        x_h[[0, 0, 1]] = 0.3;
        x_h[[0, 0, 2]] = 0.6;
        x_h[[0, 1, 2]] = 9.0;
        let s = sample(x_h, Array3::zeros((1, 5, 0)), Array3::zeros((1, 5, 0)), 3);
        assert!(ha_predict(&s).iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert_eq!(ha_predict(&s), ha_predict_recent(&s));
    }

    #[test]
    fn ha_zero_history() {
        let z = Array3::zeros((3, 5, 3));
        assert!(ha_predict(&sample(z.clone(), z.clone(), z, 2)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn persistence_repeats_last_slot() {
        let mut x_h = Array3::zeros((2, 5, 3));
        x_h[[0, 0, 2]] = 0.5;
        x_h[[1, 0, 1]] = 0.7;
        let z = Array3::zeros((2, 5, 3));
        let p = persistence_predict(&sample(x_h, z.clone(), z.clone(), 3)).unwrap();
        assert_eq!(p.row(0).to_vec(), vec![0.5; 3]);
        assert_eq!(p.row(1).to_vec(), vec![0.0; 3]);
        let empty = sample(Array3::zeros((2, 5, 0)), z.clone(), z, 3);
        assert_eq!(persistence_predict(&empty), Err(BaselineError::EmptyRecentWindow));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ha".parse::<BaselineKind>().unwrap(), BaselineKind::HistoricalAverage);
        assert_eq!("persistence".parse::<BaselineKind>().unwrap(), BaselineKind::Persistence);
        assert!("rf".parse::<BaselineKind>().is_err());
    }
}
