use std::io::{Read, Write};

use chrono::{DateTime, Duration, NaiveDateTime};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::NUM_FEATURES;

pub const CHANNEL_NAMES: [&str; NUM_FEATURES] =
    ["avg_arr_delay", "avg_dep_delay", "tot_arr_delay", "tot_dep_delay", "headway"];

const MAGIC: &[u8; 8] = b"RSTCUBE1";

/// Hourly per-station features.
///
/// `x` is `N x F x T` with channels in [`CHANNEL_NAMES`] order, all in hours.
/// `y` repeats channel 0 (average arrival delay) and `mask` marks
/// station-hours with at least one arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    pub x: Array3<f64>,
    pub y: Array2<f64>,
    pub mask: Array2<u8>,
    pub t_start: NaiveDateTime,
}

/// JSON description written next to a binary cube.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CubeSidecar {
    pub stations: usize,
    pub features: usize,
    pub slots: usize,
    pub t_start: NaiveDateTime,
    pub slot_width_hours: u32,
    pub channels: Vec<String>,
    pub units: String,
    pub target: String,
}

impl FeatureCube {
    /// All-zero cube with the headway channel at its default value.
    pub fn empty(stations: usize, slots: usize, t_start: NaiveDateTime, headway_default: f64) -> Self {
        let mut x = Array3::zeros((stations, NUM_FEATURES, slots));
        x.slice_mut(ndarray::s![.., 4, ..]).fill(headway_default);
        FeatureCube { x, y: Array2::zeros((stations, slots)), mask: Array2::zeros((stations, slots)), t_start }
    }

    pub fn num_stations(&self) -> usize {
        self.x.dim().0
    }

    pub fn num_features(&self) -> usize {
        self.x.dim().1
    }

    pub fn num_slots(&self) -> usize {
        self.x.dim().2
    }

    pub fn slot_start(&self, t: usize) -> NaiveDateTime {
        self.t_start + Duration::hours(t as i64)
    }

    /// Checks the target/mask invariants.
    pub fn validate(&self) -> Result<(), IngestError> {
        let (n, f, t) = self.x.dim();
        if f != NUM_FEATURES || self.y.dim() != (n, t) || self.mask.dim() != (n, t) {
            return Err(IngestError::BadCube("inconsistent shapes".into()));
        }
        for s in 0..n {
            for k in 0..t {
                if self.x[[s, 0, k]] != self.y[[s, k]] {
                    return Err(IngestError::BadCube(format!("target differs from channel 0 at ({s}, {k})")));
                }
                if self.mask[[s, k]] == 0 && (self.y[[s, k]] != 0.0 || self.x[[s, 2, k]] != 0.0) {
                    return Err(IngestError::BadCube(format!("unmasked cell ({s}, {k}) carries arrival delay")));
                }
            }
        }
        Ok(())
    }

    pub fn sidecar(&self) -> CubeSidecar {
        CubeSidecar {
            stations: self.num_stations(),
            features: self.num_features(),
            slots: self.num_slots(),
            t_start: self.t_start,
            slot_width_hours: 1,
            channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            units: "hours".into(),
            target: CHANNEL_NAMES[0].into(),
        }
    }

    /// Binary layout, little endian: magic, `N F T` as u64, `t_start` as i64
    /// unix seconds, then row-major `x` and `y` as f64 and `mask` as bytes.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), IngestError> {
        let (n, f, t) = self.x.dim();
        let mut buf = Vec::with_capacity(40 + 8 * n * t * (f + 1) + n * t);
        buf.extend_from_slice(MAGIC);
        for v in [n as u64, f as u64, t as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.t_start.and_utc().timestamp().to_le_bytes());
        for v in self.x.iter().chain(self.y.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend(self.mask.iter());
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, IngestError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(IngestError::BadCube("missing header".into()));
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
        let (n, f, t) = (
            u64::from_le_bytes(word(0)) as usize,
            u64::from_le_bytes(word(1)) as usize,
            u64::from_le_bytes(word(2)) as usize,
        );
        let start = i64::from_le_bytes(word(3));
        let t_start = DateTime::from_timestamp(start, 0)
            .ok_or_else(|| IngestError::BadCube("bad start timestamp".into()))?
            .naive_utc();
        let nx = n.checked_mul(f).and_then(|v| v.checked_mul(t));
        let expected = nx.map(|nx| 40 + 8 * (nx + n * t) + n * t);
        if expected != Some(bytes.len()) {
            return Err(IngestError::BadCube(format!("expected {expected:?} bytes, found {}", bytes.len())));
        }
        let nx = nx.unwrap();
        let floats: Vec<f64> = bytes[40..40 + 8 * (nx + n * t)]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask_bytes = bytes[40 + 8 * (nx + n * t)..].to_vec();
        let x = Array3::from_shape_vec((n, f, t), floats[..nx].to_vec())
            .map_err(|e| IngestError::BadCube(e.to_string()))?;
        let y = Array2::from_shape_vec((n, t), floats[nx..].to_vec())
            .map_err(|e| IngestError::BadCube(e.to_string()))?;
        let mask = Array2::from_shape_vec((n, t), mask_bytes).map_err(|e| IngestError::BadCube(e.to_string()))?;
        Ok(FeatureCube { x, y, mask, t_start })
    }
}
