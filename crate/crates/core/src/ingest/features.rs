use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{FeatureCube, IngestError, RunRecord};
use crate::railnet::RailGraph;

/// Headway assigned to station-hours with fewer than two arrivals (one slot).
pub const DEFAULT_HEADWAY_HOURS: f64 = 1.0;

/// Which arrival times the hourly headway is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadwaySource {
    #[default]
    Actual,
    Scheduled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub headway_source: HeadwaySource,
    pub headway_default: f64,
    /// Z-score the non-target channels. The target channel is never rescaled.
    pub standardize: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            headway_source: HeadwaySource::Actual,
            headway_default: DEFAULT_HEADWAY_HOURS,
            standardize: false,
        }
    }
}

/// Mean gap between consecutive (sorted) arrival times, in hours. Fewer than
/// two arrivals yields [`DEFAULT_HEADWAY_HOURS`].
pub fn hourly_headway(arrivals: &[NaiveDateTime]) -> f64 {
    headway_or(arrivals, DEFAULT_HEADWAY_HOURS)
}

fn headway_or(arrivals: &[NaiveDateTime], default: f64) -> f64 {
    if arrivals.len() < 2 {
        return default;
    }
    let span = (arrivals[arrivals.len() - 1] - arrivals[0]).num_seconds();
    span as f64 / (arrivals.len() - 1) as f64 / 3600.0
}

fn slot_of(t: NaiveDateTime, t_start: NaiveDateTime, slots: usize) -> Option<usize> {
    if t < t_start {
        return None;
    }
    let s = ((t - t_start).num_seconds() / 3600) as usize;
    (s < slots).then_some(s)
}

/// Aggregates records into an hourly feature cube covering
/// `[t_start, t_start + slots hours)`.
///
/// Arrival channels are keyed on the actual arrival hour, departure channels
/// on the actual departure hour. Early (negative) delays count as zero.
pub fn hourly_features(
    records: &[RunRecord],
    graph: &RailGraph,
    t_start: NaiveDateTime,
    slots: usize,
    opts: &FeatureOptions,
) -> Result<FeatureCube, IngestError> {
    if slots == 0 {
        return Err(IngestError::EmptyRange);
    }
    let index = graph.code_index();
    let n = graph.num_stations();
    let cells = n * slots;
    let mut arr_sum = vec![0i64; cells];
    let mut arr_cnt = vec![0u32; cells];
    let mut dep_sum = vec![0i64; cells];
    let mut dep_cnt = vec![0u32; cells];
    let mut arrivals: Vec<Vec<(usize, NaiveDateTime)>> = vec![Vec::new(); n];

    for r in records {
        let &s = index
            .get(r.station_code.as_str())
            .ok_or_else(|| IngestError::UnknownStation(r.station_code.clone()))?;
        if let (Some(at), Some(delay)) = (r.act_arr, r.arr_delay_min) {
            if let Some(t) = slot_of(at, t_start, slots) {
                arr_sum[s * slots + t] += delay.max(0);
                arr_cnt[s * slots + t] += 1;
                let stamp = match opts.headway_source {
                    HeadwaySource::Actual => at,
                    HeadwaySource::Scheduled => r.sched_arr.unwrap_or(at),
                };
                arrivals[s].push((t, stamp));
            }
        }
        if let (Some(at), Some(delay)) = (r.act_dep, r.dep_delay_min) {
            if let Some(t) = slot_of(at, t_start, slots) {
                dep_sum[s * slots + t] += delay.max(0);
                dep_cnt[s * slots + t] += 1;
            }
        }
    }

    let mut cube = FeatureCube::empty(n, slots, t_start, opts.headway_default);
    for s in 0..n {
        for t in 0..slots {
            let c = s * slots + t;
            if arr_cnt[c] > 0 {
                let avg = arr_sum[c] as f64 / arr_cnt[c] as f64 / 60.0;
                cube.x[[s, 0, t]] = avg;
                cube.x[[s, 2, t]] = arr_sum[c] as f64 / 60.0;
                cube.y[[s, t]] = avg;
                cube.mask[[s, t]] = 1;
            }
            if dep_cnt[c] > 0 {
                cube.x[[s, 1, t]] = dep_sum[c] as f64 / dep_cnt[c] as f64 / 60.0;
                cube.x[[s, 3, t]] = dep_sum[c] as f64 / 60.0;
            }
        }
        let list = &mut arrivals[s];
        list.sort();
        for group in list.chunk_by(|a, b| a.0 == b.0) {
            let stamps: Vec<NaiveDateTime> = group.iter().map(|g| g.1).collect();
            cube.x[[s, 4, group[0].0]] = headway_or(&stamps, opts.headway_default);
        }
    }
    if opts.standardize {
        standardize_inputs(&mut cube);
    }
    Ok(cube)
}

/// Z-scores channels 1..F over all cells in place.
fn standardize_inputs(cube: &mut FeatureCube) {
    for ch in 1..cube.num_features() {
        let mut lane = cube.x.slice_mut(ndarray::s![.., ch, ..]);
        let count = lane.len() as f64;
        let mean = lane.sum() / count;
        let var = lane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        lane.mapv_inplace(|v| (v - mean) / sd);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneCubeStats {
    pub stations: usize,
    pub masked_cells: usize,
    pub mean_delay_min: Option<f64>,
}

/// Masked summary of the target channel, in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeStats {
    pub stations: usize,
    pub slots: usize,
    pub masked_cells: usize,
    pub mask_density: f64,
    pub mean_delay_min: Option<f64>,
    pub median_delay_min: Option<f64>,
    pub max_delay_min: Option<f64>,
    pub per_zone: BTreeMap<String, ZoneCubeStats>,
}

/// Summarizes the target over masked cells; `zones` (one tag per station)
/// enables the per-zone breakdown.
pub fn cube_stats(cube: &FeatureCube, zones: Option<&[String]>) -> CubeStats {
    let (n, t) = cube.y.dim();
    let mut values = Vec::new();
    let mut per_zone: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for s in 0..n {
        let zone = zones.and_then(|z| z.get(s));
        if let Some(z) = zone {
            per_zone.entry(z.clone()).or_default().0 += 1;
        }
        for k in 0..t {
            if cube.mask[[s, k]] == 1 {
                let v = cube.y[[s, k]] * 60.0;
                values.push(v);
                if let Some(z) = zone {
                    let e = per_zone.get_mut(z).unwrap();
                    e.1 += 1;
                    e.2 += v;
                }
            }
        }
    }
    let masked = values.len();
    let mean = (masked > 0).then(|| values.iter().sum::<f64>() / masked as f64);
    values.sort_by(f64::total_cmp);
    let median = (masked > 0).then(|| {
        let m = masked / 2;
        if masked % 2 == 1 {
            values[m]
        } else {
            0.5 * (values[m - 1] + values[m])
        }
    });
    CubeStats {
        stations: n,
        slots: t,
        masked_cells: masked,
        mask_density: if n * t == 0 { 0.0 } else { masked as f64 / (n * t) as f64 },
        mean_delay_min: mean,
        median_delay_min: median,
        max_delay_min: values.last().copied(),
        per_zone: per_zone
            .into_iter()
            .map(|(z, (stations, cells, sum))| {
                (z, ZoneCubeStats { stations, masked_cells: cells, mean_delay_min: (cells > 0).then(|| sum / cells as f64) })
            })
            .collect(),
    }
}
