//! Seeded synthetic networks and delay histories.
//!
//! Both generators share one topology, timetable and station-hour delay
//! field. The field (in minutes) follows
//!
//! `L[s, t] = max(0, rho * sum_u P[s, u] L[u, t-1] + S(s, t) + I(s, t) + noise)`
//!
//! where `P` is the row-normalized frequency-weighted inverse-distance
//! matrix, `S` a daily plus weekly seasonal profile and `I` a decaying
//! incident process. [`generate_cube`] samples the field directly under a
//! Bernoulli arrival mask; [`generate_records`] runs every scheduled train
//! along its route, starting from the field at its origin and applying
//! `d_next = max(0, rho * d_prev + S + I + noise)` at each stop.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FeatureCube, RunRecord, DEFAULT_HEADWAY_HOURS};
use crate::railnet::{self, GraphJson, RailGraph, Station, ZoneMap, ZONE_CODES};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] railnet::GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Path,
    Grid,
    RandomTree,
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(Topology::Path),
            "grid" => Ok(Topology::Grid),
            "random-tree" | "tree" => Ok(Topology::RandomTree),
            other => Err(format!("unknown topology '{other}' (path, grid, random-tree)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub stations: usize,
    pub days: usize,
    /// Trains per day on each route, per direction.
    pub trains_per_day: usize,
    pub topology: Topology,
    /// Propagation coefficient.
    pub rho: f64,
    /// Constant part of the seasonal profile, minutes.
    pub base_delay_min: f64,
    pub daily_amplitude_min: f64,
    pub weekly_amplitude_min: f64,
    /// Standard deviation of the per-cell / per-stop noise, minutes.
    pub noise_min: f64,
    /// Probability that an incident starts at a station in a given hour.
    pub incident_rate: f64,
    pub incident_mean_min: f64,
    /// Hourly retention factor of incident delay.
    pub incident_decay: f64,
    /// Innovation standard deviation of the slow per-station disturbance, minutes.
    pub disturbance_sd_min: f64,
    /// Hourly autocorrelation of the disturbance.
    pub disturbance_decay: f64,
    /// Extra delay every train carries when leaving its origin, minutes.
    pub initial_delay_min: f64,
    /// Probability that a station-hour has arrivals (cube path).
    pub coverage: f64,
    pub min_arrivals_per_hour: u32,
    pub max_arrivals_per_hour: u32,
    /// Number of zones the stations are spread over.
    pub zones: usize,
    pub start_date: NaiveDate,
    /// Travel speed for the timetable, km/h.
    pub speed_kmh: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            stations: 30,
            days: 14,
            trains_per_day: 6,
            topology: Topology::RandomTree,
            rho: 0.5,
            base_delay_min: 4.0,
            daily_amplitude_min: 12.0,
            weekly_amplitude_min: 4.0,
            noise_min: 2.0,
            incident_rate: 0.01,
            incident_mean_min: 40.0,
            incident_decay: 0.7,
            disturbance_sd_min: 8.0,
            disturbance_decay: 0.9,
            initial_delay_min: 0.0,
            coverage: 0.8,
            min_arrivals_per_hour: 1,
            max_arrivals_per_hour: 4,
            zones: 3,
            start_date: NaiveDate::from_ymd_opt(2025, 9, 1).expect("valid date"),
            speed_kmh: 60.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.stations < 2 {
            return bad(format!("need at least 2 stations, got {}", self.stations));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.days * 24 <= 168 + 3 {
            return bad(format!("{} days leave no anchors after the one-week history", self.days));
        }
        if self.trains_per_day == 0 || self.trains_per_day > 50 {
            return bad("trains_per_day must be in 1..=50".into());
        }
        if !(0.0..=1.0).contains(&self.coverage) || !(0.0..=1.0).contains(&self.incident_rate) {
            return bad("coverage and incident_rate must be probabilities".into());
        }
        if !(0.0..1.0).contains(&self.incident_decay) || !(0.0..1.0).contains(&self.disturbance_decay) {
            return bad("incident_decay and disturbance_decay must lie in [0, 1)".into());
        }
        if self.min_arrivals_per_hour == 0 || self.min_arrivals_per_hour > self.max_arrivals_per_hour {
            return bad("arrivals per hour must satisfy 1 <= min <= max".into());
        }
        if self.noise_min < 0.0 || self.disturbance_sd_min < 0.0 || self.incident_mean_min < 0.0 || !(self.speed_kmh > 0.0) {
            return bad("noise, incident size and speed must be nonnegative".into());
        }
        if self.zones == 0 || self.zones > ZONE_CODES.len() {
            return bad(format!("zones must be in 1..={}", ZONE_CODES.len()));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.days * 24
    }

    pub fn t_start(&self) -> NaiveDateTime {
        self.start_date.and_hms_opt(0, 0, 0).expect("midnight")
    }
}

/// Planted structure written next to the generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub graph: GraphJson,
    /// Station codes of every route, origin first.
    pub routes: Vec<Vec<String>>,
    /// Hour of day at which each station's daily profile peaks.
    pub daily_peak_hour: Vec<f64>,
    /// Phase offset of each station's weekly profile, radians.
    pub weekly_phase: Vec<f64>,
}

pub struct SynthRecords {
    pub records: Vec<RunRecord>,
    pub graph: RailGraph,
    pub zones: ZoneMap,
    pub truth: GroundTruth,
}

pub struct SynthCube {
    pub cube: FeatureCube,
    pub graph: RailGraph,
    pub zones: ZoneMap,
    pub truth: GroundTruth,
}

/// `d_0 = max(0, start)`, `d_{i+1} = max(0, rho d_i + increments[i])`.
pub fn delay_recurrence(rho: f64, start: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut d = start.max(0.0);
    out.push(d);
    for inc in increments {
        d = (rho * d + inc).max(0.0);
        out.push(d);
    }
    out
}

// Independent random streams so that the cube and record paths share
// topology and incidents but not noise draws.
const STREAM_TOPOLOGY: u64 = 1;
const STREAM_INCIDENTS: u64 = 2;
const STREAM_FIELD: u64 = 3;
const STREAM_MASK: u64 = 4;
const STREAM_RECORDS: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct World {
    graph: RailGraph,
    zones: ZoneMap,
    routes: Vec<Vec<usize>>,
    peak: Vec<f64>,
    weekly_phase: Vec<f64>,
    /// Row-normalized propagation weights.
    propagation: Array2<f64>,
}

fn station_code(i: usize, n: usize) -> String {
    let width = (n.saturating_sub(1)).to_string().len().max(2);
    format!("S{i:0width$}")
}

fn train_number(route: usize, direction: usize, k: usize) -> String {
    format!("{}", 10000 + route * 100 + direction * 50 + k)
}

fn topology(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let n = cfg.stations;
    match cfg.topology {
        Topology::Path => ((0..n - 1).map(|i| (i, i + 1)).collect(), vec![(0..n).collect()]),
        Topology::Grid => {
            let cols = (n as f64).sqrt().ceil() as usize;
            let rows = n.div_ceil(cols);
            let id = |r: usize, c: usize| (r * cols + c < n).then_some(r * cols + c);
            let mut edges = Vec::new();
            let mut routes = Vec::new();
            for r in 0..rows {
                let line: Vec<usize> = (0..cols).filter_map(|c| id(r, c)).collect();
                edges.extend(line.windows(2).map(|w| (w[0], w[1])));
                if line.len() > 1 {
                    routes.push(line);
                }
            }
            for c in 0..cols {
                let line: Vec<usize> = (0..rows).filter_map(|r| id(r, c)).collect();
                edges.extend(line.windows(2).map(|w| (w[0], w[1])));
                if line.len() > 1 {
                    routes.push(line);
                }
            }
            (edges, routes)
        }
        Topology::RandomTree => {
            let parent: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { rng.random_range(0..i) }).collect();
            let mut has_child = vec![false; n];
            for i in 1..n {
                has_child[parent[i]] = true;
            }
            let routes = (1..n)
                .filter(|&i| !has_child[i])
                .map(|leaf| {
                    let mut path = vec![leaf];
                    while *path.last().unwrap() != 0 {
                        path.push(parent[*path.last().unwrap()]);
                    }
                    path.reverse();
                    path
                })
                .collect();
            ((1..n).map(|i| (parent[i], i)).collect(), routes)
        }
    }
}

fn build_world(cfg: &SynthConfig) -> Result<World, SynthError> {
    cfg.validate()?;
    let n = cfg.stations;
    let mut r = rng(cfg.seed, STREAM_TOPOLOGY);
    let (pairs, routes) = topology(cfg, &mut r);
    let dist: BTreeMap<(usize, usize), u32> = pairs.iter().map(|&(a, b)| ((a.min(b), a.max(b)), r.random_range(10..=80))).collect();
    let mut trains: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    for (ri, route) in routes.iter().enumerate() {
        for dir in 0..2 {
            for k in 0..cfg.trains_per_day {
                for w in route.windows(2) {
                    trains.entry((w[0].min(w[1]), w[0].max(w[1]))).or_default().insert(train_number(ri, dir, k));
                }
            }
        }
    }
    let edges: Vec<(usize, usize, f64, u32)> =
        dist.iter().map(|(&(a, b), &d)| (a, b, d as f64, trains[&(a, b)].len() as u32)).collect();
    let mut zones = ZoneMap::default();
    let stations: Vec<Station> = (0..n)
        .map(|i| {
            let code = station_code(i, n);
            let zone = ZONE_CODES[i * cfg.zones / n].to_string();
            zones.0.insert(code.clone(), zone.clone());
            Station { name: format!("Station {}", &code[1..]), code, zone, index: i }
        })
        .collect();
    let graph = RailGraph::from_edges(stations, &edges)?;
    let peak = (0..n).map(|_| r.random_range(6.0..20.0)).collect();
    let weekly_phase = (0..n).map(|_| r.random_range(0.0..2.0 * PI)).collect();
    let mut propagation = railnet::spatial_weight_matrix(&graph)?.matrix;
    for mut row in propagation.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    Ok(World { graph, zones, routes, peak, weekly_phase, propagation })
}

impl World {
    fn seasonal(&self, cfg: &SynthConfig, s: usize, t: usize) -> f64 {
        let hour = (t % 24) as f64;
        let week = (t % 168) as f64;
        cfg.base_delay_min
            + cfg.daily_amplitude_min * (2.0 * PI * (hour - self.peak[s] + 6.0) / 24.0).sin()
            + cfg.weekly_amplitude_min * (2.0 * PI * week / 168.0 + self.weekly_phase[s]).sin()
    }

    fn truth(&self, cfg: &SynthConfig) -> GroundTruth {
        GroundTruth {
            config: cfg.clone(),
            graph: self.graph.to_json(),
            routes: self.routes.iter().map(|r| r.iter().map(|&i| self.graph.stations[i].code.clone()).collect()).collect(),
            daily_peak_hour: self.peak.clone(),
            weekly_phase: self.weekly_phase.clone(),
        }
    }
}

/// Incident delay plus the slow disturbance, per station and hour, minutes.
fn incidents(cfg: &SynthConfig, n: usize, hours: usize) -> Array2<f64> {
    let mut r = rng(cfg.seed, STREAM_INCIDENTS);
    let size = Exp::new(1.0 / cfg.incident_mean_min.max(1e-9)).expect("positive rate");
    let shock = normal(cfg.disturbance_sd_min);
    let mut out = Array2::zeros((n, hours));
    for s in 0..n {
        let mut level = 0.0;
        let mut drift = 0.0;
        for t in 0..hours {
            level *= cfg.incident_decay;
            if cfg.incident_mean_min > 0.0 && r.random_bool(cfg.incident_rate) {
                level += size.sample(&mut r);
            }
            drift = cfg.disturbance_decay * drift + shock.sample(&mut r);
            out[[s, t]] = level + drift;
        }
    }
    out
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite standard deviation")
}

/// The station-hour delay field, minutes.
fn field(cfg: &SynthConfig, world: &World, inc: &Array2<f64>) -> Array2<f64> {
    let (n, hours) = inc.dim();
    let mut r = rng(cfg.seed, STREAM_FIELD);
    let noise = normal(cfg.noise_min);
    let mut out = Array2::zeros((n, hours));
    for t in 0..hours {
        let prev = (t > 0).then(|| world.propagation.dot(&out.column(t - 1)));
        for s in 0..n {
            let carried = match &prev {
                Some(p) => cfg.rho * p[s],
                None => cfg.initial_delay_min,
            };
            let v = carried + world.seasonal(cfg, s, t) + inc[[s, t]] + noise.sample(&mut r);
            out[[s, t]] = v.max(0.0);
        }
    }
    out
}

/// Writes the delay field straight into a feature cube: each station-hour
/// has arrivals with probability `coverage`; observed cells carry the field
/// value as average arrival delay and a slightly perturbed departure delay.
pub fn generate_cube(cfg: &SynthConfig) -> Result<SynthCube, SynthError> {
    let world = build_world(cfg)?;
    let n = cfg.stations;
    let slots = cfg.slots();
    let inc = incidents(cfg, n, slots);
    let latent = field(cfg, &world, &inc);
    let mut r = rng(cfg.seed, STREAM_MASK);
    let dep_noise = normal(cfg.noise_min * 0.5);
    let mut cube = FeatureCube::empty(n, slots, cfg.t_start(), DEFAULT_HEADWAY_HOURS);
    for s in 0..n {
        for t in 0..slots {
            if !r.random_bool(cfg.coverage) {
                continue;
            }
            let count = r.random_range(cfg.min_arrivals_per_hour..=cfg.max_arrivals_per_hour) as f64;
            let arr = latent[[s, t]] / 60.0;
            let dep = (latent[[s, t]] + dep_noise.sample(&mut r)).max(0.0) / 60.0;
            cube.x[[s, 0, t]] = arr;
            cube.x[[s, 1, t]] = dep;
            cube.x[[s, 2, t]] = arr * count;
            cube.x[[s, 3, t]] = dep * count;
            cube.x[[s, 4, t]] = if count >= 2.0 { 1.0 / count } else { DEFAULT_HEADWAY_HOURS };
            cube.y[[s, t]] = arr;
            cube.mask[[s, t]] = 1;
        }
    }
    let truth = world.truth(cfg);
    Ok(SynthCube { cube, graph: world.graph, zones: world.zones, truth })
}

/// Runs the timetable over the delay field and emits one record per
/// station stop, sorted by date, train and distance.
pub fn generate_records(cfg: &SynthConfig) -> Result<SynthRecords, SynthError> {
    let world = build_world(cfg)?;
    let n = cfg.stations;
    let t_start = cfg.t_start();
    let dist = |a: usize, b: usize| world.graph.distance[[a, b]];
    let leg_minutes = |a: usize, b: usize| (dist(a, b) * 60.0 / cfg.speed_kmh).round() as i64;
    let dwell = 2i64;
    let longest = world
        .routes
        .iter()
        .map(|r| r.windows(2).map(|w| leg_minutes(w[0], w[1]) + dwell).sum::<i64>())
        .max()
        .unwrap_or(0);
    let hours = cfg.slots() + 24 + (longest as usize).div_ceil(60) + 2;
    let inc = incidents(cfg, n, hours);
    let latent = field(cfg, &world, &inc);
    let mut r = rng(cfg.seed, STREAM_RECORDS);
    let noise = normal(cfg.noise_min);
    let hour_of = |t: NaiveDateTime| ((t - t_start).num_minutes().max(0) / 60) as usize;

    let mut records = Vec::new();
    for day in 0..cfg.days {
        let date = cfg.start_date + Duration::days(day as i64);
        for (ri, route) in world.routes.iter().enumerate() {
            for dir in 0..2 {
                let stops: Vec<usize> = if dir == 0 { route.clone() } else { route.iter().rev().copied().collect() };
                for k in 0..cfg.trains_per_day {
                    let offset = (ri * 37 + dir * 11 + k * 7) % 60;
                    let first = (k * 1440 / cfg.trains_per_day + offset) as i64 % 1440;
                    let depart = date.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(first);
                    let train_no = train_number(ri, dir, k);
                    let name = format!(
                        "{} - {} Express",
                        world.graph.stations[stops[0]].name,
                        world.graph.stations[*stops.last().unwrap()].name
                    );
                    let mut sched = depart;
                    let mut km = 0.0;
                    let mut delay = 0.0;
                    for (i, &s) in stops.iter().enumerate() {
                        if i > 0 {
                            let p = stops[i - 1];
                            km += dist(p, s);
                            sched += Duration::minutes(leg_minutes(p, s));
                        }
                        let h = hour_of(sched).min(hours - 1);
                        delay = if i == 0 {
                            (cfg.initial_delay_min + latent[[s, h]]).max(0.0)
                        } else {
                            let inc_here = world.seasonal(cfg, s, h) + inc[[s, h]] + noise.sample(&mut r);
                            (cfg.rho * delay + inc_here).max(0.0)
                        };
                        let d = delay.round() as i64;
                        let last = i + 1 == stops.len();
                        let sched_arr = (i > 0).then_some(sched);
                        let sched_dep = (!last).then(|| if i == 0 { sched } else { sched + Duration::minutes(dwell) });
                        records.push(RunRecord {
                            date,
                            train_no: train_no.clone(),
                            train_name: name.clone(),
                            station_code: world.graph.stations[s].code.clone(),
                            station_name: world.graph.stations[s].name.clone(),
                            distance_km: km,
                            sched_arr,
                            act_arr: sched_arr.map(|t| t + Duration::minutes(d)),
                            sched_dep,
                            act_dep: sched_dep.map(|t| t + Duration::minutes(d)),
                            arr_delay_min: sched_arr.map(|_| d),
                            dep_delay_min: sched_dep.map(|_| d),
                        });
                        if i > 0 {
                            sched += Duration::minutes(dwell);
                        }
                    }
                }
            }
        }
    }
    records.sort_by(|a, b| {
        (a.date, &a.train_no).cmp(&(b.date, &b.train_no)).then(a.distance_km.total_cmp(&b.distance_km))
    });
    let truth = world.truth(cfg);
    Ok(SynthRecords { records, graph: world.graph, zones: world.zones, truth })
}
