//! Station graph of the railway network.
//!
//! Nodes are stations; an undirected edge joins two stations that are
//! consecutive on at least one observed run. Each edge carries a distance
//! in kilometres and a train frequency (number of distinct train numbers
//! traversing it).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RunRecord;

/// The seventeen administrative zones, plus the fallback tag.
pub const ZONE_CODES: [&str; 17] = [
    "SCR", "NR", "WR", "ECR", "NWR", "SR", "NFR", "CR", "ECOR", "NCR", "SWR", "ER", "NER", "WCR",
    "SER", "SECR", "KRCL",
];
pub const UNKNOWN_ZONE: &str = "UNKNOWN";

/// Relative spread above which repeated distance observations of one edge
/// are reported as inconsistent.
const DISTANCE_SPREAD_WARN: f64 = 0.10;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no running records to build a graph from")]
    EmptyInput,
    #[error("every run was rejected ({0} runs with non-monotone distance)")]
    AllRunsRejected(usize),
    #[error("graph has no edges")]
    NoEdges,
    #[error("edge ({i}, {j}) has non-positive distance {distance}")]
    ZeroDistance { i: usize, j: usize, distance: f64 },
    #[error("unknown zone '{zone}'; valid zones: {valid:?}")]
    UnknownZone { zone: String, valid: Vec<String> },
    #[error("edge ({i}, {j}) references a station outside 0..{n}")]
    BadEdge { i: usize, j: usize, n: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("zone map csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub code: String,
    pub name: String,
    pub zone: String,
    pub index: usize,
}

/// Undirected station graph with dense adjacency, distance and frequency
/// matrices. All three matrices are symmetric with a zero diagonal and share
/// the same support.
#[derive(Debug, Clone, PartialEq)]
pub struct RailGraph {
    pub stations: Vec<Station>,
    pub adjacency: Array2<u8>,
    pub distance: Array2<f64>,
    pub frequency: Array2<u32>,
}

/// Distance-and-frequency edge weights `(1/d_ij) * (k_ij / k_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub matrix: Array2<f64>,
    pub k_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub stations: usize,
    pub edges: usize,
    pub avg_degree: f64,
    pub avg_distance_km: f64,
    pub avg_trains_per_edge: f64,
}

/// Counters collected while building a graph from records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub runs: usize,
    pub rejected_runs: usize,
    pub inconsistent_distance_edges: usize,
}

/// Station code to zone tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZoneMap(pub HashMap<String, String>);

impl ZoneMap {
    pub fn zone_of(&self, code: &str) -> &str {
        self.0.get(code).map(String::as_str).unwrap_or(UNKNOWN_ZONE)
    }

    /// Reads a two-column `station_code,zone` CSV. A header row is accepted
    /// and skipped when its first field is `station_code`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut map = HashMap::new();
        for row in rdr.records() {
            let row = row?;
            let (Some(code), Some(zone)) = (row.get(0), row.get(1)) else {
                continue;
            };
            if code.eq_ignore_ascii_case("station_code") || code.is_empty() {
                continue;
            }
            map.insert(code.to_string(), zone.to_string());
        }
        Ok(ZoneMap(map))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "station_code,zone")?;
        let sorted: BTreeMap<_, _> = self.0.iter().collect();
        for (code, zone) in sorted {
            writeln!(w, "{code},{zone}")?;
        }
        Ok(())
    }
}

pub struct GraphBuild {
    pub graph: RailGraph,
    pub diagnostics: BuildDiagnostics,
}

impl RailGraph {
    /// Builds a graph from stations and `(i, j, distance_km, frequency)` edges.
    pub fn from_edges(
        mut stations: Vec<Station>,
        edges: &[(usize, usize, f64, u32)],
    ) -> Result<Self, GraphError> {
        let n = stations.len();
        for (idx, s) in stations.iter_mut().enumerate() {
            s.index = idx;
        }
        let mut seen = BTreeSet::new();
        for s in &stations {
            if !seen.insert(s.code.as_str()) {
                return Err(GraphError::Invalid(format!("duplicate station code {}", s.code)));
            }
        }
        let mut adjacency = Array2::zeros((n, n));
        let mut distance = Array2::zeros((n, n));
        let mut frequency = Array2::zeros((n, n));
        for &(i, j, d, k) in edges {
            if i >= n || j >= n || i == j {
                return Err(GraphError::BadEdge { i, j, n });
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(GraphError::ZeroDistance { i, j, distance: d });
            }
            if k == 0 {
                return Err(GraphError::Invalid(format!("edge ({i}, {j}) has zero frequency")));
            }
            for (a, b) in [(i, j), (j, i)] {
                adjacency[[a, b]] = 1;
                distance[[a, b]] = d;
                frequency[[a, b]] = k;
            }
        }
        Ok(RailGraph { stations, adjacency, distance, frequency })
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    /// Upper-triangle edge list `(i, j, distance_km, frequency)`, `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64, u32)> {
        let n = self.num_stations();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[[i, j]] == 1 {
                    out.push((i, j, self.distance[[i, j]], self.frequency[[i, j]]));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a == 1).count() / 2
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.code == code)
    }

    pub fn code_index(&self) -> HashMap<&str, usize> {
        self.stations.iter().map(|s| (s.code.as_str(), s.index)).collect()
    }

    /// Neighbour lists derived from the adjacency matrix.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let n = self.num_stations();
        (0..n)
            .map(|i| (0..n).filter(|&j| self.adjacency[[i, j]] == 1).collect())
            .collect()
    }

    pub fn zones(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.stations.iter().map(|s| s.zone.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn stats(&self) -> GraphStats {
        let edges = self.edges();
        let n = self.num_stations();
        let e = edges.len();
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            if e == 0 {
                0.0
            } else {
                it.sum::<f64>() / e as f64
            }
        };
        GraphStats {
            stations: n,
            edges: e,
            avg_degree: if n == 0 { 0.0 } else { 2.0 * e as f64 / n as f64 },
            avg_distance_km: mean(&mut edges.iter().map(|x| x.2)),
            avg_trains_per_edge: mean(&mut edges.iter().map(|x| x.3 as f64)),
        }
    }

    /// Checks symmetry, zero diagonal and identical support of the matrices.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.num_stations();
        for (idx, s) in self.stations.iter().enumerate() {
            if s.index != idx {
                return Err(GraphError::Invalid(format!("station {} has index {}", s.code, s.index)));
            }
        }
        for i in 0..n {
            if self.adjacency[[i, i]] != 0 || self.distance[[i, i]] != 0.0 || self.frequency[[i, i]] != 0 {
                return Err(GraphError::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let a = self.adjacency[[i, j]];
                if a != self.adjacency[[j, i]]
                    || self.distance[[i, j]] != self.distance[[j, i]]
                    || self.frequency[[i, j]] != self.frequency[[j, i]]
                {
                    return Err(GraphError::Invalid(format!("asymmetric entry ({i}, {j})")));
                }
                let on = a == 1;
                if on != (self.frequency[[i, j]] >= 1) || on != (self.distance[[i, j]] > 0.0) {
                    return Err(GraphError::Invalid(format!("support mismatch at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson { stations: self.stations.clone(), edges: self.edges() }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), GraphError> {
        serde_json::to_writer_pretty(w, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, GraphError> {
        let doc: GraphJson = serde_json::from_reader(r)?;
        doc.into_graph()
    }
}

/// Serialized form: station list plus COO edge triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub stations: Vec<Station>,
    pub edges: Vec<(usize, usize, f64, u32)>,
}

impl GraphJson {
    pub fn into_graph(self) -> Result<RailGraph, GraphError> {
        for (idx, s) in self.stations.iter().enumerate() {
            if s.index != idx {
                return Err(GraphError::Invalid(format!(
                    "station {} listed at position {idx} has index {}",
                    s.code, s.index
                )));
            }
        }
        RailGraph::from_edges(self.stations, &self.edges)
    }
}

fn run_time_key(r: &RunRecord) -> Option<chrono::NaiveDateTime> {
    r.sched_arr.or(r.sched_dep).or(r.act_arr).or(r.act_dep)
}

/// Builds the station graph from running records.
///
/// Records are grouped into runs by `(date, train_no)` and ordered by
/// scheduled time. A run whose distance column does not strictly increase in
/// that order is rejected and counted. Stations are indexed in sorted code
/// order, so the result does not depend on record order.
pub fn build_graph(records: &[RunRecord], zones: &ZoneMap) -> Result<GraphBuild, GraphError> {
    if records.is_empty() {
        return Err(GraphError::EmptyInput);
    }
    let mut runs: BTreeMap<(chrono::NaiveDate, &str), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        runs.entry((r.date, r.train_no.as_str())).or_default().push(r);
    }

    let mut diagnostics = BuildDiagnostics { runs: runs.len(), ..Default::default() };
    let mut names: BTreeMap<&str, &str> = BTreeMap::new();
    // (a, b) with a < b by code -> observed distances, distinct trains
    let mut edge_obs: BTreeMap<(&str, &str), (Vec<f64>, BTreeSet<&str>)> = BTreeMap::new();

    for ((_, train), mut run) in runs {
        run.sort_by(|a, b| {
            run_time_key(a)
                .cmp(&run_time_key(b))
                .then(a.distance_km.total_cmp(&b.distance_km))
                .then(a.station_code.cmp(&b.station_code))
        });
        let monotone = run.windows(2).all(|w| w[1].distance_km > w[0].distance_km);
        if !monotone {
            diagnostics.rejected_runs += 1;
            continue;
        }
        for r in &run {
            names.entry(r.station_code.as_str()).or_insert(r.station_name.as_str());
        }
        for w in run.windows(2) {
            let (a, b) = (w[0].station_code.as_str(), w[1].station_code.as_str());
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            let entry = edge_obs.entry(key).or_default();
            entry.0.push((w[1].distance_km - w[0].distance_km).abs());
            entry.1.insert(train);
        }
    }
    if names.is_empty() {
        return Err(GraphError::AllRunsRejected(diagnostics.rejected_runs));
    }
    if diagnostics.rejected_runs > 0 {
        log::warn!("rejected {} runs with non-monotone distance", diagnostics.rejected_runs);
    }

    let stations: Vec<Station> = names
        .iter()
        .enumerate()
        .map(|(index, (code, name))| Station {
            code: code.to_string(),
            name: name.to_string(),
            zone: zones.zone_of(code).to_string(),
            index,
        })
        .collect();
    let index: HashMap<&str, usize> = names.keys().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut edges = Vec::with_capacity(edge_obs.len());
    for ((a, b), (mut dists, trains)) in edge_obs {
        let d = median(&mut dists);
        let (lo, hi) = (dists[0], dists[dists.len() - 1]);
        if hi - lo > DISTANCE_SPREAD_WARN * d {
            diagnostics.inconsistent_distance_edges += 1;
        }
        edges.push((index[a], index[b], d, trains.len() as u32));
    }
    if diagnostics.inconsistent_distance_edges > 0 {
        log::warn!(
            "{} edges have distance observations differing by more than 10%; median kept",
            diagnostics.inconsistent_distance_edges
        );
    }
    let graph = RailGraph::from_edges(stations, &edges)?;
    Ok(GraphBuild { graph, diagnostics })
}

/// Median of a nonempty slice; sorts in place.
fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Edge weights combining inverse distance with normalized train frequency.
pub fn spatial_weight_matrix(graph: &RailGraph) -> Result<SpatialWeights, GraphError> {
    weights_impl(graph, true)
}

/// Pure inverse-distance weights, `1/d_ij` on edges.
pub fn inverse_distance_matrix(graph: &RailGraph) -> Result<SpatialWeights, GraphError> {
    weights_impl(graph, false)
}

fn weights_impl(graph: &RailGraph, use_frequency: bool) -> Result<SpatialWeights, GraphError> {
    let edges = graph.edges();
    let k_max = edges.iter().map(|e| e.3).max().ok_or(GraphError::NoEdges)?;
    let n = graph.num_stations();
    let mut matrix = Array2::zeros((n, n));
    for (i, j, d, k) in edges {
        if !(d > 0.0) {
            return Err(GraphError::ZeroDistance { i, j, distance: d });
        }
        let ratio = if use_frequency { k as f64 / k_max as f64 } else { 1.0 };
        let w = (1.0 / d) * ratio;
        matrix[[i, j]] = w;
        matrix[[j, i]] = w;
    }
    Ok(SpatialWeights { matrix, k_max })
}

/// Induced subgraph on the stations tagged with `zone`, re-indexed densely
/// in the original station order.
pub fn zone_subgraph(graph: &RailGraph, zone: &str) -> Result<RailGraph, GraphError> {
    let keep: Vec<usize> = graph
        .stations
        .iter()
        .filter(|s| s.zone == zone)
        .map(|s| s.index)
        .collect();
    if keep.is_empty() {
        return Err(GraphError::UnknownZone { zone: zone.to_string(), valid: graph.zones() });
    }
    let stations: Vec<Station> = keep.iter().map(|&i| graph.stations[i].clone()).collect();
    let mut edges = Vec::new();
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate().skip(a + 1) {
            if graph.adjacency[[i, j]] == 1 {
                edges.push((a, b, graph.distance[[i, j]], graph.frequency[[i, j]]));
            }
        }
    }
    RailGraph::from_edges(stations, &edges)
}

const POWER_ITER_MAX: usize = 20_000;
const POWER_ITER_TOL: f64 = 1e-12;

/// Largest eigenvalue of the symmetric normalized Laplacian, by power
/// iteration on the sparse neighbour structure. Returns 0 for edgeless graphs.
pub fn laplacian_lambda_max(graph: &RailGraph) -> f64 {
    let n = graph.num_stations();
    let nbrs = graph.neighbors();
    let inv_sqrt_deg: Vec<f64> = nbrs
        .iter()
        .map(|v| if v.is_empty() { 0.0 } else { 1.0 / (v.len() as f64).sqrt() })
        .collect();
    if nbrs.iter().all(Vec::is_empty) {
        return 0.0;
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut acc = 0.0;
            for &j in &nbrs[i] {
                acc += inv_sqrt_deg[j] * v[j];
            }
            let diag = if nbrs[i].is_empty() { 0.0 } else { v[i] };
            out[i] = diag - inv_sqrt_deg[i] * acc;
        }
    };
    // deterministic start vector with components along every eigenvector
    let mut v: Vec<f64> = (0..n)
        .map(|i| ((i as u64 * 7919 + 17) % 1013) as f64 / 1013.0 - 0.5 + 1e-3)
        .collect();
    let mut w = vec![0.0; n];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        apply(&v, &mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut v, &mut w);
        if (next - rayleigh).abs() <= POWER_ITER_TOL * next.abs() {
            return next;
        }
        rayleigh = next;
    }
    rayleigh
}

/// Scaled Laplacian `(2/lambda_max) L - I` with
/// `L = D^{-1/2} (D - A) D^{-1/2}`. Isolated stations get a zero Laplacian
/// row, and an edgeless graph uses `lambda_max = 2`.
pub fn scaled_laplacian(graph: &RailGraph) -> Array2<f64> {
    let n = graph.num_stations();
    let deg: Vec<f64> = (0..n)
        .map(|i| graph.adjacency.row(i).iter().map(|&a| a as f64).sum())
        .collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut lap = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        if deg[i] > 0.0 {
            lap[[i, i]] = 1.0;
        }
        for j in 0..n {
            if graph.adjacency[[i, j]] == 1 {
                lap[[i, j]] = -inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    let mut lambda = laplacian_lambda_max(graph);
    if lambda <= 1e-12 {
        lambda = 2.0;
    }
    let mut out = lap * (2.0 / lambda);
    for i in 0..n {
        out[[i, i]] -= 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RunRecord;
    use chrono::NaiveDate;

    fn rec(date: u32, train: &str, code: &str, km: f64, minute: i64) -> RunRecord {
        let d = NaiveDate::from_ymd_opt(2024, 9, date).unwrap();
        let t = d.and_hms_opt(6, 0, 0).unwrap() + chrono::Duration::minutes(minute);
        RunRecord {
            date: d,
            train_no: train.into(),
            train_name: format!("T{train}"),
            station_code: code.into(),
            station_name: code.to_lowercase(),
            distance_km: km,
            sched_arr: Some(t),
            act_arr: Some(t),
            sched_dep: Some(t),
            act_dep: Some(t),
            arr_delay_min: Some(0),
            dep_delay_min: Some(0),
        }
    }

    #[test]
    fn table_one_pair_builds_single_edge() {
        let recs = vec![rec(7, "12277", "KGP", 116.0, 0), rec(7, "12277", "BLS", 237.0, 80)];
        let g = build_graph(&recs, &ZoneMap::default()).unwrap().graph;
        assert_eq!(g.num_stations(), 2);
        let (i, j) = (g.index_of("KGP").unwrap(), g.index_of("BLS").unwrap());
        assert_eq!(g.distance[[i, j]], 121.0);
        assert_eq!(g.frequency[[i, j]], 1);
        g.validate().unwrap();
    }

    #[test]
    fn single_record_single_node() {
        let g = build_graph(&[rec(1, "1", "X", 0.0, 0)], &ZoneMap::default()).unwrap().graph;
        assert_eq!(g.num_stations(), 1);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.stations[0].zone, UNKNOWN_ZONE);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(build_graph(&[], &ZoneMap::default()), Err(GraphError::EmptyInput)));
    }

    #[test]
    fn frequency_counts_distinct_trains() {
        let mut recs = Vec::new();
        for (day, train) in [(1, "A"), (2, "A"), (1, "B"), (1, "C")] {
            recs.push(rec(day, train, "x", 10.0, 0));
            recs.push(rec(day, train, "y", 30.0, 30));
        }
        // brute-force distinct count
        let mut distinct: Vec<&str> = recs.iter().map(|r| r.train_no.as_str()).collect();
        distinct.sort();
        distinct.dedup();
        let g = build_graph(&recs, &ZoneMap::default()).unwrap().graph;
        assert_eq!(g.frequency[[0, 1]] as usize, distinct.len());
        assert_eq!(g.frequency[[0, 1]], 3);
    }

    #[test]
    fn non_monotone_run_is_rejected() {
        let recs = vec![
            rec(1, "A", "x", 10.0, 0),
            rec(1, "A", "y", 5.0, 30),
            rec(1, "B", "x", 10.0, 0),
            rec(1, "B", "z", 50.0, 30),
        ];
        let build = build_graph(&recs, &ZoneMap::default()).unwrap();
        assert_eq!(build.diagnostics.rejected_runs, 1);
        assert_eq!(build.graph.num_stations(), 2);
        assert!(build.graph.index_of("y").is_none());
    }

    #[test]
    fn median_distance_and_spread_warning() {
        let recs = vec![
            rec(1, "A", "x", 0.0, 0),
            rec(1, "A", "y", 10.0, 30),
            rec(2, "A", "x", 0.0, 0),
            rec(2, "A", "y", 12.0, 30),
            rec(3, "A", "x", 0.0, 0),
            rec(3, "A", "y", 30.0, 30),
        ];
        let build = build_graph(&recs, &ZoneMap::default()).unwrap();
        assert_eq!(build.graph.distance[[0, 1]], 12.0);
        assert_eq!(build.diagnostics.inconsistent_distance_edges, 1);
    }

    fn path_graph(dists: &[f64], freqs: &[u32], zones: &[&str]) -> RailGraph {
        let stations = zones
            .iter()
            .enumerate()
            .map(|(i, z)| Station { code: format!("S{i}"), name: String::new(), zone: z.to_string(), index: i })
            .collect();
        let edges: Vec<_> = dists
            .iter()
            .zip(freqs)
            .enumerate()
            .map(|(i, (&d, &k))| (i, i + 1, d, k))
            .collect();
        RailGraph::from_edges(stations, &edges).unwrap()
    }

    #[test]
    fn spatial_weight_examples() {
        let g = path_graph(&[2.0], &[5], &["Z", "Z"]);
        assert_eq!(spatial_weight_matrix(&g).unwrap().matrix[[0, 1]], 0.5);
        let g = path_graph(&[1.0], &[5], &["Z", "Z"]);
        assert_eq!(spatial_weight_matrix(&g).unwrap().matrix[[1, 0]], 1.0);
        let g = path_graph(&[1.0, 2.0], &[4, 8], &["Z", "Z", "Z"]);
        let w = spatial_weight_matrix(&g).unwrap();
        assert_eq!(w.k_max, 8);
        assert_eq!(w.matrix[[0, 1]], 0.5);
        assert_eq!(w.matrix[[1, 2]], 0.5);
        assert_eq!(w.matrix[[0, 2]], 0.0);
    }

    #[test]
    fn equal_frequencies_reduce_to_inverse_distance() {
        let g = path_graph(&[3.0, 7.0, 11.0], &[6, 6, 6], &["Z"; 4]);
        let a = spatial_weight_matrix(&g).unwrap();
        let b = inverse_distance_matrix(&g).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn spatial_weights_reject_edgeless_graph() {
        let g = path_graph(&[], &[], &["Z"]);
        assert!(matches!(spatial_weight_matrix(&g), Err(GraphError::NoEdges)));
    }

    #[test]
    fn zone_subgraph_examples() {
        let g = path_graph(&[1.0, 2.0, 3.0], &[1, 2, 3], &["Z1", "Z1", "Z2", "Z2"]);
        let sub = zone_subgraph(&g, "Z1").unwrap();
        assert_eq!(sub.num_stations(), 2);
        assert_eq!(sub.num_edges(), 1);
        let sub = zone_subgraph(&g, "Z2").unwrap();
        assert_eq!(sub.stations[0].index, 0);
        assert_eq!(sub.distance[[0, 1]], 3.0);
        match zone_subgraph(&g, "NR") {
            Err(GraphError::UnknownZone { valid, .. }) => assert_eq!(valid, vec!["Z1", "Z2"]),
            other => panic!("unexpected {other:?}"),
        }
        let same = path_graph(&[1.0, 2.0], &[1, 1], &["Z"; 3]);
        assert_eq!(zone_subgraph(&same, "Z").unwrap(), same);
        let lone = path_graph(&[1.0], &[1], &["A", "B"]);
        let sub = zone_subgraph(&lone, "B").unwrap();
        assert_eq!((sub.num_stations(), sub.num_edges()), (1, 0));
    }

    #[test]
    fn scaled_laplacian_small_cases() {
        let single = path_graph(&[], &[], &["Z"]);
        assert_eq!(scaled_laplacian(&single)[[0, 0]], -1.0);
        let pair = path_graph(&[5.0], &[1], &["Z", "Z"]);
        let l = scaled_laplacian(&pair);
        for (got, want) in l.iter().zip([0.0, -1.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{l:?}");
        }
    }

    #[test]
    fn isolated_station_has_no_nan() {
        let stations = (0..3)
            .map(|i| Station { code: format!("S{i}"), name: String::new(), zone: "Z".into(), index: i })
            .collect();
        let g = RailGraph::from_edges(stations, &[(0, 1, 4.0, 2)]).unwrap();
        let l = scaled_laplacian(&g);
        assert!(l.iter().all(|x| x.is_finite()));
        assert_eq!(l[[2, 2]], -1.0);
    }

    #[test]
    fn json_round_trip() {
        let g = path_graph(&[1.5, 2.5], &[3, 4], &["NR", "NR", "WR"]);
        let mut buf = Vec::new();
        g.write_json(&mut buf).unwrap();
        assert_eq!(RailGraph::read_json(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn zone_map_csv() {
        let zm = ZoneMap::from_csv("station_code,zone\nKGP,SER\nBLS, ECOR\n".as_bytes()).unwrap();
        assert_eq!(zm.zone_of("BLS"), "ECOR");
        assert_eq!(zm.zone_of("ST"), UNKNOWN_ZONE);
    }

    #[test]
    fn stats_on_path() {
        let g = path_graph(&[10.0, 20.0], &[2, 4], &["Z"; 3]);
        let s = g.stats();
        assert_eq!(s.edges, 2);
        assert!((s.avg_degree - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.avg_distance_km, 15.0);
        assert_eq!(s.avg_trains_per_edge, 3.0);
    }
}
