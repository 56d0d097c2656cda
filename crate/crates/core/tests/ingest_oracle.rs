use std::collections::HashMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstgcn::ingest::{cube_stats, hourly_features, FeatureOptions, HeadwaySource, RunRecord};
use rstgcn::railnet::{RailGraph, Station};

const N: usize = 6;
const SLOTS: usize = 48;

fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2025, 9, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn graph() -> RailGraph {
    let stations = (0..N).map(|i| Station { code: format!("ST{i}"), name: String::new(), zone: "ER".into(), index: i }).collect();
    let edges: Vec<_> = (1..N).map(|i| (i - 1, i, 15.0, 1u32)).collect();
    RailGraph::from_edges(stations, &edges).unwrap()
}

fn record(station: usize, arr: Option<(NaiveDateTime, i64)>, dep: Option<(NaiveDateTime, i64)>) -> RunRecord {
    RunRecord {
        date: start().date(),
        train_no: "12277".into(),
        train_name: "T".into(),
        station_code: format!("ST{station}"),
        station_name: String::new(),
        distance_km: 0.0,
        sched_arr: arr.map(|(t, d)| t - Duration::minutes(d)),
        act_arr: arr.map(|a| a.0),
        sched_dep: dep.map(|(t, d)| t - Duration::minutes(d)),
        act_dep: dep.map(|a| a.0),
        arr_delay_min: arr.map(|a| a.1),
        dep_delay_min: dep.map(|a| a.1),
    }
}

fn random_records(rng: &mut ChaCha8Rng, count: usize) -> Vec<RunRecord> {
    (0..count)
        .map(|_| {
            let station = rng.random_range(0..N);
            // some timestamps fall before or after the cube range
            let mut stamp = || start() + Duration::seconds(rng.random_range(-7200..(SLOTS as i64 + 2) * 3600));
            let arr_t = stamp();
            let dep_t = stamp();
            let arr = rng.random_bool(0.85).then(|| (arr_t, rng.random_range(-15..240)));
            let dep = rng.random_bool(0.85).then(|| (dep_t, rng.random_range(-15..240)));
            record(station, arr, dep)
        })
        .collect()
}

#[derive(Default)]
struct Cell {
    arr: Vec<i64>,
    dep: Vec<i64>,
    stamps: Vec<NaiveDateTime>,
}

/// Brute-force group-by: every channel recomputed from a (station, hour) map.
fn oracle(records: &[RunRecord]) -> (Vec<[f64; 5]>, Vec<u8>) {
    let mut cells: HashMap<(usize, i64), Cell> = HashMap::new();
    let hour_of = |t: NaiveDateTime| (t - start()).num_seconds().div_euclid(3600);
    for r in records {
        let s: usize = r.station_code[2..].parse().unwrap();
        if let (Some(t), Some(d)) = (r.act_arr, r.arr_delay_min) {
            let c = cells.entry((s, hour_of(t))).or_default();
            c.arr.push(d.max(0));
            c.stamps.push(t);
        }
        if let (Some(t), Some(d)) = (r.act_dep, r.dep_delay_min) {
            cells.entry((s, hour_of(t))).or_default().dep.push(d.max(0));
        }
    }
    let mut x = vec![[0.0, 0.0, 0.0, 0.0, 1.0]; N * SLOTS];
    let mut mask = vec![0u8; N * SLOTS];
    for ((s, h), mut c) in cells {
        if !(0..SLOTS as i64).contains(&h) {
            continue;
        }
        let i = s * SLOTS + h as usize;
        if !c.arr.is_empty() {
            let sum: i64 = c.arr.iter().sum();
            x[i][0] = sum as f64 / c.arr.len() as f64 / 60.0;
            x[i][2] = sum as f64 / 60.0;
            mask[i] = 1;
        }
        if !c.dep.is_empty() {
            let sum: i64 = c.dep.iter().sum();
            x[i][1] = sum as f64 / c.dep.len() as f64 / 60.0;
            x[i][3] = sum as f64 / 60.0;
        }
        c.stamps.sort();
        if c.stamps.len() >= 2 {
            let gaps: i64 = c.stamps.windows(2).map(|w| (w[1] - w[0]).num_seconds()).sum();
            x[i][4] = gaps as f64 / (c.stamps.len() - 1) as f64 / 3600.0;
        }
    }
    (x, mask)
}

#[test]
fn thousand_random_records_match_group_by() {
    let g = graph();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = random_records(&mut rng, 1000);
        let cube = hourly_features(&records, &g, start(), SLOTS, &FeatureOptions::default()).unwrap();
        let (x, mask) = oracle(&records);
        for s in 0..N {
            for t in 0..SLOTS {
                let i = s * SLOTS + t;
                for f in 0..5 {
                    assert_eq!(cube.x[[s, f, t]], x[i][f], "seed {seed} station {s} slot {t} channel {f}");
                }
                assert_eq!(cube.mask[[s, t]], mask[i]);
                assert_eq!(cube.y[[s, t]], x[i][0]);
                if mask[i] == 1 {
                    assert!(x[i][0] <= x[i][2]);
                }
            }
        }
    }
}

#[test]
fn two_arrivals_of_24_and_20_minutes() {
    let t = start() + Duration::hours(15);
    let records = vec![
        record(2, Some((t + Duration::minutes(19), 24)), Some((t + Duration::minutes(21), 24))),
        record(2, Some((t + Duration::minutes(45), 20)), None),
    ];
    let cube = hourly_features(&records, &graph(), start(), SLOTS, &FeatureOptions::default()).unwrap();
    assert!((cube.x[[2, 0, 15]] - 0.3667).abs() < 5e-5);
    assert!((cube.x[[2, 2, 15]] - 0.7333).abs() < 5e-5);
    assert_eq!(cube.x[[2, 0, 15]], 22.0 / 60.0);
    assert_eq!(cube.x[[2, 2, 15]], 44.0 / 60.0);
    assert_eq!(cube.x[[2, 4, 15]], 26.0 / 60.0);
    assert_eq!(cube.mask[[2, 15]], 1);
    assert_eq!(cube.mask[[2, 14]], 0);
}

#[test]
fn early_arrival_is_clamped_but_masked() {
    let t = start() + Duration::hours(3);
    let cube = hourly_features(&[record(0, Some((t, -5)), None)], &graph(), start(), SLOTS, &FeatureOptions::default()).unwrap();
    assert_eq!(cube.x[[0, 0, 3]], 0.0);
    assert_eq!(cube.mask[[0, 3]], 1);
}

#[test]
fn departure_only_cell_is_unmasked() {
    let t = start() + Duration::hours(7);
    let cube = hourly_features(&[record(1, None, Some((t, 30)))], &graph(), start(), SLOTS, &FeatureOptions::default()).unwrap();
    assert_eq!(cube.mask[[1, 7]], 0);
    assert_eq!(cube.x[[1, 1, 7]], 0.5);
    assert_eq!(cube.x[[1, 0, 7]], 0.0);
}

#[test]
fn scheduled_headway_uses_timetable() {
    let t = start() + Duration::hours(2);
    let records = vec![
        record(3, Some((t + Duration::minutes(10), 10)), None),
        record(3, Some((t + Duration::minutes(50), 30)), None),
    ];
    let opts = FeatureOptions { headway_source: HeadwaySource::Scheduled, ..Default::default() };
    let cube = hourly_features(&records, &graph(), start(), SLOTS, &opts).unwrap();
    // timetable times :00 and :20
    assert_eq!(cube.x[[3, 4, 2]], 20.0 / 60.0);
}

#[test]
fn cube_stats_match_direct_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records = random_records(&mut rng, 600);
    let cube = hourly_features(&records, &graph(), start(), SLOTS, &FeatureOptions::default()).unwrap();
    let stats = cube_stats(&cube, None);
    let mut vals: Vec<f64> = cube.y.iter().zip(cube.mask.iter()).filter(|(_, &m)| m == 1).map(|(v, _)| v * 60.0).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.sort_by(f64::total_cmp);
    assert_eq!(stats.masked_cells, vals.len());
    assert!((stats.mean_delay_min.unwrap() - mean).abs() < 1e-9);
    assert_eq!(stats.max_delay_min.unwrap(), *vals.last().unwrap());
}
