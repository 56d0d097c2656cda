use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, NaiveDateTime};
use log::{info, warn};
use rstgcn::eval::{horizon_report, BaselinePredictor, ModelPredictor, Predictor};
use rstgcn::ingest::{cube_stats, hourly_features, parse_records, write_records, CubeStats, RecordFormat};
use rstgcn::model::GraphContext;
use rstgcn::railnet::{build_graph, GraphStats, ZoneMap};
use rstgcn::synth::{self, GroundTruth};
use rstgcn::train::{fit, TrainEvent};
use rstgcn::windows::{sample_at, split_dataset, Splits, WindowConfig};
use rstgcn::{BaselineKind, FeatureCube, ModelParams, RailGraph, RunRecord};
use serde::Serialize;

use crate::config::{hyperparameters, json_hash, RunConfig};
use crate::manifest::{manifest_path_for, ManifestBuilder};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<RailGraph> {
    RailGraph::read_json(open(path)?).with_context(|| format!("reading graph {}", path.display()))
}

pub fn read_cube(path: &Path) -> Result<FeatureCube> {
    FeatureCube::read_binary(open(path)?).with_context(|| format!("reading cube {}", path.display()))
}

fn write_cube(cube: &FeatureCube, path: &Path) -> Result<PathBuf> {
    let mut w = create(path)?;
    cube.write_binary(&mut w)?;
    w.flush()?;
    let sidecar = path.with_extension("json");
    write_json(&sidecar, &cube.sidecar())?;
    Ok(sidecar)
}

fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let outcome = parse_records(open(path)?, &RecordFormat::default())
        .with_context(|| format!("parsing records {}", path.display()))?;
    for err in outcome.rejected.iter().take(20) {
        warn!("{}: line {}: {}", path.display(), err.line, err.reason);
    }
    if outcome.rejected.len() > 20 {
        warn!("{} more rejected rows", outcome.rejected.len() - 20);
    }
    info!("{}: {} rows, {} rejected", path.display(), outcome.rows, outcome.rejected.len());
    if outcome.records.is_empty() {
        bail!("{} contains no usable records", path.display());
    }
    Ok(outcome.records)
}

pub fn print_graph_stats(s: &GraphStats) {
    println!("stations            {}", s.stations);
    println!("edges               {}", s.edges);
    println!("avg degree          {:.3}", s.avg_degree);
    println!("avg distance (km)   {:.3}", s.avg_distance_km);
    println!("avg trains per edge {:.3}", s.avg_trains_per_edge);
}

pub fn print_cube_stats(s: &CubeStats) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    println!("stations x slots    {} x {}", s.stations, s.slots);
    println!("masked cells        {} ({:.1}%)", s.masked_cells, 100.0 * s.mask_density);
    println!("mean delay (min)    {}", opt(s.mean_delay_min));
    println!("median delay (min)  {}", opt(s.median_delay_min));
    println!("max delay (min)     {}", opt(s.max_delay_min));
    for (zone, z) in &s.per_zone {
        println!("  {zone:<8} stations {:>3}  masked {:>6}  mean {}", z.stations, z.masked_cells, opt(z.mean_delay_min));
    }
}

fn station_zones(graph: &RailGraph) -> Vec<String> {
    graph.stations.iter().map(|s| s.zone.clone()).collect()
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthMode {
    Records,
    Cube,
}

pub fn synth(cfg: &RunConfig, mode: SynthMode, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut m = ManifestBuilder::start("synth", serde_json::to_value(&cfg.synth)?, json_hash(&cfg.synth), Some(cfg.synth.seed));
    let zones_path = out_dir.join("zones.csv");
    let truth_path = out_dir.join("ground_truth.json");
    let (zones, truth): (ZoneMap, GroundTruth) = match mode {
        SynthMode::Records => {
            let out = synth::generate_records(&cfg.synth)?;
            let path = out_dir.join("records.csv");
            let mut w = create(&path)?;
            write_records(&out.records, &mut w)?;
            w.flush()?;
            m.output("records", &path)?;
            println!("wrote {} records to {}", out.records.len(), path.display());
            print_graph_stats(&out.graph.stats());
            (out.zones, out.truth)
        }
        SynthMode::Cube => {
            let out = synth::generate_cube(&cfg.synth)?;
            let path = out_dir.join("cube.bin");
            let sidecar = write_cube(&out.cube, &path)?;
            let graph_path = out_dir.join("graph.json");
            let mut w = create(&graph_path)?;
            out.graph.write_json(&mut w)?;
            w.flush()?;
            m.output("cube", &path)?;
            m.output("cube_sidecar", &sidecar)?;
            m.output("graph", &graph_path)?;
            println!("wrote cube {} and graph {}", path.display(), graph_path.display());
            print_cube_stats(&cube_stats(&out.cube, Some(&station_zones(&out.graph))));
            (out.zones, out.truth)
        }
    };
    let mut w = create(&zones_path)?;
    zones.write_csv(&mut w)?;
    w.flush()?;
    write_json(&truth_path, &truth)?;
    m.output("zones", &zones_path)?;
    m.output("ground_truth", &truth_path)?;
    m.details(serde_json::json!({ "mode": format!("{mode:?}").to_lowercase() }));
    m.write(&out_dir.join("synth.manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------- build-graph

pub fn build_graph_cmd(records_path: &Path, zones_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut m = ManifestBuilder::start("build-graph", serde_json::Value::Null, json_hash(&()), None);
    m.input("records", records_path);
    let zones = match zones_path {
        Some(p) => {
            m.input("zones", p);
            ZoneMap::from_csv(open(p)?).with_context(|| format!("reading zones {}", p.display()))?
        }
        None => ZoneMap::default(),
    };
    let records = read_records(records_path)?;
    let built = build_graph(&records, &zones)?;
    let d = &built.diagnostics;
    if d.rejected_runs > 0 {
        warn!("{} of {} runs rejected (distance not increasing)", d.rejected_runs, d.runs);
    }
    if d.inconsistent_distance_edges > 0 {
        warn!("{} edges had inconsistent distances; the median was kept", d.inconsistent_distance_edges);
    }
    let mut w = create(out)?;
    built.graph.write_json(&mut w)?;
    w.flush()?;
    let stats = built.graph.stats();
    print_graph_stats(&stats);
    m.output("graph", out)?;
    m.details(serde_json::json!({ "stats": stats, "diagnostics": d }));
    m.write(&manifest_path_for(out))?;
    Ok(())
}

// ---------------------------------------------------------------- featurize

fn parse_start(s: &str) -> Result<NaiveDateTime> {
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t);
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M") {
        return Ok(t);
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("bad start time '{s}'"))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight"))
}

pub struct FeaturizeArgs<'a> {
    pub records: &'a Path,
    pub graph: &'a Path,
    pub out: &'a Path,
    pub start: Option<&'a str>,
    pub hours: Option<usize>,
}

pub fn featurize(cfg: &RunConfig, a: FeaturizeArgs) -> Result<()> {
    let mut m = ManifestBuilder::start("featurize", serde_json::to_value(cfg.features)?, json_hash(&cfg.features), None);
    m.input("records", a.records);
    m.input("graph", a.graph);
    let records = read_records(a.records)?;
    let graph = read_graph(a.graph)?;
    let first = records.iter().map(|r| r.date).min().expect("nonempty");
    let last = records.iter().map(|r| r.date).max().expect("nonempty");
    let t_start = match a.start {
        Some(s) => parse_start(s)?,
        None => first.and_hms_opt(0, 0, 0).expect("midnight"),
    };
    // default: whole days from the first to the last run date
    let hours = a.hours.unwrap_or(((last - first).num_days() as usize + 1) * 24);
    let cube = hourly_features(&records, &graph, t_start, hours, &cfg.features)?;
    let stats = cube_stats(&cube, Some(&station_zones(&graph)));
    if stats.masked_cells == 0 {
        warn!("no arrivals fall inside [{t_start}, +{hours}h); the cube mask is empty");
    }
    let sidecar = write_cube(&cube, a.out)?;
    print_cube_stats(&stats);
    m.output("cube", a.out)?;
    m.output("cube_sidecar", &sidecar)?;
    m.details(serde_json::json!({ "t_start": t_start, "slots": hours, "stats": stats }));
    m.write(&manifest_path_for(a.out))?;
    Ok(())
}

// ---------------------------------------------------------------- train

pub struct TrainArgs<'a> {
    pub cube: &'a Path,
    pub graph: &'a Path,
    pub out: &'a Path,
    pub report: Option<&'a Path>,
    pub events: Option<&'a Path>,
    pub quiet: bool,
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    val: usize,
    test: usize,
    first_anchor: usize,
    last_anchor: usize,
}

fn summarize(s: &Splits) -> SplitSummary {
    SplitSummary {
        train: s.train.len(),
        val: s.val.len(),
        test: s.test.len(),
        first_anchor: s.train.first().copied().unwrap_or(0),
        last_anchor: s.test.last().copied().unwrap_or(0),
    }
}

fn check_dims(cube: &FeatureCube, graph: &RailGraph) -> Result<()> {
    if cube.num_stations() != graph.num_stations() {
        bail!("cube has N={} stations but graph has N={}", cube.num_stations(), graph.num_stations());
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, a: TrainArgs) -> Result<()> {
    let resolved = serde_json::json!({ "model": cfg.model, "train": cfg.train });
    let mut m = ManifestBuilder::start("train", resolved.clone(), json_hash(&resolved), Some(cfg.train.seed));
    m.input("cube", a.cube);
    m.input("graph", a.graph);
    let cube = read_cube(a.cube)?;
    let graph = read_graph(a.graph)?;
    check_dims(&cube, &graph)?;
    let splits = split_dataset(cube.num_slots(), &cfg.model.window)?;
    let mut events_file = a.events.map(create).transpose()?;
    let mut sink_err: Option<std::io::Error> = None;
    let mut on_event = |e: &TrainEvent| {
        let line = serde_json::to_string(e).expect("event serializes");
        if !a.quiet {
            println!("{line}");
        }
        if let Some(f) = events_file.as_mut() {
            if let Err(err) = writeln!(f, "{line}") {
                sink_err.get_or_insert(err);
            }
        }
    };
    let (params, report) = fit(&cube, &splits, &graph, &cfg.model, &cfg.train, &mut on_event)?;
    if let Some(err) = sink_err {
        return Err(err).context("writing training events");
    }
    if let Some(mut f) = events_file {
        f.flush()?;
    }
    let mut w = create(a.out)?;
    params.write_checkpoint(&cfg.model, &mut w)?;
    w.flush()?;
    m.output("checkpoint", a.out)?;
    let report_path = a.report.map(Path::to_path_buf).unwrap_or_else(|| a.out.with_extension("report.json"));
    let summary = serde_json::json!({
        "report": report,
        "splits": summarize(&splits),
        "hyperparameters": hyperparameters(&cfg.model, &cfg.train),
        "parameters": params.num_scalars(),
    });
    write_json(&report_path, &summary)?;
    m.output("report", &report_path)?;
    if let Some(p) = a.events {
        m.output("events", p)?;
    }
    m.details(serde_json::json!({
        "hyperparameters": hyperparameters(&cfg.model, &cfg.train),
        "best_epoch": report.best_epoch,
        "best_val_loss": report.best_val_loss,
        "splits": summarize(&splits),
    }));
    m.write(&manifest_path_for(a.out))?;
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

pub struct EvaluateArgs<'a> {
    pub checkpoint: Option<&'a Path>,
    pub baseline: Option<BaselineKind>,
    pub recent_only: bool,
    pub cube: &'a Path,
    pub graph: &'a Path,
    pub split: SplitPart,
    pub long_horizon: Option<usize>,
    pub out_dir: &'a Path,
}

pub fn evaluate(cfg: &RunConfig, a: EvaluateArgs) -> Result<()> {
    let cube = read_cube(a.cube)?;
    let graph = read_graph(a.graph)?;
    check_dims(&cube, &graph)?;
    let loaded = match a.checkpoint {
        Some(p) => {
            let (model_cfg, params) =
                ModelParams::read_checkpoint(open(p)?).with_context(|| format!("reading checkpoint {}", p.display()))?;
            if params.num_stations() != graph.num_stations() {
                bail!("checkpoint was trained on N={} stations but graph has N={}", params.num_stations(), graph.num_stations());
            }
            Some((model_cfg, params))
        }
        None => None,
    };
    let window: WindowConfig = loaded.as_ref().map(|l| l.0.window).unwrap_or(cfg.model.window);
    let resolved = serde_json::json!({
        "window": window,
        "model": loaded.as_ref().map(|l| l.0),
        "baseline": a.baseline.map(|b| b.name()),
        "recent_only": a.recent_only,
        "split": format!("{:?}", a.split).to_lowercase(),
        "long_horizon": a.long_horizon,
    });
    let mut m = ManifestBuilder::start("evaluate", resolved.clone(), json_hash(&resolved), None);
    m.input("cube", a.cube);
    m.input("graph", a.graph);
    if let Some(p) = a.checkpoint {
        m.input("checkpoint", p);
    }

    let splits = split_dataset(cube.num_slots(), &window)?;
    let anchors = match a.split {
        SplitPart::Train => &splits.train,
        SplitPart::Val => &splits.val,
        SplitPart::Test => &splits.test,
    };
    let horizon = a.long_horizon.unwrap_or(window.t_p);
    if horizon == 0 {
        bail!("horizon must be at least 1");
    }
    let samples = anchors
        .iter()
        .filter(|&&t0| t0 + horizon < cube.num_slots())
        .map(|&t0| sample_at(&cube, t0, &window, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        bail!("no {:?} anchors leave room for {horizon} target slots", a.split);
    }

    let ctx;
    let predictor: Box<dyn Predictor + '_> = match (&loaded, a.baseline) {
        (Some((model_cfg, params)), None) => {
            if horizon > model_cfg.window.t_p {
                bail!(
                    "checkpoint forecasts {} slots; retrain with window.t_p >= {horizon} for --long-horizon {horizon}",
                    model_cfg.window.t_p
                );
            }
            ctx = GraphContext::new(&graph, model_cfg)?;
            Box::new(ModelPredictor { params, config: model_cfg, graph: &ctx })
        }
        (None, Some(kind)) => Box::new(BaselinePredictor { kind, recent_only: a.recent_only }),
        _ => bail!("pass exactly one of --checkpoint or --baseline"),
    };
    let report = horizon_report(predictor.as_ref(), &samples, Some(&station_zones(&graph)))?;
    if !report.is_consistent() {
        warn!("report failed its internal consistency check");
    }

    std::fs::create_dir_all(a.out_dir)?;
    let name = report.predictor.clone();
    let csv_path = a.out_dir.join(format!("{name}_metrics.csv"));
    let json_path = a.out_dir.join(format!("{name}_metrics.json"));
    let csv = report.to_csv();
    write_text(&csv_path, &csv)?;
    write_text(&json_path, &(report.to_json() + "\n"))?;
    print!("{csv}");
    m.output("metrics_csv", &csv_path)?;
    m.output("metrics_json", &json_path)?;
    if a.long_horizon.is_some() {
        let cum_path = a.out_dir.join(format!("{name}_cumulative.csv"));
        write_text(&cum_path, &report.cumulative_csv())?;
        m.output("cumulative_csv", &cum_path)?;
    }
    m.details(serde_json::json!({ "samples": samples.len(), "horizon": horizon, "predictor": name }));
    m.write(&a.out_dir.join(format!("{name}_evaluate.manifest.json")))?;
    Ok(())
}
