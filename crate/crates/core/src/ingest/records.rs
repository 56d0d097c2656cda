//! Train running records in the tabular format published by running-status
//! sites: one row per train per station with 12-hour clock times and
//! "24M Late" style delay notation.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use super::IngestError;

/// One train observed at one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Run date (the day the train left its origin).
    pub date: NaiveDate,
    pub train_no: String,
    pub train_name: String,
    pub station_code: String,
    pub station_name: String,
    pub distance_km: f64,
    pub sched_arr: Option<NaiveDateTime>,
    pub act_arr: Option<NaiveDateTime>,
    pub sched_dep: Option<NaiveDateTime>,
    pub act_dep: Option<NaiveDateTime>,
    pub arr_delay_min: Option<i64>,
    pub dep_delay_min: Option<i64>,
}

pub const HEADER: [&str; 12] = [
    "Date",
    "Train No.",
    "Train Name",
    "Code",
    "Station",
    "Dist.",
    "Sch. Arr.",
    "Act. Arr.",
    "Arr. Delay",
    "Sch. Dep.",
    "Act. Dep.",
    "Dep. Delay",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Column {
    Date,
    TrainNo,
    TrainName,
    Code,
    Station,
    Dist,
    SchArr,
    ActArr,
    ArrDelay,
    SchDep,
    ActDep,
    DepDelay,
}

const COLUMNS: [Column; 12] = [
    Column::Date,
    Column::TrainNo,
    Column::TrainName,
    Column::Code,
    Column::Station,
    Column::Dist,
    Column::SchArr,
    Column::ActArr,
    Column::ArrDelay,
    Column::SchDep,
    Column::ActDep,
    Column::DepDelay,
];

const REQUIRED: [Column; 4] = [Column::Date, Column::TrainNo, Column::Code, Column::Dist];

fn normalize_header(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

/// Layout options for [`parse_records`].
#[derive(Debug, Clone)]
pub struct RecordFormat {
    pub delimiter: u8,
    /// Fraction of rejected rows above which parsing fails outright.
    pub max_reject_fraction: f64,
    /// Allowed disagreement between a stated delay and the clock times.
    pub delay_tolerance_min: i64,
}

impl Default for RecordFormat {
    fn default() -> Self {
        RecordFormat { delimiter: b',', max_reject_fraction: 0.10, delay_tolerance_min: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the input, header being line 1.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<RunRecord>,
    pub rows: usize,
    pub rejected: Vec<RowError>,
}

/// Parses a `"7 Sept. 2024"` style date; ISO `2024-09-07` is accepted too.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 3 {
        return None;
    }
    let day: u32 = parts[0].trim_end_matches(|c: char| !c.is_ascii_digit()).parse().ok()?;
    let month_tok = parts[1].trim_end_matches('.').to_ascii_lowercase();
    let month = match month_tok.get(..3)? {
        "jan" => 1,
        "feb" => 2,
        "mar" => 3,
        "apr" => 4,
        "may" => 5,
        "jun" => 6,
        "jul" => 7,
        "aug" => 8,
        "sep" => 9,
        "oct" => 10,
        "nov" => 11,
        "dec" => 12,
        _ => return None,
    };
    let year: i32 = parts[2].parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, day)
}

pub fn format_date(d: NaiveDate) -> String {
    use chrono::Datelike;
    const MONTHS: [&str; 12] =
        ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sept", "Oct", "Nov", "Dec"];
    format!("{} {} {}", d.day(), MONTHS[d.month0() as usize], d.year())
}

fn is_absent(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "-" || t == "--" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("source") || t.eq_ignore_ascii_case("destination")
}

/// Parses `03:55 PM`; 24-hour `15:55` is accepted too.
pub fn parse_clock(s: &str) -> Result<Option<NaiveTime>, String> {
    if is_absent(s) {
        return Ok(None);
    }
    let t = s.trim().to_ascii_uppercase();
    NaiveTime::parse_from_str(&t, "%I:%M %p")
        .or_else(|_| NaiveTime::parse_from_str(&t, "%I:%M%p"))
        .or_else(|_| NaiveTime::parse_from_str(&t, "%H:%M"))
        .map(Some)
        .map_err(|_| format!("bad time '{s}'"))
}

pub fn format_clock(t: NaiveDateTime) -> String {
    t.format("%I:%M %p").to_string()
}

/// Parses `24M Late`, `1H 5M Late`, `On Time`, `3M Early` into signed minutes.
pub fn parse_delay(s: &str) -> Result<Option<i64>, String> {
    if is_absent(s) {
        return Ok(None);
    }
    let t = s.trim().to_ascii_lowercase();
    if t == "on time" || t == "right time" || t == "ontime" {
        return Ok(Some(0));
    }
    let (body, sign) = if let Some(b) = t.strip_suffix("late") {
        (b, 1)
    } else if let Some(b) = t.strip_suffix("early") {
        (b, -1)
    } else if let Some(b) = t.strip_suffix("before") {
        (b, -1)
    } else {
        return Err(format!("bad delay '{s}'"));
    };
    let mut minutes = 0i64;
    let mut seen = false;
    for tok in body.split_whitespace() {
        let (num, unit) = tok.split_at(tok.find(|c: char| !c.is_ascii_digit()).unwrap_or(tok.len()));
        let v: i64 = num.parse().map_err(|_| format!("bad delay '{s}'"))?;
        match unit {
            "m" | "min" | "mins" => minutes += v,
            "h" | "hr" | "hrs" => minutes += 60 * v,
            _ => return Err(format!("bad delay '{s}'")),
        }
        seen = true;
    }
    if !seen {
        return Err(format!("bad delay '{s}'"));
    }
    Ok(Some(sign * minutes))
}

pub fn format_delay(minutes: i64) -> String {
    match minutes {
        0 => "On Time".to_string(),
        m if m > 0 => format!("{m}M Late"),
        m => format!("{}M Early", -m),
    }
}

fn parse_distance(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let t = t.trim_end_matches("km").trim();
    let v: f64 = t.parse().map_err(|_| format!("bad distance '{s}'"))?;
    if v < 0.0 || !v.is_finite() {
        return Err(format!("bad distance '{s}'"));
    }
    Ok(v)
}

/// Row fields before timestamps are resolved against the run.
struct RawRow {
    line: usize,
    date: NaiveDate,
    train_no: String,
    train_name: String,
    station_code: String,
    station_name: String,
    distance_km: f64,
    sch_arr: Option<NaiveTime>,
    act_arr: Option<NaiveTime>,
    arr_delay: Option<i64>,
    sch_dep: Option<NaiveTime>,
    act_dep: Option<NaiveTime>,
    dep_delay: Option<i64>,
}

/// Parses running records and resolves every clock time to an absolute
/// timestamp. Scheduled times roll over to the next day whenever they go
/// backwards along a run; an actual time is placed on the day that brings it
/// closest to `scheduled + stated delay`.
pub fn parse_records<R: Read>(reader: R, format: &RecordFormat) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions: HashMap<Column, usize> = HashMap::new();
    for (idx, h) in headers.iter().enumerate() {
        let norm = normalize_header(h);
        if let Some(pos) = HEADER.iter().position(|c| normalize_header(c) == norm) {
            positions.insert(COLUMNS[pos], idx);
        }
    }
    for c in REQUIRED {
        if !positions.contains_key(&c) {
            let name = HEADER[COLUMNS.iter().position(|x| *x == c).unwrap()];
            return Err(IngestError::MissingColumn(name.to_string()));
        }
    }

    let mut rejected = Vec::new();
    let mut raw = Vec::new();
    let mut rows = 0usize;
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError { line, reason: e.to_string() });
                continue;
            }
        };
        let get = |c: Column| positions.get(&c).and_then(|&p| row.get(p)).unwrap_or("");
        let parsed = (|| -> Result<RawRow, String> {
            let date = parse_date(get(Column::Date)).ok_or_else(|| format!("bad date '{}'", get(Column::Date)))?;
            let train_no = get(Column::TrainNo).to_string();
            let station_code = get(Column::Code).to_string();
            if train_no.is_empty() || station_code.is_empty() {
                return Err("missing train number or station code".into());
            }
            Ok(RawRow {
                line,
                date,
                train_no,
                train_name: get(Column::TrainName).to_string(),
                station_name: get(Column::Station).to_string(),
                station_code,
                distance_km: parse_distance(get(Column::Dist))?,
                sch_arr: parse_clock(get(Column::SchArr))?,
                act_arr: parse_clock(get(Column::ActArr))?,
                arr_delay: parse_delay(get(Column::ArrDelay))?,
                sch_dep: parse_clock(get(Column::SchDep))?,
                act_dep: parse_clock(get(Column::ActDep))?,
                dep_delay: parse_delay(get(Column::DepDelay))?,
            })
        })();
        match parsed {
            Ok(r) => raw.push(r),
            Err(reason) => rejected.push(RowError { line, reason }),
        }
    }

    let mut runs: BTreeMap<(NaiveDate, String), Vec<RawRow>> = BTreeMap::new();
    for r in raw {
        runs.entry((r.date, r.train_no.clone())).or_default().push(r);
    }
    let mut records = Vec::with_capacity(rows);
    for (_, mut run) in runs {
        run.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km).then(a.line.cmp(&b.line)));
        let mut prev_sched: Option<NaiveDateTime> = None;
        for row in run {
            match resolve_row(&row, &mut prev_sched, format.delay_tolerance_min) {
                Ok(rec) => records.push((row.line, rec)),
                Err(reason) => rejected.push(RowError { line: row.line, reason }),
            }
        }
    }
    records.sort_by_key(|(line, _)| *line);
    rejected.sort_by_key(|e| e.line);

    if rows > 0 && rejected.len() as f64 > format.max_reject_fraction * rows as f64 {
        return Err(IngestError::TooManyRejects { rejected: rejected.len(), rows, first: rejected.first().cloned().map(|e| format!("line {}: {}", e.line, e.reason)).unwrap_or_default() });
    }
    if !rejected.is_empty() {
        log::warn!("skipped {} of {} record rows", rejected.len(), rows);
    }
    Ok(ParseOutcome { records: records.into_iter().map(|(_, r)| r).collect(), rows, rejected })
}

/// Places `clock` on the first day at or after `floor`.
fn not_before(clock: NaiveTime, day: NaiveDate, floor: Option<NaiveDateTime>) -> NaiveDateTime {
    let mut t = day.and_time(clock);
    if let Some(f) = floor {
        while t < f {
            t += Duration::days(1);
        }
    }
    t
}

/// Puts an actual clock time on the day nearest to `target`.
fn nearest_day(clock: NaiveTime, target: NaiveDateTime) -> NaiveDateTime {
    let base = target.date().and_time(clock);
    [base - Duration::days(1), base, base + Duration::days(1)]
        .into_iter()
        .min_by_key(|t| (*t - target).num_seconds().abs())
        .unwrap()
}

fn resolve_pair(
    sched: Option<NaiveDateTime>,
    act: Option<NaiveTime>,
    stated: Option<i64>,
    tolerance: i64,
    what: &str,
) -> Result<(Option<NaiveDateTime>, Option<i64>), String> {
    let Some(sched) = sched else {
        return Ok((None, None));
    };
    match (act, stated) {
        (Some(clock), Some(delay)) => {
            let at = nearest_day(clock, sched + Duration::minutes(delay));
            let implied = (at - sched).num_minutes();
            if (implied - delay).abs() > tolerance {
                return Err(format!("{what} delay {delay} min disagrees with clock times ({implied} min)"));
            }
            Ok((Some(at), Some(delay)))
        }
        (Some(clock), None) => {
            let at = nearest_day(clock, sched);
            Ok((Some(at), Some((at - sched).num_minutes())))
        }
        (None, Some(delay)) => Ok((Some(sched + Duration::minutes(delay)), Some(delay))),
        (None, None) => Ok((None, None)),
    }
}

fn resolve_row(row: &RawRow, prev_sched: &mut Option<NaiveDateTime>, tol: i64) -> Result<RunRecord, String> {
    let sched_arr = row.sch_arr.map(|c| not_before(c, row.date, *prev_sched));
    let floor = sched_arr.or(*prev_sched);
    let sched_dep = row.sch_dep.map(|c| not_before(c, row.date, floor));
    if let Some(t) = sched_dep.or(sched_arr) {
        *prev_sched = Some(t);
    }
    let (act_arr, arr_delay_min) = resolve_pair(sched_arr, row.act_arr, row.arr_delay, tol, "arrival")?;
    let (act_dep, dep_delay_min) = resolve_pair(sched_dep, row.act_dep, row.dep_delay, tol, "departure")?;
    Ok(RunRecord {
        date: row.date,
        train_no: row.train_no.clone(),
        train_name: row.train_name.clone(),
        station_code: row.station_code.clone(),
        station_name: row.station_name.clone(),
        distance_km: row.distance_km,
        sched_arr,
        act_arr,
        sched_dep,
        act_dep,
        arr_delay_min,
        dep_delay_min,
    })
}

/// Writes records back in the tabular layout that [`parse_records`] reads.
pub fn write_records<W: Write>(records: &[RunRecord], w: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    let clock = |t: Option<NaiveDateTime>| t.map(format_clock).unwrap_or_else(|| "-".into());
    let delay = |d: Option<i64>| d.map(format_delay).unwrap_or_else(|| "-".into());
    for r in records {
        let dist = if r.distance_km.fract() == 0.0 {
            format!("{} KM", r.distance_km as i64)
        } else {
            format!("{} KM", r.distance_km)
        };
        wtr.write_record([
            format_date(r.date),
            r.train_no.clone(),
            r.train_name.clone(),
            r.station_code.clone(),
            r.station_name.clone(),
            dist,
            clock(r.sched_arr),
            clock(r.act_arr),
            delay(r.arr_delay_min),
            clock(r.sched_dep),
            clock(r.act_dep),
            delay(r.dep_delay_min),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
