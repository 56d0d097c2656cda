//! Record ingestion and hourly feature aggregation.

mod cube;
mod features;
mod records;

pub use cube::{CubeSidecar, FeatureCube, CHANNEL_NAMES};
pub use features::{
    cube_stats, hourly_features, hourly_headway, CubeStats, FeatureOptions, HeadwaySource,
    ZoneCubeStats, DEFAULT_HEADWAY_HOURS,
};
pub use records::{
    format_clock, format_date, format_delay, parse_clock, parse_date, parse_delay, parse_records,
    write_records, ParseOutcome, RecordFormat, RowError, RunRecord, HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("record csv is missing required column '{0}'")]
    MissingColumn(String),
    #[error("{rejected} of {rows} rows rejected (over the 10% limit); first: {first}")]
    TooManyRejects { rejected: usize, rows: usize, first: String },
    #[error("station '{0}' is not in the graph")]
    UnknownStation(String),
    #[error("cube must span at least one hour")]
    EmptyRange,
    #[error("malformed cube file: {0}")]
    BadCube(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
