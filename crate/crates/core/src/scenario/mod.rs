//! Scenario files, synthesized disturbance bands, the per-step pipeline over
//! a horizon and the result files.

mod config;
mod output;
mod profile;
mod run;

pub use config::{
    load_network, load_scenario, Archetype, ClockTime, ClusterSpec, EnvelopeConfig, GhpTemplate, Horizon, LowerSource,
    OpfConfig, OutputConfig, PlacedGhp, Scenario, ScenarioConfig,
};
pub use output::{
    buses_csv, emit_results, envelopes_csv, feeder_csv, fmt_num, run_meta, EmittedFiles, BUSES_HEADER,
    ENVELOPES_HEADER, FEEDER_HEADER,
};
pub use profile::{disturbance_bands, DisturbanceProfile, GainCurve, OutdoorCurve};
pub use run::{
    aggregate, bus_envelopes, envelope_options, opf_options, run_horizon, run_step, step_envelopes, BusAggregate,
    HorizonResult, StepResult, StepTimings, AGGREGATE_CROSSING_TOL,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("dangling reference: {0}")]
    Reference(String),
    #[error("{0}")]
    Assembly(String),
}

/// The IEEE 33-bus scenario shipped in `data/`.
pub fn bundled_scenario_path() -> PathBuf {
    PathBuf::from(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/ieee33_two_clusters.json"
    ))
}
