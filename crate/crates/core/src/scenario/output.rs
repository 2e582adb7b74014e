use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::Scenario;
use super::run::HorizonResult;
use super::ScenarioError;
use crate::opf::OpfObjective;

pub const ENVELOPES_HEADER: &str =
    "time,ghp_id,bus,p_lower_aggressive,p_lower_conservative,p_lower_exact,p_upper,p_desired,\
supply_temp_desired,status_lower_aggressive,status_lower_conservative,status_upper,status_desired";

pub const FEEDER_HEADER: &str = "time,P0_min,P0_desired,P0_max,Q0_min,Q0_desired,Q0_max,flex_width,\
status_min,status_desired,status_max,residual_min,residual_desired,residual_max";

pub const BUSES_HEADER: &str = "time,bus,members,p_lower,p_upper,p_desired,p_ghp_min,p_ghp_desired,p_ghp_max";

/// Nine significant digits. Negative zero prints as zero.
pub fn fmt_num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.8e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Paths of the files written by [`emit_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub envelopes: PathBuf,
    pub feeder: PathBuf,
    pub buses: PathBuf,
    pub meta: PathBuf,
}

/// `envelopes.csv` body. Powers in kW.
pub fn envelopes_csv(scenario: &Scenario, result: &HorizonResult) -> String {
    let mut out = String::from(ENVELOPES_HEADER);
    out.push('\n');
    for step in &result.steps {
        for (g, e) in scenario.ghps.iter().zip(&step.envelopes) {
            let [la, lc, up, de] = e.statuses();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                step.time,
                g.unit.id,
                g.bus,
                opt(e.p_lower_aggressive),
                opt(e.p_lower_conservative),
                opt(e.p_lower_exact),
                opt(e.p_upper),
                opt(e.p_desired),
                opt(e.desired_supply_temp()),
                la.as_str(),
                lc.as_str(),
                up.as_str(),
                de.as_str()
            );
        }
    }
    out
}

/// `feeder.csv` body. Feeder powers in kW, residuals in per unit. Values of
/// solves that did not reach optimality are left empty.
pub fn feeder_csv(scenario: &Scenario, result: &HorizonResult) -> String {
    let net = &scenario.network;
    let order = [OpfObjective::MinFeeder, OpfObjective::Desired, OpfObjective::MaxFeeder];
    let mut out = String::from(FEEDER_HEADER);
    out.push('\n');
    for step in &result.steps {
        let sol = |o| step.opf_solution(o).filter(|s| s.status.is_optimal());
        let p = order.map(|o| sol(o).map(|s| net.pu_to_kw(s.p0)));
        let q = order.map(|o| sol(o).map(|s| net.pu_to_kw(s.q0)));
        let width = match (p[0], p[2]) {
            (Some(lo), Some(hi)) => Some(hi - lo),
            _ => None,
        };
        let status = order.map(|o| step.opf_solution(o).map_or("Skipped", |s| s.status.as_str()));
        // residuals are stored Desired, MinFeeder, MaxFeeder
        let res = step
            .residuals
            .map(|r| [r[1].max_linear(), r[0].max_linear(), r[2].max_linear()]);
        let res = |i: usize| opt(res.map(|r| r[i]));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            step.time,
            opt(p[0]),
            opt(p[1]),
            opt(p[2]),
            opt(q[0]),
            opt(q[1]),
            opt(q[2]),
            opt(width),
            status[0],
            status[1],
            status[2],
            res(0),
            res(1),
            res(2)
        );
    }
    out
}

/// `buses.csv` body: aggregated envelopes and the dispatched heat-pump demand
/// per objective, kW.
pub fn buses_csv(scenario: &Scenario, result: &HorizonResult) -> String {
    let net = &scenario.network;
    let mut out = String::from(BUSES_HEADER);
    out.push('\n');
    for step in &result.steps {
        for a in &step.aggregates {
            let ghp = |o| {
                step.opf_solution(o)
                    .filter(|s| s.status.is_optimal())
                    .map(|s| net.pu_to_kw(s.p_ghp[a.bus]))
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                step.time,
                a.bus,
                a.members,
                fmt_num(a.p_lower),
                fmt_num(a.p_upper),
                fmt_num(a.p_desired),
                opt(ghp(OpfObjective::MinFeeder)),
                opt(ghp(OpfObjective::Desired)),
                opt(ghp(OpfObjective::MaxFeeder))
            );
        }
    }
    out
}

/// Run metadata: effective scenario, versions, timings and failures. Unlike
/// the CSV files this is not reproducible byte for byte.
pub fn run_meta(scenario: &Scenario, result: &HorizonResult) -> serde_json::Value {
    let failures: Vec<_> = result
        .steps
        .iter()
        .filter(|s| !s.failures.is_empty())
        .map(|s| json!({ "time": s.time, "messages": s.failures }))
        .collect();
    let timings: Vec<_> = result
        .steps
        .iter()
        .map(|s| json!({ "time": s.time, "envelopes_s": s.timings.envelopes, "opf_s": s.timings.opf }))
        .collect();
    json!({
        "scenario": scenario.config,
        "network": {
            "name": scenario.network.name,
            "buses": scenario.network.bus_count(),
            "branches": scenario.network.branch_count(),
            "base_mva": scenario.network.base_mva,
            "base_kv": scenario.network.base_kv,
        },
        "heat_pumps": scenario.ghps.iter().map(|g| json!({ "id": g.unit.id, "bus": g.bus })).collect::<Vec<_>>(),
        "versions": {
            "ghpflex": env!("CARGO_PKG_VERSION"),
        },
        "units": { "power": "kW", "residual": "pu", "temperature": "degC" },
        "step_count": result.steps.len(),
        "total_seconds": result.total_seconds,
        "timings": timings,
        "failures": failures,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, contents).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes `envelopes.csv`, `feeder.csv`, `buses.csv` and `run_meta.json` into
/// `dir`, creating it if needed.
pub fn emit_results(
    scenario: &Scenario,
    result: &HorizonResult,
    dir: impl AsRef<Path>,
) -> Result<EmittedFiles, ScenarioError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let files = EmittedFiles {
        envelopes: dir.join("envelopes.csv"),
        feeder: dir.join("feeder.csv"),
        buses: dir.join("buses.csv"),
        meta: dir.join("run_meta.json"),
    };
    write(&files.envelopes, &envelopes_csv(scenario, result))?;
    write(&files.feeder, &feeder_csv(scenario, result))?;
    write(&files.buses, &buses_csv(scenario, result))?;
    let meta = serde_json::to_string_pretty(&run_meta(scenario, result)).expect("metadata is plain JSON");
    write(&files.meta, &(meta + "\n"))?;
    Ok(files)
}
