use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ghpflex::opf::{residual_report, solve_all, LossMode, OpfObjective};
use ghpflex::scenario::{self, ClockTime, Scenario};
use ghpflex::thermal::{self, ThermalInputs, ThermalState};
use serde_json::json;

/// Demand flexibility of clustered geothermal heat pumps on a distribution feeder.
#[derive(Parser, Debug)]
#[command(name = "ghpflex", version, about)]
struct Cli {
    /// More log output; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file. Defaults to the bundled IEEE 33-bus scenario.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Grid size of the exact lower-bound sweep (enables it).
    #[arg(long, value_name = "N")]
    grid_points: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct OpfArgs {
    /// Loss handling: lossless or fixed-base-case.
    #[arg(long, value_name = "MODE")]
    loss_mode: Option<LossMode>,
    /// Polygon sides replacing each branch flow-limit disk (at least 4).
    #[arg(long, value_name = "N")]
    segments: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one building's thermal model under constant inputs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Building id; defaults to the first building of the scenario.
        #[arg(long)]
        building: Option<String>,
        /// Instant whose disturbance-band midpoints drive the model.
        #[arg(long, default_value = "06:00")]
        time: ClockTime,
        /// Supply water temperature, °C.
        #[arg(long, default_value_t = 40.0)]
        supply_temp: f64,
        /// Radiator flow as a fraction of each radiator's maximum.
        #[arg(long, default_value_t = 0.5)]
        flow_fraction: f64,
        /// Simulated duration in hours.
        #[arg(long, default_value_t = 24.0)]
        hours: f64,
        /// Integration step in seconds; defaults to a twentieth of the fastest time constant.
        #[arg(long)]
        step: Option<f64>,
        /// Seconds between written rows.
        #[arg(long, default_value_t = 300.0)]
        every: f64,
        /// Write `simulate.csv` here instead of standard output.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Demand envelopes of heat pumps at one instant, as JSON.
    Envelope {
        #[command(flatten)]
        common: Common,
        /// Heat pump id; all heat pumps when omitted.
        #[arg(long)]
        ghp: Option<String>,
        /// Instant; defaults to the horizon start.
        #[arg(long)]
        time: Option<ClockTime>,
        /// Write `envelope.json` here instead of standard output.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Aggregate envelopes per bus and solve the OPF at one instant, as JSON.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opf: OpfArgs,
        /// Objective to report: desired, min-feeder, max-feeder; all when omitted.
        #[arg(long)]
        objective: Option<OpfObjective>,
        /// Instant; defaults to the horizon start.
        #[arg(long)]
        time: Option<ClockTime>,
        /// Write `aggregate.json` here instead of standard output.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Run the whole horizon and write the result files.
    Horizon {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opf: OpfArgs,
        /// Output directory; defaults to the scenario's, then `./results`.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

fn load(common: &Common, opf: Option<&OpfArgs>) -> Result<Scenario> {
    let path = common.config.clone().unwrap_or_else(scenario::bundled_scenario_path);
    let mut s = scenario::load_scenario(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(n) = common.grid_points {
        if n < 2 {
            bail!("--grid-points needs at least 2");
        }
        s.config.envelope.exact_grid_points = Some(n);
    }
    if let Some(o) = opf {
        if let Some(m) = o.loss_mode {
            s.config.opf.loss_mode = m;
        }
        if let Some(n) = o.segments {
            if n < 4 {
                bail!("--segments needs at least 4");
            }
            s.config.opf.segments = n;
        }
    }
    Ok(s)
}

fn emit(out_dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn instant(s: &Scenario, time: Option<ClockTime>) -> ClockTime {
    time.unwrap_or(s.config.horizon.start)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    s: &Scenario,
    building: Option<&str>,
    time: ClockTime,
    supply_temp: f64,
    flow_fraction: f64,
    hours: f64,
    step: Option<f64>,
    every: f64,
) -> Result<String> {
    if !(0.0..=1.0).contains(&flow_fraction) {
        bail!("--flow-fraction must lie in [0, 1]");
    }
    if !(every > 0.0) {
        bail!("--every must be positive");
    }
    let model = match building {
        Some(id) => s.building(id).with_context(|| format!("no building {id:?}"))?,
        None => &s.buildings[0],
    };
    let band = &scenario::disturbance_bands(&s.config.profile, time, &[model]).buildings[0];
    let inputs = ThermalInputs {
        flows: model.radiators.iter().map(|r| flow_fraction * r.flow_max).collect(),
        supply_temp,
        outdoor_temp: band.outdoor_mid(),
        disturbances: band.gain_mid(),
    };
    let constants = s.config.constants;
    let step = match step {
        Some(h) => h,
        None => thermal::default_step(model, &inputs.flows, &constants)?,
    };
    let start = ThermalState::uniform(model, model.zones[0].setpoint);
    let traj = thermal::simulate(model, &start, &inputs, hours * 3600.0, step, &constants)?;
    let steady = thermal::steady_state(model, &inputs, &constants)?;
    log::info!(
        "{}: {} steps of {step:.3} s, final distance to steady state {:.3e} °C",
        model.id,
        traj.len() - 1,
        traj.last()
            .expect("trajectory has the initial state")
            .max_abs_diff(&steady)
    );

    let mut out = String::from("time_s");
    for z in &model.zones {
        out.push(',');
        out.push_str(&z.id);
    }
    out.push('\n');
    let stride = ((every / step).round() as usize).max(1);
    for (k, st) in traj.iter().enumerate() {
        if k % stride != 0 && k + 1 != traj.len() {
            continue;
        }
        out.push_str(&scenario::fmt_num(k as f64 * step));
        for t in &st.zone_temps {
            let _ = write!(out, ",{}", scenario::fmt_num(*t));
        }
        out.push('\n');
    }
    Ok(out)
}

fn envelope(s: &Scenario, ghp: Option<&str>, time: ClockTime) -> Result<serde_json::Value> {
    let envelopes = scenario::step_envelopes(s, time)?;
    let rows: Vec<_> = s
        .ghps
        .iter()
        .zip(&envelopes)
        .filter(|(g, _)| ghp.is_none_or(|id| g.unit.id == id))
        .map(|(g, e)| {
            json!({
                "ghp_id": g.unit.id,
                "bus": g.bus,
                "p_lower_aggressive": e.p_lower_aggressive,
                "p_lower_conservative": e.p_lower_conservative,
                "p_lower_exact": e.p_lower_exact,
                "p_upper": e.p_upper,
                "p_desired": e.p_desired,
                "supply_temp_desired": e.desired_supply_temp(),
                "statuses": e.statuses().map(|st| st.as_str()),
                "violations": e.violations,
            })
        })
        .collect();
    if rows.is_empty() {
        bail!("no heat pump {:?}", ghp.unwrap_or_default());
    }
    Ok(json!({ "time": time, "units": "kW", "envelopes": rows }))
}

fn aggregate(s: &Scenario, objective: Option<OpfObjective>, time: ClockTime) -> Result<serde_json::Value> {
    let envelopes = scenario::step_envelopes(s, time)?;
    let aggregates = match scenario::aggregate(s, &envelopes) {
        Ok(a) => a,
        Err(failures) => bail!("cannot aggregate at {time}: {}", failures.join("; ")),
    };
    let bus_envs = scenario::bus_envelopes(s, &aggregates);
    let run = solve_all(&s.network, &bus_envs, &scenario::opf_options(s))?;
    let objectives: Vec<OpfObjective> = objective.map_or(OpfObjective::ALL.to_vec(), |o| vec![o]);
    let net = &s.network;
    let solutions: Vec<_> = objectives
        .iter()
        .map(|&o| {
            let sol = run.get(o);
            let report = residual_report(net, &bus_envs, sol);
            json!({
                "objective": o.as_str(),
                "status": sol.status.as_str(),
                "objective_value": sol.objective_value,
                "p0_kw": net.pu_to_kw(sol.p0),
                "q0_kw": net.pu_to_kw(sol.q0),
                "p_ghp_kw": aggregates.iter().map(|a| json!({"bus": a.bus, "p": net.pu_to_kw(sol.p_ghp[a.bus])})).collect::<Vec<_>>(),
                "voltage": sol.v2.iter().map(|w| w.max(0.0).sqrt()).collect::<Vec<_>>(),
                "max_residual_pu": report.max_linear(),
                "violated_family": sol.violated_family,
                "iterations": sol.iterations,
            })
        })
        .collect();
    Ok(json!({
        "time": time,
        "loss_mode": s.config.opf.loss_mode.as_str(),
        "segments": s.config.opf.segments,
        "aggregates_kw": aggregates,
        "solutions": solutions,
    }))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("plain JSON") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            building,
            time,
            supply_temp,
            flow_fraction,
            hours,
            step,
            every,
            out_dir,
        } => {
            let s = load(&common, None)?;
            let csv = simulate(
                &s,
                building.as_deref(),
                time,
                supply_temp,
                flow_fraction,
                hours,
                step,
                every,
            )?;
            emit(out_dir.as_deref(), "simulate.csv", &csv)
        }
        Command::Envelope {
            common,
            ghp,
            time,
            out_dir,
        } => {
            let s = load(&common, None)?;
            let v = envelope(&s, ghp.as_deref(), instant(&s, time))?;
            emit(out_dir.as_deref(), "envelope.json", &pretty(&v))
        }
        Command::Aggregate {
            common,
            opf,
            objective,
            time,
            out_dir,
        } => {
            let s = load(&common, Some(&opf))?;
            let v = aggregate(&s, objective, instant(&s, time))?;
            emit(out_dir.as_deref(), "aggregate.json", &pretty(&v))
        }
        Command::Horizon { common, opf, out_dir } => {
            let s = load(&common, Some(&opf))?;
            let dir = out_dir
                .or_else(|| s.output_dir())
                .unwrap_or_else(|| PathBuf::from("results"));
            let result = scenario::run_horizon(&s)?;
            let files = scenario::emit_results(&s, &result, &dir)?;
            let failures = result.failure_count();
            eprintln!(
                "{} steps in {:.2} s, {failures} recorded failures; results in {}",
                result.steps.len(),
                result.total_seconds,
                dir.display()
            );
            log::debug!("{files:?}");
            Ok(())
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
