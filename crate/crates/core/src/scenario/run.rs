use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ClockTime, LowerSource, Scenario};
use super::profile::disturbance_bands;
use super::ScenarioError;
use crate::envelope::{envelope, DemandEnvelope, EnvelopeOptions};
use crate::opf::{residual_report, solve_all, BusEnvelope, OpfObjective, OpfOptions, OpfRun, ResidualReport};

/// Largest crossing of an aggregated lower bound over the upper bound that is
/// treated as rounding and clamped, kW.
pub const AGGREGATE_CROSSING_TOL: f64 = 1e-6;

/// Per-bus sum of member envelopes, kW.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusAggregate {
    pub bus: usize,
    pub members: usize,
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_desired: f64,
    pub power_factor: f64,
}

/// Wall-clock seconds spent in one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepTimings {
    pub envelopes: f64,
    pub opf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub time: ClockTime,
    /// In the order of [`Scenario::ghps`].
    pub envelopes: Vec<DemandEnvelope>,
    /// Ordered by bus. Empty when any member envelope failed.
    pub aggregates: Vec<BusAggregate>,
    pub opf: Option<OpfRun>,
    /// Desired, MinFeeder, MaxFeeder.
    pub residuals: Option<[ResidualReport; 3]>,
    /// Failed sub-problems and broken invariants, one message each.
    pub failures: Vec<String>,
    pub timings: StepTimings,
}

impl StepResult {
    pub fn opf_solution(&self, objective: OpfObjective) -> Option<&crate::opf::OpfSolution> {
        self.opf.as_ref().map(|r| r.get(objective))
    }

    /// All three OPFs solved to optimality.
    pub fn opf_optimal(&self) -> bool {
        self.opf
            .as_ref()
            .is_some_and(|r| OpfObjective::ALL.iter().all(|&o| r.get(o).status.is_optimal()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult {
    pub steps: Vec<StepResult>,
    pub total_seconds: f64,
}

impl HorizonResult {
    pub fn failure_count(&self) -> usize {
        self.steps.iter().map(|s| s.failures.len()).sum()
    }
}

pub fn envelope_options(scenario: &Scenario) -> EnvelopeOptions {
    let c = &scenario.config;
    EnvelopeOptions {
        solver: c.solver,
        constants: c.constants,
        exact_grid_points: c.envelope.exact_grid_points,
    }
}

pub fn opf_options(scenario: &Scenario) -> OpfOptions {
    let c = &scenario.config;
    OpfOptions {
        segments: c.opf.segments,
        loss_mode: c.opf.loss_mode,
        solver: c.solver,
    }
}

/// Envelopes of every heat pump at one instant, in scenario order. Heat pumps
/// are solved in parallel.
pub fn step_envelopes(scenario: &Scenario, time: ClockTime) -> Result<Vec<DemandEnvelope>, ScenarioError> {
    let options = envelope_options(scenario);
    scenario
        .ghps
        .par_iter()
        .map(|g| {
            let buildings = scenario.buildings_of(g);
            let bands = disturbance_bands(&scenario.config.profile, time, &buildings);
            envelope(&g.unit, &buildings, &bands, &scenario.config.desired_weights, &options)
                .map_err(|e| ScenarioError::Assembly(format!("{time}: heat pump {}: {e}", g.unit.id)))
        })
        .collect()
}

fn lower_of(env: &DemandEnvelope, source: LowerSource) -> Option<f64> {
    match source {
        LowerSource::Aggressive => env.p_lower_aggressive,
        LowerSource::Conservative => env.p_lower_conservative,
        LowerSource::Exact => env.p_lower_exact,
    }
}

/// Sums member envelopes per bus. Returns the failures instead when any
/// member lacks a needed value.
pub fn aggregate(scenario: &Scenario, envelopes: &[DemandEnvelope]) -> Result<Vec<BusAggregate>, Vec<String>> {
    let source = scenario.config.envelope.aggregate_lower;
    let mut failures = Vec::new();
    let mut by_bus: std::collections::BTreeMap<usize, BusAggregate> = Default::default();
    for (g, env) in scenario.ghps.iter().zip(envelopes) {
        let (lo, hi, d) = (lower_of(env, source), env.p_upper, env.p_desired);
        let (Some(lo), Some(hi), Some(d)) = (lo, hi, d) else {
            failures.push(format!(
                "heat pump {}: envelope incomplete (lower {:?}, upper {:?}, desired {:?})",
                g.unit.id, lo, hi, d
            ));
            continue;
        };
        let agg = by_bus.entry(g.bus).or_insert(BusAggregate {
            bus: g.bus,
            members: 0,
            p_lower: 0.0,
            p_upper: 0.0,
            p_desired: 0.0,
            power_factor: g.unit.power_factor,
        });
        agg.members += 1;
        agg.p_lower += lo;
        agg.p_upper += hi;
        agg.p_desired += d;
    }
    for agg in by_bus.values_mut() {
        if agg.p_lower > agg.p_upper {
            if agg.p_lower - agg.p_upper <= AGGREGATE_CROSSING_TOL {
                agg.p_lower = agg.p_upper;
            } else {
                failures.push(format!(
                    "bus {}: aggregated lower bound {} exceeds upper bound {}",
                    agg.bus, agg.p_lower, agg.p_upper
                ));
            }
        }
    }
    if failures.is_empty() {
        Ok(by_bus.into_values().collect())
    } else {
        Err(failures)
    }
}

/// Converts kW aggregates to per-unit OPF envelopes.
pub fn bus_envelopes(scenario: &Scenario, aggregates: &[BusAggregate]) -> Vec<BusEnvelope> {
    let net = &scenario.network;
    aggregates
        .iter()
        .map(|a| BusEnvelope {
            bus: a.bus,
            p_lower: net.kw_to_pu(a.p_lower),
            p_upper: net.kw_to_pu(a.p_upper),
            p_desired: net.kw_to_pu(a.p_desired),
            power_factor: a.power_factor,
        })
        .collect()
}

/// Envelopes, aggregation and the three OPFs at one instant.
pub fn run_step(scenario: &Scenario, time: ClockTime) -> Result<StepResult, ScenarioError> {
    let t0 = Instant::now();
    let envelopes = step_envelopes(scenario, time)?;
    let env_secs = t0.elapsed().as_secs_f64();
    let mut failures: Vec<String> = Vec::new();
    for (g, env) in scenario.ghps.iter().zip(&envelopes) {
        for v in &env.violations {
            failures.push(format!("heat pump {}: {v}", g.unit.id));
        }
    }

    let t1 = Instant::now();
    let (aggregates, opf, residuals) = match aggregate(scenario, &envelopes) {
        Ok(aggregates) => {
            let envs = bus_envelopes(scenario, &aggregates);
            let run = solve_all(&scenario.network, &envs, &opf_options(scenario))
                .map_err(|e| ScenarioError::Assembly(format!("{time}: {e}")))?;
            let residuals = OpfObjective::ALL.map(|o| residual_report(&scenario.network, &envs, run.get(o)));
            for o in OpfObjective::ALL {
                let s = run.get(o);
                if !s.status.is_optimal() {
                    failures.push(format!(
                        "{} OPF {} (worst family {})",
                        o.as_str(),
                        s.status.as_str(),
                        s.violated_family.as_deref().unwrap_or("unknown")
                    ));
                }
            }
            (aggregates, Some(run), Some(residuals))
        }
        Err(mut f) => {
            f.push("OPF skipped".into());
            failures.extend(f);
            (Vec::new(), None, None)
        }
    };
    let opf_secs = t1.elapsed().as_secs_f64();
    for f in &failures {
        log::warn!("{time}: {f}");
    }
    Ok(StepResult {
        time,
        envelopes,
        aggregates,
        opf,
        residuals,
        failures,
        timings: StepTimings {
            envelopes: env_secs,
            opf: opf_secs,
        },
    })
}

/// Runs every step of the horizon in order. Solver failures are recorded per
/// step; only malformed input aborts the run.
pub fn run_horizon(scenario: &Scenario) -> Result<HorizonResult, ScenarioError> {
    let start = Instant::now();
    let times = scenario.step_times();
    let mut steps = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let step = run_step(scenario, t)?;
        log::debug!(
            "step {}/{} at {t}: envelopes {:.3} s, OPF {:.3} s",
            k + 1,
            times.len(),
            step.timings.envelopes,
            step.timings.opf
        );
        steps.push(step);
    }
    let result = HorizonResult {
        steps,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{} steps in {:.2} s, {} recorded failures",
        result.steps.len(),
        result.total_seconds,
        result.failure_count()
    );
    Ok(result)
}
