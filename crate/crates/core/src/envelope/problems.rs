use serde::{Deserialize, Serialize};

use super::constraints::{DisturbanceMode, SteadyConstraints, SupplyMode};
use super::{DesiredWeights, DisturbanceBand, EnvelopeError, GhpUnit};
use crate::solver::{self, SolveStatus, SolverSettings};
use crate::thermal::{BuildingModel, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub solver: SolverSettings,
    pub constants: PhysicalConstants,
    /// Grid size of the exact lower-bound sweep; `None` skips it.
    pub exact_grid_points: Option<usize>,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            constants: PhysicalConstants::default(),
            exact_grid_points: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundVariant {
    /// Heat limited as if supplied at the loosest supply temperature.
    Aggressive,
    /// Heat limited as if supplied at the tightest supply temperature; may be infeasible.
    Conservative,
}

/// Result of one envelope optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    pub status: SolveStatus,
    /// Electric power, kW.
    pub power: Option<f64>,
    /// Total heat delivered (extracted, in cooling), kW.
    pub heat: Option<f64>,
    /// Supply temperature used to convert heat to power, °C.
    pub supply_temp: Option<f64>,
    /// Zone temperatures at the optimum, per building.
    pub zone_temps: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl BoundSolution {
    fn failed(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            power: None,
            heat: None,
            supply_temp: None,
            zone_temps: Vec::new(),
            iterations,
        }
    }
}

fn solve_block(
    block: &SteadyConstraints,
    options: &EnvelopeOptions,
) -> Result<(solver::SolveResult, f64), EnvelopeError> {
    let qp = block.builder.build()?;
    let result = solver::solve(&qp, &options.solver);
    let heat = block.sign() * block.heat_vars().map(|i| result.x[i]).sum::<f64>();
    Ok((result, heat.max(0.0)))
}

fn extract(
    block: &SteadyConstraints,
    result: &solver::SolveResult,
    heat: f64,
    supply_temp: f64,
    cop: f64,
) -> BoundSolution {
    if !result.status.is_optimal() {
        return BoundSolution::failed(result.status, result.iterations);
    }
    BoundSolution {
        status: result.status,
        power: Some(heat / cop),
        heat: Some(heat),
        supply_temp: Some(supply_temp),
        zone_temps: block
            .buildings
            .iter()
            .map(|b| b.zone_temp.iter().map(|&i| result.x[i]).collect())
            .collect(),
        iterations: result.iterations,
    }
}

/// Maximum steady-state electric power.
///
/// Heat delivery is capped at the loosest supply temperature and converted at
/// the lowest COP; this relaxation attains the optimum of the problem with a
/// free supply temperature.
pub fn upper_bound_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    let cap = ghp.loosest_supply();
    let mut block = SteadyConstraints::assemble(
        ghp,
        buildings,
        bands,
        SupplyMode::FixedAt(cap),
        DisturbanceMode::Free,
        &options.constants,
    )?;
    let cop = ghp.cop_at(ghp.supply_high);
    let coef = -block.sign() / cop;
    let heat: Vec<usize> = block.heat_vars().collect();
    for i in heat {
        block.builder.add_linear(i, coef);
    }
    let (result, total) = solve_block(&block, options)?;
    Ok(extract(&block, &result, total, ghp.supply_high, cop))
}

/// Minimum steady-state electric power, relaxed to a linear program by
/// converting heat at the highest COP.
pub fn lower_bound_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    variant: LowerBoundVariant,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    let mut block = SteadyConstraints::assemble(
        ghp,
        buildings,
        bands,
        SupplyMode::Variable,
        DisturbanceMode::Free,
        &options.constants,
    )?;
    block.add_supply_cap(match variant {
        LowerBoundVariant::Aggressive => ghp.loosest_supply(),
        LowerBoundVariant::Conservative => ghp.tightest_supply(),
    });
    let cop = ghp.cop_at(ghp.supply_low);
    let coef = block.sign() / cop;
    let heat: Vec<usize> = block.heat_vars().collect();
    for i in heat {
        block.builder.add_linear(i, coef);
    }
    let (result, total) = solve_block(&block, options)?;
    Ok(extract(&block, &result, total, ghp.supply_low, cop))
}

/// Minimum power with the supply temperature held at `supply_temp`.
pub fn fixed_supply_min_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    supply_temp: f64,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    fixed_supply_power(ghp, buildings, bands, supply_temp, 1.0, options)
}

/// Maximum power with the supply temperature held at `supply_temp`.
pub fn fixed_supply_max_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    supply_temp: f64,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    fixed_supply_power(ghp, buildings, bands, supply_temp, -1.0, options)
}

fn fixed_supply_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    supply_temp: f64,
    direction: f64,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    let mut block = SteadyConstraints::assemble(
        ghp,
        buildings,
        bands,
        SupplyMode::FixedAt(supply_temp),
        DisturbanceMode::Free,
        &options.constants,
    )?;
    let cop = ghp.cop_at(supply_temp);
    let coef = direction * block.sign() / cop;
    let heat: Vec<usize> = block.heat_vars().collect();
    for i in heat {
        block.builder.add_linear(i, coef);
    }
    let (result, total) = solve_block(&block, options)?;
    Ok(extract(&block, &result, total, supply_temp, cop))
}

/// Exact minimum power over the admissible supply range.
///
/// For a fixed supply temperature the problem is a linear program, so the
/// range is swept on a uniform grid and the best cell refined by
/// golden-section search to 1e-3 °C.
pub fn lower_bound_power_exact(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    grid_points: usize,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    if grid_points < 2 {
        return Err(EnvelopeError::InvalidArgument(format!(
            "exact lower bound needs at least 2 grid points, got {grid_points}"
        )));
    }
    ghp.validate()?;
    let (lo, hi) = (ghp.supply_low, ghp.supply_high);
    let grid: Vec<f64> = (0..grid_points)
        .map(|j| lo + (hi - lo) * j as f64 / (grid_points - 1) as f64)
        .collect();
    let mut iterations = 0;
    let mut eval = |t: f64| -> Result<BoundSolution, EnvelopeError> {
        let s = fixed_supply_min_power(ghp, buildings, bands, t, options)?;
        iterations += s.iterations;
        Ok(s)
    };
    let power = |s: &BoundSolution| s.power.unwrap_or(f64::INFINITY);

    let mut best: Option<(usize, BoundSolution)> = None;
    for (j, &t) in grid.iter().enumerate() {
        let s = eval(t)?;
        if s.status.is_optimal() && best.as_ref().map_or(true, |(_, b)| power(&s) < power(b)) {
            best = Some((j, s));
        }
    }
    let Some((j, mut best)) = best else {
        return Ok(BoundSolution::failed(SolveStatus::Infeasible, iterations));
    };

    let (mut a, mut b) = (grid[j.saturating_sub(1)], grid[(j + 1).min(grid_points - 1)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > 1e-3 {
        if power(&fc) <= power(&fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d)?;
        }
    }
    for cand in [fc, fd] {
        if cand.status.is_optimal() && power(&cand) < power(&best) {
            best = cand;
        }
    }
    best.iterations = iterations;
    Ok(best)
}

/// Desired operating point: zones near their setpoints, supply temperature
/// low, with the disturbances fixed at the middle of their bands.
pub fn desired_power(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    weights: &DesiredWeights,
    options: &EnvelopeOptions,
) -> Result<BoundSolution, EnvelopeError> {
    weights.validate()?;
    let mut block = SteadyConstraints::assemble(
        ghp,
        buildings,
        bands,
        SupplyMode::Variable,
        DisturbanceMode::Midpoint,
        &options.constants,
    )?;
    let ts = block.supply.expect("variable supply");
    for (model, vars) in buildings.iter().zip(block.buildings.clone()) {
        for (zone, &z) in model.zones.iter().zip(&vars.zone_temp) {
            block.builder.add_quadratic(z, z, weights.comfort_weight);
            block.builder.add_linear(z, -weights.comfort_weight * zone.setpoint);
        }
    }
    block.builder.add_quadratic(ts, ts, weights.efficiency_weight);
    block
        .builder
        .add_linear(ts, -weights.efficiency_weight * ghp.supply_low);

    let (result, total) = solve_block(&block, options)?;
    if !result.status.is_optimal() {
        return Ok(BoundSolution::failed(result.status, result.iterations));
    }
    let supply_temp = result.x[ts];
    Ok(extract(&block, &result, total, supply_temp, ghp.cop_at(supply_temp)))
}
