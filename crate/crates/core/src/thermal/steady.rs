use nalgebra::{DMatrix, DVector};

use super::dynamics::rates_into;
use super::{BuildingModel, PhysicalConstants, ThermalError, ThermalInputs, ThermalState};

/// Largest residual of the balance equations at steady state is accepted up to
/// this many kW.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;

/// Assembles the steady-state balances as `M z = r` with unknowns in the flat
/// state layout. Each row is a heat balance in kW.
fn assemble(model: &BuildingModel, inputs: &ThermalInputs, cw: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = model.state_len();
    let nz = model.zone_count();
    let nw = model.wall_count();
    let mut m = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);

    // Zone rows: (T_o − Z_i)/R_i + Σ (Z_w − Z_i)/R_w + Σ (Z_n − Z_i)/R_ar + Q_i = 0
    for (i, zone) in model.zones.iter().enumerate() {
        r[i] = -inputs.disturbances[i];
        if let Some(res) = zone.envelope_resistance {
            m[(i, i)] -= 1.0 / res;
            r[i] -= inputs.outdoor_temp / res;
        }
    }
    // Wall rows: (Z_a − Z_w)/R + (Z_b − Z_w)/R = 0
    for (w, (wall, link)) in model.walls.iter().zip(model.links()).enumerate() {
        let g = 1.0 / wall.resistance;
        let row = nz + w;
        m[(row, link.a)] += g;
        m[(row, link.b)] += g;
        m[(row, row)] -= 2.0 * g;
        for zone in [link.a, link.b] {
            m[(zone, row)] += g;
            m[(zone, zone)] -= g;
        }
    }
    // Element rows: (Z_i − Z_n)/R_ar + c_w q (Z_{n−1} − Z_n) = 0, Z_0 = T_s
    let mut offset = nz + nw;
    for (i, rad) in model.radiators.iter().enumerate() {
        let b = rad.conductance();
        let cq = cw * inputs.flows[i];
        for n in 0..rad.element_count {
            let row = offset + n;
            m[(row, i)] += b;
            m[(row, row)] -= b + cq;
            if n == 0 {
                r[row] -= cq * inputs.supply_temp;
            } else {
                m[(row, row - 1)] += cq;
            }
            m[(i, row)] += b;
            m[(i, i)] -= b;
        }
        offset += rad.element_count;
    }
    (m, r)
}

/// Heat-balance residual of every node in kW: capacity × d/dt at `state`.
pub fn balance_residuals(
    model: &BuildingModel,
    state: &ThermalState,
    inputs: &ThermalInputs,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>, ThermalError> {
    state.check_shape(model)?;
    inputs.check(model)?;
    let x = state.to_flat();
    let mut rates = vec![0.0; x.len()];
    rates_into(model, &x, inputs, constants.water_specific_heat, &mut rates);
    let nz = model.zone_count();
    let nw = model.wall_count();
    let mut capacities: Vec<f64> = model.zones.iter().map(|z| z.heat_capacity).collect();
    capacities.extend(model.walls.iter().map(|w| w.heat_capacity));
    for r in &model.radiators {
        capacities.extend(std::iter::repeat(r.element_capacity).take(r.element_count));
    }
    debug_assert_eq!(capacities.len(), nz + nw + model.element_count());
    Ok(rates.iter().zip(capacities).map(|(d, c)| d * c).collect())
}

/// Equilibrium temperatures under constant inputs.
pub fn steady_state(
    model: &BuildingModel,
    inputs: &ThermalInputs,
    constants: &PhysicalConstants,
) -> Result<ThermalState, ThermalError> {
    inputs.check(model)?;
    constants.validate()?;
    let (m, r) = assemble(model, inputs, constants.water_specific_heat);
    let lu = m.clone().lu();
    let singular = || ThermalError::Singular(format!("steady-state system of building {} is singular", model.id));
    let mut z = lu.solve(&r).ok_or_else(singular)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    // One round of iterative refinement.
    let resid = &r - &m * &z;
    if let Some(dz) = lu.solve(&resid) {
        z += dz;
    }
    let state = ThermalState::from_flat(model, z.as_slice());
    let worst = balance_residuals(model, &state, inputs, constants)?
        .into_iter()
        .fold(0.0, |a: f64, v| a.max(v.abs()));
    let scale = r.amax().max(1.0);
    if worst > STEADY_RESIDUAL_TOL * scale {
        return Err(ThermalError::Singular(format!(
            "steady-state residual {worst:.3e} kW exceeds tolerance for building {}",
            model.id
        )));
    }
    Ok(state)
}
