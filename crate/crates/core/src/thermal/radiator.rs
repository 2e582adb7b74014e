//! Closed-form radiator relations at steady state.
//!
//! With `f = c_w q / (c_w q + B)` the element temperatures of an `N`-section
//! radiator decay geometrically from the supply temperature toward the zone
//! temperature, which gives the outlet temperature and delivered heat below.

/// Per-element transfer ratio `c_w q / (c_w q + B)`.
pub fn transfer_ratio(q: f64, conductance: f64, cw: f64) -> f64 {
    let cq = cw * q;
    if cq <= 0.0 {
        0.0
    } else {
        cq / (cq + conductance)
    }
}

/// `1 − f^N`, evaluated without cancellation for large flows.
fn one_minus_ratio_pow(q: f64, conductance: f64, elements: usize, cw: f64) -> f64 {
    let cq = cw * q;
    if cq <= 0.0 {
        return 1.0;
    }
    -(-(elements as f64) * (conductance / cq).ln_1p()).exp_m1()
}

/// Outlet water temperature `T_N = (1 − f^N)·Z + f^N·T_s`.
pub fn terminal_temperature(
    q: f64,
    conductance: f64,
    elements: usize,
    zone_temp: f64,
    supply_temp: f64,
    cw: f64,
) -> f64 {
    let decay = one_minus_ratio_pow(q, conductance, elements, cw);
    decay * zone_temp + (1.0 - decay) * supply_temp
}

/// Heat-transfer coefficient `κ(q) = c_w q (1 − f^N)` in kW/°C, so that the
/// delivered heat is `κ·(T_s − Z)`.
pub fn kappa(q: f64, conductance: f64, elements: usize, cw: f64) -> f64 {
    let cq = cw * q;
    if cq <= 0.0 {
        return 0.0;
    }
    cq * one_minus_ratio_pow(q, conductance, elements, cw)
}

/// Heat delivered to the zone, kW. Positive in heating mode (`T_s > Z`).
pub fn heat_output(q: f64, conductance: f64, elements: usize, supply_temp: f64, zone_temp: f64, cw: f64) -> f64 {
    kappa(q, conductance, elements, cw) * (supply_temp - zone_temp)
}

/// Coefficient of performance `b − a·T_s`.
pub fn cop(slope: f64, intercept: f64, supply_temp: f64) -> f64 {
    intercept - slope * supply_temp
}
