use nalgebra::DMatrix;

use super::{BuildingModel, PhysicalConstants, ThermalError, ThermalInputs, ThermalState};

/// Time derivative of every node temperature, °C/s, written into `out`.
///
/// `x` and `out` use the flat layout of [`ThermalState::to_flat`]. The inputs
/// are assumed to have been checked against the model.
pub(crate) fn rates_into(model: &BuildingModel, x: &[f64], inputs: &ThermalInputs, cw: f64, out: &mut [f64]) {
    let nz = model.zone_count();
    let nw = model.wall_count();

    // Heat flows into each zone, kW; divided by capacity at the end.
    for (i, zone) in model.zones.iter().enumerate() {
        let t = x[i];
        let mut flow = inputs.disturbances[i];
        if let Some(r) = zone.envelope_resistance {
            flow += (inputs.outdoor_temp - t) / r;
        }
        out[i] = flow;
    }
    for (w, (wall, link)) in model.walls.iter().zip(model.links()).enumerate() {
        let tw = x[nz + w];
        let (ta, tb) = (x[link.a], x[link.b]);
        out[link.a] += (tw - ta) / wall.resistance;
        out[link.b] += (tw - tb) / wall.resistance;
        out[nz + w] = ((ta - tw) / wall.resistance + (tb - tw) / wall.resistance) / wall.heat_capacity;
    }
    let mut offset = nz + nw;
    for (i, rad) in model.radiators.iter().enumerate() {
        let tz = x[i];
        let cq = cw * inputs.flows[i];
        let mut upstream = inputs.supply_temp;
        for n in 0..rad.element_count {
            let tn = x[offset + n];
            out[i] += (tn - tz) / rad.element_resistance;
            out[offset + n] = ((tz - tn) / rad.element_resistance + cq * (upstream - tn)) / rad.element_capacity;
            upstream = tn;
        }
        offset += rad.element_count;
    }
    for (i, zone) in model.zones.iter().enumerate() {
        out[i] /= zone.heat_capacity;
    }
}

/// Right-hand side of the zone, wall and radiator-element energy balances.
pub fn derivatives(
    model: &BuildingModel,
    state: &ThermalState,
    inputs: &ThermalInputs,
    constants: &PhysicalConstants,
) -> Result<ThermalState, ThermalError> {
    state.check_shape(model)?;
    inputs.check(model)?;
    let x = state.to_flat();
    let mut out = vec![0.0; x.len()];
    rates_into(model, &x, inputs, constants.water_specific_heat, &mut out);
    Ok(ThermalState::from_flat(model, &out))
}

/// Jacobian of the (affine) dynamics at the given flows.
fn jacobian(model: &BuildingModel, flows: &[f64], cw: f64) -> DMatrix<f64> {
    let n = model.state_len();
    let zero_inputs = ThermalInputs {
        flows: flows.to_vec(),
        supply_temp: 0.0,
        outdoor_temp: 0.0,
        disturbances: vec![0.0; model.zone_count()],
    };
    let mut jac = DMatrix::zeros(n, n);
    let mut x = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        x[j] = 1.0;
        rates_into(model, &x, &zero_inputs, cw, &mut col);
        jac.column_mut(j).copy_from_slice(&col);
        x[j] = 0.0;
    }
    jac
}

/// Fastest and slowest time constants (s) of the linear dynamics at the given
/// flows, from the eigenvalues of the system matrix.
pub fn time_constants(
    model: &BuildingModel,
    flows: &[f64],
    constants: &PhysicalConstants,
) -> Result<(f64, f64), ThermalError> {
    if flows.len() != model.zone_count() {
        return Err(ThermalError::Dimension(format!(
            "{} flows for {} zones",
            flows.len(),
            model.zone_count()
        )));
    }
    let jac = jacobian(model, flows, constants.water_specific_heat);
    let eig = jac.complex_eigenvalues();
    let rates: Vec<f64> = eig.iter().map(|l| l.re.abs()).filter(|r| *r > 0.0).collect();
    if rates.is_empty() {
        return Err(ThermalError::Singular(format!(
            "building {} has no decaying modes",
            model.id
        )));
    }
    let fastest = rates.iter().copied().fold(0.0, f64::max);
    let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((1.0 / fastest, 1.0 / slowest))
}

/// Default integration step: a twentieth of the fastest time constant.
pub fn default_step(model: &BuildingModel, flows: &[f64], constants: &PhysicalConstants) -> Result<f64, ThermalError> {
    Ok(time_constants(model, flows, constants)?.0 / 20.0)
}

/// Classic fourth-order Runge–Kutta step with preallocated stage buffers.
struct Rk4<'a> {
    model: &'a BuildingModel,
    inputs: &'a ThermalInputs,
    cw: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(model: &'a BuildingModel, inputs: &'a ThermalInputs, cw: f64) -> Self {
        let n = model.state_len();
        Self {
            model,
            inputs,
            cw,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn advance(&mut self, x: &mut [f64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        rates_into(self.model, x, self.inputs, self.cw, k1);
        for (t, (xi, ki)) in self.tmp.iter_mut().zip(x.iter().zip(k1.iter())) {
            *t = xi + 0.5 * h * ki;
        }
        rates_into(self.model, &self.tmp, self.inputs, self.cw, k2);
        for (t, (xi, ki)) in self.tmp.iter_mut().zip(x.iter().zip(k2.iter())) {
            *t = xi + 0.5 * h * ki;
        }
        rates_into(self.model, &self.tmp, self.inputs, self.cw, k3);
        for (t, (xi, ki)) in self.tmp.iter_mut().zip(x.iter().zip(k3.iter())) {
            *t = xi + h * ki;
        }
        rates_into(self.model, &self.tmp, self.inputs, self.cw, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn step_count(duration: f64, step: f64) -> Result<usize, ThermalError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(ThermalError::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(ThermalError::InvalidArgument(format!(
            "duration must be nonnegative, got {duration}"
        )));
    }
    Ok((duration / step + 1e-9).floor() as usize)
}

/// Fixed-step classic Runge–Kutta integration under constant inputs.
///
/// Returns `floor(duration / step) + 1` states, starting with `initial`.
pub fn simulate(
    model: &BuildingModel,
    initial: &ThermalState,
    inputs: &ThermalInputs,
    duration: f64,
    step: f64,
    constants: &PhysicalConstants,
) -> Result<Vec<ThermalState>, ThermalError> {
    initial.check_shape(model)?;
    inputs.check(model)?;
    constants.validate()?;
    let steps = step_count(duration, step)?;
    let mut rk = Rk4::new(model, inputs, constants.water_specific_heat);
    let mut x = initial.to_flat();
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(initial.clone());
    for s in 1..=steps {
        rk.advance(&mut x, step);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ThermalError::Blowup { time: s as f64 * step });
        }
        traj.push(ThermalState::from_flat(model, &x));
    }
    Ok(traj)
}

/// Like [`simulate`] but keeps only the final state.
pub fn simulate_final(
    model: &BuildingModel,
    initial: &ThermalState,
    inputs: &ThermalInputs,
    duration: f64,
    step: f64,
    constants: &PhysicalConstants,
) -> Result<ThermalState, ThermalError> {
    initial.check_shape(model)?;
    inputs.check(model)?;
    constants.validate()?;
    let steps = step_count(duration, step)?;
    let mut rk = Rk4::new(model, inputs, constants.water_specific_heat);
    let mut x = initial.to_flat();
    for s in 1..=steps {
        rk.advance(&mut x, step);
        if (s % 64 == 0 || s == steps) && x.iter().any(|v| !v.is_finite()) {
            return Err(ThermalError::Blowup { time: s as f64 * step });
        }
    }
    Ok(ThermalState::from_flat(model, &x))
}
