//! Building thermal model: zones, inter-zone walls and radiator chains as a
//! lumped RC network, with transient integration, steady-state solves and the
//! closed-form radiator relations used by the demand envelope.
//!
//! Units throughout: temperatures °C, heat flows kW, capacities kJ/°C,
//! resistances °C/kW, water flows kg/s, time s.

mod dynamics;
mod model;
mod radiator;
mod steady;

pub use dynamics::{default_step, derivatives, simulate, simulate_final, time_constants};
pub use model::{
    BuildingModel, InterZoneWall, PhysicalConstants, RadiatorChain, ThermalInputs, ThermalState, ThermalZone, WallLink,
    WATER_SPECIFIC_HEAT,
};
pub use radiator::{cop, heat_output, kappa, terminal_temperature, transfer_ratio};
pub use steady::{balance_residuals, steady_state, STEADY_RESIDUAL_TOL};

#[derive(Debug, thiserror::Error)]
pub enum ThermalError {
    #[error("invalid building model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("flow {flow} kg/s for zone {zone} outside [0, {max}]")]
    FlowOutOfRange { zone: String, flow: f64, max: f64 },
    #[error("{0}")]
    Singular(String),
    #[error("integration produced non-finite temperatures at t = {time} s")]
    Blowup { time: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
