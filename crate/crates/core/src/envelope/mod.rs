//! Per-heat-pump demand envelope: the range of steady-state electric power a
//! GHP can draw while keeping every served zone within comfort, and the
//! desired operating point inside that range.

mod constraints;
mod ghp;
mod problems;

pub use constraints::{BuildingVars, DisturbanceMode, SteadyConstraints, SupplyMode};
pub use ghp::{BuildingBand, DesiredWeights, DisturbanceBand, GhpUnit, OperatingMode};
pub use problems::{
    desired_power, fixed_supply_max_power, fixed_supply_min_power, lower_bound_power, lower_bound_power_exact,
    upper_bound_power, BoundSolution, EnvelopeOptions, LowerBoundVariant,
};

use serde::{Deserialize, Serialize};

use crate::solver::{SolveStatus, SolverError};
use crate::thermal::BuildingModel;

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("heat pump {id}: {msg}")]
    InvalidGhp { id: String, msg: String },
    #[error("disturbance band: {0}")]
    Band(String),
    #[error("desired weights: {0}")]
    Weights(String),
    #[error("zone {zone}: comfort band [{low}, {high}] is empty")]
    Comfort { zone: String, low: f64, high: f64 },
    #[error("building mismatch: {0}")]
    Buildings(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Absolute slack used when checking the envelope ordering, kW.
pub const ORDER_SLACK: f64 = 1e-9;

/// Power range and desired point of one heat pump at one instant. Powers in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEnvelope {
    pub ghp_id: String,
    pub p_lower_aggressive: Option<f64>,
    pub p_lower_conservative: Option<f64>,
    pub p_lower_exact: Option<f64>,
    pub p_upper: Option<f64>,
    pub p_desired: Option<f64>,
    pub upper: BoundSolution,
    pub lower_aggressive: BoundSolution,
    pub lower_conservative: BoundSolution,
    pub lower_exact: Option<BoundSolution>,
    pub desired: BoundSolution,
    /// Invariants that did not hold, one message each. Empty when consistent.
    pub violations: Vec<String>,
}

impl DemandEnvelope {
    /// Supply temperature at the desired operating point, °C.
    pub fn desired_supply_temp(&self) -> Option<f64> {
        self.desired.supply_temp
    }

    pub fn statuses(&self) -> [SolveStatus; 4] {
        [
            self.lower_aggressive.status,
            self.lower_conservative.status,
            self.upper.status,
            self.desired.status,
        ]
    }

    fn check(&mut self) {
        let mut v = Vec::new();
        if let (Some(a), Some(c)) = (self.p_lower_aggressive, self.p_lower_conservative) {
            if a > c + ORDER_SLACK {
                v.push(format!("aggressive lower bound {a} exceeds conservative {c}"));
            }
        }
        if let (Some(lo), Some(hi), Some(d)) = (self.p_lower_aggressive, self.p_upper, self.p_desired) {
            if d < lo - ORDER_SLACK || d > hi + ORDER_SLACK {
                v.push(format!("desired power {d} outside [{lo}, {hi}]"));
            }
        }
        for (name, p) in [
            ("aggressive lower", self.p_lower_aggressive),
            ("conservative lower", self.p_lower_conservative),
            ("exact lower", self.p_lower_exact),
            ("upper", self.p_upper),
            ("desired", self.p_desired),
        ] {
            if let Some(p) = p {
                if p < 0.0 {
                    v.push(format!("{name} power {p} is negative"));
                }
            }
        }
        self.violations = v;
    }
}

/// Solves every envelope problem for one heat pump on one snapshot of bands.
///
/// Infeasible or failed sub-problems leave their power at `None`; only
/// malformed input is an error.
pub fn envelope(
    ghp: &GhpUnit,
    buildings: &[&BuildingModel],
    bands: &DisturbanceBand,
    weights: &DesiredWeights,
    options: &EnvelopeOptions,
) -> Result<DemandEnvelope, EnvelopeError> {
    let upper = upper_bound_power(ghp, buildings, bands, options)?;
    let lower_aggressive = lower_bound_power(ghp, buildings, bands, LowerBoundVariant::Aggressive, options)?;
    let lower_conservative = lower_bound_power(ghp, buildings, bands, LowerBoundVariant::Conservative, options)?;
    let lower_exact = options
        .exact_grid_points
        .map(|n| lower_bound_power_exact(ghp, buildings, bands, n, options))
        .transpose()?;
    let desired = desired_power(ghp, buildings, bands, weights, options)?;
    let mut env = DemandEnvelope {
        ghp_id: ghp.id.clone(),
        p_lower_aggressive: lower_aggressive.power,
        p_lower_conservative: lower_conservative.power,
        p_lower_exact: lower_exact.as_ref().and_then(|s| s.power),
        p_upper: upper.power,
        p_desired: desired.power,
        upper,
        lower_aggressive,
        lower_conservative,
        lower_exact,
        desired,
        violations: Vec::new(),
    };
    env.check();
    Ok(env)
}
