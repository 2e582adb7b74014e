use serde::{Deserialize, Serialize};

use super::EnvelopeError;
use crate::thermal::{cop, BuildingModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    #[default]
    Heating,
    Cooling,
}

impl OperatingMode {
    /// +1 when heat is delivered to the zones, −1 when it is extracted.
    pub fn sign(self) -> f64 {
        match self {
            OperatingMode::Heating => 1.0,
            OperatingMode::Cooling => -1.0,
        }
    }
}

/// One geothermal heat pump and the buildings it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhpUnit {
    pub id: String,
    /// `a` in `COP = b − a·T_s`, 1/°C.
    pub cop_slope: f64,
    /// `b` in `COP = b − a·T_s`.
    pub cop_intercept: f64,
    pub supply_low: f64,
    pub supply_high: f64,
    pub power_factor: f64,
    /// Ids of the served buildings.
    pub buildings: Vec<String>,
    #[serde(default)]
    pub mode: OperatingMode,
}

impl GhpUnit {
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let bad = |msg: String| {
            Err(EnvelopeError::InvalidGhp {
                id: self.id.clone(),
                msg,
            })
        };
        if !(self.cop_slope > 0.0 && self.cop_intercept > 0.0) {
            return bad(format!(
                "COP coefficients must be positive (a = {}, b = {})",
                self.cop_slope, self.cop_intercept
            ));
        }
        if !(self.supply_low < self.supply_high) {
            return bad(format!(
                "supply range [{}, {}] is empty",
                self.supply_low, self.supply_high
            ));
        }
        if self.cop_at(self.supply_high) <= 0.0 {
            return bad(format!(
                "COP is {} at the maximum supply temperature {}",
                self.cop_at(self.supply_high),
                self.supply_high
            ));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad(format!("power factor {} outside (0, 1]", self.power_factor));
        }
        if self.buildings.is_empty() {
            return bad("serves no buildings".into());
        }
        Ok(())
    }

    pub fn cop_at(&self, supply_temp: f64) -> f64 {
        cop(self.cop_slope, self.cop_intercept, supply_temp)
    }

    /// Supply temperature giving the widest heat-delivery cap: the highest in
    /// heating, the lowest in cooling.
    pub fn loosest_supply(&self) -> f64 {
        match self.mode {
            OperatingMode::Heating => self.supply_high,
            OperatingMode::Cooling => self.supply_low,
        }
    }

    pub fn tightest_supply(&self) -> f64 {
        match self.mode {
            OperatingMode::Heating => self.supply_low,
            OperatingMode::Cooling => self.supply_high,
        }
    }
}

/// Disturbance prediction band for one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingBand {
    pub outdoor_low: f64,
    pub outdoor_high: f64,
    /// Per-zone internal heat gain bounds, kW.
    pub gain_low: Vec<f64>,
    pub gain_high: Vec<f64>,
}

impl BuildingBand {
    /// Band taken from the static bounds stored in the building model.
    pub fn from_model(model: &BuildingModel) -> Self {
        Self {
            outdoor_low: model.outdoor_low,
            outdoor_high: model.outdoor_high,
            gain_low: model.zones.iter().map(|z| z.disturbance_low).collect(),
            gain_high: model.zones.iter().map(|z| z.disturbance_high).collect(),
        }
    }

    pub fn outdoor_mid(&self) -> f64 {
        0.5 * (self.outdoor_low + self.outdoor_high)
    }

    pub fn gain_mid(&self) -> Vec<f64> {
        self.gain_low
            .iter()
            .zip(&self.gain_high)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Disturbance bands for every building served by one heat pump, in the order
/// of [`GhpUnit::buildings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBand {
    pub buildings: Vec<BuildingBand>,
}

impl DisturbanceBand {
    pub fn from_models(models: &[&BuildingModel]) -> Self {
        Self {
            buildings: models.iter().map(|m| BuildingBand::from_model(m)).collect(),
        }
    }

    pub fn validate(&self, models: &[&BuildingModel]) -> Result<(), EnvelopeError> {
        if self.buildings.len() != models.len() {
            return Err(EnvelopeError::Band(format!(
                "{} building bands for {} buildings",
                self.buildings.len(),
                models.len()
            )));
        }
        for (band, model) in self.buildings.iter().zip(models) {
            let nz = model.zone_count();
            if band.gain_low.len() != nz || band.gain_high.len() != nz {
                return Err(EnvelopeError::Band(format!(
                    "building {}: gain band has {}/{} entries for {nz} zones",
                    model.id,
                    band.gain_low.len(),
                    band.gain_high.len()
                )));
            }
            if !(band.outdoor_low <= band.outdoor_high) {
                return Err(EnvelopeError::Band(format!(
                    "building {}: outdoor band [{}, {}] is empty",
                    model.id, band.outdoor_low, band.outdoor_high
                )));
            }
            for (z, (lo, hi)) in band.gain_low.iter().zip(&band.gain_high).enumerate() {
                if !(*lo <= *hi) {
                    return Err(EnvelopeError::Band(format!(
                        "building {} zone {}: gain band [{lo}, {hi}] is empty",
                        model.id, model.zones[z].id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weights of the desired-consumption objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesiredWeights {
    /// Priority of holding zones at their setpoints.
    pub comfort_weight: f64,
    /// Priority of a low supply temperature (high COP).
    pub efficiency_weight: f64,
}

impl Default for DesiredWeights {
    fn default() -> Self {
        Self {
            comfort_weight: 1.0,
            efficiency_weight: 0.01,
        }
    }
}

impl DesiredWeights {
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let ok = self.comfort_weight >= 0.0
            && self.efficiency_weight >= 0.0
            && (self.comfort_weight > 0.0 || self.efficiency_weight > 0.0)
            && self.comfort_weight.is_finite()
            && self.efficiency_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(EnvelopeError::Weights(format!(
                "weights must be nonnegative and not both zero (comfort {}, efficiency {})",
                self.comfort_weight, self.efficiency_weight
            )))
        }
    }
}
