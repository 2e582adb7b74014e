use serde::{Deserialize, Serialize};

use super::ThermalError;

/// Specific heat of water in kJ/(kg·°C).
pub const WATER_SPECIFIC_HEAT: f64 = 4.186;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub water_specific_heat: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            water_specific_heat: WATER_SPECIFIC_HEAT,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), ThermalError> {
        if self.water_specific_heat > 0.0 && self.water_specific_heat.is_finite() {
            Ok(())
        } else {
            Err(ThermalError::InvalidModel(format!(
                "water specific heat must be positive, got {}",
                self.water_specific_heat
            )))
        }
    }
}

/// A thermal zone (room). Capacities in kJ/°C, resistances in °C/kW,
/// temperatures in °C, heat gains in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalZone {
    pub id: String,
    pub heat_capacity: f64,
    /// Zone-to-outdoor resistance. `None` for interior zones without an
    /// exterior surface.
    pub envelope_resistance: Option<f64>,
    pub comfort_low: f64,
    pub comfort_high: f64,
    pub setpoint: f64,
    #[serde(default)]
    pub disturbance_low: f64,
    #[serde(default)]
    pub disturbance_high: f64,
}

/// Wall between two zones, with its own capacitance node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterZoneWall {
    pub zone_a: String,
    pub zone_b: String,
    pub heat_capacity: f64,
    pub resistance: f64,
}

/// Radiator split into `element_count` lumped water sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiatorChain {
    pub zone: String,
    pub element_count: usize,
    pub element_capacity: f64,
    /// Radiator-to-air resistance of one element.
    pub element_resistance: f64,
    /// Maximum water flow in kg/s.
    pub flow_max: f64,
}

impl RadiatorChain {
    /// Radiator-to-air conductance of one element, kW/°C.
    pub fn conductance(&self) -> f64 {
        1.0 / self.element_resistance
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawBuilding {
    id: String,
    zones: Vec<ThermalZone>,
    #[serde(default)]
    walls: Vec<InterZoneWall>,
    radiators: Vec<RadiatorChain>,
    #[serde(default)]
    outdoor_low: f64,
    #[serde(default)]
    outdoor_high: f64,
}

impl TryFrom<RawBuilding> for BuildingModel {
    type Error = ThermalError;

    fn try_from(raw: RawBuilding) -> Result<Self, Self::Error> {
        BuildingModel::new(
            raw.id,
            raw.zones,
            raw.walls,
            raw.radiators,
            raw.outdoor_low,
            raw.outdoor_high,
        )
    }
}

/// Resolved wall endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WallLink {
    pub a: usize,
    pub b: usize,
}

/// A building: zones, the wall graph between them, and one radiator per zone.
///
/// Radiators are stored in zone order after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBuilding")]
pub struct BuildingModel {
    pub id: String,
    pub zones: Vec<ThermalZone>,
    pub walls: Vec<InterZoneWall>,
    pub radiators: Vec<RadiatorChain>,
    pub outdoor_low: f64,
    pub outdoor_high: f64,
    #[serde(skip)]
    links: Vec<WallLink>,
}

fn positive(what: &str, owner: &str, v: f64) -> Result<(), ThermalError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ThermalError::InvalidModel(format!(
            "{owner}: {what} must be positive, got {v}"
        )))
    }
}

impl BuildingModel {
    pub fn new(
        id: impl Into<String>,
        zones: Vec<ThermalZone>,
        walls: Vec<InterZoneWall>,
        radiators: Vec<RadiatorChain>,
        outdoor_low: f64,
        outdoor_high: f64,
    ) -> Result<Self, ThermalError> {
        let id = id.into();
        if zones.is_empty() {
            return Err(ThermalError::InvalidModel(format!("building {id} has no zones")));
        }
        for z in &zones {
            let owner = format!("zone {}", z.id);
            positive("heat capacity", &owner, z.heat_capacity)?;
            if let Some(r) = z.envelope_resistance {
                positive("envelope resistance", &owner, r)?;
            }
            if !(z.comfort_low <= z.setpoint && z.setpoint <= z.comfort_high) {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: comfort band [{}, {}] must contain setpoint {}",
                    z.comfort_low, z.comfort_high, z.setpoint
                )));
            }
            if !(0.0 <= z.disturbance_low && z.disturbance_low <= z.disturbance_high) {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: heat gain band [{}, {}] must satisfy 0 ≤ low ≤ high",
                    z.disturbance_low, z.disturbance_high
                )));
            }
        }
        if outdoor_low > outdoor_high {
            return Err(ThermalError::InvalidModel(format!(
                "building {id}: outdoor band [{outdoor_low}, {outdoor_high}] is empty"
            )));
        }
        let index_of = |name: &str| {
            zones
                .iter()
                .position(|z| z.id == name)
                .ok_or_else(|| ThermalError::InvalidModel(format!("building {id}: unknown zone {name}")))
        };
        {
            let mut seen = std::collections::HashSet::new();
            for z in &zones {
                if !seen.insert(z.id.as_str()) {
                    return Err(ThermalError::InvalidModel(format!(
                        "building {id}: duplicate zone {}",
                        z.id
                    )));
                }
            }
        }

        let mut links = Vec::with_capacity(walls.len());
        let mut pairs = std::collections::HashSet::new();
        for w in &walls {
            let owner = format!("wall {}-{}", w.zone_a, w.zone_b);
            positive("heat capacity", &owner, w.heat_capacity)?;
            positive("resistance", &owner, w.resistance)?;
            let (a, b) = (index_of(&w.zone_a)?, index_of(&w.zone_b)?);
            if a == b {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: wall must join two distinct zones"
                )));
            }
            if !pairs.insert((a.min(b), a.max(b))) {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: duplicate wall for zone pair"
                )));
            }
            links.push(WallLink { a, b });
        }

        let mut ordered: Vec<Option<RadiatorChain>> = vec![None; zones.len()];
        for r in radiators {
            let owner = format!("radiator of zone {}", r.zone);
            let i = index_of(&r.zone)?;
            if r.element_count == 0 {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: needs at least one element"
                )));
            }
            positive("element capacity", &owner, r.element_capacity)?;
            positive("element resistance", &owner, r.element_resistance)?;
            positive("maximum flow", &owner, r.flow_max)?;
            if ordered[i].replace(r).is_some() {
                return Err(ThermalError::InvalidModel(format!(
                    "{owner}: zone has more than one radiator"
                )));
            }
        }
        let radiators = ordered
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    ThermalError::InvalidModel(format!("building {id}: zone {} has no radiator", zones[i].id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Self {
            id,
            zones,
            walls,
            radiators,
            outdoor_low,
            outdoor_high,
            links,
        })
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn wall_count(&self) -> usize {
        self.walls.len()
    }

    pub fn element_count(&self) -> usize {
        self.radiators.iter().map(|r| r.element_count).sum()
    }

    /// Length of the flattened state vector.
    pub fn state_len(&self) -> usize {
        self.zone_count() + self.wall_count() + self.element_count()
    }

    pub fn links(&self) -> &[WallLink] {
        &self.links
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }
}

/// Temperatures of every node of a building, °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub zone_temps: Vec<f64>,
    pub wall_temps: Vec<f64>,
    /// Per zone, element 1 (inlet side) to element N (outlet).
    pub radiator_temps: Vec<Vec<f64>>,
}

impl ThermalState {
    /// Every node at the same temperature.
    pub fn uniform(model: &BuildingModel, temp: f64) -> Self {
        Self {
            zone_temps: vec![temp; model.zone_count()],
            wall_temps: vec![temp; model.wall_count()],
            radiator_temps: model.radiators.iter().map(|r| vec![temp; r.element_count]).collect(),
        }
    }

    pub fn check_shape(&self, model: &BuildingModel) -> Result<(), ThermalError> {
        let ok = self.zone_temps.len() == model.zone_count()
            && self.wall_temps.len() == model.wall_count()
            && self.radiator_temps.len() == model.zone_count()
            && self
                .radiator_temps
                .iter()
                .zip(&model.radiators)
                .all(|(t, r)| t.len() == r.element_count);
        if ok {
            Ok(())
        } else {
            Err(ThermalError::Dimension(format!(
                "state does not match building {} ({} zones, {} walls, {} elements)",
                model.id,
                model.zone_count(),
                model.wall_count(),
                model.element_count()
            )))
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.zone_temps
            .iter()
            .chain(&self.wall_temps)
            .chain(self.radiator_temps.iter().flatten())
            .copied()
            .collect()
    }

    pub fn from_flat(model: &BuildingModel, flat: &[f64]) -> Self {
        let nz = model.zone_count();
        let nw = model.wall_count();
        let mut offset = nz + nw;
        let radiator_temps = model
            .radiators
            .iter()
            .map(|r| {
                let v = flat[offset..offset + r.element_count].to_vec();
                offset += r.element_count;
                v
            })
            .collect();
        Self {
            zone_temps: flat[..nz].to_vec(),
            wall_temps: flat[nz..nz + nw].to_vec(),
            radiator_temps,
        }
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &ThermalState) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Constant inputs over an integration interval or at steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalInputs {
    /// Water flow per zone radiator, kg/s.
    pub flows: Vec<f64>,
    pub supply_temp: f64,
    pub outdoor_temp: f64,
    /// Internal heat gain per zone, kW.
    pub disturbances: Vec<f64>,
}

impl ThermalInputs {
    pub fn check(&self, model: &BuildingModel) -> Result<(), ThermalError> {
        let nz = model.zone_count();
        if self.flows.len() != nz || self.disturbances.len() != nz {
            return Err(ThermalError::Dimension(format!(
                "inputs carry {} flows and {} gains for {nz} zones",
                self.flows.len(),
                self.disturbances.len()
            )));
        }
        for (i, (&q, r)) in self.flows.iter().zip(&model.radiators).enumerate() {
            if !(0.0..=r.flow_max).contains(&q) {
                return Err(ThermalError::FlowOutOfRange {
                    zone: model.zones[i].id.clone(),
                    flow: q,
                    max: r.flow_max,
                });
            }
        }
        Ok(())
    }
}
