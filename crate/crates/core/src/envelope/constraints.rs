//! Linear steady-state constraint block shared by every envelope problem.
//!
//! Variables per heat pump: zone temperatures `Z`, heat inputs `u` per zone,
//! optionally the outdoor temperature per building and the internal gain per
//! zone (when they range over their prediction band), and optionally the
//! supply temperature. Wall temperatures are eliminated: at steady state each
//! wall sits at the mean of its two zones, so a wall of resistance `R`
//! couples its zones through `(Z_j − Z_i)/(2R)`.

use super::{DisturbanceBand, EnvelopeError, GhpUnit};
use crate::solver::QpBuilder;
use crate::thermal::{kappa, BuildingModel, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupplyMode {
    /// Supply temperature is a decision variable in its admissible range.
    Variable,
    /// Supply temperature is fixed at the given value, °C.
    FixedAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceMode {
    /// Outdoor temperature and gains are decision variables inside their bands.
    Free,
    /// Outdoor temperature and gains are fixed at the band midpoints.
    Midpoint,
}

/// Variable indices for one building.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingVars {
    pub zone_temp: Vec<usize>,
    pub heat: Vec<usize>,
    pub gain: Option<Vec<usize>>,
    pub outdoor: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SteadyConstraints {
    pub builder: QpBuilder,
    pub buildings: Vec<BuildingVars>,
    pub supply: Option<usize>,
    /// Heat-transfer coefficient at maximum flow per zone, kW/°C.
    pub kappa_max: Vec<Vec<f64>>,
    sign: f64,
}

impl SteadyConstraints {
    /// Builds the steady-state equalities, the heat-delivery limits, and the
    /// supply, comfort and disturbance boxes.
    pub fn assemble(
        ghp: &GhpUnit,
        buildings: &[&BuildingModel],
        bands: &DisturbanceBand,
        supply: SupplyMode,
        disturbances: DisturbanceMode,
        constants: &PhysicalConstants,
    ) -> Result<Self, EnvelopeError> {
        ghp.validate()?;
        check_buildings(ghp, buildings)?;
        bands.validate(buildings)?;
        let sign = ghp.mode.sign();

        let mut n = 0;
        let mut next = || {
            n += 1;
            n - 1
        };
        let mut vars = Vec::with_capacity(buildings.len());
        for b in buildings {
            let nz = b.zone_count();
            let zone_temp: Vec<usize> = (0..nz).map(|_| next()).collect();
            let heat: Vec<usize> = (0..nz).map(|_| next()).collect();
            let (gain, outdoor) = match disturbances {
                DisturbanceMode::Free => (Some((0..nz).map(|_| next()).collect()), Some(next())),
                DisturbanceMode::Midpoint => (None, None),
            };
            vars.push(BuildingVars {
                zone_temp,
                heat,
                gain,
                outdoor,
            });
        }
        let supply_var = match supply {
            SupplyMode::Variable => Some(next()),
            SupplyMode::FixedAt(_) => None,
        };

        let mut qp = QpBuilder::new(n);
        let mut kappa_max = Vec::with_capacity(buildings.len());

        for ((model, band), v) in buildings.iter().zip(&bands.buildings).zip(&vars) {
            let gain_mid = band.gain_mid();
            let mut kappas = Vec::with_capacity(model.zone_count());
            for (i, zone) in model.zones.iter().enumerate() {
                if zone.comfort_low > zone.comfort_high {
                    return Err(EnvelopeError::Comfort {
                        zone: zone.id.clone(),
                        low: zone.comfort_low,
                        high: zone.comfort_high,
                    });
                }

                // Steady-state heat balance of zone i.
                let mut terms = vec![(v.heat[i], 1.0)];
                let mut rhs = 0.0;
                let mut diag = 0.0;
                if let Some(r) = zone.envelope_resistance {
                    diag -= 1.0 / r;
                    match v.outdoor {
                        Some(o) => terms.push((o, 1.0 / r)),
                        None => rhs -= band.outdoor_mid() / r,
                    }
                }
                for (wall, link) in model.walls.iter().zip(model.links()) {
                    let other = if link.a == i {
                        link.b
                    } else if link.b == i {
                        link.a
                    } else {
                        continue;
                    };
                    let g = 1.0 / (2.0 * wall.resistance);
                    diag -= g;
                    terms.push((v.zone_temp[other], g));
                }
                terms.push((v.zone_temp[i], diag));
                match &v.gain {
                    Some(gains) => terms.push((gains[i], 1.0)),
                    None => rhs -= gain_mid[i],
                }
                qp.add_eq(terms, rhs);

                // Heat delivery limit at maximum flow.
                let rad = &model.radiators[i];
                let k = kappa(
                    rad.flow_max,
                    rad.conductance(),
                    rad.element_count,
                    constants.water_specific_heat,
                );
                kappas.push(k);
                match (supply, supply_var) {
                    (_, Some(ts)) => {
                        qp.add_le(
                            vec![(v.heat[i], sign), (v.zone_temp[i], sign * k), (ts, -sign * k)],
                            0.0,
                        );
                    }
                    (SupplyMode::FixedAt(t), None) => {
                        qp.add_le(vec![(v.heat[i], sign), (v.zone_temp[i], sign * k)], sign * k * t);
                    }
                    (SupplyMode::Variable, None) => unreachable!(),
                }
                if sign > 0.0 {
                    qp.set_lower(v.heat[i], 0.0);
                } else {
                    qp.set_upper(v.heat[i], 0.0);
                }

                qp.set_bounds(v.zone_temp[i], zone.comfort_low, zone.comfort_high);
                if let Some(gains) = &v.gain {
                    qp.set_bounds(gains[i], band.gain_low[i], band.gain_high[i]);
                }
            }
            if let Some(o) = v.outdoor {
                qp.set_bounds(o, band.outdoor_low, band.outdoor_high);
            }
            kappa_max.push(kappas);
        }
        if let Some(ts) = supply_var {
            qp.set_bounds(ts, ghp.supply_low, ghp.supply_high);
        }

        Ok(Self {
            builder: qp,
            buildings: vars,
            supply: supply_var,
            kappa_max,
            sign,
        })
    }

    /// Caps heat delivery as if the supply temperature were `cap`:
    /// `u ≤ κ̄·(cap − Z)` in heating (reversed in cooling).
    pub fn add_supply_cap(&mut self, cap: f64) {
        let sign = self.sign;
        for (v, kappas) in self.buildings.iter().zip(&self.kappa_max) {
            for (i, &k) in kappas.iter().enumerate() {
                self.builder
                    .add_le(vec![(v.heat[i], sign), (v.zone_temp[i], sign * k)], sign * k * cap);
            }
        }
    }

    /// Every heat-input variable.
    pub fn heat_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.buildings.iter().flat_map(|b| b.heat.iter().copied())
    }

    pub fn zone_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.buildings.iter().flat_map(|b| b.zone_temp.iter().copied())
    }

    pub fn n_vars(&self) -> usize {
        self.builder.n_vars()
    }

    pub fn n_eq(&self) -> usize {
        self.builder.n_eq()
    }

    /// Inequality rows plus finite variable bounds (each box counts once).
    pub fn n_limits(&self) -> usize {
        let boxed = (0..self.n_vars())
            .filter(|&i| {
                let (lo, hi) = self.builder.bounds(i);
                lo.is_finite() || hi.is_finite()
            })
            .count();
        self.builder.n_ineq() + boxed
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }
}

pub(crate) fn check_buildings(ghp: &GhpUnit, buildings: &[&BuildingModel]) -> Result<(), EnvelopeError> {
    if buildings.len() != ghp.buildings.len() {
        return Err(EnvelopeError::Buildings(format!(
            "heat pump {} serves {} buildings but {} were supplied",
            ghp.id,
            ghp.buildings.len(),
            buildings.len()
        )));
    }
    for (want, got) in ghp.buildings.iter().zip(buildings) {
        if *want != got.id {
            return Err(EnvelopeError::Buildings(format!(
                "heat pump {} expects building {want}, got {}",
                ghp.id, got.id
            )));
        }
    }
    Ok(())
}
