use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ClockTime;
use crate::envelope::{BuildingBand, DisturbanceBand};
use crate::thermal::BuildingModel;

/// Daily outdoor temperature: `mean + amplitude·cos(2π(t − peak)/24 h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutdoorCurve {
    pub mean: f64,
    pub amplitude: f64,
    pub peak_hour: f64,
}

impl Default for OutdoorCurve {
    fn default() -> Self {
        Self {
            mean: 0.0,
            amplitude: 4.0,
            peak_hour: 14.0,
        }
    }
}

impl OutdoorCurve {
    pub fn at(&self, time: ClockTime) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (time.hours() - self.peak_hour) / 24.0;
        self.mean + self.amplitude * phase.cos()
    }
}

/// Piecewise-constant internal gain of one zone, kW. The occupied window may
/// wrap past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainCurve {
    pub unoccupied_kw: f64,
    pub occupied_kw: f64,
    pub occupied_from: ClockTime,
    pub occupied_to: ClockTime,
}

impl Default for GainCurve {
    fn default() -> Self {
        Self {
            unoccupied_kw: 0.2,
            occupied_kw: 0.5,
            occupied_from: ClockTime::from_hm(17, 0),
            occupied_to: ClockTime::from_hm(22, 0),
        }
    }
}

impl GainCurve {
    pub fn occupied(&self, time: ClockTime) -> bool {
        let (from, to) = (self.occupied_from, self.occupied_to);
        if from <= to {
            from <= time && time < to
        } else {
            time >= from || time < to
        }
    }

    pub fn at(&self, time: ClockTime) -> f64 {
        if self.occupied(time) {
            self.occupied_kw
        } else {
            self.unoccupied_kw
        }
    }
}

/// Forecast curves and the band widths placed around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceProfile {
    /// Shared by every building.
    pub outdoor: OutdoorCurve,
    /// Absolute half-width of the outdoor band, °C.
    pub outdoor_half_width: f64,
    /// Half-width of the gain band as a fraction of the curve value.
    pub gain_relative_half_width: f64,
    pub default_gain: GainCurve,
    /// Per-zone overrides keyed by zone id.
    pub zone_gains: BTreeMap<String, GainCurve>,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            outdoor: OutdoorCurve::default(),
            outdoor_half_width: 2.0,
            gain_relative_half_width: 0.2,
            default_gain: GainCurve::default(),
            zone_gains: BTreeMap::new(),
        }
    }
}

impl DisturbanceProfile {
    pub fn gain_curve(&self, zone_id: &str) -> &GainCurve {
        self.zone_gains.get(zone_id).unwrap_or(&self.default_gain)
    }

    /// Checks widths and gains, returning a pointer relative to the profile.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let finite = [self.outdoor.mean, self.outdoor.amplitude, self.outdoor.peak_hour];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(("/outdoor".into(), "values must be finite".into()));
        }
        if !(self.outdoor_half_width >= 0.0 && self.outdoor_half_width.is_finite()) {
            return Err((
                "/outdoor_half_width".into(),
                format!("{} must be nonnegative", self.outdoor_half_width),
            ));
        }
        if !(0.0..=1.0).contains(&self.gain_relative_half_width) {
            return Err((
                "/gain_relative_half_width".into(),
                format!("{} outside [0, 1]", self.gain_relative_half_width),
            ));
        }
        let curves = std::iter::once(("/default_gain".to_string(), &self.default_gain))
            .chain(self.zone_gains.iter().map(|(k, c)| (format!("/zone_gains/{k}"), c)));
        for (ptr, c) in curves {
            if !(c.unoccupied_kw >= 0.0 && c.occupied_kw >= 0.0)
                || !(c.unoccupied_kw.is_finite() && c.occupied_kw.is_finite())
            {
                return Err((ptr, "gains must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Bands at one instant for the given buildings: the outdoor curve ± the
/// absolute half-width, and each zone's gain scaled by `1 ± relative width`.
pub fn disturbance_bands(
    profile: &DisturbanceProfile,
    time: ClockTime,
    buildings: &[&BuildingModel],
) -> DisturbanceBand {
    let t_out = profile.outdoor.at(time);
    let w = profile.gain_relative_half_width;
    DisturbanceBand {
        buildings: buildings
            .iter()
            .map(|b| {
                let base: Vec<f64> = b.zones.iter().map(|z| profile.gain_curve(&z.id).at(time)).collect();
                BuildingBand {
                    outdoor_low: t_out - profile.outdoor_half_width,
                    outdoor_high: t_out + profile.outdoor_half_width,
                    gain_low: base.iter().map(|g| g * (1.0 - w)).collect(),
                    gain_high: base.iter().map(|g| g * (1.0 + w)).collect(),
                }
            })
            .collect(),
    }
}
