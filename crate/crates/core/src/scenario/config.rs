use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::profile::DisturbanceProfile;
use super::ScenarioError;
use crate::envelope::{DesiredWeights, GhpUnit, OperatingMode};
use crate::opf::{LossMode, Network};
use crate::solver::SolverSettings;
use crate::thermal::{BuildingModel, PhysicalConstants};

/// Scenario-local wall-clock time, seconds after midnight. Written `HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(pub u32);

impl ClockTime {
    pub fn from_hm(hours: u32, minutes: u32) -> Self {
        Self(hours * 3600 + minutes * 60)
    }

    pub fn seconds(self) -> u32 {
        self.0
    }

    pub fn hours(self) -> f64 {
        f64::from(self.0) / 3600.0
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, m, s) = (self.0 / 3600, self.0 / 60 % 60, self.0 % 60);
        if s == 0 {
            write!(f, "{h:02}:{m:02}")
        } else {
            write!(f, "{h:02}:{m:02}:{s:02}")
        }
    }
}

impl std::str::FromStr for ClockTime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected HH:MM, got {s:?}");
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let nums: Vec<u32> = parts
            .iter()
            .map(|p| p.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let (h, m, sec) = (nums[0], nums[1], nums.get(2).copied().unwrap_or(0));
        if h > 24 || m > 59 || sec > 59 || (h == 24 && (m > 0 || sec > 0)) {
            return Err(bad());
        }
        Ok(Self(h * 3600 + m * 60 + sec))
    }
}

impl Serialize for ClockTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub start: ClockTime,
    pub end: ClockTime,
}

impl Default for Horizon {
    fn default() -> Self {
        Self {
            start: ClockTime::from_hm(6, 0),
            end: ClockTime::from_hm(20, 0),
        }
    }
}

/// Heat-pump parameters shared by every unit of an archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhpTemplate {
    pub cop_slope: f64,
    pub cop_intercept: f64,
    pub supply_low: f64,
    pub supply_high: f64,
    /// Falls back to the scenario-wide power factor.
    #[serde(default)]
    pub power_factor: Option<f64>,
    #[serde(default)]
    pub mode: OperatingMode,
}

/// One heat pump and the buildings it serves, instantiated per cluster member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    pub ghp: GhpTemplate,
    pub buildings: Vec<BuildingModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub bus: usize,
    pub archetype: String,
    /// Number of heat pumps at the bus.
    pub count: usize,
}

/// Which lower bound is summed into the per-bus flexibility.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerSource {
    #[default]
    Aggressive,
    Conservative,
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Grid size of the exact lower-bound sweep; off when absent.
    pub exact_grid_points: Option<usize>,
    pub aggregate_lower: LowerSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpfConfig {
    pub segments: usize,
    pub loss_mode: LossMode,
}

impl Default for OpfConfig {
    fn default() -> Self {
        Self {
            segments: 8,
            loss_mode: LossMode::Lossless,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory, relative to the scenario file.
    pub dir: Option<PathBuf>,
}

fn default_granularity() -> u32 {
    300
}

fn default_power_factor() -> f64 {
    0.95
}

/// Scenario file contents. Every optional field is filled with its default
/// so that serializing a loaded scenario echoes the effective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Network file, relative to the scenario file.
    pub network: PathBuf,
    #[serde(default = "default_granularity")]
    pub granularity_s: u32,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
    #[serde(default)]
    pub profile: DisturbanceProfile,
    pub archetypes: BTreeMap<String, Archetype>,
    pub clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub desired_weights: DesiredWeights,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub opf: OpfConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub constants: PhysicalConstants,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A heat pump placed on the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedGhp {
    pub unit: GhpUnit,
    pub bus: usize,
    /// Indices into [`Scenario::buildings`], in the order of `unit.buildings`.
    pub building_indices: Vec<usize>,
}

/// Validated scenario with clusters expanded into individual heat pumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: Network,
    /// Ordered by id.
    pub ghps: Vec<PlacedGhp>,
    pub buildings: Vec<BuildingModel>,
    /// Directory of the scenario file; relative paths resolve against it.
    pub base_dir: PathBuf,
}

impl Scenario {
    /// `floor((end − start)/granularity) + 1`.
    pub fn step_count(&self) -> usize {
        let span = self.config.horizon.end.seconds() - self.config.horizon.start.seconds();
        (span / self.config.granularity_s) as usize + 1
    }

    pub fn step_times(&self) -> Vec<ClockTime> {
        let start = self.config.horizon.start.seconds();
        (0..self.step_count())
            .map(|k| ClockTime(start + k as u32 * self.config.granularity_s))
            .collect()
    }

    pub fn ghp(&self, id: &str) -> Option<&PlacedGhp> {
        self.ghps.iter().find(|g| g.unit.id == id)
    }

    pub fn building(&self, id: &str) -> Option<&BuildingModel> {
        self.buildings.iter().find(|b| b.id == id)
    }

    pub fn buildings_of(&self, ghp: &PlacedGhp) -> Vec<&BuildingModel> {
        ghp.building_indices.iter().map(|&i| &self.buildings[i]).collect()
    }

    /// Output directory from the config, resolved against the scenario file.
    pub fn output_dir(&self) -> Option<PathBuf> {
        self.config.output.dir.as_ref().map(|d| self.base_dir.join(d))
    }

    /// Builds a scenario from an already parsed config and network.
    pub fn from_parts(config: ScenarioConfig, network: Network, base_dir: PathBuf) -> Result<Self, ScenarioError> {
        validate_config(&config, &network)?;
        let mut ghps = Vec::new();
        let mut buildings = Vec::new();
        for cluster in &config.clusters {
            let arch = &config.archetypes[&cluster.archetype];
            for k in 1..=cluster.count {
                let id = format!("bus{:02}-{}-{}", cluster.bus, cluster.archetype, k);
                let mut served = Vec::new();
                let mut indices = Vec::new();
                for template in &arch.buildings {
                    let mut b = template.clone();
                    b.id = format!("{id}/{}", template.id);
                    served.push(b.id.clone());
                    indices.push(buildings.len());
                    buildings.push(b);
                }
                let t = &arch.ghp;
                let unit = GhpUnit {
                    id,
                    cop_slope: t.cop_slope,
                    cop_intercept: t.cop_intercept,
                    supply_low: t.supply_low,
                    supply_high: t.supply_high,
                    power_factor: t.power_factor.unwrap_or(config.power_factor),
                    buildings: served,
                    mode: t.mode,
                };
                unit.validate().map_err(|e| ScenarioError::Schema {
                    pointer: format!("/archetypes/{}/ghp", cluster.archetype),
                    message: e.to_string(),
                })?;
                ghps.push(PlacedGhp {
                    unit,
                    bus: cluster.bus,
                    building_indices: indices,
                });
            }
        }
        ghps.sort_by(|a, b| a.unit.id.cmp(&b.unit.id));
        let mut ids = HashSet::new();
        for g in &ghps {
            if !ids.insert(g.unit.id.clone()) {
                return Err(ScenarioError::Reference(format!(
                    "duplicate heat pump id {}",
                    g.unit.id
                )));
            }
        }
        // Heat pumps sharing a bus must share a power factor so the bus
        // aggregate has one reactive ratio.
        let mut pf: BTreeMap<usize, f64> = BTreeMap::new();
        for g in &ghps {
            let prev = *pf.entry(g.bus).or_insert(g.unit.power_factor);
            if prev != g.unit.power_factor {
                return Err(ScenarioError::Reference(format!(
                    "heat pumps at bus {} have different power factors ({prev} and {})",
                    g.bus, g.unit.power_factor
                )));
            }
        }
        Ok(Self {
            config,
            network,
            ghps,
            buildings,
            base_dir,
        })
    }
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn validate_config(c: &ScenarioConfig, network: &Network) -> Result<(), ScenarioError> {
    if c.granularity_s == 0 {
        return Err(schema("/granularity_s", "must be positive"));
    }
    if c.horizon.end <= c.horizon.start {
        return Err(schema(
            "/horizon",
            format!("end {} must be after start {}", c.horizon.end, c.horizon.start),
        ));
    }
    if !(c.power_factor > 0.0 && c.power_factor <= 1.0) {
        return Err(schema("/power_factor", format!("{} outside (0, 1]", c.power_factor)));
    }
    c.profile
        .validate()
        .map_err(|(p, m)| schema(format!("/profile{p}"), m))?;
    c.desired_weights
        .validate()
        .map_err(|e| schema("/desired_weights", e.to_string()))?;
    c.constants
        .validate()
        .map_err(|e| schema("/constants", e.to_string()))?;
    if let Some(n) = c.envelope.exact_grid_points {
        if n < 2 {
            return Err(schema("/envelope/exact_grid_points", "needs at least 2 points"));
        }
    } else if c.envelope.aggregate_lower == LowerSource::Exact {
        return Err(schema(
            "/envelope/aggregate_lower",
            "the exact lower bound needs exact_grid_points",
        ));
    }
    if c.opf.segments < 4 {
        return Err(schema("/opf/segments", "needs at least 4 segments"));
    }
    for (name, arch) in &c.archetypes {
        if arch.buildings.is_empty() {
            return Err(schema(format!("/archetypes/{name}/buildings"), "no buildings"));
        }
        let mut seen = HashSet::new();
        for (i, b) in arch.buildings.iter().enumerate() {
            if !seen.insert(&b.id) {
                return Err(schema(
                    format!("/archetypes/{name}/buildings/{i}/id"),
                    format!("duplicate building id {}", b.id),
                ));
            }
        }
        if let Some(pf) = arch.ghp.power_factor {
            if !(pf > 0.0 && pf <= 1.0) {
                return Err(schema(
                    format!("/archetypes/{name}/ghp/power_factor"),
                    format!("{pf} outside (0, 1]"),
                ));
            }
        }
    }
    if c.clusters.is_empty() {
        return Err(schema("/clusters", "no clusters"));
    }
    for (i, cl) in c.clusters.iter().enumerate() {
        if cl.bus >= network.bus_count() {
            return Err(ScenarioError::Reference(format!(
                "cluster {i} refers to bus {} but the network has {} buses",
                cl.bus,
                network.bus_count()
            )));
        }
        if !c.archetypes.contains_key(&cl.archetype) {
            return Err(ScenarioError::Reference(format!(
                "cluster {i} refers to unknown archetype {:?}",
                cl.archetype
            )));
        }
        if cl.count == 0 {
            return Err(schema(format!("/clusters/{i}/count"), "must be at least 1"));
        }
    }
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(&e.path().to_string());
        schema(pointer, e.into_inner().to_string())
    })
}

/// `clusters[0].bus` to `/clusters/0/bus`.
fn json_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        while let Some(open) = rest.find('[') {
            let head = &rest[..open];
            if !head.is_empty() {
                out.push('/');
                out.push_str(head);
            }
            let close = rest[open..].find(']').map_or(rest.len(), |c| open + c);
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = rest.get(close + 1..).unwrap_or("");
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

pub fn load_network(path: &Path) -> Result<Network, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text).map_err(|e| match e {
        ScenarioError::Schema { pointer, message } => ScenarioError::Schema {
            pointer: format!("{}#{pointer}", path.display()),
            message,
        },
        other => other,
    })
}

/// Reads, validates and expands a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config: ScenarioConfig = parse(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let network = load_network(&base_dir.join(&config.network))?;
    let scenario = Scenario::from_parts(config, network, base_dir)?;
    log::info!(
        "scenario {}: {} heat pumps, {} buildings, {} steps of {} s, power base {} MVA (1 kW = {:e} pu)",
        scenario.config.name,
        scenario.ghps.len(),
        scenario.buildings.len(),
        scenario.step_count(),
        scenario.config.granularity_s,
        scenario.network.base_mva,
        scenario.network.kw_to_pu(1.0)
    );
    Ok(scenario)
}
