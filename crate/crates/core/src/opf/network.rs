use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::OpfError;

/// Generator limits, per unit. Missing limits are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    #[serde(default = "neg_inf", with = "opt_bound")]
    pub p_min: f64,
    #[serde(default = "pos_inf", with = "opt_bound")]
    pub p_max: f64,
    #[serde(default = "neg_inf", with = "opt_bound")]
    pub q_min: f64,
    #[serde(default = "pos_inf", with = "opt_bound")]
    pub q_max: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// Infinite bounds are written as `null` since JSON has no infinity.
mod opt_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        // `null` is only reachable for an explicitly written key; the sign of
        // the infinity is fixed up by `Generator::normalized`.
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Generator {
    pub fn unbounded() -> Self {
        Self {
            p_min: f64::NEG_INFINITY,
            p_max: f64::INFINITY,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
        }
    }

    fn normalized(mut self) -> Self {
        for (v, inf) in [
            (&mut self.p_min, f64::NEG_INFINITY),
            (&mut self.p_max, f64::INFINITY),
            (&mut self.q_min, f64::NEG_INFINITY),
            (&mut self.q_max, f64::INFINITY),
        ] {
            if v.is_nan() {
                *v = inf;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// 0 is the feeder bus.
    pub id: usize,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub generator: Option<Generator>,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

/// Series branch, impedance in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub s_max: f64,
}

impl Branch {
    /// Series conductance.
    pub fn g(&self) -> f64 {
        self.r / (self.r * self.r + self.x * self.x)
    }

    /// Series susceptance (negative for an inductive line).
    pub fn b(&self) -> f64 {
        -self.x / (self.r * self.r + self.x * self.x)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawNetwork {
    name: String,
    base_kv: f64,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

impl TryFrom<RawNetwork> for Network {
    type Error = OpfError;

    fn try_from(raw: RawNetwork) -> Result<Self, Self::Error> {
        Network::new(raw.name, raw.base_kv, raw.base_mva, raw.buses, raw.branches)
    }
}

/// Radial or meshed distribution network in per unit on `base_mva`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct Network {
    pub name: String,
    pub base_kv: f64,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

impl Network {
    /// Validates the tables. Bus ids must be `0..n` in order. When no bus
    /// declares a generator the feeder gets an unbounded one.
    pub fn new(
        name: impl Into<String>,
        base_kv: f64,
        base_mva: f64,
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, OpfError> {
        let bad = |m: String| Err(OpfError::InvalidNetwork(m));
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(OpfError::ZeroBase(base_mva));
        }
        if buses.is_empty() {
            return bad("no buses".into());
        }
        for (i, bus) in buses.iter_mut().enumerate() {
            if bus.id != i {
                return bad(format!(
                    "bus ids must be 0, 1, 2, ... in order; position {i} holds {}",
                    bus.id
                ));
            }
            if !(bus.v_min > 0.0 && bus.v_min <= bus.v_max) {
                return bad(format!(
                    "bus {i}: voltage limits [{}, {}] invalid",
                    bus.v_min, bus.v_max
                ));
            }
            if let Some(g) = bus.generator.as_mut() {
                *g = g.normalized();
                if !(g.p_min <= g.p_max && g.q_min <= g.q_max) {
                    return bad(format!("bus {i}: generator limits out of order"));
                }
            }
        }
        if buses.iter().all(|b| b.generator.is_none()) {
            buses[0].generator = Some(Generator::unbounded());
        }
        let n = buses.len();
        let mut pairs = HashSet::new();
        for (k, br) in branches.iter().enumerate() {
            if br.from >= n || br.to >= n || br.from == br.to {
                return bad(format!("branch {k}: endpoints {}-{} invalid", br.from, br.to));
            }
            if !pairs.insert((br.from.min(br.to), br.from.max(br.to))) {
                return bad(format!("branch {k}: duplicate branch {}-{}", br.from, br.to));
            }
            if !(br.r >= 0.0 && br.r * br.r + br.x * br.x > 0.0) {
                return bad(format!("branch {k}: impedance {} + j{} invalid", br.r, br.x));
            }
            if !(br.s_max > 0.0) {
                return bad(format!("branch {k}: flow limit {} must be positive", br.s_max));
            }
        }
        let net = Self {
            name: name.into(),
            base_kv,
            base_mva,
            buses,
            branches,
        };
        let unreached = net.unreachable();
        if !unreached.is_empty() {
            return Err(OpfError::Disconnected(unreached));
        }
        Ok(net)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Buses not connected to the feeder.
    fn unreachable(&self) -> Vec<usize> {
        let n = self.bus_count();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).collect()
    }

    /// Standard nodal admittance matrix, `(G, B)`.
    pub fn admittance(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.bus_count();
        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for br in &self.branches {
            let (f, t, gs, bs) = (br.from, br.to, br.g(), br.b());
            g[(f, f)] += gs;
            g[(t, t)] += gs;
            g[(f, t)] -= gs;
            g[(t, f)] -= gs;
            b[(f, f)] += bs;
            b[(t, t)] += bs;
            b[(f, t)] -= bs;
            b[(t, f)] -= bs;
        }
        for (i, bus) in self.buses.iter().enumerate() {
            g[(i, i)] += bus.shunt_g;
            b[(i, i)] += bus.shunt_b;
        }
        (g, b)
    }

    /// Per-bus row sums `(Σ_b G_ab, Σ_b B_ab)` of the admittance matrix.
    pub fn admittance_row_sums(&self) -> Vec<(f64, f64)> {
        let (g, b) = self.admittance();
        // Series terms cancel; drop their rounding residue.
        let snap = |v: f64, diag: f64| if v.abs() <= 1e-12 * diag.abs() { 0.0 } else { v };
        (0..self.bus_count())
            .map(|i| (snap(g.row(i).sum(), g[(i, i)]), snap(b.row(i).sum(), b[(i, i)])))
            .collect()
    }

    /// kW to per unit on this network's power base.
    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / (self.base_mva * 1000.0)
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * self.base_mva * 1000.0
    }

    /// Copy with voltage, flow and generator limits relaxed far beyond any
    /// operating point. Buses with a pinned voltage keep it.
    pub fn with_wide_limits(&self) -> Self {
        let mut net = self.clone();
        for bus in &mut net.buses {
            if bus.v_min != bus.v_max {
                bus.v_min = 0.1;
                bus.v_max = 10.0;
            }
            if bus.generator.is_some() {
                bus.generator = Some(Generator::unbounded());
            }
        }
        for br in &mut net.branches {
            br.s_max = 1e4;
        }
        net
    }
}
