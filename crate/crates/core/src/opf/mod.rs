//! Linearized optimal power flow over a distribution network with aggregated
//! heat-pump flexibility at its buses.
//!
//! Branch flows are linear in squared voltage magnitudes `w = v²` and angle
//! differences:
//!
//! ```text
//! P_ab =  g (w_a − w_b)/2 − b θ_ab + P^L_ab
//! Q_ab = −b (w_a − w_b)/2 − g θ_ab + Q^L_ab
//! ```
//!
//! with constant loss terms. The reverse flow is `P_ba = −P_ab + 2 P^L_ab`.
//! Thermal flow limits `P² + Q² ≤ S²` are replaced by an inscribed polygon.

mod assemble;
mod network;

pub use assemble::{assemble_opf, OpfLayout, OpfProblem};
pub use network::{Branch, Bus, Generator, Network};

use serde::{Deserialize, Serialize};

use crate::solver::{self, SolveStatus, SolverError, SolverSettings};

#[derive(Debug, thiserror::Error)]
pub enum OpfError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("buses {0:?} are not connected to the feeder")]
    Disconnected(Vec<usize>),
    #[error("power base must be positive, got {0} MVA")]
    ZeroBase(f64),
    #[error("invalid envelope: {0}")]
    Envelope(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Lower bound kept on the feeder injection when maximizing it, per unit.
pub const MIN_FEEDER_INJECTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpfObjective {
    /// Track the aggregated desired consumption at every bus.
    Desired,
    /// Minimize the feeder injection.
    MinFeeder,
    /// Maximize the feeder injection.
    MaxFeeder,
}

impl OpfObjective {
    pub const ALL: [OpfObjective; 3] = [OpfObjective::Desired, OpfObjective::MinFeeder, OpfObjective::MaxFeeder];

    pub fn as_str(self) -> &'static str {
        match self {
            OpfObjective::Desired => "desired",
            OpfObjective::MinFeeder => "min_feeder",
            OpfObjective::MaxFeeder => "max_feeder",
        }
    }
}

impl std::str::FromStr for OpfObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "desired" => Ok(OpfObjective::Desired),
            "min_feeder" | "min" => Ok(OpfObjective::MinFeeder),
            "max_feeder" | "max" => Ok(OpfObjective::MaxFeeder),
            _ => Err(format!(
                "unknown objective {s:?} (expected desired, min-feeder or max-feeder)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Loss terms are zero.
    #[default]
    Lossless,
    /// Loss terms estimated once from a lossless desired-tracking solve and
    /// then held constant.
    FixedBaseCase,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Lossless => "lossless",
            LossMode::FixedBaseCase => "fixed-base-case",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "lossless" => Ok(LossMode::Lossless),
            "fixed-base-case" => Ok(LossMode::FixedBaseCase),
            _ => Err(format!(
                "unknown loss mode {s:?} (expected lossless or fixed-base-case)"
            )),
        }
    }
}

/// Constant loss terms per branch, per unit, charged to each flow direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEstimates {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl LossEstimates {
    pub fn zero(network: &Network) -> Self {
        Self {
            p: vec![0.0; network.branch_count()],
            q: vec![0.0; network.branch_count()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.p.iter().chain(&self.q).all(|v| *v == 0.0)
    }
}

/// Aggregated heat-pump flexibility at one bus, per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusEnvelope {
    pub bus: usize,
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_desired: f64,
    /// Shared power factor of the heat pumps at this bus.
    pub power_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpfOptions {
    /// Sides of the polygon replacing each flow-limit disk.
    pub segments: usize,
    pub loss_mode: LossMode,
    pub solver: SolverSettings,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            segments: 8,
            loss_mode: LossMode::Lossless,
            solver: SolverSettings::default(),
        }
    }
}

/// Reactive power drawn at a constant power factor.
pub fn ghp_reactive(p: f64, power_factor: f64) -> f64 {
    p * reactive_ratio(power_factor)
}

/// `tan(arccos η)`.
pub fn reactive_ratio(power_factor: f64) -> f64 {
    (1.0 - power_factor * power_factor).max(0.0).sqrt() / power_factor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub objective: OpfObjective,
    pub status: SolveStatus,
    pub objective_value: f64,
    /// Squared voltage magnitude per bus.
    pub v2: Vec<f64>,
    /// Voltage angle per bus, rad.
    pub theta: Vec<f64>,
    /// Sending-end flows per branch.
    pub p_branch: Vec<f64>,
    pub q_branch: Vec<f64>,
    /// Generator output per bus (zero without a generator).
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    /// Heat-pump demand per bus (zero without heat pumps).
    pub p_ghp: Vec<f64>,
    pub q_ghp: Vec<f64>,
    /// Feeder injection.
    pub p0: f64,
    pub q0: f64,
    pub iterations: usize,
    pub losses: LossEstimates,
    pub segments: usize,
    /// For a failed solve, the constraint family with the largest violation at
    /// the last iterate.
    pub violated_family: Option<String>,
}

/// Solves the OPF for one objective with fixed loss terms.
pub fn solve_opf(
    network: &Network,
    envelopes: &[BusEnvelope],
    objective: OpfObjective,
    losses: &LossEstimates,
    options: &OpfOptions,
) -> Result<OpfSolution, OpfError> {
    let problem = assemble_opf(network, envelopes, objective, losses, options.segments)?;
    let result = solver::solve(&problem.qp, &options.solver);
    let mut sol = problem
        .layout
        .unpack(&result.x, &problem.ratios, objective, losses.clone(), options.segments);
    sol.status = result.status;
    sol.objective_value = objective_value(objective, envelopes, &sol);
    sol.iterations = result.iterations;
    if !result.status.is_optimal() {
        let report = residual_report(network, envelopes, &sol);
        sol.violated_family = Some(report.worst().0.to_string());
        log::debug!(
            "{} OPF {}: worst family {:?}",
            objective.as_str(),
            result.status,
            sol.violated_family
        );
    }
    Ok(sol)
}

/// `U` of the chosen objective, including the constant the program drops.
pub fn objective_value(objective: OpfObjective, envelopes: &[BusEnvelope], solution: &OpfSolution) -> f64 {
    match objective {
        OpfObjective::Desired => {
            0.5 * envelopes
                .iter()
                .map(|e| (solution.p_ghp[e.bus] - e.p_desired).powi(2))
                .sum::<f64>()
        }
        OpfObjective::MinFeeder => 0.5 * solution.p0 * solution.p0,
        OpfObjective::MaxFeeder => -solution.p0,
    }
}

/// Loss terms from a solved operating point: each direction carries half of
/// `g (θ_ab² + ((w_a − w_b)/2)²)`, and the reactive analogue with `−b`.
pub fn estimate_losses(network: &Network, base: &OpfSolution) -> LossEstimates {
    let mut out = LossEstimates::zero(network);
    for (k, br) in network.branches.iter().enumerate() {
        let th = base.theta[br.from] - base.theta[br.to];
        let dv = 0.5 * (base.v2[br.from] - base.v2[br.to]);
        let sq = th * th + dv * dv;
        out.p[k] = 0.5 * br.g() * sq;
        out.q[k] = -0.5 * br.b() * sq;
    }
    out
}

/// The three objectives solved on one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfRun {
    pub losses: LossEstimates,
    pub desired: OpfSolution,
    pub min_feeder: OpfSolution,
    pub max_feeder: OpfSolution,
}

impl OpfRun {
    pub fn get(&self, objective: OpfObjective) -> &OpfSolution {
        match objective {
            OpfObjective::Desired => &self.desired,
            OpfObjective::MinFeeder => &self.min_feeder,
            OpfObjective::MaxFeeder => &self.max_feeder,
        }
    }
}

/// Estimates losses per `options.loss_mode`, then solves all three objectives.
pub fn solve_all(network: &Network, envelopes: &[BusEnvelope], options: &OpfOptions) -> Result<OpfRun, OpfError> {
    let losses = match options.loss_mode {
        LossMode::Lossless => LossEstimates::zero(network),
        LossMode::FixedBaseCase => {
            let zero = LossEstimates::zero(network);
            let base = solve_opf(network, envelopes, OpfObjective::Desired, &zero, options)?;
            if base.status.is_optimal() {
                estimate_losses(network, &base)
            } else {
                log::warn!("lossless base case is {}; using zero losses", base.status);
                zero
            }
        }
    };
    let solve = |o| solve_opf(network, envelopes, o, &losses, options);
    Ok(OpfRun {
        desired: solve(OpfObjective::Desired)?,
        min_feeder: solve(OpfObjective::MinFeeder)?,
        max_feeder: solve(OpfObjective::MaxFeeder)?,
        losses,
    })
}

/// Largest violation per constraint family. Equalities report `|lhs − rhs|`,
/// inequalities the positive part of the excess.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub flow_p: f64,
    pub flow_q: f64,
    pub balance_p: f64,
    pub balance_q: f64,
    pub flow_polygon: f64,
    /// `max (√(P² + Q²) − S_max)` over branches and directions; negative when
    /// every flow is strictly inside its disk.
    pub flow_disk_margin: f64,
    pub generator: f64,
    pub voltage: f64,
    pub envelope: f64,
    pub reactive: f64,
    pub reference_angle: f64,
}

impl ResidualReport {
    fn families(&self) -> [(&'static str, f64); 11] {
        [
            ("branch_active_flow", self.flow_p),
            ("branch_reactive_flow", self.flow_q),
            ("active_balance", self.balance_p),
            ("reactive_balance", self.balance_q),
            ("flow_polygon", self.flow_polygon),
            ("flow_disk", self.flow_disk_margin.max(0.0)),
            ("generator_limits", self.generator),
            ("voltage_limits", self.voltage),
            ("envelope_limits", self.envelope),
            ("ghp_reactive", self.reactive),
            ("reference_angle", self.reference_angle),
        ]
    }

    /// Family with the largest violation.
    pub fn worst(&self) -> (&'static str, f64) {
        self.families()
            .into_iter()
            .fold(("none", 0.0), |best, f| if f.1 > best.1 { f } else { best })
    }

    /// Largest violation over every family except the true disk, which the
    /// polygon makes conservative.
    pub fn max_linear(&self) -> f64 {
        self.families()
            .into_iter()
            .filter(|(name, _)| *name != "flow_disk")
            .map(|(_, v)| v)
            .fold(0.0, f64::max)
    }
}

/// Evaluates every OPF constraint family at `solution`.
pub fn residual_report(network: &Network, envelopes: &[BusEnvelope], solution: &OpfSolution) -> ResidualReport {
    let s = solution;
    let mut r = ResidualReport {
        flow_disk_margin: f64::NEG_INFINITY,
        ..Default::default()
    };
    let pos = |v: f64| v.max(0.0);
    let n = network.bus_count();
    let mut net_p = vec![0.0; n];
    let mut net_q = vec![0.0; n];
    let polygon = solver::polygonize_disk(1.0, s.segments.max(4)).unwrap_or_default();

    for (k, br) in network.branches.iter().enumerate() {
        let (f, t) = (br.from, br.to);
        let (g, b) = (br.g(), br.b());
        let dw = 0.5 * (s.v2[f] - s.v2[t]);
        let th = s.theta[f] - s.theta[t];
        let (pl, ql) = (s.losses.p[k], s.losses.q[k]);
        r.flow_p = r.flow_p.max((s.p_branch[k] - (g * dw - b * th + pl)).abs());
        r.flow_q = r.flow_q.max((s.q_branch[k] - (-b * dw - g * th + ql)).abs());

        let (p, q) = (s.p_branch[k], s.q_branch[k]);
        let (pr, qr) = (-p + 2.0 * pl, -q + 2.0 * ql);
        net_p[f] += p;
        net_q[f] += q;
        net_p[t] += pr;
        net_q[t] += qr;

        let mut directions = vec![(p, q)];
        if pl != 0.0 || ql != 0.0 {
            directions.push((pr, qr));
        }
        for (fp, fq) in directions {
            for hp in &polygon {
                r.flow_polygon = r.flow_polygon.max(pos(hp.a * fp + hp.b * fq - hp.c * br.s_max));
            }
            r.flow_disk_margin = r.flow_disk_margin.max(fp.hypot(fq) - br.s_max);
        }
    }

    let sums = network.admittance_row_sums();
    for (a, bus) in network.buses.iter().enumerate() {
        let (gs, bs) = sums[a];
        let inj_p = s.p_gen[a] - bus.p_load - s.p_ghp[a];
        let inj_q = s.q_gen[a] - bus.q_load - s.q_ghp[a];
        r.balance_p = r.balance_p.max((inj_p - net_p[a] - gs * s.v2[a]).abs());
        r.balance_q = r.balance_q.max((inj_q - net_q[a] + bs * s.v2[a]).abs());

        r.voltage = r
            .voltage
            .max(pos(bus.v_min * bus.v_min - s.v2[a]))
            .max(pos(s.v2[a] - bus.v_max * bus.v_max));
        match &bus.generator {
            Some(gen) => {
                r.generator = r
                    .generator
                    .max(pos(gen.p_min - s.p_gen[a]))
                    .max(pos(s.p_gen[a] - gen.p_max))
                    .max(pos(gen.q_min - s.q_gen[a]))
                    .max(pos(s.q_gen[a] - gen.q_max));
            }
            None => r.generator = r.generator.max(s.p_gen[a].abs()).max(s.q_gen[a].abs()),
        }
    }
    let mut has_env = vec![false; n];
    for e in envelopes {
        let a = e.bus;
        has_env[a] = true;
        r.envelope = r
            .envelope
            .max(pos(e.p_lower - s.p_ghp[a]))
            .max(pos(s.p_ghp[a] - e.p_upper));
        r.reactive = r
            .reactive
            .max((s.q_ghp[a] - ghp_reactive(s.p_ghp[a], e.power_factor)).abs());
    }
    for a in 0..n {
        if !has_env[a] {
            r.envelope = r.envelope.max(s.p_ghp[a].abs());
            r.reactive = r.reactive.max(s.q_ghp[a].abs());
        }
    }
    if s.objective == OpfObjective::MaxFeeder {
        r.generator = r.generator.max(pos(MIN_FEEDER_INJECTION - s.p0));
    }
    r.reference_angle = s.theta[0].abs();
    if network.branches.is_empty() {
        r.flow_disk_margin = 0.0;
    }
    r
}
