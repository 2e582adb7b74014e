use nalgebra::DVector;

use super::{
    reactive_ratio, BusEnvelope, LossEstimates, Network, OpfError, OpfObjective, OpfSolution, MIN_FEEDER_INJECTION,
};
use crate::solver::{polygonize_disk, QpBuilder, QuadraticProgram, SolveStatus};

/// Variable indices of the OPF program.
///
/// Order: `w` per bus, `θ` per bus, `P` then `Q` per branch, then per bus an
/// optional generator pair `(P_g, Q_g)` and an optional heat-pump demand.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfLayout {
    pub n_bus: usize,
    pub n_branch: usize,
    pub gen: Vec<Option<usize>>,
    pub ghp: Vec<Option<usize>>,
    pub n_vars: usize,
}

impl OpfLayout {
    fn new(network: &Network, envelopes: &[BusEnvelope]) -> Self {
        let n_bus = network.bus_count();
        let n_branch = network.branch_count();
        let mut next = 2 * n_bus + 2 * n_branch;
        let mut gen = vec![None; n_bus];
        for (a, bus) in network.buses.iter().enumerate() {
            if bus.generator.is_some() {
                gen[a] = Some(next);
                next += 2;
            }
        }
        let mut ghp = vec![None; n_bus];
        for e in envelopes {
            ghp[e.bus] = Some(next);
            next += 1;
        }
        Self {
            n_bus,
            n_branch,
            gen,
            ghp,
            n_vars: next,
        }
    }

    pub fn w(&self, bus: usize) -> usize {
        bus
    }

    pub fn theta(&self, bus: usize) -> usize {
        self.n_bus + bus
    }

    pub fn p_branch(&self, k: usize) -> usize {
        2 * self.n_bus + k
    }

    pub fn q_branch(&self, k: usize) -> usize {
        2 * self.n_bus + self.n_branch + k
    }

    pub(crate) fn unpack(
        &self,
        x: &DVector<f64>,
        ratios: &[f64],
        objective: OpfObjective,
        losses: LossEstimates,
        segments: usize,
    ) -> OpfSolution {
        let p_gen: Vec<f64> = self.gen.iter().map(|g| g.map_or(0.0, |i| x[i])).collect();
        let q_gen: Vec<f64> = self.gen.iter().map(|g| g.map_or(0.0, |i| x[i + 1])).collect();
        let p_ghp: Vec<f64> = self.ghp.iter().map(|g| g.map_or(0.0, |i| x[i])).collect();
        let q_ghp = p_ghp.iter().zip(ratios).map(|(p, r)| p * r).collect();
        OpfSolution {
            objective,
            status: SolveStatus::NumericalFailure,
            objective_value: f64::NAN,
            v2: (0..self.n_bus).map(|a| x[self.w(a)]).collect(),
            theta: (0..self.n_bus).map(|a| x[self.theta(a)]).collect(),
            p_branch: (0..self.n_branch).map(|k| x[self.p_branch(k)]).collect(),
            q_branch: (0..self.n_branch).map(|k| x[self.q_branch(k)]).collect(),
            p0: p_gen[0],
            q0: q_gen[0],
            p_gen,
            q_gen,
            p_ghp,
            q_ghp,
            iterations: 0,
            losses,
            segments,
            violated_family: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpfProblem {
    pub qp: QuadraticProgram,
    pub layout: OpfLayout,
    /// Reactive-to-active ratio of the heat-pump demand per bus.
    pub ratios: Vec<f64>,
}

fn check_envelopes(network: &Network, envelopes: &[BusEnvelope]) -> Result<(), OpfError> {
    let mut seen = vec![false; network.bus_count()];
    for e in envelopes {
        let bad = |m: String| Err(OpfError::Envelope(format!("bus {}: {m}", e.bus)));
        if e.bus >= network.bus_count() {
            return bad("no such bus".into());
        }
        if std::mem::replace(&mut seen[e.bus], true) {
            return bad("more than one envelope".into());
        }
        if !(e.p_lower.is_finite() && e.p_upper.is_finite() && e.p_desired.is_finite()) {
            return bad("non-finite power".into());
        }
        if e.p_lower > e.p_upper {
            return bad(format!("lower bound {} exceeds upper bound {}", e.p_lower, e.p_upper));
        }
        if !(e.power_factor > 0.0 && e.power_factor <= 1.0) {
            return bad(format!("power factor {} outside (0, 1]", e.power_factor));
        }
    }
    Ok(())
}

/// Builds the OPF program for one objective.
pub fn assemble_opf(
    network: &Network,
    envelopes: &[BusEnvelope],
    objective: OpfObjective,
    losses: &LossEstimates,
    segments: usize,
) -> Result<OpfProblem, OpfError> {
    check_envelopes(network, envelopes)?;
    if network.buses[0].generator.is_none() {
        return Err(OpfError::InvalidNetwork("the feeder bus has no generator".into()));
    }
    if losses.p.len() != network.branch_count() || losses.q.len() != network.branch_count() {
        return Err(OpfError::InvalidNetwork(format!(
            "{} loss terms for {} branches",
            losses.p.len(),
            network.branch_count()
        )));
    }
    let polygon = polygonize_disk(1.0, segments)?;
    let layout = OpfLayout::new(network, envelopes);
    let mut ratios = vec![0.0; network.bus_count()];
    for e in envelopes {
        ratios[e.bus] = reactive_ratio(e.power_factor);
    }
    let mut qp = QpBuilder::new(layout.n_vars);

    let mut out_p: Vec<Vec<(usize, f64)>> = vec![Vec::new(); layout.n_bus];
    let mut out_q: Vec<Vec<(usize, f64)>> = vec![Vec::new(); layout.n_bus];
    let mut rhs_p = vec![0.0; layout.n_bus];
    let mut rhs_q = vec![0.0; layout.n_bus];

    for (k, br) in network.branches.iter().enumerate() {
        let (f, t) = (br.from, br.to);
        let (g, b) = (br.g(), br.b());
        let (p, q) = (layout.p_branch(k), layout.q_branch(k));
        let (pl, ql) = (losses.p[k], losses.q[k]);
        let (wf, wt, tf, tt) = (layout.w(f), layout.w(t), layout.theta(f), layout.theta(t));

        qp.add_eq(vec![(p, 1.0), (wf, -g / 2.0), (wt, g / 2.0), (tf, b), (tt, -b)], pl);
        qp.add_eq(vec![(q, 1.0), (wf, b / 2.0), (wt, -b / 2.0), (tf, g), (tt, -g)], ql);

        out_p[f].push((p, 1.0));
        out_q[f].push((q, 1.0));
        out_p[t].push((p, -1.0));
        out_q[t].push((q, -1.0));
        rhs_p[t] += 2.0 * pl;
        rhs_q[t] += 2.0 * ql;

        for hp in &polygon {
            qp.add_le(vec![(p, hp.a), (q, hp.b)], hp.c * br.s_max);
            if pl != 0.0 || ql != 0.0 {
                // reverse direction: a(−P + 2P^L) + b(−Q + 2Q^L) ≤ c
                qp.add_le(
                    vec![(p, -hp.a), (q, -hp.b)],
                    hp.c * br.s_max - 2.0 * (hp.a * pl + hp.b * ql),
                );
            }
        }
    }

    // Nodal balances:
    //   P_g − P̂ − P_GHP − Σ P_out − (ΣG) w = 0
    //   Q_g − Q̂ − Q_GHP − Σ Q_out + (ΣB) w = 0
    let sums = network.admittance_row_sums();
    for (a, bus) in network.buses.iter().enumerate() {
        let (gs, bs) = sums[a];
        let mut row_p: Vec<(usize, f64)> = out_p[a].iter().map(|&(i, c)| (i, -c)).collect();
        let mut row_q: Vec<(usize, f64)> = out_q[a].iter().map(|&(i, c)| (i, -c)).collect();
        if gs != 0.0 {
            row_p.push((layout.w(a), -gs));
        }
        if bs != 0.0 {
            row_q.push((layout.w(a), bs));
        }
        if let Some(i) = layout.gen[a] {
            row_p.push((i, 1.0));
            row_q.push((i + 1, 1.0));
            let gen = bus.generator.as_ref().expect("layout follows generators");
            qp.set_bounds(i, gen.p_min, gen.p_max);
            qp.set_bounds(i + 1, gen.q_min, gen.q_max);
        }
        if let Some(i) = layout.ghp[a] {
            row_p.push((i, -1.0));
            row_q.push((i, -ratios[a]));
        }
        qp.add_eq(row_p, bus.p_load + rhs_p[a]);
        qp.add_eq(row_q, bus.q_load + rhs_q[a]);
        qp.set_bounds(layout.w(a), bus.v_min * bus.v_min, bus.v_max * bus.v_max);
    }
    qp.add_eq(vec![(layout.theta(0), 1.0)], 0.0);

    for e in envelopes {
        let i = layout.ghp[e.bus].expect("layout follows envelopes");
        qp.set_bounds(i, e.p_lower, e.p_upper);
    }

    let p0 = layout.gen[0].expect("feeder generator checked above");
    match objective {
        OpfObjective::Desired => {
            for e in envelopes {
                let i = layout.ghp[e.bus].expect("layout follows envelopes");
                qp.add_quadratic(i, i, 1.0);
                qp.add_linear(i, -e.p_desired);
            }
        }
        OpfObjective::MinFeeder => {
            qp.add_quadratic(p0, p0, 1.0);
        }
        OpfObjective::MaxFeeder => {
            qp.add_linear(p0, -1.0);
            let (lo, hi) = qp.bounds(p0);
            qp.set_bounds(p0, lo.max(MIN_FEEDER_INJECTION), hi);
        }
    }

    Ok(OpfProblem {
        qp: qp.build()?,
        layout,
        ratios,
    })
}
