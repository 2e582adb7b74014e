//! Random instance generators and reference computations shared by the
//! integration tests. The references avoid the library's own formulas: they
//! solve the plain linear systems or enumerate vertices directly.

#![allow(dead_code)]

use ghpflex::envelope::{BuildingBand, DisturbanceBand, GhpUnit, OperatingMode};
use ghpflex::solver::{self, QpBuilder, SolverSettings};
use ghpflex::thermal::{BuildingModel, InterZoneWall, RadiatorChain, ThermalZone, WATER_SPECIFIC_HEAT};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CW: f64 = WATER_SPECIFIC_HEAT;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random building with every zone on the exterior and a random wall graph.
/// Element capacities are kept large enough that long simulations stay cheap.
pub fn random_building(rng: &mut impl Rng, id: &str, max_zones: usize, max_elements: usize) -> BuildingModel {
    let nz = rng.gen_range(1..=max_zones);
    let zones: Vec<ThermalZone> = (0..nz)
        .map(|i| {
            let low = rng.gen_range(18.0..20.0);
            let high = rng.gen_range(21.0..24.0);
            ThermalZone {
                id: format!("z{i}"),
                heat_capacity: rng.gen_range(500.0..3000.0),
                envelope_resistance: Some(rng.gen_range(2.0..8.0)),
                comfort_low: low,
                comfort_high: high,
                setpoint: rng.gen_range(low..=high),
                disturbance_low: 0.0,
                disturbance_high: 0.0,
            }
        })
        .collect();
    let mut walls = Vec::new();
    for a in 0..nz {
        for b in a + 1..nz {
            if rng.gen_bool(0.6) {
                walls.push(InterZoneWall {
                    zone_a: format!("z{a}"),
                    zone_b: format!("z{b}"),
                    heat_capacity: rng.gen_range(200.0..1500.0),
                    resistance: rng.gen_range(1.0..6.0),
                });
            }
        }
    }
    let radiators = (0..nz)
        .map(|i| RadiatorChain {
            zone: format!("z{i}"),
            element_count: rng.gen_range(1..=max_elements),
            element_capacity: rng.gen_range(20.0..60.0),
            element_resistance: rng.gen_range(1.0..4.0),
            flow_max: rng.gen_range(0.05..0.2),
        })
        .collect();
    let t = rng.gen_range(-8.0..8.0);
    BuildingModel::new(id, zones, walls, radiators, t - 2.0, t + 2.0).expect("generated model is valid")
}

pub fn random_ghp(rng: &mut impl Rng, id: &str, buildings: &[&BuildingModel]) -> GhpUnit {
    let supply_low = rng.gen_range(25.0..35.0);
    let supply_high = supply_low + rng.gen_range(5.0..20.0);
    let cop_slope = rng.gen_range(0.02..0.08);
    GhpUnit {
        id: id.into(),
        cop_slope,
        cop_intercept: cop_slope * supply_high + rng.gen_range(1.5..4.0),
        supply_low,
        supply_high,
        power_factor: 0.95,
        buildings: buildings.iter().map(|b| b.id.clone()).collect(),
        mode: OperatingMode::Heating,
    }
}

pub fn random_band(rng: &mut impl Rng, models: &[&BuildingModel]) -> DisturbanceBand {
    let t = rng.gen_range(-8.0..8.0);
    let w = rng.gen_range(0.0..3.0);
    DisturbanceBand {
        buildings: models
            .iter()
            .map(|m| {
                let base: Vec<f64> = (0..m.zone_count()).map(|_| rng.gen_range(0.0..0.5)).collect();
                BuildingBand {
                    outdoor_low: t - w,
                    outdoor_high: t + w,
                    gain_low: base.iter().map(|g| 0.8 * g).collect(),
                    gain_high: base.iter().map(|g| 1.2 * g).collect(),
                }
            })
            .collect(),
    }
}

/// Steady-state element temperatures of an `n`-element radiator chain, from a
/// dense solve of the element balances
/// `B (Z − T_k) + c_w q (T_{k−1} − T_k) = 0` with `T_0 = T_s`.
pub fn chain_solve(q: f64, b: f64, n: usize, zone: f64, supply: f64, cw: f64) -> Vec<f64> {
    let cq = cw * q;
    let mut m = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for k in 0..n {
        m[(k, k)] = -(b + cq);
        r[k] = -b * zone;
        if k == 0 {
            r[k] -= cq * supply;
        } else {
            m[(k, k - 1)] = cq;
        }
    }
    m.lu()
        .solve(&r)
        .expect("chain system is nonsingular")
        .iter()
        .copied()
        .collect()
}

/// Heat released by the chain, `Σ B (T_k − Z)`.
pub fn chain_heat(q: f64, b: f64, n: usize, zone: f64, supply: f64, cw: f64) -> f64 {
    chain_solve(q, b, n, zone, supply, cw)
        .iter()
        .map(|t| b * (t - zone))
        .sum()
}

/// Heat per degree of supply-to-zone difference at flow `q`, from the chain.
pub fn chain_kappa(q: f64, b: f64, n: usize, cw: f64) -> f64 {
    chain_heat(q, b, n, 0.0, 1.0, cw)
}

/// Minimum of `c·x` over `{G x ≤ h, A x = e}` by enumerating every vertex.
/// The feasible set must be bounded and nonempty. Returns the optimum value.
pub fn lp_vertex_min(c: &[f64], g: &[Vec<f64>], h: &[f64], a: &[Vec<f64>], e: &[f64], tol: f64) -> Option<f64> {
    let n = c.len();
    let need = n.checked_sub(a.len())?;
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(need);
    fn walk(start: usize, need: usize, pick: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize]), total: usize) {
        if pick.len() == need {
            visit(pick);
            return;
        }
        for i in start..total {
            pick.push(i);
            walk(i + 1, need, pick, visit, total);
            pick.pop();
        }
    }
    let mut visit = |rows: &[usize]| {
        let mut m = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for (k, row) in a.iter().enumerate() {
            for j in 0..n {
                m[(k, j)] = row[j];
            }
            r[k] = e[k];
        }
        for (k, &i) in rows.iter().enumerate() {
            for j in 0..n {
                m[(a.len() + k, j)] = g[i][j];
            }
            r[a.len() + k] = h[i];
        }
        let lu = m.lu();
        if lu.determinant().abs() < 1e-10 {
            return;
        }
        let Some(x) = lu.solve(&r) else { return };
        let feasible = g
            .iter()
            .zip(h)
            .all(|(row, hi)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= hi + tol)
            && a.iter()
                .zip(e)
                .all(|(row, ei)| (row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() - ei).abs() <= tol);
        if feasible {
            let f: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            if best.is_none_or(|b| f < b) {
                best = Some(f);
            }
        }
    };
    walk(0, need, &mut pick, &mut visit, g.len());
    best
}

/// Largest total heat deliverable at a fixed supply temperature with the
/// disturbances free in their bands. Wall temperatures are kept as explicit
/// unknowns and radiator limits come from the chain solve.
pub fn max_heat_at_supply(
    ghp: &GhpUnit,
    models: &[&BuildingModel],
    band: &DisturbanceBand,
    supply: f64,
) -> Option<f64> {
    let mut n = 0;
    let mut alloc = |k: usize| {
        let first = n;
        n += k;
        first
    };
    struct Idx {
        z: usize,
        w: usize,
        u: usize,
        q: usize,
        o: usize,
    }
    let idx: Vec<Idx> = models
        .iter()
        .map(|m| Idx {
            z: alloc(m.zone_count()),
            w: alloc(m.wall_count()),
            u: alloc(m.zone_count()),
            q: alloc(m.zone_count()),
            o: alloc(1),
        })
        .collect();
    let mut qp = QpBuilder::new(n);
    for ((m, b), ix) in models.iter().zip(&band.buildings).zip(&idx) {
        for (i, zone) in m.zones.iter().enumerate() {
            let r = zone.envelope_resistance.expect("generated zones are exterior");
            let mut row = vec![(ix.u + i, 1.0), (ix.q + i, 1.0), (ix.o, 1.0 / r), (ix.z + i, -1.0 / r)];
            for (w, wall) in m.walls.iter().enumerate() {
                if wall.zone_a == zone.id || wall.zone_b == zone.id {
                    row.push((ix.w + w, 1.0 / wall.resistance));
                    row.push((ix.z + i, -1.0 / wall.resistance));
                }
            }
            qp.add_eq(row, 0.0);
            let rad = &m.radiators[i];
            let k = chain_kappa(rad.flow_max, 1.0 / rad.element_resistance, rad.element_count, CW);
            // u ≤ κ̄ (T_s − Z)
            qp.add_le(vec![(ix.u + i, 1.0), (ix.z + i, k)], k * supply);
            qp.set_bounds(ix.u + i, 0.0, f64::INFINITY);
            qp.set_bounds(ix.z + i, zone.comfort_low, zone.comfort_high);
            qp.set_bounds(ix.q + i, b.gain_low[i], b.gain_high[i]);
            qp.add_linear(ix.u + i, -1.0);
        }
        for (w, wall) in m.walls.iter().enumerate() {
            let a = m.zones.iter().position(|z| z.id == wall.zone_a).unwrap();
            let c = m.zones.iter().position(|z| z.id == wall.zone_b).unwrap();
            let g = 1.0 / wall.resistance;
            qp.add_eq(vec![(ix.z + a, g), (ix.z + c, g), (ix.w + w, -2.0 * g)], 0.0);
        }
        qp.set_bounds(ix.o, b.outdoor_low, b.outdoor_high);
    }
    let _ = ghp;
    let res = solver::solve(&qp.build().ok()?, &SolverSettings::default());
    res.status.is_optimal().then(|| -res.objective_value)
}

/// `n` evenly spaced points over `[lo, hi]`, endpoints included.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

/// Maximum power over a uniform supply-temperature sweep.
pub fn sweep_max_power(ghp: &GhpUnit, models: &[&BuildingModel], band: &DisturbanceBand, points: usize) -> Option<f64> {
    grid(ghp.supply_low, ghp.supply_high, points)
        .into_iter()
        .filter_map(|t| max_heat_at_supply(ghp, models, band, t).map(|h| h / (ghp.cop_intercept - ghp.cop_slope * t)))
        .reduce(f64::max)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Minimum of `½ xᵀQx + cᵀx` over `{G x ≤ h}` for strictly convex `Q`, by
/// solving the KKT system of every active set and keeping the best feasible
/// stationary point. Only for a handful of rows.
pub fn qp_active_set_min(q: &DMatrix<f64>, c: &DVector<f64>, g: &[Vec<f64>], h: &[f64]) -> Option<(DVector<f64>, f64)> {
    let n = c.len();
    let m = g.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let p = active.len();
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(q);
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(-c));
        for (r, &i) in active.iter().enumerate() {
            for j in 0..n {
                k[(n + r, j)] = g[i][j];
                k[(j, n + r)] = g[i][j];
            }
            rhs[n + r] = h[i];
        }
        let lu = k.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let feasible = g
            .iter()
            .zip(h)
            .all(|(row, hi)| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= hi + 1e-9);
        if !feasible {
            continue;
        }
        let f = 0.5 * (x.transpose() * q * &x)[(0, 0)] + c.dot(&x);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((x, f));
        }
    }
    best
}

pub struct Lp {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub e: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Feasible LP with a bounded box, up to four random inequalities and at most
/// one equality, all built around an interior point.
pub fn random_lp(rng: &mut impl Rng) -> Lp {
    let n = rng.gen_range(1..=6);
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
    let x0: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.gen_range(*l..*u)).collect();
    let row = |rng: &mut dyn rand::RngCore| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let dot = |r: &[f64]| r.iter().zip(&x0).map(|(p, q)| p * q).sum::<f64>();
    let m = rng.gen_range(0..=4);
    let mut g: Vec<Vec<f64>> = Vec::new();
    let mut h = Vec::new();
    for _ in 0..m {
        let r = row(rng);
        h.push(dot(&r) + rng.gen_range(0.0..1.0));
        g.push(r);
    }
    let (mut a, mut e) = (Vec::new(), Vec::new());
    if n > 1 && rng.gen_bool(0.3) {
        let r = row(rng);
        e.push(dot(&r));
        a.push(r);
    }
    Lp {
        c: row(rng),
        g,
        h,
        a,
        e,
        lower,
        upper,
    }
}

pub fn solve_lp(lp: &Lp) -> solver::SolveResult {
    let n = lp.c.len();
    let mut b = QpBuilder::new(n);
    for (i, ci) in lp.c.iter().enumerate() {
        b.add_linear(i, *ci);
        b.set_bounds(i, lp.lower[i], lp.upper[i]);
    }
    for (r, hi) in lp.g.iter().zip(&lp.h) {
        b.add_le(r.iter().copied().enumerate().collect(), *hi);
    }
    for (r, ei) in lp.a.iter().zip(&lp.e) {
        b.add_eq(r.iter().copied().enumerate().collect(), *ei);
    }
    solver::solve(&b.build().unwrap(), &SolverSettings::default())
}

pub fn lp_oracle(lp: &Lp) -> f64 {
    let n = lp.c.len();
    let mut g = lp.g.clone();
    let mut h = lp.h.clone();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        g.push(e.clone());
        h.push(lp.upper[i]);
        e[i] = -1.0;
        g.push(e);
        h.push(-lp.lower[i]);
    }
    lp_vertex_min(&lp.c, &g, &h, &lp.a, &lp.e, 1e-9).expect("feasible by construction")
}

/// Strictly convex QP with only equalities, solved through its KKT system.
pub fn kkt_solution(q: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = q.nrows();
    let p = a.nrows();
    let mut k = DMatrix::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(q);
    k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
    k.view_mut((n, 0), (p, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-c));
    rhs.rows_mut(n, p).copy_from(b);
    k.lu().solve(&rhs).unwrap().rows(0, n).into_owned()
}

pub fn worked() -> (GhpUnit, BuildingModel) {
    let zone = ThermalZone {
        id: "z".into(),
        heat_capacity: 1000.0,
        envelope_resistance: Some(2.0),
        comfort_low: 18.0,
        comfort_high: 22.0,
        setpoint: 20.0,
        disturbance_low: 0.0,
        disturbance_high: 0.2,
    };
    let rad = RadiatorChain {
        zone: "z".into(),
        element_count: 1,
        element_capacity: 10.0,
        element_resistance: 0.5,
        flow_max: 2.0 / CW,
    };
    let b = BuildingModel::new("b", vec![zone], vec![], vec![rad], -2.0, 2.0).unwrap();
    let ghp = GhpUnit {
        id: "g".into(),
        cop_slope: 0.05,
        cop_intercept: 5.0,
        supply_low: 30.0,
        supply_high: 45.0,
        power_factor: 0.95,
        buildings: vec!["b".into()],
        mode: OperatingMode::Heating,
    };
    (ghp, b)
}

pub fn fixture() -> serde_json::Value {
    serde_json::from_str(include_str!("../fixtures/worked_single_zone.json")).unwrap()
}

/// Reference values for the worked instance. With `u = (Z − T_o)/R − Q` the
/// bounds are LPs over `(Z, T_o, Q[, T_s])` solved by vertex enumeration, and
/// the desired point is a QP over `(Z, T_s)` solved by active-set enumeration.
pub fn worked_oracle() -> (f64, f64, f64, f64, f64) {
    let kappa = chain_kappa(2.0 / CW, 2.0, 1, CW);
    let (r, lo_s, hi_s) = (2.0, 30.0, 45.0);
    let cop = |t: f64| 5.0 - 0.05 * t;
    let boxes = |g: &mut Vec<Vec<f64>>, h: &mut Vec<f64>, n: usize, b: &[(f64, f64)]| {
        for (i, (l, u)) in b.iter().enumerate() {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            g.push(e.clone());
            h.push(*u);
            e[i] = -1.0;
            g.push(e);
            h.push(-l);
        }
    };
    // u as a row over (Z, T_o, Q)
    let u = [1.0 / r, -1.0 / r, -1.0];

    // upper: T_s fixed at the top of its range
    let mut g = vec![u.map(|v| -v).to_vec(), vec![u[0] + kappa, u[1], u[2]]];
    let mut h = vec![0.0, kappa * hi_s];
    boxes(&mut g, &mut h, 3, &[(18.0, 22.0), (-2.0, 2.0), (0.0, 0.2)]);
    let c: Vec<f64> = u.iter().map(|v| -v / cop(hi_s)).collect();
    let p_upper = -lp_vertex_min(&c, &g, &h, &[], &[], 1e-12).unwrap();

    // aggressive lower: T_s free, heat also capped at the loosest supply
    let mut g = vec![
        vec![-u[0], -u[1], -u[2], 0.0],
        vec![u[0] + kappa, u[1], u[2], -kappa],
        vec![u[0] + kappa, u[1], u[2], 0.0],
    ];
    let mut h = vec![0.0, 0.0, kappa * hi_s];
    boxes(
        &mut g,
        &mut h,
        4,
        &[(18.0, 22.0), (-2.0, 2.0), (0.0, 0.2), (lo_s, hi_s)],
    );
    let c = [u[0] / cop(lo_s), u[1] / cop(lo_s), u[2] / cop(lo_s), 0.0];
    let p_lower = lp_vertex_min(&c, &g, &h, &[], &[], 1e-12).unwrap();

    // desired: midpoint disturbances T_o = 0, Q = 0.1, so u = Z/2 − 0.1
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.01]);
    let cvec = DVector::from_vec(vec![-20.0, -0.01 * lo_s]);
    let g = vec![
        vec![-0.5, 0.0],
        vec![0.5 + kappa, -kappa],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ];
    let h = vec![-0.1, 0.1, 22.0, -18.0, hi_s, -lo_s];
    let (x, _) = qp_active_set_min(&q, &cvec, &g, &h).unwrap();
    let heat = x[0] / 2.0 - 0.1;
    (p_upper, p_lower, heat / cop(x[1]), x[1], x[0])
}
