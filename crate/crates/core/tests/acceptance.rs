//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Built without the test harness so it prints a flat report.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ghpflex::envelope::*;
use ghpflex::opf::*;
use ghpflex::scenario::*;
use ghpflex::solver::{self, QuadraticProgram, SolveStatus, SolverSettings};
use ghpflex::thermal::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn upper_bound_sweep() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 20 {
        let b = random_building(&mut r, &format!("b{checked}"), 3, 4);
        let ghp = random_ghp(&mut r, "g", &[&b]);
        let band = random_band(&mut r, &[&b]);
        let got = upper_bound_power(&ghp, &[&b], &band, &EnvelopeOptions::default()).map_err(|e| e.to_string())?;
        let Some(oracle) = sweep_max_power(&ghp, &[&b], &band, 50) else {
            continue;
        };
        let got = got.power.ok_or("bound infeasible where the sweep is feasible")?;
        worst = worst.max((got - oracle).abs() / oracle.abs());
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 5.0,
        format!("20 instances, max rel err {worst:.2e}, {secs:.2} s"),
    )
}

fn random_inputs(r: &mut impl Rng, m: &BuildingModel) -> ThermalInputs {
    ThermalInputs {
        flows: m.radiators.iter().map(|rad| r.gen_range(0.0..=rad.flow_max)).collect(),
        supply_temp: r.gen_range(25.0..55.0),
        outdoor_temp: r.gen_range(-10.0..10.0),
        disturbances: (0..m.zone_count()).map(|_| r.gen_range(0.0..0.6)).collect(),
    }
}

fn transient_vs_steady() -> Outcome {
    let consts = PhysicalConstants::default();
    let mut r = rng(21);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = random_building(&mut r, "b", 3, 3);
        let inputs = random_inputs(&mut r, &m);
        let (fast, slow) = time_constants(&m, &inputs.flows, &consts).map_err(|e| e.to_string())?;
        let start = ThermalState::uniform(&m, r.gen_range(10.0..25.0));
        let end = simulate_final(&m, &start, &inputs, 20.0 * slow, fast / 20.0, &consts).map_err(|e| e.to_string())?;
        let steady = steady_state(&m, &inputs, &consts).map_err(|e| e.to_string())?;
        worst = worst.max(end.max_abs_diff(&steady));
    }
    check(worst <= 1e-4, format!("20 models, max |RK4 - steady| {worst:.2e} °C"))
}

fn chain_identities() -> Outcome {
    let mut r = rng(33);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = r.gen_range(1..=6);
        let b = r.gen_range(0.05..3.0);
        let q = match case {
            0..=9 => 0.0,
            10..=19 => r.gen_range(1e3..1e6),
            _ => r.gen_range(0.0..1.0),
        };
        let zone = r.gen_range(15.0..25.0);
        let supply = r.gen_range(25.0..60.0);
        let tn = *chain_solve(q, b, n, zone, supply, CW).last().unwrap();
        let t_err = (terminal_temperature(q, b, n, zone, supply, CW) - tn).abs();
        let direct = chain_heat(q, b, n, zone, supply, CW);
        let u_err = (heat_output(q, b, n, supply, zone, CW) - direct).abs() / (1.0 + direct.abs());
        worst = worst.max(t_err).max(u_err);
    }
    check(
        worst <= 1e-9,
        format!("100 draws incl. q = 0 and large q, max err {worst:.2e}"),
    )
}

fn ordering_and_containment() -> Outcome {
    let mut r = rng(404);
    let opts = EnvelopeOptions::default();
    let (mut feasible, mut compared) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    while feasible < 50 {
        let n = if feasible % 5 == 0 { 2 } else { 1 };
        let models: Vec<BuildingModel> = (0..n)
            .map(|k| random_building(&mut r, &format!("b{k}"), 3, 3))
            .collect();
        let refs: Vec<&BuildingModel> = models.iter().collect();
        let ghp = random_ghp(&mut r, "g", &refs);
        let band = random_band(&mut r, &refs);
        let env = envelope(&ghp, &refs, &band, &DesiredWeights::default(), &opts).map_err(|e| e.to_string())?;
        let (Some(lo), Some(hi), Some(d)) = (env.p_lower_aggressive, env.p_upper, env.p_desired) else {
            continue;
        };
        feasible += 1;
        worst = worst.max(lo - d).max(d - hi);
        if let Some(c) = env.p_lower_conservative {
            compared += 1;
            worst = worst.max(lo - c);
        }
    }
    check(
        worst <= 1e-9,
        format!("50 feasible instances ({compared} with a conservative bound), worst excess {worst:.2e}"),
    )
}

fn worked_instance() -> Outcome {
    let f = fixture();
    let want = |k: &str| f[k].as_f64().unwrap();
    let (up, lo, d, _, _) = worked_oracle();
    let oracle_err = (up - want("p_upper"))
        .abs()
        .max((lo - want("p_lower_aggressive")).abs())
        .max((d - want("p_desired")).abs());
    let (ghp, b) = worked();
    let bands = DisturbanceBand::from_models(&[&b]);
    let env = envelope(
        &ghp,
        &[&b],
        &bands,
        &DesiredWeights::default(),
        &EnvelopeOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let got = [env.p_upper, env.p_lower_aggressive, env.p_desired];
    let keys = ["p_upper", "p_lower_aggressive", "p_desired"];
    let mut err = 0.0f64;
    for (g, k) in got.iter().zip(keys) {
        err = err.max((g.ok_or(format!("{k} infeasible"))? - want(k)).abs());
    }
    check(
        oracle_err <= 1e-12 && err <= 1e-4,
        format!(
            "p_upper {:.6}, p_lower {:.6}, p_desired {:.6} kW; oracle err {oracle_err:.1e}, library err {err:.1e}",
            got[0].unwrap(),
            got[1].unwrap(),
            got[2].unwrap()
        ),
    )
}

fn hand_bus(id: usize, p: f64, q: f64) -> Bus {
    Bus {
        id,
        p_load: p,
        q_load: q,
        v_min: if id == 0 { 1.0 } else { 0.5 },
        v_max: if id == 0 { 1.0 } else { 1.5 },
        generator: None,
        shunt_g: 0.0,
        shunt_b: 0.0,
    }
}

/// 2-bus and 3-bus instances checked against balances written out by hand.
fn hand_instances() -> Result<f64, String> {
    let line = |from, to, r, x| Branch {
        from,
        to,
        r,
        x,
        s_max: 10.0,
    };
    let env = |bus, lo, hi, d, pf| BusEnvelope {
        bus,
        p_lower: lo,
        p_upper: hi,
        p_desired: d,
        power_factor: pf,
    };
    let mut worst = 0.0f64;
    let two = Network::new(
        "two",
        12.66,
        10.0,
        vec![hand_bus(0, 0.0, 0.0), hand_bus(1, 0.2, 0.1)],
        vec![line(0, 1, 0.05, 0.1)],
    )
    .map_err(|e| e.to_string())?;
    let envs = [env(1, 0.1, 0.5, 0.3, 0.8)];
    for (obj, ghp) in [
        (OpfObjective::MinFeeder, 0.1),
        (OpfObjective::Desired, 0.3),
        (OpfObjective::MaxFeeder, 0.5),
    ] {
        let s = solve_opf(&two, &envs, obj, &LossEstimates::zero(&two), &OpfOptions::default())
            .map_err(|e| e.to_string())?;
        let (p, q) = (0.2 + ghp, 0.1 + 0.75 * ghp);
        for e in [
            s.p0 - p,
            s.q0 - q,
            s.p_branch[0] - p,
            s.q_branch[0] - q,
            s.v2[1] - (1.0 - 2.0 * (0.05 * p + 0.1 * q)),
        ] {
            worst = worst.max(e.abs());
        }
    }
    let three = Network::new(
        "three",
        12.66,
        10.0,
        vec![hand_bus(0, 0.0, 0.0), hand_bus(1, 0.1, 0.05), hand_bus(2, 0.3, 0.1)],
        vec![line(0, 1, 0.01, 0.02), line(1, 2, 0.02, 0.03)],
    )
    .map_err(|e| e.to_string())?;
    let envs = [env(1, 0.0, 0.2, 0.1, 1.0), env(2, 0.05, 0.05, 0.05, 1.0)];
    let losses = LossEstimates {
        p: vec![0.002, 0.001],
        q: vec![0.003, 0.0015],
    };
    let s = solve_opf(&three, &envs, OpfObjective::MinFeeder, &losses, &OpfOptions::default())
        .map_err(|e| e.to_string())?;
    let p12 = 0.35 + 0.002;
    let q12 = 0.1 + 0.003;
    let p01 = 0.1 + p12 + 0.004;
    let q01 = 0.05 + q12 + 0.006;
    let w1 = 1.0 - 2.0 * (0.01 * (p01 - 0.002) + 0.02 * (q01 - 0.003));
    let w2 = w1 - 2.0 * (0.02 * (p12 - 0.001) + 0.03 * (q12 - 0.0015));
    for e in [
        s.p_branch[1] - p12,
        s.q_branch[1] - q12,
        s.p_branch[0] - p01,
        s.q_branch[0] - q01,
        s.p0 - p01,
        s.q0 - q01,
        s.v2[1] - w1,
        s.v2[2] - w2,
        s.p_ghp[1],
    ] {
        worst = worst.max(e.abs());
    }
    Ok(worst)
}

struct HorizonRuns {
    scenario: Scenario,
    first: HorizonResult,
    csv_identical: bool,
    files_identical: bool,
    seconds: [f64; 2],
}

fn run_bundled_twice() -> Result<HorizonRuns, String> {
    let scenario = load_scenario(bundled_scenario_path()).map_err(|e| e.to_string())?;
    let csvs = |res: &HorizonResult| {
        [
            envelopes_csv(&scenario, res),
            feeder_csv(&scenario, res),
            buses_csv(&scenario, res),
        ]
    };
    let t0 = Instant::now();
    let first = run_horizon(&scenario).map_err(|e| e.to_string())?;
    let s1 = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let second = run_horizon(&scenario).map_err(|e| e.to_string())?;
    let s2 = t1.elapsed().as_secs_f64();
    let csv_identical = csvs(&first) == csvs(&second);

    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let mut bytes = Vec::new();
    for (dir, res) in dirs.iter().zip([&first, &second]) {
        let files = emit_results(&scenario, res, dir.path()).map_err(|e| e.to_string())?;
        let read = |p: &std::path::Path| std::fs::read(p).unwrap_or_default();
        bytes.push([read(&files.envelopes), read(&files.feeder), read(&files.buses)]);
    }
    Ok(HorizonRuns {
        files_identical: bytes[0] == bytes[1],
        scenario,
        first,
        csv_identical,
        seconds: [s1, s2],
    })
}

fn opf_correctness(runs: &HorizonRuns) -> Outcome {
    let hand = hand_instances()?;
    let mut worst_res = 0.0f64;
    let mut worst_disk = f64::NEG_INFINITY;
    let mut optimal = 0;
    for step in &runs.first.steps {
        let (Some(opf), Some(res)) = (&step.opf, &step.residuals) else {
            continue;
        };
        for (obj, rep) in OpfObjective::ALL.iter().zip(res) {
            if opf.get(*obj).status == SolveStatus::Optimal {
                optimal += 1;
                worst_res = worst_res.max(rep.max_linear());
                worst_disk = worst_disk.max(rep.flow_disk_margin);
            }
        }
    }
    check(
        hand <= 1e-8 && worst_res <= 1e-6 && worst_disk <= 1e-9 && optimal > 0,
        format!(
            "hand err {hand:.1e} pu; {optimal} optimal bundled solves, max residual {worst_res:.1e} pu, max |S| - S_max {worst_disk:.2e} pu"
        ),
    )
}

fn feeder_ordering(runs: &HorizonRuns) -> Outcome {
    let steps = &runs.first.steps;
    let mut bad = Vec::new();
    let mut min_width = f64::INFINITY;
    for step in steps {
        let p0 = |o| step.opf_solution(o).filter(|s| s.status.is_optimal()).map(|s| s.p0);
        match (
            p0(OpfObjective::MinFeeder),
            p0(OpfObjective::Desired),
            p0(OpfObjective::MaxFeeder),
        ) {
            (Some(lo), Some(d), Some(hi)) if lo <= d + 1e-9 && d <= hi + 1e-9 && hi > lo => {
                min_width = min_width.min(runs.scenario.network.pu_to_kw(hi - lo));
            }
            _ => bad.push(step.time.to_string()),
        }
    }
    check(
        steps.len() == 169 && bad.is_empty(),
        format!(
            "{} steps, {} out of order, narrowest band {min_width:.3} kW",
            steps.len(),
            bad.len()
        ),
    )
}

fn desired_tracking(runs: &HorizonRuns) -> Outcome {
    let wide = runs.scenario.network.with_wide_limits();
    let zero = LossEstimates::zero(&wide);
    let mut worst = 0.0f64;
    for step in &runs.first.steps {
        let envs = bus_envelopes(&runs.scenario, &step.aggregates);
        let s =
            solve_opf(&wide, &envs, OpfObjective::Desired, &zero, &OpfOptions::default()).map_err(|e| e.to_string())?;
        if !s.status.is_optimal() {
            return Err(format!("{}: {}", step.time, s.status));
        }
        worst = worst.max(s.objective_value);
        for e in &envs {
            worst = worst.max((s.p_ghp[e.bus] - e.p_desired).abs());
        }
    }
    check(
        worst <= 1e-6,
        format!(
            "{} steps, max objective / tracking gap {worst:.1e} pu",
            runs.first.steps.len()
        ),
    )
}

fn performance(runs: &HorizonRuns) -> Outcome {
    let [a, b] = runs.seconds;
    let ghps = runs.scenario.ghps.len();
    check(
        a < 60.0 && b < 60.0 && runs.csv_identical && runs.files_identical && runs.first.failure_count() == 0,
        format!(
            "{} steps x {ghps} GHPs x 3 OPFs in {a:.2} s and {b:.2} s; CSV identical: {}; failures: {}",
            runs.first.steps.len(),
            runs.csv_identical && runs.files_identical,
            runs.first.failure_count()
        ),
    )
}

fn solver_oracles() -> Outcome {
    let mut r = rng(7);
    let mut lp_err = 0.0f64;
    for _ in 0..100 {
        let lp = random_lp(&mut r);
        let res = solve_lp(&lp);
        if res.status != SolveStatus::Optimal {
            return Err(format!("LP status {}", res.status));
        }
        let want = lp_oracle(&lp);
        lp_err = lp_err.max((res.objective_value - want).abs() / (1.0 + want.abs()));
    }
    let mut r = rng(11);
    let mut qp_err = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(1..=8);
        let p = r.gen_range(0..n);
        let m = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let c = DVector::from_fn(n, |_, _| r.gen_range(-2.0..2.0));
        let a = DMatrix::from_fn(p, n, |_, _| r.gen_range(-1.0..1.0));
        let b = DVector::from_fn(p, |_, _| r.gen_range(-1.0..1.0));
        let inf = DVector::from_element(n, f64::INFINITY);
        let qp = QuadraticProgram::new(
            q.clone(),
            c.clone(),
            a.clone(),
            b.clone(),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            -inf.clone(),
            inf,
        )
        .map_err(|e| e.to_string())?;
        let res = solver::solve(&qp, &SolverSettings::default());
        if res.status != SolveStatus::Optimal {
            return Err(format!("QP status {}", res.status));
        }
        qp_err = qp_err.max((&res.x - kkt_solution(&q, &c, &a, &b)).amax());
    }
    check(
        lp_err <= 1e-6 && qp_err <= 1e-8,
        format!("100 LPs, max rel objective err {lp_err:.1e}; 100 equality QPs, max |x - x*| {qp_err:.1e}"),
    )
}

fn main() -> ExitCode {
    let runs = run_bundled_twice();
    let horizon = |f: fn(&HorizonRuns) -> Outcome| -> Outcome {
        match &runs {
            Ok(r) => f(r),
            Err(e) => Err(format!("bundled horizon failed: {e}")),
        }
    };
    let results: [(&str, Outcome); 10] = [
        ("upper bound equals supply sweep", upper_bound_sweep()),
        ("transient settles on steady state", transient_vs_steady()),
        ("radiator chain identities", chain_identities()),
        ("envelope ordering and containment", ordering_and_containment()),
        ("worked single-zone instance", worked_instance()),
        ("OPF correctness", horizon(opf_correctness)),
        ("feeder ordering", horizon(feeder_ordering)),
        ("desired tracking with wide limits", horizon(desired_tracking)),
        ("performance and determinism", horizon(performance)),
        ("solver oracles", solver_oracles()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name} ({detail})", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
