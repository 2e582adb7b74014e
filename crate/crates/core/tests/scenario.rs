use std::collections::BTreeMap;
use std::path::Path;

use ghpflex::envelope::ORDER_SLACK;
use ghpflex::opf::OpfObjective;
use ghpflex::scenario::*;

fn bundled() -> Scenario {
    load_scenario(bundled_scenario_path()).expect("bundled scenario loads")
}

fn write_variant(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> std::path::PathBuf {
    let text = std::fs::read_to_string(bundled_scenario_path()).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let net = bundled_scenario_path().parent().unwrap().join("ieee33.json");
    v["network"] = serde_json::Value::String(net.to_string_lossy().into_owned());
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn bundled_cluster_layout() {
    let s = bundled();
    let mut per_bus: BTreeMap<usize, usize> = BTreeMap::new();
    for g in &s.ghps {
        *per_bus.entry(g.bus).or_default() += 1;
    }
    let expected: BTreeMap<usize, usize> = [(5, 3), (6, 3), (25, 3), (1, 2), (2, 2), (18, 2), (22, 2)].into();
    assert_eq!(per_bus, expected);
    assert_eq!(s.ghps.len(), 17);
    assert!(s.ghps.windows(2).all(|w| w[0].unit.id < w[1].unit.id));
    assert!(s.ghps.iter().all(|g| g.unit.power_factor == 0.95));
    assert_eq!(s.config.granularity_s, 300);
    assert_eq!(s.step_count(), 169);
    assert_eq!(s.network.bus_count(), 33);
}

#[test]
fn missing_granularity_defaults_to_five_minutes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v.as_object_mut().unwrap().remove("granularity_s");
    });
    let s = load_scenario(path).unwrap();
    assert_eq!(s.config.granularity_s, 300);
    assert_eq!(s.step_count(), 169);
}

#[test]
fn schema_errors_carry_a_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| v["clusters"][1]["bus"] = "five".into());
    match load_scenario(path) {
        Err(ScenarioError::Schema { pointer, .. }) => assert_eq!(pointer, "/clusters/1/bus"),
        other => panic!("unexpected {other:?}"),
    }
    let path = write_variant(dir.path(), |v| v["granularity_s"] = 0.into());
    assert!(
        matches!(load_scenario(path), Err(ScenarioError::Schema { ref pointer, .. }) if pointer == "/granularity_s")
    );
    let path = write_variant(dir.path(), |v| v["horizon"]["end"] = "05:00".into());
    assert!(matches!(load_scenario(path), Err(ScenarioError::Schema { ref pointer, .. }) if pointer == "/horizon"));
}

#[test]
fn dangling_references_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| v["clusters"][0]["bus"] = 40.into());
    assert!(matches!(load_scenario(path), Err(ScenarioError::Reference(_))));
    let path = write_variant(dir.path(), |v| v["clusters"][0]["archetype"] = "tower".into());
    assert!(matches!(load_scenario(path), Err(ScenarioError::Reference(_))));
    let path = dir.path().join("absent.json");
    assert!(matches!(load_scenario(path), Err(ScenarioError::Io { .. })));
}

#[test]
fn bands_follow_the_profile() {
    let s = bundled();
    let g = &s.ghps[0];
    let buildings = s.buildings_of(g);
    let noon = ClockTime::from_hm(14, 0);
    let bands = disturbance_bands(&s.config.profile, noon, &buildings);
    let peak = s.config.profile.outdoor.mean + s.config.profile.outdoor.amplitude;
    for b in &bands.buildings {
        assert!((b.outdoor_low - (peak - 2.0)).abs() < 1e-12);
        assert!((b.outdoor_high - (peak + 2.0)).abs() < 1e-12);
        assert!((b.outdoor_mid() - peak).abs() < 1e-12);
        let base = s.config.profile.default_gain.unoccupied_kw;
        for (lo, hi) in b.gain_low.iter().zip(&b.gain_high) {
            assert!((lo - 0.8 * base).abs() < 1e-12 && (hi - 1.2 * base).abs() < 1e-12);
        }
    }
}

#[test]
fn unit_gain_band() {
    let mut p = DisturbanceProfile::default();
    p.default_gain.unoccupied_kw = 1.0;
    p.default_gain.occupied_kw = 1.0;
    p.outdoor.amplitude = 0.0;
    p.outdoor.mean = 5.0;
    let s = bundled();
    let buildings = s.buildings_of(&s.ghps[0]);
    for t in [ClockTime::from_hm(6, 0), ClockTime::from_hm(19, 30)] {
        let b = &disturbance_bands(&p, t, &buildings).buildings[0];
        assert_eq!((b.outdoor_low, b.outdoor_high), (3.0, 7.0));
        assert!((b.gain_low[0] - 0.8).abs() < 1e-15 && (b.gain_high[0] - 1.2).abs() < 1e-15);
        assert!((b.gain_mid()[0] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn single_step_pipeline() {
    let s = bundled();
    let step = run_step(&s, ClockTime::from_hm(12, 0)).unwrap();
    assert!(step.failures.is_empty(), "{:?}", step.failures);
    assert_eq!(step.envelopes.len(), 17);
    // aggregates are exact sums of members
    for a in &step.aggregates {
        let members: Vec<_> = s
            .ghps
            .iter()
            .zip(&step.envelopes)
            .filter(|(g, _)| g.bus == a.bus)
            .map(|(_, e)| e)
            .collect();
        assert_eq!(members.len(), a.members);
        let lo: f64 = members.iter().map(|e| e.p_lower_aggressive.unwrap()).sum();
        let hi: f64 = members.iter().map(|e| e.p_upper.unwrap()).sum();
        let d: f64 = members.iter().map(|e| e.p_desired.unwrap()).sum();
        assert_eq!((a.p_lower, a.p_upper, a.p_desired), (lo, hi, d));
    }
    for e in &step.envelopes {
        let (lo, hi, d) = (e.p_lower_aggressive.unwrap(), e.p_upper.unwrap(), e.p_desired.unwrap());
        assert!(lo - ORDER_SLACK <= d && d <= hi + ORDER_SLACK);
    }
    assert!(step.opf_optimal());
    let p = |o| step.opf_solution(o).unwrap().p0;
    assert!(p(OpfObjective::MinFeeder) <= p(OpfObjective::Desired) + 1e-9);
    assert!(p(OpfObjective::Desired) <= p(OpfObjective::MaxFeeder) + 1e-9);
    for r in step.residuals.unwrap() {
        assert!(r.max_linear() <= 1e-6, "{r:?}");
    }
}

#[test]
fn emitted_files_have_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["horizon"] = serde_json::json!({"start": "07:00", "end": "07:10"});
    });
    let s = load_scenario(path).unwrap();
    let result = run_horizon(&s).unwrap();
    assert_eq!(result.steps.len(), 3);
    let out = dir.path().join("out");
    let files = emit_results(&s, &result, &out).unwrap();
    let env = std::fs::read_to_string(&files.envelopes).unwrap();
    let feeder = std::fs::read_to_string(&files.feeder).unwrap();
    assert_eq!(env.lines().next().unwrap(), ENVELOPES_HEADER);
    assert_eq!(feeder.lines().next().unwrap(), FEEDER_HEADER);
    assert_eq!(feeder.lines().count(), 1 + 3);
    assert_eq!(env.lines().count(), 1 + 3 * 17);
    let rows: Vec<Vec<&str>> = env.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert!(rows.windows(2).all(|w| (w[0][0], w[0][1]) < (w[1][0], w[1][1])));
    assert_eq!(rows[0][0], "07:00");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.meta).unwrap()).unwrap();
    assert_eq!(meta["step_count"], 3);
    assert_eq!(meta["scenario"]["granularity_s"], 300);
    assert_eq!(meta["scenario"]["opf"]["segments"], 8);
}

#[test]
fn exact_lower_bound_can_be_aggregated() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["horizon"] = serde_json::json!({"start": "09:00", "end": "09:00"});
        v["envelope"] = serde_json::json!({"exact_grid_points": 11, "aggregate_lower": "exact"});
    });
    // a single-instant horizon is rejected: end must be after start
    assert!(load_scenario(&path).is_err());
    let path = write_variant(dir.path(), |v| {
        v["horizon"] = serde_json::json!({"start": "09:00", "end": "09:04"});
        v["envelope"] = serde_json::json!({"exact_grid_points": 11, "aggregate_lower": "exact"});
    });
    let s = load_scenario(&path).unwrap();
    assert_eq!(s.step_count(), 1);
    let step = run_step(&s, ClockTime::from_hm(9, 0)).unwrap();
    assert!(step.failures.is_empty(), "{:?}", step.failures);
    for e in &step.envelopes {
        let (a, x, c) = (
            e.p_lower_aggressive.unwrap(),
            e.p_lower_exact.unwrap(),
            e.p_lower_conservative.unwrap(),
        );
        assert!(a <= x + 1e-6 && x <= c + 1e-6, "{a} {x} {c}");
    }
    let without = write_variant(dir.path(), |v| {
        v["envelope"] = serde_json::json!({"aggregate_lower": "exact"})
    });
    assert!(matches!(load_scenario(without), Err(ScenarioError::Schema { .. })));
}
