use proptest::prelude::*;

use socialgrid_core::building::{
    btu_to_kwh, kwh_to_btu, load_profiles, BuildingError, BuildingSpec, EnergyModel, FeedForwardModel,
    ProductivityCurve, RegressionModel, TabulatedModel,
};
use socialgrid_core::bundled;
use socialgrid_core::grid::BusId;

fn celsius_cubic(t_f: f64) -> f64 {
    let c = (t_f - 32.0) * 5.0 / 9.0;
    0.1647524 * c - 0.0058274 * c * c + 0.0000623 * c.powi(3) - 0.4685328
}

#[test]
fn productivity_peaks_at_71() {
    let curve = ProductivityCurve::default();
    let best = (64..=79)
        .map(f64::from)
        .max_by(|a, b| curve.productivity(*a).unwrap().total_cmp(&curve.productivity(*b).unwrap()))
        .unwrap();
    assert_eq!(best, 71.0);
    assert!((curve.productivity(71.0).unwrap() - 0.9991).abs() <= 5e-4);
}

#[test]
fn bracket_edges_are_inclusive() {
    let curve = ProductivityCurve::default();
    assert!(curve.productivity(64.0).is_ok());
    assert!(curve.productivity(79.0).is_ok());
    assert!(matches!(curve.productivity(79.5), Err(BuildingError::OutOfBracket { .. })));
    let m = RegressionModel::default();
    assert!(m.energy(10, 64.0, 50.0).is_ok());
    assert!(m.energy(21, 79.0, 100.0).is_ok());
    assert!(matches!(m.energy(22, 70.0, 80.0), Err(BuildingError::DomainViolation { variable: "hour", .. })));
    assert!(matches!(m.energy(12, 70.0, 100.5), Err(BuildingError::DomainViolation { variable: "t_out", .. })));
}

#[test]
fn unit_conversions_round_trip() {
    assert!((btu_to_kwh(3412.14) - 1.0).abs() < 1e-12);
    assert!((kwh_to_btu(btu_to_kwh(12345.6)) - 12345.6).abs() < 1e-9);
}

#[test]
fn feed_forward_single_unit_by_hand() {
    let doc = r#"{"dims": [3, 1, 1], "w1": [0.5, -0.25, 0.125], "b1": [-1.0], "w2": [1000.0], "b2": [200.0],
                 "input_offset": [10, 70, 80], "input_scale": [0.1, 0.2, 0.05], "output_scale": 2.0}"#;
    let m = FeedForwardModel::from_json(doc).unwrap();
    let (h, ti, to): (f64, f64, f64) = (15.0, 72.0, 90.0);
    let z = -1.0 + 0.5 * (h - 10.0) * 0.1 - 0.25 * (ti - 70.0) * 0.2 + 0.125 * (to - 80.0) * 0.05;
    let want = 2.0 * (200.0 + 1000.0 / (1.0 + (-z).exp()));
    assert!((m.forward(h, ti, to) - want).abs() < 1e-9);
    let back: FeedForwardModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn feed_forward_rejects_shape_mismatch() {
    let doc = r#"{"dims": [3, 2, 1], "w1": [1, 2, 3], "b1": [0, 0], "w2": [1, 1], "b2": [0]}"#;
    assert!(matches!(FeedForwardModel::from_json(doc), Err(BuildingError::InvalidModel(_))));
    let doc = r#"{"dims": [2, 1, 1], "w1": [1, 2], "b1": [0], "w2": [1], "b2": [0]}"#;
    assert!(FeedForwardModel::from_json(doc).is_err());
}

fn affine_table(a: [f64; 4]) -> TabulatedModel {
    let hours = vec![10.0, 14.0, 18.0, 21.0];
    let t_in = vec![64.0, 70.0, 79.0];
    let t_out = vec![50.0, 75.0, 100.0];
    let mut values = Vec::new();
    for h in &hours {
        for ti in &t_in {
            for to in &t_out {
                values.push(a[0] * h + a[1] * ti + a[2] * to + a[3]);
            }
        }
    }
    TabulatedModel { hours, t_in, t_out, values }
}

proptest! {
    #[test]
    fn productivity_matches_celsius_cubic(t in 64.0f64..=79.0) {
        let p = ProductivityCurve::default().productivity(t).unwrap();
        prop_assert!((p - celsius_cubic(t)).abs() < 1e-12);
        prop_assert!(p > 0.9 && p <= 1.0);
    }

    #[test]
    fn regression_moves_with_the_weather(h in 10u32..=21, t_in in 64.0f64..=79.0, t_out in 50.0f64..99.0, d in 0.01f64..1.0) {
        let m = RegressionModel::default();
        prop_assert!(m.energy(h, t_in, t_out + d).unwrap() > m.energy(h, t_in, t_out).unwrap());
        if t_in + d <= 79.0 {
            prop_assert!(m.energy(h, t_in + d, t_out).unwrap() < m.energy(h, t_in, t_out).unwrap());
        }
        let scaled = RegressionModel { scale: 0.25, ..m };
        prop_assert!((scaled.energy(h, t_in, t_out).unwrap() - 0.25 * m.energy(h, t_in, t_out).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn trilinear_table_is_exact_for_affine_data(
        a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0,
        h in 10.0f64..=21.0, ti in 64.0f64..=79.0, to in 50.0f64..=100.0,
    ) {
        let t = affine_table([a0, a1, a2, 1e4]);
        t.validate().unwrap();
        let want = a0 * h + a1 * ti + a2 * to + 1e4;
        prop_assert!((t.interpolate(h, ti, to) - want).abs() < 1e-8);
        // outside the grid the edge value is held
        prop_assert!((t.interpolate(h, ti, 120.0) - t.interpolate(h, ti, 100.0)).abs() < 1e-12);
    }
}

#[test]
fn tabulated_model_rejects_bad_axes() {
    let mut t = affine_table([1.0, 1.0, 1.0, 0.0]);
    t.values.pop();
    assert!(EnergyModel::Tabulated(t).validate().is_err());
    let mut t = affine_table([1.0, 1.0, 1.0, 0.0]);
    t.t_in = vec![70.0, 64.0, 79.0];
    assert!(t.validate().is_err());
}

fn spec(name: &str, bus: u32) -> BuildingSpec {
    BuildingSpec {
        name: name.into(),
        bus: BusId(bus),
        energy_model: EnergyModel::default(),
        productivity: ProductivityCurve::default(),
    }
}

#[test]
fn bundled_profiles_cover_the_day() {
    let specs: Vec<BuildingSpec> = bundled::scenario_config().buildings;
    let (profiles, weather) = load_profiles(bundled::PROFILES_CSV, &specs).unwrap();
    assert_eq!(profiles.len(), 5);
    assert!((0..24).all(|h| weather.outdoor.covers(h)));
    let ritchie = &profiles[0];
    assert!(ritchie.occupancy.get(12).unwrap() > ritchie.occupancy.get(10).unwrap());
}

#[test]
fn profile_table_errors() {
    let head = "hour,t_out_f,a_occupancy,a_baseline_kw\n";
    let specs = [spec("a", 2)];
    let missing = load_profiles("hour,t_out_f,a_occupancy\n10,80,1\n", &specs);
    assert!(matches!(missing, Err(BuildingError::MissingColumn(c)) if c == "a_baseline_kw"));
    let dup = load_profiles(&format!("{head}10,80,1,2\n10,81,1,2\n"), &specs);
    assert!(matches!(dup, Err(BuildingError::DuplicateHour(10))));
    let gap = load_profiles(&format!("{head}10,80,1,2\n12,81,1,2\n"), &specs);
    assert!(matches!(gap, Err(BuildingError::MissingHour(11))));
    let neg = load_profiles(&format!("{head}10,80,-1,2\n"), &specs);
    assert!(matches!(neg, Err(BuildingError::NegativeOccupancy { hour: 10, .. })));
    let hot = load_profiles(&format!("{head}10,180,1,2\n"), &specs);
    assert!(matches!(hot, Err(BuildingError::WeatherOutOfRange { hour: 10, .. })));
    let junk = load_profiles(&format!("{head}10,eighty,1,2\n"), &specs);
    assert!(junk.is_err());
}

#[test]
fn regression_corner_value() {
    let e = RegressionModel::default().energy(10, 64.0, 50.0).unwrap();
    let want = 2.0443 * 10.0 + 1.8823 * 50.0 - 1.6305 * 64.0 + 2.1181e6;
    assert!((e - want).abs() < 1e-6);
    assert!((e - 2_118_110.206).abs() < 1e-6);
}
