use std::collections::BTreeMap;

use socialgrid_core::bundled;
use socialgrid_core::game::{predicted_prices, PayoffStructure};
use socialgrid_core::marl::{rl_game_pipeline, Bootstrap};
use socialgrid_core::pricing::PricePredictor;
use socialgrid_core::scenario::{
    emit_report, exit_code, run_scenario, Engine, HourRange, RunOptions, Scenario, ScenarioConfig, ScenarioError,
};
use socialgrid_core::social::brute_force_optimum;

fn with(f: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = bundled::scenario_config();
    f(&mut cfg);
    bundled::scenario_with(cfg).unwrap()
}

fn data_rows(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn twelve_hours_give_one_row_per_source_and_hour() {
    let report = run_scenario(&bundled::scenario(), RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    assert_eq!(data_rows(&dir.path().join("hourly.csv")).len(), 12 * (1 + 3));
    assert_eq!(data_rows(&dir.path().join("players.csv")).len(), 12 * 4 * 5);
    let day = &report.days[0];
    let sum: f64 = day.engine.iter().map(|o| o.social_cost).sum();
    assert!((sum - day.engine_total).abs() <= 1e-9 * sum.max(1.0));
    for b in &day.baselines {
        let s: f64 = b.hours.iter().map(|o| o.social_cost).sum();
        assert!((s - b.total).abs() <= 1e-9 * s.max(1.0));
    }
    assert!(report.all_converged());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 2021);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 2021);
    assert!(meta["timestamp_unix"].as_u64().is_some());
}

#[test]
fn empty_hour_range_writes_headers_only() {
    let scenario = with(|c| c.hours = HourRange { start: 12, end: 12 });
    let report = run_scenario(&scenario, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    assert!(files.iter().any(|f| f.ends_with("game_trace.csv")));
    for f in ["hourly.csv", "players.csv", "game_trace.csv"] {
        assert!(data_rows(&dir.path().join(f)).is_empty(), "{f}");
    }
    assert_eq!(report.engine_total(), 0.0);
}

#[test]
fn reruns_are_identical() {
    for engine in [Engine::Game, Engine::Rl] {
        let scenario = with(|c| {
            c.engine = engine;
            c.mdp.itmax = 3000;
        });
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_report(&run_scenario(&scenario, RunOptions::default()).unwrap(), a.path()).unwrap();
        emit_report(&run_scenario(&scenario, RunOptions::default()).unwrap(), b.path()).unwrap();
        for f in ["hourly.csv", "players.csv", "game_trace.csv", "summary.json"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{engine}: {f}");
        }
    }
}

#[test]
fn after_eight_days_history_is_self_generated() {
    let scenario = with(|c| {
        c.days = 9;
        c.hours = HourRange { start: 12, end: 14 };
    });
    let report = run_scenario(&scenario, RunOptions::default()).unwrap();
    assert_eq!(report.history_days, (1..=8).collect::<Vec<i64>>());
    // day 8 looks back to days 7, 6 and 1, all simulated
    assert!(report.history_days.iter().all(|&d| d >= 0));
    assert_eq!(report.days.len(), 9);
}

#[test]
fn single_player_single_hour_brute_force() {
    let scenario = with(|c| {
        c.engine = Engine::Brute;
        c.buildings.truncate(1);
        c.hours = HourRange { start: 13, end: 14 };
    });
    let report = run_scenario(&scenario, RunOptions::default()).unwrap();
    let row = &report.days[0].engine[0];
    let grid = &scenario.config.game.strategies;
    let best = grid
        .iter()
        .map(|&t| socialgrid_core::social::social_cost(&[t], 13, &scenario.ctx).unwrap().social_cost)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(row.social_cost, best);
}

/// With uniform prices and common payoff, all three engines land on the
/// same cost whenever the pruned sets keep the optimum. Bootstrapping from
/// the game payoff keeps the optimum in every hour.
#[test]
fn engines_agree_on_the_bundled_day() {
    let scenario = with(|c| {
        c.game.config.payoff = PayoffStructure::Common;
        c.mdp.bootstrap = Bootstrap::GamePayoff;
    });
    let ctx = &scenario.ctx;
    let history = scenario.seeded_history().unwrap();
    let pruner = scenario.train(&history, 0).unwrap();
    let grids: Vec<Vec<f64>> = scenario.players.iter().map(|s| s.setpoints.clone()).collect();
    let mut compared = 0;
    for hour in scenario.hours() {
        let start = predicted_prices(ctx, &history, 0, hour, &PricePredictor::default()).unwrap();
        let (brute_s, brute) = brute_force_optimum(hour, &grids, ctx).unwrap();
        let (_, game_s) =
            socialgrid_core::game::play_hour(&scenario.players, hour, ctx, &scenario.config.game.config, start.clone())
                .unwrap();
        let game = socialgrid_core::social::social_cost(&game_s, hour, ctx).unwrap();
        assert!((game.social_cost - brute.social_cost).abs() <= 1e-6 * brute.social_cost);
        let rl = rl_game_pipeline(&pruner, hour, ctx, &scenario.config.game.config, start).unwrap();
        let kept = rl.pruned.iter().zip(&brute_s).all(|(s, t)| s.setpoints.contains(t));
        if kept {
            let c = socialgrid_core::social::social_cost(&rl.setpoints, hour, ctx).unwrap();
            assert!((c.social_cost - brute.social_cost).abs() <= 1e-6 * brute.social_cost);
            compared += 1;
        }
    }
    assert_eq!(compared, scenario.hours().len());
}

#[test]
fn optimum_never_loses_to_71_under_congestion() {
    let mut cfg = bundled::scenario_config();
    cfg.engine = Engine::Brute;
    cfg.fixed_baselines = vec![71.0];
    cfg.hours = HourRange { start: 11, end: 15 };
    let scenario = Scenario::from_parts(
        cfg,
        bundled::DU60_CONGESTED_JSON,
        bundled::PROFILES_CSV,
        &BTreeMap::new(),
    )
    .unwrap();
    let report = run_scenario(&scenario, RunOptions::default()).unwrap();
    let day = &report.days[0];
    for (o, b) in day.engine.iter().zip(&day.baselines[0].hours) {
        assert!(o.social_cost <= b.social_cost + 1e-9, "hour {}", o.hour);
    }
}

#[test]
fn bad_configs_map_to_validation_exit_codes() {
    let text = bundled::SCENARIO_TOML.replace("days = 1", "days = 1\nbogus = 3");
    let err = ScenarioConfig::from_toml(&text).unwrap_err();
    assert_eq!(exit_code(&err), 2);

    let mut cfg = bundled::scenario_config();
    cfg.hours = HourRange { start: 20, end: 26 };
    let err = bundled::scenario_with(cfg).unwrap_err();
    assert!(matches!(err, ScenarioError::Invalid(_)));
    assert_eq!(exit_code(&err), 2);

    let mut cfg = bundled::scenario_config();
    cfg.fixed_baselines = vec![90.0];
    assert_eq!(exit_code(&bundled::scenario_with(cfg).unwrap_err()), 2);

    let mut cfg = bundled::scenario_config();
    cfg.network_path = "/nonexistent/net.json".into();
    assert!(matches!(Scenario::load(cfg), Err(ScenarioError::Io { .. })));

    let err = ScenarioError::NonConvergence { day: 0, hour: 12, rounds: 50 };
    assert_eq!(exit_code(&err), 4);
}
