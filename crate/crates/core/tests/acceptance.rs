mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socialgrid_core::building::ProductivityCurve;
use socialgrid_core::bundled;
use socialgrid_core::game::{
    build_payoff_tensor, play_hour, predicted_prices, verify_theorem1, GameConfig, PayoffStructure, PayoffTensor,
    StrategySet, TensorPrices,
};
use socialgrid_core::grid::{compute_gsf, BusId};
use socialgrid_core::marl::{train_q, Mdp, MdpConfig};
use socialgrid_core::pricing::{price_sensitivity_check, solve_dc_dlmp};
use socialgrid_core::scenario::{emit_report, run_scenario, Engine, RunOptions, ScenarioConfig};
use socialgrid_core::social::brute_force_optimum;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn productivity() -> Outcome {
    let curve = ProductivityCurve::default();
    let at71 = curve.productivity(71.0).map_err(|e| e.to_string())?;
    let argmax = (64..=79)
        .map(f64::from)
        .max_by(|a, b| curve.productivity(*a).unwrap().total_cmp(&curve.productivity(*b).unwrap()))
        .unwrap();
    ensure((at71 - 0.9991).abs() <= 5e-4, || format!("ξ(71) = {at71}"))?;
    ensure(argmax == 71.0, || format!("argmax {argmax}"))?;
    Ok(format!("ξ(71) = {at71:.5}, argmax {argmax}"))
}

fn uniform_price() -> Outcome {
    let net = bundled::network();
    let sol = solve_dc_dlmp(&net, &compute_gsf(&net).unwrap()).map_err(|e| e.to_string())?;
    for p in &sol.prices {
        ensure(p.total == 60.0 && p.mcc == 0.0, || {
            format!("bus {} at {} (mcc {})", p.bus, p.total, p.mcc)
        })?;
    }
    Ok(format!("{} buses at $60.000/MWh", sol.prices.len()))
}

fn congestion_direction() -> Outcome {
    let net = bundled::congested_network();
    let sol = solve_dc_dlmp(&net, &compute_gsf(&net).unwrap()).map_err(|e| e.to_string())?;
    let p32 = sol.total_price(BusId(32)).unwrap();
    let p33 = sol.total_price(BusId(33)).unwrap();
    ensure(p32 > sol.lambda && p33 > sol.lambda && p33 >= p32, || {
        format!("λ {} p32 {p32} p33 {p33}", sol.lambda)
    })?;
    Ok(format!("λ {:.4}, p32 {p32:.4}, p33 {p33:.4}", sol.lambda))
}

fn dual_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut fixtures, mut worst) = (0, 0.0f64);
    while fixtures < 5 {
        let n = rng.gen_range(12..20);
        let net = common::feasible_network(&mut rng, n, 4, (20.0, 150.0));
        let gsf = compute_gsf(&net).unwrap();
        if solve_dc_dlmp(&net, &gsf).unwrap().degenerate_duals {
            continue;
        }
        for _ in 0..10 {
            let bus = net.buses[rng.gen_range(0..net.buses.len())].id;
            let err = price_sensitivity_check(&net, &gsf, bus, 1e-3).map_err(|e| e.to_string())?;
            worst = worst.max(err);
            ensure(err <= 1e-3, || format!("fixture {fixtures} bus {bus}: error {err}"))?;
        }
        fixtures += 1;
    }
    Ok(format!("50 checks, worst relative error {worst:.2e}"))
}

fn nash_is_optimal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = GameConfig {
        payoff: PayoffStructure::Common,
        ..GameConfig::default()
    };
    let mut worst = 0.0f64;
    for f in 0..24 {
        let n = rng.gen_range(2..=3);
        let ctx = common::random_triangle_ctx(&mut rng, n);
        let grids: Vec<Vec<f64>> = (0..n).map(|_| common::random_grid(&mut rng, 1, 5)).collect();
        let hour = rng.gen_range(10..22);
        let players: Vec<StrategySet> = ctx
            .buildings
            .iter()
            .zip(&grids)
            .map(|(b, g)| StrategySet::new(b.bus, g.clone(), 64.0, 79.0).unwrap())
            .collect();
        let (out, _) = play_hour(&players, hour, &ctx, &cfg, vec![60.0; n]).map_err(|e| e.to_string())?;
        ensure(out.converged, || format!("fixture {f} did not converge"))?;
        let (_, best) = brute_force_optimum(hour, &grids, &ctx).map_err(|e| e.to_string())?;
        let cost = -out.payoffs[0];
        let rel = (cost - best.social_cost).abs() / best.social_cost.abs().max(1e-12);
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("fixture {f}: {cost} vs {}", best.social_cost))?;
    }
    Ok(format!("24 fixtures, worst relative gap {worst:.2e}"))
}

fn two_by_two(cells: [[(f64, f64); 2]; 2]) -> PayoffTensor {
    PayoffTensor::from_fn(vec![BusId(1), BusId(2)], vec![2, 2], |j| {
        let (a, b) = cells[j[0]][j[1]];
        vec![a, b]
    })
}

fn nash_residuals() -> Outcome {
    let dilemma = two_by_two([[(-1.0, -1.0), (-3.0, 0.0)], [(0.0, -3.0), (-2.0, -2.0)]]);
    let pennies = two_by_two([[(1.0, -1.0), (-1.0, 1.0)], [(-1.0, 1.0), (1.0, -1.0)]]);
    let coordination = two_by_two([[(2.0, 1.0), (0.0, 0.0)], [(0.0, 0.0), (1.0, 2.0)]]);
    let known: Vec<(&str, &PayoffTensor, Vec<Vec<f64>>)> = vec![
        ("dilemma", &dilemma, vec![vec![0.0, 1.0], vec![0.0, 1.0]]),
        ("pennies", &pennies, vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
        ("coordination pure", &coordination, vec![vec![1.0, 0.0], vec![1.0, 0.0]]),
        ("coordination mixed", &coordination, vec![vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]]),
    ];
    for (name, t, profile) in &known {
        let r = verify_theorem1(t, profile).map_err(|e| e.to_string())?;
        ensure(r <= 1e-9, || format!("{name}: residual {r} at its equilibrium"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut least = f64::INFINITY;
    for i in 0..10 {
        let (name, t, profile) = &known[i % known.len()];
        let perturbed: Vec<Vec<f64>> = profile
            .iter()
            .map(|p| {
                let d = rng.gen_range(0.05..0.3) * if p[0] > 0.5 { -1.0 } else { 1.0 };
                vec![p[0] + d, p[1] - d]
            })
            .collect();
        let r = verify_theorem1(t, &perturbed).map_err(|e| e.to_string())?;
        least = least.min(r);
        ensure(r > 1e-3, || format!("{name} perturbed {perturbed:?}: residual {r}"))?;
    }
    Ok(format!("4 equilibria at 0, smallest perturbed residual {least:.3}"))
}

struct TwoState;

const REWARD: [[f64; 2]; 2] = [[1.0, -2.0], [0.5, 3.0]];

impl Mdp for TwoState {
    fn num_states(&self) -> usize {
        2
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn initial_state(&self) -> usize {
        0
    }
    /// action a moves to state a
    fn step(&self, state: usize, action: usize) -> (usize, f64) {
        (action, REWARD[state][action])
    }
}

fn q_oracle() -> Outcome {
    let cfg = MdpConfig::default();
    let tau = cfg.tau();
    let mut v = [0.0f64; 2];
    for _ in 0..10_000 {
        v = [0, 1].map(|s| (0..2).map(|a| REWARD[s][a] + tau * v[a]).fold(f64::NEG_INFINITY, f64::max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = train_q(&TwoState, &cfg, &mut rng, 0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for s in 0..2 {
        for a in 0..2 {
            let want = REWARD[s][a] + tau * v[a];
            let gap = (q.get(s, a) - want).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-3, || format!("Q({s},{a}) = {} vs {want}", q.get(s, a)))?;
        }
    }
    Ok(format!("max |Q − Q*| = {worst:.2e}"))
}

fn daily_total(cfg: ScenarioConfig) -> Result<f64, String> {
    let scenario = bundled::scenario_with(cfg).map_err(|e| e.to_string())?;
    Ok(run_scenario(&scenario, RunOptions::default())
        .map_err(|e| e.to_string())?
        .engine_total())
}

fn rl_matches_game() -> Outcome {
    let mut cfg = bundled::scenario_config();
    cfg.mdp.prune_k = 2;
    cfg.engine = Engine::Game;
    let game = daily_total(cfg.clone())?;
    cfg.engine = Engine::Rl;
    let rl = daily_total(cfg)?;
    let gap = (rl - game).abs() / game;
    ensure(gap <= 0.01, || format!("rl ${rl:.2} vs game ${game:.2} ({:.3}%)", 100.0 * gap))?;
    Ok(format!("rl ${rl:.2} vs game ${game:.2} ({:.3}%)", 100.0 * gap))
}

fn fastest(repeats: usize, mut f: impl FnMut() -> u64) -> (Duration, u64) {
    let mut best = Duration::MAX;
    let mut count = 0;
    for _ in 0..repeats {
        let t = Instant::now();
        count = f();
        best = best.min(t.elapsed());
    }
    (best, count)
}

fn scaling() -> Outcome {
    let scenario = bundled::scenario();
    let history = scenario.seeded_history().map_err(|e| e.to_string())?;
    let pruner = scenario.train(&history, 0).map_err(|e| e.to_string())?;
    let hour = 14;
    let prices = predicted_prices(&scenario.ctx, &history, 0, hour, &scenario.config.predictor())
        .map_err(|e| e.to_string())?;
    let pruned = pruner.pruned_sets(hour, &prices).map_err(|e| e.to_string())?;
    let mut ratios = Vec::new();
    for n in 2..=5 {
        let mut ctx = scenario.ctx.clone();
        ctx.buildings.truncate(n);
        let full_sets = &scenario.players[..n];
        let small_sets = &pruned[..n];
        let build = |sets: &[StrategySet]| {
            build_payoff_tensor(sets, hour, &ctx, TensorPrices::Dlmp, PayoffStructure::Individual)
                .unwrap()
                .evaluations
        };
        let (t_full, full) = fastest(if n < 5 { 3 } else { 1 }, || build(full_sets));
        let (t_small, small) = fastest(15, || build(small_sets));
        ensure(full == 7u64.pow(n as u32) && small == 2u64.pow(n as u32), || {
            format!("n={n}: {full} and {small} evaluations")
        })?;
        let count_ratio = full as f64 / small as f64;
        ensure((count_ratio - 3.5f64.powi(n as i32)).abs() < 1e-9, || format!("n={n}: ratio {count_ratio}"))?;
        ratios.push(t_full.as_secs_f64() / t_small.as_secs_f64());
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    ensure(ratios.windows(2).all(|w| w[1] > w[0]), || format!("time ratios {shown:?}"))?;
    Ok(format!("counts (7/2)^n for n=2..5, time ratios {}", shown.join(" < ")))
}

fn dominance() -> Outcome {
    let report = run_scenario(&bundled::scenario(), RunOptions::default()).map_err(|e| e.to_string())?;
    let engine = report.engine_total();
    let baselines = report.baseline_totals();
    ensure(baselines.len() == 3, || format!("{} baselines", baselines.len()))?;
    for (t, total) in &baselines {
        ensure(engine <= *total + 1e-9, || format!("engine ${engine:.2} vs {t} °F ${total:.2}"))?;
    }
    let shown: Vec<String> = baselines.iter().map(|(t, c)| format!("{t} °F ${c:.2}")).collect();
    Ok(format!("engine ${engine:.2}; {}", shown.join(", ")))
}

fn determinism() -> Outcome {
    let scenario = bundled::scenario();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let report = run_scenario(&scenario, RunOptions::default()).map_err(|e| e.to_string())?;
        emit_report(&report, d.path()).map_err(|e| e.to_string())?;
    }
    let [a, b] = dirs.map(|d| std::fs::read(d.path().join("hourly.csv")).unwrap());
    ensure(!a.is_empty() && a == b, || "hourly.csv differs between runs".to_string())?;
    Ok(format!("hourly.csv identical ({} bytes)", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("productivity peak", Duration::from_millis(1), productivity),
        ("uncongested uniform price", Duration::from_secs(1), uniform_price),
        ("congestion direction", Duration::from_secs(1), congestion_direction),
        ("dual validity", Duration::from_secs(10), dual_validity),
        ("equilibrium is the social optimum", Duration::from_secs(30), nash_is_optimal),
        ("equilibrium residuals", Duration::from_secs(1), nash_residuals),
        ("Q-learning oracle", Duration::from_secs(5), q_oracle),
        ("RL matches the game", Duration::from_secs(300), rl_matches_game),
        ("pruning scales", Duration::from_secs(600), scaling),
        ("optimum beats fixed setpoints", Duration::from_secs(300), dominance),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = started.elapsed();
        let result = result.and_then(|msg| {
            if took <= budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {took:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{took:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
