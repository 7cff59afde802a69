//! Scenario runner: loads a network, building profiles and a TOML config,
//! optimizes every simulated hour with the selected engine, evaluates the
//! fixed-setpoint baselines and writes the reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::building::{load_profiles, BuildingError, BuildingSpec, EnergyModel, FeedForwardModel};
use crate::exec::Execution;
use crate::game::{
    default_setpoint_grid, play_hour, predicted_prices, uniform_strategy_sets, GameConfig, GameError, GameOutcome,
    StrategySet,
};
use crate::grid::{build_network, GridError};
use crate::marl::{rl_game_pipeline, train_pruner, MarlError, MdpConfig, Pruner, TrainingPrices, RNG_ALGORITHM};
use crate::pricing::{PriceHistory, PricePredictor, PricingError};
use crate::social::{brute_force_optimum, social_cost, HourlyOutcome, SocialContext, SocialCostParams, SocialError};

/// Days of self-generated history kept; enough for the d−7 lag.
const HISTORY_DAYS: i64 = 8;
const SEED_DAYS: i64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Brute,
    #[default]
    Game,
    Rl,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Brute => "brute",
            Engine::Game => "game",
            Engine::Rl => "rl",
        })
    }
}

/// Half-open hour range `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourRange {
    pub start: u32,
    pub end: u32,
}

impl Default for HourRange {
    fn default() -> Self {
        Self { start: 10, end: 22 }
    }
}

impl HourRange {
    pub fn hours(&self) -> Vec<u32> {
        (self.start..self.end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSettings {
    #[serde(flatten)]
    pub config: GameConfig,
    #[serde(default = "default_setpoint_grid")]
    pub strategies: Vec<f64>,
}

impl Default for GameSettings {
    fn default() -> Self {
        Self {
            config: GameConfig::default(),
            strategies: default_setpoint_grid(),
        }
    }
}

fn default_days() -> usize {
    1
}

fn default_baselines() -> Vec<f64> {
    vec![67.0, 71.0, 75.0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_reference() -> f64 {
    71.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network_path: PathBuf,
    pub profiles_path: PathBuf,
    /// Feed-forward weights per building name; replaces that building's
    /// energy model.
    #[serde(default)]
    pub weights_paths: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub hours: HourRange,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_baselines")]
    pub fixed_baselines: Vec<f64>,
    #[serde(default)]
    pub social: SocialCostParams,
    #[serde(default)]
    pub game: GameSettings,
    #[serde(default)]
    pub mdp: MdpConfig,
    pub buildings: Vec<BuildingSpec>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    /// Fail the run when the game does not converge.
    #[serde(default)]
    pub strict: bool,
    /// Q-tables to reuse with the rl engine instead of training.
    #[serde(default)]
    pub qtable_path: Option<PathBuf>,
    /// Setpoint used to generate the seed price history.
    #[serde(default = "default_reference")]
    pub reference_setpoint: f64,
    #[serde(default)]
    pub predictor: Option<PricePredictor>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Building(#[from] BuildingError),
    #[error(transparent)]
    Social(#[from] SocialError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Marl(#[from] MarlError),
    #[error("game did not converge on day {day}, hour {hour} after {rounds} rounds")]
    NonConvergence { day: i64, hour: u32, rounds: usize },
    #[error("writing {path}: {message}")]
    Report { path: PathBuf, message: String },
}

impl From<PricingError> for ScenarioError {
    fn from(e: PricingError) -> Self {
        ScenarioError::Social(SocialError::Pricing(e))
    }
}

/// Process exit status for an error: 2 invalid input, 3 solver failure,
/// 4 non-convergence under `strict`, 1 anything else.
pub fn exit_code(err: &ScenarioError) -> i32 {
    fn social(e: &SocialError) -> i32 {
        match e {
            SocialError::Pricing(PricingError::Grid(_)) => 2,
            SocialError::Pricing(_) => 3,
            _ => 2,
        }
    }
    match err {
        ScenarioError::Io { .. } | ScenarioError::Report { .. } => 1,
        ScenarioError::Config(_)
        | ScenarioError::Invalid(_)
        | ScenarioError::Grid(_)
        | ScenarioError::Building(_) => 2,
        ScenarioError::Social(e) => social(e),
        ScenarioError::Game(GameError::Social(e)) => social(e),
        ScenarioError::Game(GameError::Pricing(PricingError::MissingHistory { .. })) => 2,
        ScenarioError::Game(GameError::Pricing(_)) => 3,
        ScenarioError::Game(_) => 2,
        ScenarioError::Marl(MarlError::Game(GameError::Social(e))) => social(e),
        ScenarioError::Marl(MarlError::Game(GameError::Pricing(PricingError::MissingHistory { .. }))) => 2,
        ScenarioError::Marl(MarlError::Game(GameError::Pricing(_))) => 3,
        ScenarioError::Marl(MarlError::Diverged { .. }) => 3,
        ScenarioError::Marl(_) => 2,
        ScenarioError::NonConvergence { .. } => 4,
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let mut cfg = Self::from_toml(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.network_path);
        resolve(&mut cfg.profiles_path);
        cfg.weights_paths.values_mut().for_each(resolve);
        resolve(&mut cfg.output_dir);
        if let Some(q) = cfg.qtable_path.as_mut() {
            resolve(q);
        }
        Ok(cfg)
    }

    pub fn predictor(&self) -> PricePredictor {
        self.predictor.unwrap_or_default()
    }

    fn mdp_config(&self) -> MdpConfig {
        MdpConfig {
            seed: self.seed,
            ..self.mdp
        }
    }
}

/// A config together with its loaded inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub ctx: SocialContext,
    pub players: Vec<StrategySet>,
}

impl Scenario {
    /// Loads every file the config references.
    pub fn load(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let network = read(&config.network_path)?;
        let profiles = read(&config.profiles_path)?;
        let weights = config
            .weights_paths
            .iter()
            .map(|(name, path)| Ok((name.clone(), read(path)?)))
            .collect::<Result<BTreeMap<_, _>, ScenarioError>>()?;
        Self::from_parts(config, &network, &profiles, &weights)
    }

    /// Builds a scenario from already-read file contents.
    pub fn from_parts(
        config: ScenarioConfig,
        network_json: &str,
        profiles_csv: &str,
        weights: &BTreeMap<String, String>,
    ) -> Result<Self, ScenarioError> {
        let network = build_network(network_json)?;
        let mut specs = config.buildings.clone();
        for (name, text) in weights {
            let spec = specs
                .iter_mut()
                .find(|s| &s.name == name)
                .ok_or_else(|| ScenarioError::Invalid(format!("weights given for unknown building `{name}`")))?;
            spec.energy_model = EnergyModel::FeedForward(FeedForwardModel::from_json(text)?);
        }
        let (buildings, weather) = load_profiles(profiles_csv, &specs)?;
        let ctx = SocialContext::new(network, buildings, weather, config.social)?.with_execution(config.execution);
        let players = uniform_strategy_sets(&ctx, &config.game.strategies)?;
        let scenario = Self { config, ctx, players };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let cfg = &self.config;
        if cfg.buildings.is_empty() {
            return Err(ScenarioError::Invalid("no buildings".into()));
        }
        if let Some(h) = cfg.hours.hours().into_iter().find(|&h| !self.ctx.covers(h)) {
            return Err(ScenarioError::Invalid(format!("hour {h} is not covered by the profiles")));
        }
        for b in &self.ctx.buildings {
            if let Some(t) = cfg.fixed_baselines.iter().find(|t| !b.productivity.contains(**t)) {
                return Err(ScenarioError::Invalid(format!(
                    "baseline {t} °F outside the bracket of {}",
                    b.name
                )));
            }
            if !b.productivity.contains(cfg.reference_setpoint) {
                return Err(ScenarioError::Invalid(format!(
                    "reference setpoint {} °F outside the bracket of {}",
                    cfg.reference_setpoint, b.name
                )));
            }
        }
        if !(cfg.game.config.epsilon >= 0.0) || cfg.game.config.max_rounds == 0 {
            return Err(ScenarioError::Invalid("game needs epsilon >= 0 and max_rounds >= 1".into()));
        }
        cfg.mdp_config().validate()?;
        Ok(())
    }

    pub fn hours(&self) -> Vec<u32> {
        self.config.hours.hours()
    }

    /// Price history for days −7..−1 from market solves at the reference
    /// setpoint.
    pub fn seeded_history(&self) -> Result<PriceHistory, ScenarioError> {
        let mut history = PriceHistory::with_retention(HISTORY_DAYS);
        let reference = vec![self.config.reference_setpoint; self.ctx.num_players()];
        for hour in self.hours() {
            let sol = self.ctx.solve_hour(hour, &reference)?;
            for day in -SEED_DAYS..0 {
                history.record_solution(day, hour, &sol);
            }
        }
        Ok(history)
    }

    /// Trains Q-tables against the predicted prices of `day`.
    pub fn train(&self, history: &PriceHistory, day: i64) -> Result<Pruner, ScenarioError> {
        let prices = TrainingPrices {
            history,
            day,
            predictor: self.config.predictor(),
        };
        Ok(train_pruner(&self.players, &self.hours(), &self.ctx, &self.config.mdp_config(), &prices)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSeries {
    /// °F applied by every player
    pub setpoint: f64,
    pub hours: Vec<HourlyOutcome>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyReport {
    pub day: i64,
    pub engine: Vec<HourlyOutcome>,
    pub engine_total: f64,
    pub baselines: Vec<BaselineSeries>,
}

impl DailyReport {
    /// Baseline total minus engine total, per baseline ($).
    pub fn savings(&self) -> Vec<(f64, f64)> {
        self.baselines
            .iter()
            .map(|b| (b.setpoint, b.total - self.engine_total))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourTrace {
    pub day: i64,
    pub hour: u32,
    pub outcome: GameOutcome,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub engine: Engine,
    pub seed: u64,
    pub days: Vec<DailyReport>,
    pub traces: Vec<HourTrace>,
    pub pruner: Option<Pruner>,
    /// Days present in the price history at the end of the run.
    pub history_days: Vec<i64>,
    /// Wall time of the engine step per simulated hour.
    pub engine_time: Vec<Duration>,
    pub elapsed: Duration,
    pub config: ScenarioConfig,
}

impl ScenarioReport {
    pub fn engine_total(&self) -> f64 {
        self.days.iter().map(|d| d.engine_total).sum()
    }

    pub fn baseline_totals(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for d in &self.days {
            for (i, b) in d.baselines.iter().enumerate() {
                match out.get_mut(i) {
                    Some(slot) => slot.1 += b.total,
                    None => out.push((b.setpoint, b.total)),
                }
            }
        }
        out
    }

    pub fn all_converged(&self) -> bool {
        self.traces.iter().all(|t| t.outcome.converged)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Retrain Q-tables even if a stored table is configured.
    pub train: bool,
}

fn load_or_train(
    scenario: &Scenario,
    history: &PriceHistory,
    day: i64,
    opts: RunOptions,
) -> Result<Pruner, ScenarioError> {
    if !opts.train {
        if let Some(path) = scenario.config.qtable_path.as_ref().filter(|p| p.exists()) {
            log::info!("using stored Q-tables from {}", path.display());
            return Ok(Pruner::from_json(&read(path)?)?);
        }
    }
    scenario.train(history, day)
}

/// Simulates every configured day and hour.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<ScenarioReport, ScenarioError> {
    let started = Instant::now();
    let cfg = &scenario.config;
    let ctx = &scenario.ctx;
    let hours = scenario.hours();
    let n = ctx.num_players();
    let predictor = cfg.predictor();
    let grids: Vec<Vec<f64>> = scenario.players.iter().map(|s| s.setpoints.clone()).collect();

    let mut history = scenario.seeded_history()?;
    let mut days = Vec::with_capacity(cfg.days);
    let mut traces = Vec::new();
    let mut engine_time = Vec::new();
    let mut pruner = None;

    for day in 0..cfg.days as i64 {
        if cfg.engine == Engine::Rl {
            // stored tables are loaded once; otherwise retrain on each day's predictions
            let stored = !opts.train && cfg.qtable_path.as_ref().is_some_and(|p| p.exists());
            if pruner.is_none() || !stored {
                pruner = Some(load_or_train(scenario, &history, day, opts)?);
            }
        }
        let mut engine_rows = Vec::with_capacity(hours.len());
        let mut baseline_rows: Vec<Vec<HourlyOutcome>> = vec![Vec::new(); cfg.fixed_baselines.len()];
        for &hour in &hours {
            let t0 = Instant::now();
            let setpoints = match cfg.engine {
                Engine::Brute => brute_force_optimum(hour, &grids, ctx)?.0,
                Engine::Game | Engine::Rl => {
                    let start = predicted_prices(ctx, &history, day, hour, &predictor)?;
                    let (outcome, setpoints) = if cfg.engine == Engine::Game {
                        play_hour(&scenario.players, hour, ctx, &cfg.game.config, start)?
                    } else {
                        let p = pruner.as_ref().expect("pruner trained above");
                        let r = rl_game_pipeline(p, hour, ctx, &cfg.game.config, start)?;
                        (r.outcome, r.setpoints)
                    };
                    if !outcome.converged {
                        if cfg.strict {
                            return Err(ScenarioError::NonConvergence {
                                day,
                                hour,
                                rounds: outcome.iterations,
                            });
                        }
                        log::warn!("day {day} hour {hour}: game stopped without converging");
                    }
                    traces.push(HourTrace { day, hour, outcome });
                    setpoints
                }
            };
            engine_time.push(t0.elapsed());
            let realized = ctx.solve_hour(hour, &setpoints)?;
            engine_rows.push(social_cost(&setpoints, hour, ctx)?);
            history.record_solution(day, hour, &realized);
            for (b, &t) in cfg.fixed_baselines.iter().enumerate() {
                baseline_rows[b].push(social_cost(&vec![t; n], hour, ctx)?);
            }
        }
        let total = |rows: &[HourlyOutcome]| rows.iter().map(|o| o.social_cost).sum::<f64>();
        days.push(DailyReport {
            day,
            engine_total: total(&engine_rows),
            engine: engine_rows,
            baselines: cfg
                .fixed_baselines
                .iter()
                .zip(baseline_rows)
                .map(|(&setpoint, hours)| BaselineSeries {
                    setpoint,
                    total: total(&hours),
                    hours,
                })
                .collect(),
        });
    }

    Ok(ScenarioReport {
        engine: cfg.engine,
        seed: cfg.seed,
        days,
        traces,
        pruner,
        history_days: history.days().collect(),
        engine_time,
        elapsed: started.elapsed(),
        config: cfg.clone(),
    })
}

#[derive(Serialize)]
struct BaselineSummary {
    setpoint_f: f64,
    total_usd: f64,
    savings_usd: f64,
}

#[derive(Serialize)]
struct DaySummary {
    day: i64,
    engine_total_usd: f64,
    baselines: Vec<BaselineSummary>,
}

#[derive(Serialize)]
struct Summary {
    engine: String,
    seed: u64,
    hours: Vec<u32>,
    days: Vec<DaySummary>,
    engine_total_usd: f64,
    baselines: Vec<BaselineSummary>,
    game_hours: usize,
    converged_hours: usize,
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: &'static str,
    seed: u64,
    rng: &'static str,
    timestamp_unix: u64,
    engine: String,
    execution: Execution,
    parallel_feature: bool,
    elapsed_seconds: f64,
    engine_seconds_per_hour: Vec<f64>,
    config: &'a ScenarioConfig,
}

fn report_err(path: &Path, e: impl fmt::Display) -> ScenarioError {
    ScenarioError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv<F>(path: &Path, header: &[&str], fill: F) -> Result<(), ScenarioError>
where
    F: FnOnce(&mut csv::Writer<std::fs::File>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| report_err(path, e))?;
    w.write_record(header).map_err(|e| report_err(path, e))?;
    fill(&mut w).map_err(|e| report_err(path, e))?;
    w.flush().map_err(|e| report_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| report_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| report_err(path, e))
}

/// Rows of (day, source, outcome) in report order.
fn sources(report: &ScenarioReport) -> Vec<(i64, String, &HourlyOutcome)> {
    let mut rows = Vec::new();
    for d in &report.days {
        for (i, o) in d.engine.iter().enumerate() {
            rows.push((d.day, report.engine.to_string(), o));
            for b in &d.baselines {
                rows.push((d.day, format!("fixed_{}", b.setpoint), &b.hours[i]));
            }
        }
    }
    rows
}

/// Writes `hourly.csv`, `players.csv`, `summary.json`, `metadata.json`,
/// and for game engines `game_trace.csv` (plus `qtable.json` for rl).
pub fn emit_report(report: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let rows = sources(report);

    let path = dir.join("hourly.csv");
    write_csv(
        &path,
        &["day", "hour", "source", "setpoints_f", "energy_kwh", "social_cost_usd"],
        |w| {
            for (day, source, o) in &rows {
                let setpoints: Vec<String> = o.setpoints.iter().map(|s| s.to_string()).collect();
                w.write_record([
                    day.to_string(),
                    o.hour.to_string(),
                    source.clone(),
                    setpoints.join(";"),
                    o.energy.iter().sum::<f64>().to_string(),
                    o.social_cost.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    written.push(path);

    let path = dir.join("players.csv");
    let buses: Vec<String> = report.config.buildings.iter().map(|b| b.bus.to_string()).collect();
    write_csv(
        &path,
        &[
            "day",
            "source",
            "hour",
            "player",
            "setpoint_f",
            "energy_kwh",
            "price_usd_per_mwh",
            "productivity",
            "cost_usd",
        ],
        |w| {
            for (day, source, o) in &rows {
                for i in 0..o.setpoints.len() {
                    w.write_record([
                        day.to_string(),
                        source.clone(),
                        o.hour.to_string(),
                        buses.get(i).cloned().unwrap_or_else(|| i.to_string()),
                        o.setpoints[i].to_string(),
                        o.energy[i].to_string(),
                        o.prices[i].to_string(),
                        o.productivity[i].to_string(),
                        o.per_player_cost[i].to_string(),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    written.push(path);

    if report.engine != Engine::Brute {
        let path = dir.join("game_trace.csv");
        let players = &buses;
        write_csv(
            &path,
            &[
                "day",
                "hour",
                "round",
                "player",
                "chosen_setpoint_f",
                "payoff_usd",
                "price_gap_usd_per_mwh",
            ],
            |w| {
                for t in &report.traces {
                    for r in &t.outcome.trace {
                        w.write_record([
                            t.day.to_string(),
                            t.hour.to_string(),
                            r.round.to_string(),
                            players.get(r.player).cloned().unwrap_or_else(|| r.player.to_string()),
                            r.setpoint.to_string(),
                            r.payoff.to_string(),
                            r.price_gap.to_string(),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;
        let iterations: usize = report.traces.iter().map(|t| t.outcome.iterations).sum();
        let tail = format!("# converged,iterations\n# {},{}\n", report.all_converged(), iterations);
        use std::io::Write;
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(tail.as_bytes()))
            .map_err(|e| report_err(&path, e))?;
        written.push(path);
    }

    if let Some(p) = &report.pruner {
        let path = dir.join("qtable.json");
        std::fs::write(&path, p.to_json()?).map_err(|e| report_err(&path, e))?;
        written.push(path);
    }

    let summary = Summary {
        engine: report.engine.to_string(),
        seed: report.seed,
        hours: report.config.hours.hours(),
        days: report
            .days
            .iter()
            .map(|d| DaySummary {
                day: d.day,
                engine_total_usd: d.engine_total,
                baselines: d
                    .baselines
                    .iter()
                    .map(|b| BaselineSummary {
                        setpoint_f: b.setpoint,
                        total_usd: b.total,
                        savings_usd: b.total - d.engine_total,
                    })
                    .collect(),
            })
            .collect(),
        engine_total_usd: report.engine_total(),
        baselines: report
            .baseline_totals()
            .into_iter()
            .map(|(setpoint_f, total_usd)| BaselineSummary {
                setpoint_f,
                total_usd,
                savings_usd: total_usd - report.engine_total(),
            })
            .collect(),
        game_hours: report.traces.len(),
        converged_hours: report.traces.iter().filter(|t| t.outcome.converged).count(),
    };
    let path = dir.join("summary.json");
    write_json(&path, &summary)?;
    written.push(path);

    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        seed: report.seed,
        rng: RNG_ALGORITHM,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        engine: report.engine.to_string(),
        execution: report.config.execution,
        parallel_feature: cfg!(feature = "parallel"),
        elapsed_seconds: report.elapsed.as_secs_f64(),
        engine_seconds_per_hour: report.engine_time.iter().map(|d| d.as_secs_f64()).collect(),
        config: &report.config,
    };
    let path = dir.join("metadata.json");
    write_json(&path, &metadata)?;
    written.push(path);
    Ok(written)
}
