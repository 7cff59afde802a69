//! The hourly setpoint game. Players are buildings, strategies are HVAC
//! setpoints and payoffs are negated costs, so maximizing payoff always
//! means minimizing cost.
//!
//! Equilibria are searched with best-response dynamics: players move in
//! index order, then the market is re-solved at the joint profile and the
//! players see the new prices in the next round.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::grid::BusId;
use crate::pricing::{PriceHistory, PricePredictor, PricingError};
use crate::social::{decode_joint, encode_joint, joint_size, social_cost, SocialContext, SocialError};

/// Payoff differences below this are ties.
pub const PAYOFF_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error(transparent)]
    Social(#[from] SocialError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("strategy set for player {player}: {reason}")]
    InvalidStrategySet { player: BusId, reason: String },
    #[error("mixed profile for player {player}: {reason}")]
    InvalidSimplex { player: usize, reason: String },
    #[error("expected {expected} players, got {got}")]
    PlayerCount { expected: usize, got: usize },
}

pub fn default_setpoint_grid() -> Vec<f64> {
    vec![67.0, 69.0, 71.0, 73.0, 75.0, 77.0, 79.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySet {
    pub player: BusId,
    /// °F, strictly increasing
    pub setpoints: Vec<f64>,
}

impl StrategySet {
    /// Validates against the player's comfort bracket `[lower, upper]`.
    pub fn new(player: BusId, setpoints: Vec<f64>, lower: f64, upper: f64) -> Result<Self, GameError> {
        let bad = |reason: &str| GameError::InvalidStrategySet {
            player,
            reason: reason.to_string(),
        };
        if setpoints.is_empty() {
            return Err(bad("empty"));
        }
        if setpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("setpoints must be strictly increasing"));
        }
        if setpoints.iter().any(|s| !(lower..=upper).contains(s)) {
            return Err(bad("setpoint outside the comfort bracket"));
        }
        Ok(Self { player, setpoints })
    }

    pub fn len(&self) -> usize {
        self.setpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.setpoints.is_empty()
    }
}

/// Strategy sets for every player of `ctx`, all using `grid`.
pub fn uniform_strategy_sets(ctx: &SocialContext, grid: &[f64]) -> Result<Vec<StrategySet>, GameError> {
    ctx.buildings
        .iter()
        .map(|b| StrategySet::new(b.bus, grid.to_vec(), b.productivity.t_lower, b.productivity.t_upper))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// Exogenous prices (predicted or last solved); no market solve.
    #[default]
    Predicted,
    /// One market solve per joint strategy.
    Dlmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffStructure {
    /// Each player pays its own cost.
    #[default]
    Individual,
    /// Every player receives minus the total social cost.
    Common,
}

/// Prices used while building a tensor.
#[derive(Debug, Clone, Copy)]
pub enum TensorPrices<'a> {
    Predicted {
        history: &'a PriceHistory,
        day: i64,
        predictor: PricePredictor,
    },
    Fixed(&'a [f64]),
    Dlmp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTensor {
    pub players: Vec<BusId>,
    pub shape: Vec<usize>,
    /// `values[joint * players + i]` is player i's payoff ($).
    pub values: Vec<f64>,
    pub price_mode: PriceMode,
    /// Joint strategies evaluated to build this tensor.
    pub evaluations: u64,
}

impl PayoffTensor {
    /// Builds a tensor from a payoff function of (joint strategy) → payoffs.
    pub fn from_fn<F>(players: Vec<BusId>, shape: Vec<usize>, mut f: F) -> Self
    where
        F: FnMut(&[usize]) -> Vec<f64>,
    {
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n * players.len());
        for j in 0..n {
            let p = f(&decode_joint(j, &shape));
            assert_eq!(p.len(), players.len());
            values.extend(p);
        }
        Self {
            players,
            shape,
            values,
            price_mode: PriceMode::Predicted,
            evaluations: n as u64,
        }
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_joint(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn payoff(&self, joint: &[usize], player: usize) -> f64 {
        self.values[encode_joint(joint, &self.shape) * self.players.len() + player]
    }

    pub fn payoffs(&self, joint: &[usize]) -> &[f64] {
        let n = self.players.len();
        let j = encode_joint(joint, &self.shape);
        &self.values[j * n..(j + 1) * n]
    }
}

/// Per-player prices from the day-ahead predictor.
pub fn predicted_prices(
    ctx: &SocialContext,
    history: &PriceHistory,
    day: i64,
    hour: u32,
    predictor: &PricePredictor,
) -> Result<Vec<f64>, GameError> {
    ctx.buildings
        .iter()
        .map(|b| Ok(predictor.predict(history, day, hour, b.bus)?))
        .collect()
}

/// (kWh, productivity) for each player and strategy.
fn responses(ctx: &SocialContext, players: &[StrategySet], hour: u32) -> Result<Vec<Vec<(f64, f64)>>, GameError> {
    players
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.setpoints
                .iter()
                .map(|&t| Ok(ctx.player_response(i, hour, t)?))
                .collect()
        })
        .collect()
}

fn occupancies(ctx: &SocialContext, hour: u32) -> Result<Vec<f64>, GameError> {
    ctx.buildings
        .iter()
        .map(|b| b.occupancy.get(hour).ok_or(GameError::Social(SocialError::HourNotCovered(hour))))
        .collect()
}

fn check_players(ctx: &SocialContext, players: &[StrategySet]) -> Result<(), GameError> {
    if players.len() != ctx.num_players() {
        return Err(GameError::PlayerCount {
            expected: ctx.num_players(),
            got: players.len(),
        });
    }
    Ok(())
}

fn to_payoffs(costs: &[f64], structure: PayoffStructure) -> Vec<f64> {
    match structure {
        PayoffStructure::Individual => costs.iter().map(|c| -c).collect(),
        PayoffStructure::Common => vec![-costs.iter().sum::<f64>(); costs.len()],
    }
}

/// Evaluates every joint strategy of the hour's game.
pub fn build_payoff_tensor(
    players: &[StrategySet],
    hour: u32,
    ctx: &SocialContext,
    prices: TensorPrices<'_>,
    structure: PayoffStructure,
) -> Result<PayoffTensor, GameError> {
    check_players(ctx, players)?;
    let shape: Vec<usize> = players.iter().map(|s| s.len()).collect();
    let n = joint_size(&shape, ctx.grid_cap)?;
    let counter = AtomicU64::new(0);
    let (mode, fixed) = match prices {
        TensorPrices::Predicted {
            history,
            day,
            predictor,
        } => (PriceMode::Predicted, Some(predicted_prices(ctx, history, day, hour, &predictor)?)),
        TensorPrices::Fixed(p) => {
            if p.len() != players.len() {
                return Err(GameError::PlayerCount {
                    expected: players.len(),
                    got: p.len(),
                });
            }
            (PriceMode::Predicted, Some(p.to_vec()))
        }
        TensorPrices::Dlmp => (PriceMode::Dlmp, None),
    };
    let resp = responses(ctx, players, hour)?;
    let occ = occupancies(ctx, hour)?;
    let rows = ctx.execution.try_map_indices(n, |j| -> Result<Vec<f64>, GameError> {
        counter.fetch_add(1, Ordering::Relaxed);
        let joint = decode_joint(j, &shape);
        let costs: Vec<f64> = match &fixed {
            Some(p) => joint
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let (e, xi) = resp[i][k];
                    ctx.player_cost(e, p[i], xi, occ[i])
                })
                .collect(),
            None => {
                let setpoints: Vec<f64> = joint.iter().enumerate().map(|(i, &k)| players[i].setpoints[k]).collect();
                social_cost(&setpoints, hour, ctx)?.per_player_cost
            }
        };
        Ok(to_payoffs(&costs, structure))
    })?;
    Ok(PayoffTensor {
        players: players.iter().map(|s| s.player).collect(),
        shape,
        values: rows.into_iter().flatten().collect(),
        price_mode: mode,
        evaluations: counter.into_inner(),
    })
}

fn is_pure_nash(t: &PayoffTensor, joint: &[usize]) -> bool {
    let mut dev = joint.to_vec();
    (0..t.num_players()).all(|i| {
        let here = t.payoff(joint, i);
        let ok = (0..t.shape[i]).all(|k| {
            dev[i] = k;
            t.payoff(&dev, i) <= here + PAYOFF_TOL
        });
        dev[i] = joint[i];
        ok
    })
}

/// Every pure strategy profile from which no player gains more than the
/// tie tolerance by deviating alone.
pub fn pure_nash_enumerate(tensor: &PayoffTensor) -> Vec<Vec<usize>> {
    (0..tensor.num_joint())
        .map(|j| decode_joint(j, &tensor.shape))
        .filter(|joint| is_pure_nash(tensor, joint))
        .collect()
}

/// Sum over players of (best pure-deviation payoff − expected payoff) at a
/// mixed profile. Zero exactly at Nash equilibria, positive elsewhere.
pub fn verify_theorem1(tensor: &PayoffTensor, profile: &[Vec<f64>]) -> Result<f64, GameError> {
    let n = tensor.num_players();
    if profile.len() != n {
        return Err(GameError::PlayerCount {
            expected: n,
            got: profile.len(),
        });
    }
    for (i, mix) in profile.iter().enumerate() {
        let bad = |reason: String| Err(GameError::InvalidSimplex { player: i, reason });
        if mix.len() != tensor.shape[i] {
            return bad(format!("{} weights for {} strategies", mix.len(), tensor.shape[i]));
        }
        if mix.iter().any(|p| !p.is_finite() || *p < -1e-12) {
            return bad("weights must be finite and nonnegative".into());
        }
        let total: f64 = mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}"));
        }
    }
    // u[i][k]: expected payoff to i of pure strategy k against the others' mix
    let mut u: Vec<Vec<f64>> = tensor.shape.iter().map(|&m| vec![0.0; m]).collect();
    for j in 0..tensor.num_joint() {
        let joint = decode_joint(j, &tensor.shape);
        let pay = tensor.payoffs(&joint);
        for i in 0..n {
            let w: f64 = (0..n).filter(|&k| k != i).map(|k| profile[k][joint[k]]).product();
            if w != 0.0 {
                u[i][joint[i]] += w * pay[i];
            }
        }
    }
    let residual = (0..n)
        .map(|i| {
            let gamma = u[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let delta: f64 = profile[i].iter().zip(&u[i]).map(|(a, v)| a * v).sum();
            (gamma - delta).max(0.0)
        })
        .sum();
    Ok(residual)
}

/// Something best-response dynamics can be played on.
pub trait GameEnv {
    fn shape(&self) -> Vec<usize>;

    /// Player's payoff at a joint strategy under the current prices.
    fn payoff(&self, player: usize, joint: &[usize]) -> Result<f64, GameError>;

    /// Market feedback at `joint`: updates prices and returns the largest
    /// per-player price change ($/MWh).
    fn refresh(&mut self, joint: &[usize]) -> Result<f64, GameError>;

    /// Setpoint (°F) of a strategy, for traces.
    fn setpoint(&self, player: usize, strategy: usize) -> f64 {
        let _ = player;
        strategy as f64
    }
}

/// A game whose payoffs are a fixed tensor; prices never move.
#[derive(Debug, Clone)]
pub struct TensorGame<'a> {
    pub tensor: &'a PayoffTensor,
}

impl GameEnv for TensorGame<'_> {
    fn shape(&self) -> Vec<usize> {
        self.tensor.shape.clone()
    }

    fn payoff(&self, player: usize, joint: &[usize]) -> Result<f64, GameError> {
        Ok(self.tensor.payoff(joint, player))
    }

    fn refresh(&mut self, _joint: &[usize]) -> Result<f64, GameError> {
        Ok(0.0)
    }
}

/// The hourly building game: payoffs under the current price vector, with
/// a market solve on every refresh.
#[derive(Debug, Clone)]
pub struct SocialGame<'a> {
    ctx: &'a SocialContext,
    players: &'a [StrategySet],
    hour: u32,
    structure: PayoffStructure,
    responses: Vec<Vec<(f64, f64)>>,
    occupancy: Vec<f64>,
    prices: Vec<f64>,
    evaluations: u64,
}

impl<'a> SocialGame<'a> {
    pub fn new(
        ctx: &'a SocialContext,
        players: &'a [StrategySet],
        hour: u32,
        structure: PayoffStructure,
        initial_prices: Vec<f64>,
    ) -> Result<Self, GameError> {
        check_players(ctx, players)?;
        if initial_prices.len() != players.len() {
            return Err(GameError::PlayerCount {
                expected: players.len(),
                got: initial_prices.len(),
            });
        }
        Ok(Self {
            ctx,
            players,
            hour,
            structure,
            responses: responses(ctx, players, hour)?,
            occupancy: occupancies(ctx, hour)?,
            prices: initial_prices,
            evaluations: 0,
        })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Market solves performed by refreshes so far.
    pub fn market_solves(&self) -> u64 {
        self.evaluations
    }

    fn cost(&self, player: usize, strategy: usize) -> f64 {
        let (e, xi) = self.responses[player][strategy];
        self.ctx.player_cost(e, self.prices[player], xi, self.occupancy[player])
    }

    pub fn setpoints(&self, joint: &[usize]) -> Vec<f64> {
        joint.iter().enumerate().map(|(i, &k)| self.players[i].setpoints[k]).collect()
    }
}

impl GameEnv for SocialGame<'_> {
    fn shape(&self) -> Vec<usize> {
        self.players.iter().map(|s| s.len()).collect()
    }

    fn payoff(&self, player: usize, joint: &[usize]) -> Result<f64, GameError> {
        Ok(match self.structure {
            PayoffStructure::Individual => -self.cost(player, joint[player]),
            PayoffStructure::Common => -(0..joint.len()).map(|i| self.cost(i, joint[i])).sum::<f64>(),
        })
    }

    fn refresh(&mut self, joint: &[usize]) -> Result<f64, GameError> {
        let sol = self.ctx.solve_hour(self.hour, &self.setpoints(joint))?;
        self.evaluations += 1;
        let mut gap: f64 = 0.0;
        for (p, b) in self.prices.iter_mut().zip(&self.ctx.buildings) {
            let new = sol
                .total_price(b.bus)
                .ok_or(SocialError::UnknownPlayerBus(b.bus))?;
            gap = gap.max((new - *p).abs());
            *p = new;
        }
        Ok(gap)
    }

    fn setpoint(&self, player: usize, strategy: usize) -> f64 {
        self.players[player].setpoints[strategy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    /// $/MWh
    pub epsilon: f64,
    pub max_rounds: usize,
    pub payoff: PayoffStructure,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            max_rounds: 50,
            payoff: PayoffStructure::Individual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub player: usize,
    pub setpoint: f64,
    pub payoff: f64,
    pub price_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub equilibrium: Vec<usize>,
    /// $ per player under the final prices
    pub payoffs: Vec<f64>,
    /// rounds played
    pub iterations: usize,
    pub converged: bool,
    /// $/MWh
    pub price_gap: f64,
    pub trace: Vec<TraceRow>,
    /// payoff look-ups made by the players
    pub evaluations: u64,
}

fn best_response<E: GameEnv + ?Sized>(
    env: &E,
    player: usize,
    joint: &mut [usize],
    m: usize,
    evaluations: &mut u64,
) -> Result<(usize, f64), GameError> {
    let keep = joint[player];
    let mut pay = Vec::with_capacity(m);
    for k in 0..m {
        joint[player] = k;
        pay.push(env.payoff(player, joint)?);
    }
    *evaluations += m as u64;
    joint[player] = keep;
    let top = pay.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // lowest strategy among the ties
    let k = pay.iter().position(|&p| p >= top - PAYOFF_TOL).unwrap_or(0);
    Ok((k, pay[k]))
}

fn is_best_response_profile<E: GameEnv + ?Sized>(
    env: &E,
    joint: &[usize],
    shape: &[usize],
    evaluations: &mut u64,
) -> Result<bool, GameError> {
    let mut probe = joint.to_vec();
    for i in 0..shape.len() {
        let here = env.payoff(i, joint)?;
        for k in 0..shape[i] {
            probe[i] = k;
            *evaluations += 1;
            if env.payoff(i, &probe)? > here + PAYOFF_TOL {
                return Ok(false);
            }
        }
        probe[i] = joint[i];
    }
    Ok(true)
}

/// Best-response dynamics from the all-lowest profile. Players move in
/// index order; after each round the environment is refreshed. Stops when
/// the profile is a best response for everyone under the refreshed prices
/// and the price change was at most `epsilon`, or after `max_rounds`.
pub fn best_response_loop<E: GameEnv + ?Sized>(env: &mut E, cfg: &GameConfig) -> Result<GameOutcome, GameError> {
    let shape = env.shape();
    best_response_from(env, cfg, vec![0; shape.len()])
}

pub fn best_response_from<E: GameEnv + ?Sized>(
    env: &mut E,
    cfg: &GameConfig,
    start: Vec<usize>,
) -> Result<GameOutcome, GameError> {
    let shape = env.shape();
    let mut joint = start;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let first = trace.len();
        for i in 0..shape.len() {
            let (k, pay) = best_response(env, i, &mut joint, shape[i], &mut evaluations)?;
            joint[i] = k;
            trace.push(TraceRow {
                round: rounds,
                player: i,
                setpoint: env.setpoint(i, k),
                payoff: pay,
                price_gap: 0.0,
            });
        }
        gap = env.refresh(&joint)?;
        for row in &mut trace[first..] {
            row.price_gap = gap;
        }
        if gap <= cfg.epsilon && is_best_response_profile(env, &joint, &shape, &mut evaluations)? {
            converged = true;
            break;
        }
    }
    let payoffs = (0..shape.len())
        .map(|i| env.payoff(i, &joint))
        .collect::<Result<Vec<_>, _>>()?;
    if !converged {
        log::info!("best-response loop stopped after {rounds} rounds without converging");
    }
    Ok(GameOutcome {
        equilibrium: joint,
        payoffs,
        iterations: rounds,
        converged,
        price_gap: if gap.is_finite() { gap } else { 0.0 },
        trace,
        evaluations,
    })
}

/// Runs the hourly game from predicted prices and returns the outcome
/// together with the chosen setpoints.
pub fn play_hour(
    players: &[StrategySet],
    hour: u32,
    ctx: &SocialContext,
    cfg: &GameConfig,
    start_prices: Vec<f64>,
) -> Result<(GameOutcome, Vec<f64>), GameError> {
    let mut env = SocialGame::new(ctx, players, hour, cfg.payoff, start_prices)?;
    let outcome = best_response_loop(&mut env, cfg)?;
    let setpoints = env.setpoints(&outcome.equilibrium);
    Ok((outcome, setpoints))
}
