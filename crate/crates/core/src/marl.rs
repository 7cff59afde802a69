//! Tabular multi-agent Q-learning used to shrink each player's strategy set
//! before the hourly game is played.
//!
//! Every player learns independently over states (hour of day × band of its
//! own predicted price), exploring uniformly at random. After training, the
//! `prune_k` strategies with the highest Q-value in the current state form
//! the reduced game.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{play_hour, predicted_prices, GameConfig, GameError, GameOutcome, StrategySet};
use crate::grid::BusId;
use crate::pricing::{PriceHistory, PricePredictor};
use crate::social::{SocialContext, SocialError};

pub const RNG_ALGORITHM: &str = "rand_chacha::ChaCha8Rng seed_from_u64(seed), stream = player index";

#[derive(Debug, thiserror::Error)]
pub enum MarlError {
    #[error("invalid learning configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("Q-value {value} for player {player} exceeds the bound {bound}")]
    Diverged { player: usize, value: f64, bound: f64 },
    #[error("hour {0} was not part of training")]
    UnknownHour(u32),
    #[error("Q-table document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("Q-table document: {0}")]
    Import(String),
}

impl From<SocialError> for MarlError {
    fn from(e: SocialError) -> Self {
        MarlError::Game(GameError::Social(e))
    }
}

/// Equal-width bands over `[low, high]` $/MWh; prices outside fall into the
/// end bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBands {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl Default for PriceBands {
    fn default() -> Self {
        Self {
            low: 40.0,
            high: 100.0,
            count: 3,
        }
    }
}

impl PriceBands {
    pub fn band(&self, price: f64) -> usize {
        let width = (self.high - self.low) / self.count as f64;
        let b = ((price - self.low) / width).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.count - 1)
        }
    }
}

/// Continuation value used in the update target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// `τ max_b Q(j,b)`
    #[default]
    MaxQ,
    /// `τ γ(j)`: the next state's optimal game payoff, known in closed form
    /// when prices are held at their predictions.
    GamePayoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpConfig {
    /// Interest rate; discount is 1/(1+mu).
    pub mu: f64,
    pub itmax: usize,
    /// Learning rate α^k = c/(d+k).
    pub c: f64,
    pub d: f64,
    pub seed: u64,
    pub prune_k: usize,
    pub bands: PriceBands,
    /// Re-zero Q after every step.
    pub literal_step3: bool,
    pub bootstrap: Bootstrap,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            mu: 0.05,
            itmax: 10_000,
            c: 90.0,
            d: 100.0,
            seed: 2021,
            prune_k: 2,
            bands: PriceBands::default(),
            literal_step3: false,
            bootstrap: Bootstrap::MaxQ,
        }
    }
}

impl MdpConfig {
    pub fn tau(&self) -> f64 {
        1.0 / (1.0 + self.mu)
    }

    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::InvalidConfig(m.to_string()));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive");
        }
        if self.itmax == 0 {
            return bad("itmax must be at least 1");
        }
        if !(self.c > 0.0 && self.d > 0.0 && self.c < self.d + 1.0) {
            return bad("learning-rate constants need 0 < c < d + 1");
        }
        if self.prune_k == 0 {
            return bad("prune_k must be at least 1");
        }
        if self.bands.count == 0 || !(self.bands.high > self.bands.low) {
            return bad("price bands need count >= 1 and high > low");
        }
        Ok(())
    }
}

pub fn learning_rate(cfg: &MdpConfig, k: u64) -> f64 {
    cfg.c / (cfg.d + k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            visits: vec![0; states * actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn nonzero_entries(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    fn reset_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Actions ranked by value, best first; ties go to the lower index.
    pub fn ranked(&self, state: usize) -> Vec<usize> {
        let row = self.row(state);
        let mut idx: Vec<usize> = (0..self.actions).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }

    /// Counts a visit to (state, action) and applies the update with k set
    /// to the visit count.
    pub fn visit(&mut self, state: usize, action: usize, next: usize, reward: f64, cfg: &MdpConfig) {
        let slot = state * self.actions + action;
        self.visits[slot] += 1;
        let k = self.visits[slot];
        q_update(self, state, action, next, reward, cfg, k);
    }

    /// Like [`visit`](Self::visit) with a known continuation value.
    pub fn visit_with_value(&mut self, state: usize, action: usize, reward: f64, value: f64, cfg: &MdpConfig) {
        let slot = state * self.actions + action;
        self.visits[slot] += 1;
        let k = self.visits[slot];
        q_update_with_value(self, state, action, reward, value, cfg, k);
    }
}

/// `Q(i,s) ← (1 − α^k) Q(i,s) + α^k [r + τ max_b Q(j,b)]`.
pub fn q_update(q: &mut QTable, state: usize, action: usize, next: usize, reward: f64, cfg: &MdpConfig, k: u64) {
    let value = q.max_value(next);
    q_update_with_value(q, state, action, reward, value, cfg, k);
}

/// `Q(i,s) ← (1 − α^k) Q(i,s) + α^k [r + τ γ]`.
pub fn q_update_with_value(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    value: f64,
    cfg: &MdpConfig,
    k: u64,
) {
    let a = learning_rate(cfg, k);
    let target = reward + cfg.tau() * value;
    let slot = state * q.actions + action;
    q.values[slot] = (1.0 - a) * q.values[slot] + a * target;
}

/// A finite MDP with deterministic dynamics; randomness comes only from the
/// uniform action choice.
pub trait Mdp {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn initial_state(&self) -> usize;
    /// Next state and reward of taking `action` in `state`.
    fn step(&self, state: usize, action: usize) -> (usize, f64);
    /// Best one-step payoff available in `state`, when the problem has one.
    fn optimal_payoff(&self, _state: usize) -> Option<f64> {
        None
    }
}

/// Runs `cfg.itmax` steps of uniform-exploration Q-learning from the
/// initial state. `player` only labels divergence errors.
pub fn train_q<M: Mdp + ?Sized>(
    mdp: &M,
    cfg: &MdpConfig,
    rng: &mut ChaCha8Rng,
    player: usize,
) -> Result<QTable, MarlError> {
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let gamma: Vec<f64> = match cfg.bootstrap {
        Bootstrap::MaxQ => Vec::new(),
        Bootstrap::GamePayoff => (0..mdp.num_states())
            .map(|s| mdp.optimal_payoff(s))
            .collect::<Option<_>>()
            .ok_or_else(|| MarlError::InvalidConfig("this MDP has no game payoff to bootstrap from".into()))?,
    };
    let bound_factor = 1.0 / (1.0 - cfg.tau());
    let mut r_max: f64 = 0.0;
    let mut state = mdp.initial_state();
    for _ in 0..cfg.itmax {
        let action = rng.gen_range(0..mdp.num_actions());
        let (next, reward) = mdp.step(state, action);
        if cfg.literal_step3 {
            q.reset_values();
        }
        match cfg.bootstrap {
            Bootstrap::MaxQ => q.visit(state, action, next, reward, cfg),
            Bootstrap::GamePayoff => q.visit_with_value(state, action, reward, gamma[next], cfg),
        }
        r_max = r_max.max(reward.abs());
        let value = q.get(state, action);
        let bound = r_max * bound_factor + 1e-6;
        if !value.is_finite() || value.abs() > bound {
            return Err(MarlError::Diverged { player, value, bound });
        }
        state = next;
    }
    Ok(q)
}

/// One player's hourly decision problem: states cycle through the training
/// hours, each tagged with the band of that hour's predicted price.
#[derive(Debug, Clone)]
pub struct HourlyPlayerMdp {
    /// band of the predicted price at each training hour
    bands_by_hour: Vec<usize>,
    band_count: usize,
    /// cost[hour][action], $
    cost: Vec<Vec<f64>>,
}

impl HourlyPlayerMdp {
    pub fn new(bands_by_hour: Vec<usize>, band_count: usize, cost: Vec<Vec<f64>>) -> Self {
        Self {
            bands_by_hour,
            band_count,
            cost,
        }
    }

    pub fn state(&self, hour_index: usize, band: usize) -> usize {
        hour_index * self.band_count + band
    }
}

impl Mdp for HourlyPlayerMdp {
    fn num_states(&self) -> usize {
        self.bands_by_hour.len() * self.band_count
    }

    fn num_actions(&self) -> usize {
        self.cost.first().map_or(0, |c| c.len())
    }

    fn initial_state(&self) -> usize {
        self.state(0, self.bands_by_hour[0])
    }

    fn step(&self, state: usize, action: usize) -> (usize, f64) {
        let t = state / self.band_count;
        let next_t = (t + 1) % self.bands_by_hour.len();
        (self.state(next_t, self.bands_by_hour[next_t]), -self.cost[t][action])
    }

    fn optimal_payoff(&self, state: usize) -> Option<f64> {
        let t = state / self.band_count;
        self.cost.get(t).map(|c| -c.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerQ {
    pub player: BusId,
    pub strategies: StrategySet,
    pub table: QTable,
}

/// Trained per-player Q-tables plus what is needed to map a (hour, price)
/// situation back onto a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruner {
    pub config: MdpConfig,
    pub hours: Vec<u32>,
    pub players: Vec<PlayerQ>,
}

impl Pruner {
    pub fn state(&self, hour: u32, price: f64) -> Result<usize, MarlError> {
        let t = self
            .hours
            .iter()
            .position(|&h| h == hour)
            .ok_or(MarlError::UnknownHour(hour))?;
        Ok(t * self.config.bands.count + self.config.bands.band(price))
    }

    /// The top `prune_k` strategies of every player in its current state,
    /// returned in increasing setpoint order.
    pub fn pruned_sets(&self, hour: u32, prices: &[f64]) -> Result<Vec<StrategySet>, MarlError> {
        if prices.len() != self.players.len() {
            return Err(GameError::PlayerCount {
                expected: self.players.len(),
                got: prices.len(),
            }
            .into());
        }
        self.players
            .iter()
            .zip(prices)
            .map(|(p, &price)| {
                let s = self.state(hour, price)?;
                let mut keep: Vec<usize> = p.table.ranked(s).into_iter().take(self.config.prune_k).collect();
                keep.sort_unstable();
                Ok(StrategySet {
                    player: p.player,
                    setpoints: keep.iter().map(|&k| p.strategies.setpoints[k]).collect(),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, MarlError> {
        Ok(serde_json::to_string_pretty(&QTableDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, MarlError> {
        let doc: QTableDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QEntry {
    state: usize,
    strategy: usize,
    value: f64,
    visits: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlayerDoc {
    player: BusId,
    setpoints: Vec<f64>,
    states: usize,
    entries: Vec<QEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QMeta {
    config: MdpConfig,
    seed: u64,
    rng: String,
    hours: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QTableDoc {
    metadata: QMeta,
    players: Vec<PlayerDoc>,
}

impl From<&Pruner> for QTableDoc {
    fn from(p: &Pruner) -> Self {
        QTableDoc {
            metadata: QMeta {
                config: p.config,
                seed: p.config.seed,
                rng: RNG_ALGORITHM.to_string(),
                hours: p.hours.clone(),
            },
            players: p
                .players
                .iter()
                .map(|pq| PlayerDoc {
                    player: pq.player,
                    setpoints: pq.strategies.setpoints.clone(),
                    states: pq.table.states,
                    entries: (0..pq.table.states)
                        .flat_map(|s| (0..pq.table.actions).map(move |a| (s, a)))
                        .map(|(s, a)| QEntry {
                            state: s,
                            strategy: a,
                            value: pq.table.get(s, a),
                            visits: pq.table.visits(s, a),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<QTableDoc> for Pruner {
    type Error = MarlError;

    fn try_from(doc: QTableDoc) -> Result<Self, MarlError> {
        doc.metadata.config.validate()?;
        let expected_states = doc.metadata.hours.len() * doc.metadata.config.bands.count;
        let players = doc
            .players
            .into_iter()
            .map(|pd| {
                if pd.states != expected_states {
                    return Err(MarlError::Import(format!(
                        "player {} has {} states, expected {expected_states}",
                        pd.player, pd.states
                    )));
                }
                let mut table = QTable::zeros(pd.states, pd.setpoints.len());
                for e in pd.entries {
                    if e.state >= table.states || e.strategy >= table.actions || !e.value.is_finite() {
                        return Err(MarlError::Import(format!(
                            "bad entry (state {}, strategy {}) for player {}",
                            e.state, e.strategy, pd.player
                        )));
                    }
                    let slot = e.state * table.actions + e.strategy;
                    table.values[slot] = e.value;
                    table.visits[slot] = e.visits;
                }
                Ok(PlayerQ {
                    player: pd.player,
                    strategies: StrategySet {
                        player: pd.player,
                        setpoints: pd.setpoints,
                    },
                    table,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Pruner {
            config: doc.metadata.config,
            hours: doc.metadata.hours,
            players,
        })
    }
}

/// Predicted prices the learners see.
pub struct TrainingPrices<'a> {
    pub history: &'a PriceHistory,
    pub day: i64,
    pub predictor: PricePredictor,
}

/// Trains one Q-table per player over the given hours. Rewards are the
/// player's own negated hourly cost at its predicted price.
pub fn train_pruner(
    players: &[StrategySet],
    hours: &[u32],
    ctx: &SocialContext,
    cfg: &MdpConfig,
    prices: &TrainingPrices<'_>,
) -> Result<Pruner, MarlError> {
    cfg.validate()?;
    if hours.is_empty() {
        return Err(MarlError::InvalidConfig("no training hours".into()));
    }
    if players.len() != ctx.num_players() {
        return Err(GameError::PlayerCount {
            expected: ctx.num_players(),
            got: players.len(),
        }
        .into());
    }
    // predicted[t][player]
    let predicted = hours
        .iter()
        .map(|&h| predicted_prices(ctx, prices.history, prices.day, h, &prices.predictor))
        .collect::<Result<Vec<_>, _>>()?;

    let tables = ctx.execution.try_map_indices(players.len(), |i| -> Result<QTable, MarlError> {
        let occupancy: Vec<f64> = hours
            .iter()
            .map(|&h| ctx.buildings[i].occupancy.get(h).ok_or(SocialError::HourNotCovered(h)))
            .collect::<Result<_, _>>()?;
        let cost = hours
            .iter()
            .enumerate()
            .map(|(t, &h)| {
                players[i]
                    .setpoints
                    .iter()
                    .map(|&s| {
                        let (e, xi) = ctx.player_response(i, h, s)?;
                        Ok(ctx.player_cost(e, predicted[t][i], xi, occupancy[t]))
                    })
                    .collect::<Result<Vec<f64>, SocialError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bands = predicted.iter().map(|p| cfg.bands.band(p[i])).collect();
        let mdp = HourlyPlayerMdp::new(bands, cfg.bands.count, cost);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        train_q(&mdp, cfg, &mut rng, i)
    })?;

    Ok(Pruner {
        config: *cfg,
        hours: hours.to_vec(),
        players: players
            .iter()
            .zip(tables)
            .map(|(s, table)| PlayerQ {
                player: s.player,
                strategies: s.clone(),
                table,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlOutcome {
    pub outcome: GameOutcome,
    pub setpoints: Vec<f64>,
    pub pruned: Vec<StrategySet>,
    pub full_joint: usize,
    pub pruned_joint: usize,
    pub elapsed: Duration,
}

/// Plays the hourly game on the pruned strategy sets.
pub fn rl_game_pipeline(
    pruner: &Pruner,
    hour: u32,
    ctx: &SocialContext,
    game: &GameConfig,
    start_prices: Vec<f64>,
) -> Result<RlOutcome, MarlError> {
    let started = Instant::now();
    let pruned = pruner.pruned_sets(hour, &start_prices)?;
    let (outcome, setpoints) = play_hour(&pruned, hour, ctx, game, start_prices)?;
    Ok(RlOutcome {
        outcome,
        setpoints,
        full_joint: pruner.players.iter().map(|p| p.strategies.len()).product(),
        pruned_joint: pruned.iter().map(|s| s.len()).product(),
        pruned,
        elapsed: started.elapsed(),
    })
}
