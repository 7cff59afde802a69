//! Hourly social cost: what each player pays for HVAC energy at its nodal
//! price plus the monetized productivity loss of its occupants. Also hosts
//! the exhaustive grid search used as a ground-truth optimizer.

use serde::{Deserialize, Serialize};

use crate::building::{BuildingError, BuildingProfile, WeatherProfile, BTU_PER_KWH};
use crate::exec::Execution;
use crate::grid::{compute_gsf, BusId, GridError, GsfMatrix, NetworkModel};
use crate::pricing::{solve_dc_dlmp, DlmpSolution, PricingError};

pub const DEFAULT_GRID_CAP: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum SocialError {
    #[error(transparent)]
    Building(#[from] BuildingError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("joint strategy grid has {size} points, cap is {cap}")]
    GridTooLarge { size: u128, cap: usize },
    #[error("player bus {0} is not in the network")]
    UnknownPlayerBus(BusId),
    #[error("hour {0} is not covered by the profiles")]
    HourNotCovered(u32),
    #[error("expected {expected} setpoints or prices, got {got}")]
    PlayerCount { expected: usize, got: usize },
    #[error("player {0} has an empty strategy grid")]
    EmptyGrid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialCostParams {
    /// Weight on the productivity term.
    pub w: f64,
    /// $ per person-hour at full productivity.
    pub alpha: f64,
    pub btu_per_kwh: f64,
}

impl Default for SocialCostParams {
    fn default() -> Self {
        Self {
            w: 0.1,
            alpha: 2.0,
            btu_per_kwh: BTU_PER_KWH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyOutcome {
    pub hour: u32,
    /// °F per player
    pub setpoints: Vec<f64>,
    /// HVAC kWh per player
    pub energy: Vec<f64>,
    /// $/MWh per player
    pub prices: Vec<f64>,
    pub productivity: Vec<f64>,
    pub occupancy: Vec<f64>,
    /// $ per player
    pub per_player_cost: Vec<f64>,
    /// $
    pub social_cost: f64,
}

/// Everything needed to price one hour: the grid, the players and the
/// weather. Immutable once built.
#[derive(Debug, Clone)]
pub struct SocialContext {
    pub network: NetworkModel,
    pub gsf: GsfMatrix,
    pub buildings: Vec<BuildingProfile>,
    pub weather: WeatherProfile,
    pub params: SocialCostParams,
    pub execution: Execution,
    pub grid_cap: usize,
}

impl SocialContext {
    pub fn new(
        network: NetworkModel,
        buildings: Vec<BuildingProfile>,
        weather: WeatherProfile,
        params: SocialCostParams,
    ) -> Result<Self, SocialError> {
        if let Some(b) = buildings.iter().find(|b| network.bus_index(b.bus).is_none()) {
            return Err(SocialError::UnknownPlayerBus(b.bus));
        }
        let gsf = compute_gsf(&network)?;
        Ok(Self {
            network,
            gsf,
            buildings,
            weather,
            params,
            execution: Execution::default(),
            grid_cap: DEFAULT_GRID_CAP,
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn num_players(&self) -> usize {
        self.buildings.len()
    }

    pub fn player_buses(&self) -> Vec<BusId> {
        self.buildings.iter().map(|b| b.bus).collect()
    }

    pub fn covers(&self, hour: u32) -> bool {
        self.weather.outdoor.covers(hour)
            && self
                .buildings
                .iter()
                .all(|b| b.occupancy.covers(hour) && b.baseline_load.covers(hour))
    }

    /// HVAC energy (kWh) and productivity of `player` at `setpoint`.
    pub fn player_response(&self, player: usize, hour: u32, setpoint: f64) -> Result<(f64, f64), SocialError> {
        let b = &self.buildings[player];
        let t_out = self
            .weather
            .outdoor
            .get(hour)
            .ok_or(SocialError::HourNotCovered(hour))?;
        let xi = b.productivity.productivity(setpoint)?;
        let btu = b.energy_model.energy(hour, setpoint, t_out)?;
        Ok((btu / self.params.btu_per_kwh, xi))
    }

    fn occupancy(&self, player: usize, hour: u32) -> Result<f64, SocialError> {
        self.buildings[player]
            .occupancy
            .get(hour)
            .ok_or(SocialError::HourNotCovered(hour))
    }

    /// Cost of one player given its energy, productivity and price.
    pub fn player_cost(&self, energy_kwh: f64, price: f64, productivity: f64, occupancy: f64) -> f64 {
        let p = &self.params;
        price * energy_kwh / 1000.0 + p.w * p.alpha * (1.0 - productivity) * occupancy
    }

    /// The network with each player bus's demand set to baseline + HVAC.
    pub fn network_for(&self, hour: u32, energy_kwh: &[f64]) -> Result<NetworkModel, SocialError> {
        let mut net = self.network.clone();
        let default_bid = net.max_bid_price();
        for (b, e) in self.buildings.iter().zip(energy_kwh) {
            let base = b
                .baseline_load
                .get(hour)
                .ok_or(SocialError::HourNotCovered(hour))?;
            net.set_bus_demand(b.bus, base + e, default_bid);
        }
        Ok(net)
    }

    /// Clears the market for the hour at the given joint setpoint.
    pub fn solve_hour(&self, hour: u32, setpoints: &[f64]) -> Result<DlmpSolution, SocialError> {
        let energy = self.energies(hour, setpoints)?.0;
        let net = self.network_for(hour, &energy)?;
        Ok(solve_dc_dlmp(&net, &self.gsf)?)
    }

    fn energies(&self, hour: u32, setpoints: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SocialError> {
        self.check_len(setpoints.len())?;
        let mut energy = Vec::with_capacity(setpoints.len());
        let mut xi = Vec::with_capacity(setpoints.len());
        for (i, &s) in setpoints.iter().enumerate() {
            let (e, x) = self.player_response(i, hour, s)?;
            energy.push(e);
            xi.push(x);
        }
        Ok((energy, xi))
    }

    fn check_len(&self, got: usize) -> Result<(), SocialError> {
        if got == self.num_players() {
            Ok(())
        } else {
            Err(SocialError::PlayerCount {
                expected: self.num_players(),
                got,
            })
        }
    }

    fn assemble(
        &self,
        hour: u32,
        setpoints: &[f64],
        energy: Vec<f64>,
        productivity: Vec<f64>,
        prices: Vec<f64>,
    ) -> Result<HourlyOutcome, SocialError> {
        let occupancy = (0..self.num_players())
            .map(|i| self.occupancy(i, hour))
            .collect::<Result<Vec<_>, _>>()?;
        let per_player_cost: Vec<f64> = (0..self.num_players())
            .map(|i| self.player_cost(energy[i], prices[i], productivity[i], occupancy[i]))
            .collect();
        Ok(HourlyOutcome {
            hour,
            setpoints: setpoints.to_vec(),
            energy,
            prices,
            productivity,
            occupancy,
            social_cost: per_player_cost.iter().sum(),
            per_player_cost,
        })
    }
}

/// Social cost of a joint setpoint with prices from a fresh market solve.
pub fn social_cost(setpoints: &[f64], hour: u32, ctx: &SocialContext) -> Result<HourlyOutcome, SocialError> {
    let (energy, xi) = ctx.energies(hour, setpoints)?;
    let net = ctx.network_for(hour, &energy)?;
    let sol = solve_dc_dlmp(&net, &ctx.gsf)?;
    let prices = ctx
        .buildings
        .iter()
        .map(|b| sol.total_price(b.bus).ok_or(SocialError::UnknownPlayerBus(b.bus)))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.assemble(hour, setpoints, energy, xi, prices)
}

/// Social cost with exogenous per-player prices ($/MWh); no market solve.
pub fn social_cost_at_prices(
    setpoints: &[f64],
    hour: u32,
    ctx: &SocialContext,
    prices: &[f64],
) -> Result<HourlyOutcome, SocialError> {
    ctx.check_len(prices.len())?;
    let (energy, xi) = ctx.energies(hour, setpoints)?;
    ctx.assemble(hour, setpoints, energy, xi, prices.to_vec())
}

/// Number of joint strategies, or `GridTooLarge` past `cap`.
pub fn joint_size(sizes: &[usize], cap: usize) -> Result<usize, SocialError> {
    let size = sizes.iter().fold(1u128, |acc, &m| acc.saturating_mul(m as u128));
    if size > cap as u128 {
        return Err(SocialError::GridTooLarge { size, cap });
    }
    Ok(size as usize)
}

/// Decodes a flat joint index; the last player varies fastest.
pub fn decode_joint(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for i in (0..sizes.len()).rev() {
        out[i] = index % sizes[i];
        index /= sizes[i];
    }
    out
}

pub fn encode_joint(choice: &[usize], sizes: &[usize]) -> usize {
    choice.iter().zip(sizes).fold(0, |acc, (&c, &m)| acc * m + c)
}

fn check_grids(grids: &[Vec<f64>]) -> Result<Vec<usize>, SocialError> {
    if let Some(i) = grids.iter().position(|g| g.is_empty()) {
        return Err(SocialError::EmptyGrid(i));
    }
    Ok(grids.iter().map(|g| g.len()).collect())
}

fn argmin_joint<F>(grids: &[Vec<f64>], ctx: &SocialContext, eval: F) -> Result<Vec<f64>, SocialError>
where
    F: Fn(&[f64]) -> Result<f64, SocialError> + Sync + Send,
{
    ctx.check_len(grids.len())?;
    let sizes = check_grids(grids)?;
    let n = joint_size(&sizes, ctx.grid_cap)?;
    let point = |j: usize| -> Vec<f64> {
        decode_joint(j, &sizes)
            .iter()
            .enumerate()
            .map(|(p, &k)| grids[p][k])
            .collect()
    };
    let costs = ctx.execution.try_map_indices(n, |j| eval(&point(j)))?;
    let mut best = 0;
    for j in 1..n {
        let better = match costs[j].total_cmp(&costs[best]) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => {
                let (a, b) = (point(j), point(best));
                a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                    == Some(std::cmp::Ordering::Less)
            }
            std::cmp::Ordering::Greater => false,
        };
        if better {
            best = j;
        }
    }
    Ok(point(best))
}

/// Exact minimizer of the hourly social cost over the joint grid, with
/// prices from a market solve at every point. Ties go to the
/// lexicographically smallest setpoint vector.
pub fn brute_force_optimum(
    hour: u32,
    grids: &[Vec<f64>],
    ctx: &SocialContext,
) -> Result<(Vec<f64>, HourlyOutcome), SocialError> {
    let best = argmin_joint(grids, ctx, |s| Ok(social_cost(s, hour, ctx)?.social_cost))?;
    let outcome = social_cost(&best, hour, ctx)?;
    Ok((best, outcome))
}

/// As [`brute_force_optimum`] with fixed per-player prices.
pub fn brute_force_at_prices(
    hour: u32,
    grids: &[Vec<f64>],
    ctx: &SocialContext,
    prices: &[f64],
) -> Result<(Vec<f64>, HourlyOutcome), SocialError> {
    let best = argmin_joint(grids, ctx, |s| {
        Ok(social_cost_at_prices(s, hour, ctx, prices)?.social_cost)
    })?;
    let outcome = social_cost_at_prices(&best, hour, ctx, prices)?;
    Ok((best, outcome))
}
