//! DC-OPF distribution locational marginal prices.
//!
//! The market clears by maximizing social surplus (bid value minus offer
//! cost) with inelastic demand, a system power balance and symmetric line
//! limits expressed through generation shift factors. Nodal prices come from
//! the optimal duals: `price_j = λ + Σ_k g_kj μ_k`, split into energy (MEC),
//! loss (MLC, zero here) and congestion (MCC) components.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{BusId, GridError, GsfMatrix, NetworkModel};
use crate::lp::{LinearProgram, LpError, RowKind};

const KW_PER_MW: f64 = 1000.0;

#[derive(Debug, thiserror::Error)]
pub enum PricingError {
    #[error("market is infeasible: demand exceeds deliverable supply")]
    Infeasible,
    #[error("market is unbounded (malformed offers)")]
    Unbounded,
    #[error("LP solver failed: {0}")]
    Solver(LpError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("shift-factor matrix does not match the network")]
    GsfMismatch,
    #[error("no price history for day {day}, hour {hour}")]
    MissingHistory { day: i64, hour: u32 },
}

impl From<LpError> for PricingError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible { .. } => PricingError::Infeasible,
            LpError::Unbounded { .. } => PricingError::Unbounded,
            other => PricingError::Solver(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusPrice {
    pub bus: BusId,
    pub mec: f64,
    pub mlc: f64,
    pub mcc: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDispatch {
    pub bus: BusId,
    /// kW
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector {
    /// $/MWh, dual of the power balance row.
    pub balance: f64,
    /// $/MWh per line row, in line order.
    pub lines: Vec<f64>,
    /// $/MWh reduced cost of each offer, in offer order.
    pub offer_reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlmpSolution {
    pub dispatch: Vec<GeneratorDispatch>,
    /// $/h
    pub surplus: f64,
    /// Surplus recomputed from the dual objective ($/h).
    pub dual_surplus: f64,
    /// $/h of supply cost at the optimum.
    pub supply_cost: f64,
    /// $/MWh
    pub lambda: f64,
    /// $/MWh per line (line order).
    pub mu: Vec<f64>,
    pub line_ids: Vec<u32>,
    /// kW per line (line order), positive from `from_bus` to `to_bus`.
    pub flows: Vec<f64>,
    pub prices: Vec<BusPrice>,
    pub binding_lines: Vec<u32>,
    /// Non-unique duals are possible at this optimum.
    pub degenerate_duals: bool,
    pub duals: DualVector,
}

impl DlmpSolution {
    pub fn price_at(&self, bus: BusId) -> Option<&BusPrice> {
        self.prices
            .binary_search_by_key(&bus, |p| p.bus)
            .ok()
            .map(|i| &self.prices[i])
    }

    pub fn total_price(&self, bus: BusId) -> Option<f64> {
        self.price_at(bus).map(|p| p.total)
    }

    pub fn to_export(&self, emit_duals: bool) -> DlmpExport {
        DlmpExport {
            dispatch: self.dispatch.clone(),
            surplus: self.surplus,
            lambda: self.lambda,
            mu: self
                .line_ids
                .iter()
                .zip(&self.mu)
                .map(|(&line, &mu)| LineDual { line, mu })
                .collect(),
            prices: self.prices.clone(),
            binding_lines: self.binding_lines.clone(),
            degenerate_duals: self.degenerate_duals,
            duals: emit_duals.then(|| self.duals.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDual {
    pub line: u32,
    pub mu: f64,
}

/// Solution export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmpExport {
    pub dispatch: Vec<GeneratorDispatch>,
    pub surplus: f64,
    pub lambda: f64,
    pub mu: Vec<LineDual>,
    pub prices: Vec<BusPrice>,
    pub binding_lines: Vec<u32>,
    pub degenerate_duals: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duals: Option<DualVector>,
}

fn check_gsf(net: &NetworkModel, gsf: &GsfMatrix) -> Result<(), PricingError> {
    let lines_match = net.lines.len() == gsf.line_ids.len()
        && net.lines.iter().zip(&gsf.line_ids).all(|(l, id)| l.id == *id);
    let buses_match = net.buses.len() == gsf.bus_ids.len()
        && net.buses.iter().zip(&gsf.bus_ids).all(|(b, id)| b.id == *id);
    if lines_match && buses_match && gsf.slack_bus == net.slack_bus {
        Ok(())
    } else {
        Err(PricingError::GsfMismatch)
    }
}

/// Which line-limit rows go into the LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineRows {
    /// Start with none and add the rows whose limits the current dispatch
    /// violates until none do. Omitted rows are slack, so their duals are 0.
    #[default]
    Lazy,
    /// Every line from the start.
    All,
}

/// Clears the market and returns dispatch, duals and decomposed nodal prices.
pub fn solve_dc_dlmp(net: &NetworkModel, gsf: &GsfMatrix) -> Result<DlmpSolution, PricingError> {
    solve_dc_dlmp_with(net, gsf, LineRows::Lazy)
}

struct MarketLp {
    lp: LinearProgram,
    balance: usize,
    /// (line index, flow variable, row)
    lines: Vec<(usize, usize, usize)>,
}

fn market_lp(
    net: &NetworkModel,
    gsf: &GsfMatrix,
    offer_bus: &[usize],
    demand_mw: &[f64],
    active: &[usize],
) -> MarketLp {
    let mut lp = LinearProgram::new();
    for o in &net.offers {
        lp.add_var(o.offer_price, o.q_min / KW_PER_MW, o.q_max / KW_PER_MW);
    }
    let n_gen = net.offers.len();
    let total: f64 = demand_mw.iter().sum();
    let balance = lp.add_row((0..n_gen).map(|g| (g, 1.0)).collect(), RowKind::Eq, total);
    // flow_k = Σ_g g_k,bus(g) q_g - Σ_j g_kj d_j
    let lines = active
        .iter()
        .map(|&k| {
            let limit = net.lines[k].flow_limit / KW_PER_MW;
            let fv = lp.add_var(0.0, -limit, limit);
            let mut coeffs: Vec<(usize, f64)> = offer_bus
                .iter()
                .enumerate()
                .filter_map(|(g, &i)| {
                    let s = gsf.get(k, i);
                    (s != 0.0).then_some((g, s))
                })
                .collect();
            coeffs.push((fv, -1.0));
            let rhs: f64 = demand_mw.iter().enumerate().map(|(j, d)| gsf.get(k, j) * d).sum();
            (k, fv, lp.add_row(coeffs, RowKind::Eq, rhs))
        })
        .collect();
    MarketLp { lp, balance, lines }
}

pub fn solve_dc_dlmp_with(net: &NetworkModel, gsf: &GsfMatrix, rows: LineRows) -> Result<DlmpSolution, PricingError> {
    check_gsf(net, gsf)?;
    let nl = net.lines.len();
    let n_gen = net.offers.len();
    let demand_mw: Vec<f64> = net.demand_by_bus().iter().map(|d| d / KW_PER_MW).collect();
    let total_demand: f64 = demand_mw.iter().sum();
    let offer_bus = net
        .offers
        .iter()
        .map(|o| net.bus_index(o.bus).ok_or(GridError::UnknownBus(o.bus)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut active: Vec<usize> = match rows {
        LineRows::Lazy => Vec::new(),
        LineRows::All => (0..nl).collect(),
    };
    let (model, sol, flows) = loop {
        let model = market_lp(net, gsf, &offer_bus, &demand_mw, &active);
        let sol = model.lp.solve()?;
        let mut injection = demand_mw.iter().map(|d| -d).collect::<Vec<_>>();
        for (g, &i) in offer_bus.iter().enumerate() {
            injection[i] += sol.x[g];
        }
        let flows_mw = gsf.flows(&injection);
        let mut added = false;
        for (k, f) in flows_mw.iter().enumerate() {
            let limit = net.lines[k].flow_limit / KW_PER_MW;
            if f.abs() > limit * (1.0 + 1e-9) && !active.contains(&k) {
                active.push(k);
                added = true;
            }
        }
        if !added {
            let flows: Vec<f64> = flows_mw.iter().map(|f| f * KW_PER_MW).collect();
            break (model, sol, flows);
        }
        active.sort_unstable();
    };

    let bid_value: f64 = net
        .bids
        .iter()
        .map(|b| b.bid_price * b.demand / KW_PER_MW)
        .sum();
    let supply_cost = sol.objective;
    let scale = net
        .offers
        .iter()
        .map(|o| o.offer_price)
        .fold(1.0_f64, f64::max);
    let snap = |v: f64| if v.abs() <= 1e-9 * scale { 0.0 } else { v };
    let lambda = snap(sol.row_duals[model.balance]);
    let mut raw_mu = vec![0.0; nl];
    for &(k, _, row) in &model.lines {
        raw_mu[k] = sol.row_duals[row];
    }
    let mu: Vec<f64> = raw_mu.iter().map(|&m| snap(m)).collect();

    let prices = net
        .buses
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let mcc: f64 = mu
                .iter()
                .enumerate()
                .filter(|(_, m)| **m != 0.0)
                .map(|(k, m)| gsf.get(k, j) * m)
                .sum();
            let mlc = 0.0;
            BusPrice {
                bus: b.id,
                mec: lambda,
                mlc,
                mcc,
                total: lambda + mlc + mcc,
            }
        })
        .collect();

    let binding_lines = net
        .lines
        .iter()
        .zip(&flows)
        .zip(&mu)
        .filter(|((l, f), m)| **m != 0.0 || f.abs() >= l.flow_limit * (1.0 - 1e-9))
        .map(|((l, _), _)| l.id)
        .collect();

    // A nonbasic structural column with zero reduced cost means another
    // optimal basis exists, and with it possibly other duals.
    let offer_tie = (0..n_gen).any(|g| {
        let o = &net.offers[g];
        !sol.is_basic[g] && o.q_max > o.q_min && sol.reduced_costs[g].abs() <= 1e-9 * scale
    });
    let flow_tie = model
        .lines
        .iter()
        .any(|&(_, fv, _)| !sol.is_basic[fv] && sol.reduced_costs[fv].abs() <= 1e-9 * scale);
    let degenerate_duals = total_demand > 0.0 && (offer_tie || flow_tie);
    if degenerate_duals {
        log::debug!("DLMP optimum is dual degenerate; duals may not be unique");
    }

    Ok(DlmpSolution {
        dispatch: net
            .offers
            .iter()
            .zip(&sol.x)
            .map(|(o, q)| GeneratorDispatch {
                bus: o.bus,
                output: q * KW_PER_MW,
            })
            .collect(),
        surplus: bid_value - supply_cost,
        dual_surplus: bid_value - sol.dual_objective,
        supply_cost,
        lambda,
        mu,
        line_ids: net.lines.iter().map(|l| l.id).collect(),
        flows,
        prices,
        binding_lines,
        degenerate_duals,
        duals: DualVector {
            balance: sol.row_duals[model.balance],
            lines: raw_mu,
            offer_reduced_costs: sol.reduced_costs[..n_gen].to_vec(),
        },
    })
}

/// Finite-difference check of a nodal price: adds `delta_kw` of demand at
/// `bus`, re-solves, and compares the change in supply cost per MWh with the
/// reported price. Returns `|fd - price| / max(1, |price|)`.
pub fn price_sensitivity_check(
    net: &NetworkModel,
    gsf: &GsfMatrix,
    bus: BusId,
    delta_kw: f64,
) -> Result<f64, PricingError> {
    if delta_kw == 0.0 {
        return Ok(0.0);
    }
    let base = solve_dc_dlmp(net, gsf)?;
    let price = base.total_price(bus).ok_or(GridError::UnknownBus(bus))?;
    let mut bumped = net.clone();
    let current: f64 = net
        .bids
        .iter()
        .filter(|b| b.bus == bus)
        .map(|b| b.demand)
        .sum();
    bumped.set_bus_demand(bus, current + delta_kw, net.max_bid_price());
    let perturbed = solve_dc_dlmp(&bumped, gsf)?;
    let fd = (perturbed.supply_cost - base.supply_cost) / (delta_kw / KW_PER_MW);
    Ok((fd - price).abs() / price.abs().max(1.0))
}

/// Realized nodal prices keyed by (day, hour, bus). Days older than the
/// retention window are dropped on insert.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceHistory {
    entries: BTreeMap<(i64, u32), BTreeMap<BusId, f64>>,
    retain_days: Option<i64>,
}

impl PriceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps only the most recent `days` days.
    pub fn with_retention(days: i64) -> Self {
        Self {
            entries: BTreeMap::new(),
            retain_days: Some(days.max(1)),
        }
    }

    pub fn record<I>(&mut self, day: i64, hour: u32, prices: I)
    where
        I: IntoIterator<Item = (BusId, f64)>,
    {
        self.entries.entry((day, hour)).or_default().extend(prices);
        if let Some(keep) = self.retain_days {
            let newest = self.entries.keys().map(|k| k.0).max().unwrap_or(day);
            self.entries.retain(|k, _| k.0 > newest - keep);
        }
    }

    pub fn record_solution(&mut self, day: i64, hour: u32, sol: &DlmpSolution) {
        self.record(day, hour, sol.prices.iter().map(|p| (p.bus, p.total)));
    }

    pub fn get(&self, day: i64, hour: u32, bus: BusId) -> Option<f64> {
        self.entries.get(&(day, hour))?.get(&bus).copied()
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        let mut d: Vec<i64> = self.entries.keys().map(|k| k.0).collect();
        d.dedup();
        d.into_iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Day-ahead price predictor `p̂[d] = k1 p[d-1] + k2 p[d-2] + k7 p[d-7]`
/// at the same hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePredictor {
    pub k1: f64,
    pub k2: f64,
    pub k7: f64,
}

impl Default for PricePredictor {
    fn default() -> Self {
        Self {
            k1: 0.8765,
            k2: 0.0,
            k7: 0.1025,
        }
    }
}

impl PricePredictor {
    pub fn predict(
        &self,
        hist: &PriceHistory,
        day: i64,
        hour: u32,
        bus: BusId,
    ) -> Result<f64, PricingError> {
        let lookup = |lag: i64| {
            hist.get(day - lag, hour, bus)
                .ok_or(PricingError::MissingHistory {
                    day: day - lag,
                    hour,
                })
        };
        Ok(self.k1 * lookup(1)? + self.k2 * lookup(2)? + self.k7 * lookup(7)?)
    }
}

/// Prediction with the default coefficients.
pub fn predict_price(
    hist: &PriceHistory,
    day: i64,
    hour: u32,
    bus: BusId,
) -> Result<f64, PricingError> {
    PricePredictor::default().predict(hist, day, hour, bus)
}
