//! Distribution network model, validation and generation shift factors.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{DenseMatrix, LuFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Source,
    Load,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// kW
    pub active_load: f64,
    /// kVar. Carried for completeness; the DC model ignores it.
    #[serde(default)]
    pub reactive_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// per-unit
    pub reactance: f64,
    /// kW, applied symmetrically in both directions.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOffer {
    pub bus: BusId,
    /// $/MWh
    pub offer_price: f64,
    /// kW
    pub q_min: f64,
    /// kW
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadBid {
    pub bus: BusId,
    /// $/MWh
    pub bid_price: f64,
    /// kW
    pub demand: f64,
}

/// The physical grid plus market data. Buses and lines are kept sorted by id
/// so that every derived quantity is independent of input ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub offers: Vec<GeneratorOffer>,
    pub bids: Vec<LoadBid>,
    pub slack_bus: BusId,
}

/// One reason a network document was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateBus(BusId),
    DuplicateLine(u32),
    DanglingReference { bus: BusId, referenced_by: String },
    NonPositiveReactance { line: u32, reactance: f64 },
    NonPositiveLimit { line: u32, limit: f64 },
    SelfLoop { line: u32 },
    DisconnectedGraph { unreachable: Vec<BusId> },
    SlackNotSource(BusId),
    InvalidLoad { bus: BusId, reason: &'static str },
    InvalidOffer { bus: BusId, reason: &'static str },
    InvalidBid { bus: BusId, reason: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateBus(b) => write!(f, "duplicate bus id {b}"),
            Violation::DuplicateLine(l) => write!(f, "duplicate line id {l}"),
            Violation::DanglingReference { bus, referenced_by } => {
                write!(f, "DanglingReference({bus}) from {referenced_by}")
            }
            Violation::NonPositiveReactance { line, reactance } => {
                write!(f, "line {line} has non-positive reactance {reactance}")
            }
            Violation::NonPositiveLimit { line, limit } => {
                write!(f, "line {line} has non-positive flow limit {limit}")
            }
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::DisconnectedGraph { unreachable } => {
                write!(f, "network is disconnected; unreachable buses: {unreachable:?}")
            }
            Violation::SlackNotSource(b) => write!(f, "slack bus {b} is not a source bus"),
            Violation::InvalidLoad { bus, reason } => write!(f, "bus {bus}: {reason}"),
            Violation::InvalidOffer { bus, reason } => write!(f, "offer at bus {bus}: {reason}"),
            Violation::InvalidBid { bus, reason } => write!(f, "bid at bus {bus}: {reason}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("cannot parse network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("reduced susceptance matrix is singular (degenerate reactances)")]
    SingularSusceptanceMatrix,
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl GridError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            GridError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Parses and validates a network document (JSON).
pub fn build_network(text: &str) -> Result<NetworkModel, GridError> {
    let net: NetworkModel = serde_json::from_str(text)?;
    NetworkModel::new(net.buses, net.lines, net.offers, net.bids, net.slack_bus)
}

impl NetworkModel {
    /// Validates and canonicalizes (sorts) the parts of a network.
    pub fn new(
        mut buses: Vec<Bus>,
        mut lines: Vec<Line>,
        offers: Vec<GeneratorOffer>,
        bids: Vec<LoadBid>,
        slack_bus: BusId,
    ) -> Result<Self, GridError> {
        buses.sort_by_key(|b| b.id);
        lines.sort_by_key(|l| l.id);
        let net = NetworkModel {
            buses,
            lines,
            offers,
            bids,
            slack_bus,
        };
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(GridError::Invalid(violations))
        }
    }

    /// Returns every rule violation; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                out.push(Violation::DuplicateBus(b.id));
            }
            if !(b.active_load.is_finite() && b.active_load >= 0.0) {
                out.push(Violation::InvalidLoad {
                    bus: b.id,
                    reason: "active load must be finite and non-negative",
                });
            }
            if b.kind == BusKind::Junction && b.active_load != 0.0 {
                out.push(Violation::InvalidLoad {
                    bus: b.id,
                    reason: "junction buses carry no load",
                });
            }
        }
        let mut line_ids = BTreeSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.id) {
                out.push(Violation::DuplicateLine(l.id));
            }
            for end in [l.from_bus, l.to_bus] {
                if !ids.contains(&end) {
                    out.push(Violation::DanglingReference {
                        bus: end,
                        referenced_by: format!("line {}", l.id),
                    });
                }
            }
            if l.from_bus == l.to_bus {
                out.push(Violation::SelfLoop { line: l.id });
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                out.push(Violation::NonPositiveReactance {
                    line: l.id,
                    reactance: l.reactance,
                });
            }
            if !(l.flow_limit > 0.0) {
                out.push(Violation::NonPositiveLimit {
                    line: l.id,
                    limit: l.flow_limit,
                });
            }
        }
        for o in &self.offers {
            if !ids.contains(&o.bus) {
                out.push(Violation::DanglingReference {
                    bus: o.bus,
                    referenced_by: "offer".into(),
                });
            }
            if !(o.offer_price >= 0.0 && o.offer_price.is_finite()) {
                out.push(Violation::InvalidOffer {
                    bus: o.bus,
                    reason: "offer price must be finite and non-negative",
                });
            }
            if !(o.q_min >= 0.0 && o.q_min <= o.q_max && o.q_max.is_finite()) {
                out.push(Violation::InvalidOffer {
                    bus: o.bus,
                    reason: "bounds must satisfy 0 <= q_min <= q_max < inf",
                });
            }
        }
        for b in &self.bids {
            if !ids.contains(&b.bus) {
                out.push(Violation::DanglingReference {
                    bus: b.bus,
                    referenced_by: "bid".into(),
                });
            }
            if !(b.bid_price >= 0.0 && b.bid_price.is_finite()) {
                out.push(Violation::InvalidBid {
                    bus: b.bus,
                    reason: "bid price must be finite and non-negative",
                });
            }
            if !(b.demand >= 0.0 && b.demand.is_finite()) {
                out.push(Violation::InvalidBid {
                    bus: b.bus,
                    reason: "demand must be finite and non-negative",
                });
            }
        }
        match self.buses.iter().find(|b| b.id == self.slack_bus) {
            None => out.push(Violation::DanglingReference {
                bus: self.slack_bus,
                referenced_by: "slack_bus".into(),
            }),
            Some(b) if b.kind != BusKind::Source => out.push(Violation::SlackNotSource(b.id)),
            Some(_) => {}
        }
        if !self.buses.is_empty() {
            let unreachable = self.unreachable_buses();
            if !unreachable.is_empty() {
                out.push(Violation::DisconnectedGraph { unreachable });
            }
        }
        out
    }

    fn unreachable_buses(&self) -> Vec<BusId> {
        let mut adj: BTreeMap<BusId, Vec<BusId>> =
            self.buses.iter().map(|b| (b.id, Vec::new())).collect();
        for l in &self.lines {
            if adj.contains_key(&l.from_bus) && adj.contains_key(&l.to_bus) {
                adj.get_mut(&l.from_bus).unwrap().push(l.to_bus);
                adj.get_mut(&l.to_bus).unwrap().push(l.from_bus);
            }
        }
        let start = self.buses[0].id;
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for &n in &adj[&b] {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        adj.keys().filter(|b| !seen.contains(b)).copied().collect()
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    pub fn bus_ids(&self) -> Vec<BusId> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Total bid demand per bus (kW), in bus order.
    pub fn demand_by_bus(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.buses.len()];
        for bid in &self.bids {
            if let Some(i) = self.bus_index(bid.bus) {
                d[i] += bid.demand;
            }
        }
        d
    }

    pub fn total_demand_kw(&self) -> f64 {
        self.bids.iter().map(|b| b.demand).sum()
    }

    /// Replaces all bid demand at `bus` with `demand_kw`. If the bus has no
    /// bid yet, one is added at `default_bid_price`.
    pub fn set_bus_demand(&mut self, bus: BusId, demand_kw: f64, default_bid_price: f64) {
        let mut first = true;
        for bid in self.bids.iter_mut().filter(|b| b.bus == bus) {
            bid.demand = if first { demand_kw } else { 0.0 };
            first = false;
        }
        if first {
            self.bids.push(LoadBid {
                bus,
                bid_price: default_bid_price,
                demand: demand_kw,
            });
        }
    }

    /// Highest bid price in the network, 0 when there are no bids.
    pub fn max_bid_price(&self) -> f64 {
        self.bids.iter().map(|b| b.bid_price).fold(0.0, f64::max)
    }

    fn reduced_susceptance(&self) -> Result<(LuFactors, Vec<Option<usize>>), GridError> {
        let slack = self
            .bus_index(self.slack_bus)
            .ok_or(GridError::UnknownBus(self.slack_bus))?;
        // position of each bus in the reduced system (slack removed)
        let mut reduced = vec![None; self.buses.len()];
        let mut next = 0;
        for (i, slot) in reduced.iter_mut().enumerate() {
            if i != slack {
                *slot = Some(next);
                next += 1;
            }
        }
        let mut b = DenseMatrix::zeros(next, next);
        for l in &self.lines {
            let f = self.bus_index(l.from_bus).ok_or(GridError::UnknownBus(l.from_bus))?;
            let t = self.bus_index(l.to_bus).ok_or(GridError::UnknownBus(l.to_bus))?;
            let y = 1.0 / l.reactance;
            if let Some(rf) = reduced[f] {
                b.add(rf, rf, y);
            }
            if let Some(rt) = reduced[t] {
                b.add(rt, rt, y);
            }
            if let (Some(rf), Some(rt)) = (reduced[f], reduced[t]) {
                b.add(rf, rt, -y);
                b.add(rt, rf, -y);
            }
        }
        let lu = LuFactors::factor(&b).map_err(|_| GridError::SingularSusceptanceMatrix)?;
        Ok((lu, reduced))
    }

    /// Direct DC power flow: line flows (same unit as `injections`) for a
    /// per-bus net injection vector balanced at the slack bus.
    pub fn dc_power_flow(&self, injections: &[f64]) -> Result<Vec<f64>, GridError> {
        assert_eq!(injections.len(), self.buses.len());
        let (lu, reduced) = self.reduced_susceptance()?;
        let mut rhs = vec![0.0; lu.dim()];
        for (i, r) in reduced.iter().enumerate() {
            if let Some(r) = r {
                rhs[*r] = injections[i];
            }
        }
        let theta_r = lu.solve(&rhs);
        let theta = |i: usize| reduced[i].map_or(0.0, |r| theta_r[r]);
        Ok(self
            .lines
            .iter()
            .map(|l| {
                let f = self.bus_index(l.from_bus).unwrap();
                let t = self.bus_index(l.to_bus).unwrap();
                (theta(f) - theta(t)) / l.reactance
            })
            .collect())
    }
}

/// Generation shift factors: rows are lines, columns are buses (both in
/// network order). Entry `(k, i)` is the change in flow on line `k` per unit
/// injected at bus `i` and withdrawn at the slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct GsfMatrix {
    pub entries: DenseMatrix,
    pub bus_ids: Vec<BusId>,
    pub line_ids: Vec<u32>,
    pub slack_bus: BusId,
}

impl GsfMatrix {
    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.entries.get(line, bus)
    }

    pub fn by_id(&self, line_id: u32, bus: BusId) -> Option<f64> {
        let k = self.line_ids.binary_search(&line_id).ok()?;
        let i = self.bus_ids.binary_search(&bus).ok()?;
        Some(self.entries.get(k, i))
    }

    pub fn num_lines(&self) -> usize {
        self.line_ids.len()
    }

    pub fn num_buses(&self) -> usize {
        self.bus_ids.len()
    }

    /// Line flows by superposition of per-bus injections.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        self.entries.mul_vec(injections)
    }
}

pub fn compute_gsf(net: &NetworkModel) -> Result<GsfMatrix, GridError> {
    let (lu, reduced) = net.reduced_susceptance()?;
    let nb = net.buses.len();
    let nl = net.lines.len();
    let ends: Vec<(usize, usize, f64)> = net
        .lines
        .iter()
        .map(|l| {
            (
                net.bus_index(l.from_bus).unwrap(),
                net.bus_index(l.to_bus).unwrap(),
                1.0 / l.reactance,
            )
        })
        .collect();
    let mut entries = DenseMatrix::zeros(nl, nb);
    let mut unit = vec![0.0; lu.dim()];
    for (i, r) in reduced.iter().enumerate() {
        let Some(r) = *r else { continue };
        unit[r] = 1.0;
        let theta_r = lu.solve(&unit);
        unit[r] = 0.0;
        let theta = |b: usize| reduced[b].map_or(0.0, |rb| theta_r[rb]);
        for (k, &(f, t, y)) in ends.iter().enumerate() {
            let g = y * (theta(f) - theta(t));
            // shift factors of a passive network lie in [-1, 1]; trim roundoff
            entries.set(k, i, g.clamp(-1.0, 1.0));
        }
    }
    Ok(GsfMatrix {
        entries,
        bus_ids: net.bus_ids(),
        line_ids: net.lines.iter().map(|l| l.id).collect(),
        slack_bus: net.slack_bus,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn triangle_builds() {
        let net = triangle(1000.0);
        assert_eq!(net.buses.len(), 3);
        assert_eq!(net.lines.len(), 3);
    }

    #[test]
    fn dangling_line_end_is_reported() {
        let mut net = triangle(1000.0);
        net.lines.push(line(4, 2, 99, 0.1, 10.0));
        let v = net.validate();
        assert!(v.iter().any(
            |x| matches!(x, Violation::DanglingReference { bus, .. } if *bus == BusId(99))
        ));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"{
            "buses": [
                {"id": 1, "kind": "source", "active_load": 0},
                {"id": 2, "kind": "load", "active_load": 10},
                {"id": 3, "kind": "load", "active_load": 10}
            ],
            "lines": [{"id": 1, "from_bus": 1, "to_bus": 2, "reactance": 0.0, "flow_limit": 5}],
            "offers": [{"bus": 7, "offer_price": 10, "q_min": 0, "q_max": 10}],
            "bids": [],
            "slack_bus": 1
        }"#;
        let err = build_network(text).unwrap_err();
        let v = err.violations();
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NonPositiveReactance { line: 1, .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::DanglingReference { bus, .. } if *bus == BusId(7))));
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::DisconnectedGraph { unreachable } if unreachable == &vec![BusId(3)]
        )));
    }

    #[test]
    fn slack_must_be_source() {
        let mut net = triangle(1000.0);
        net.slack_bus = BusId(2);
        assert!(net.validate().contains(&Violation::SlackNotSource(BusId(2))));
    }

    #[test]
    fn two_bus_unity_shift_factor() {
        let net = NetworkModel::new(
            vec![bus(1, BusKind::Source, 0.0), bus(2, BusKind::Load, 1.0)],
            vec![line(1, 1, 2, 0.05, 10.0)],
            vec![],
            vec![],
            BusId(1),
        )
        .unwrap();
        let g = compute_gsf(&net).unwrap();
        // injecting at 2 and withdrawing at 1 pushes flow 2 -> 1, against orientation
        assert_eq!(g.by_id(1, BusId(2)), Some(-1.0));
        assert_eq!(g.by_id(1, BusId(1)), Some(0.0));
    }

    #[test]
    fn triangle_shift_factors() {
        // Oracle by hand: reduced B = [[2,-1],[-1,2]]/x, injection at 2 gives
        // theta = x*[2/3, 1/3], so 2/3 flows directly and 1/3 goes round.
        let g = compute_gsf(&triangle(1000.0)).unwrap();
        let tol = 1e-12;
        assert!((g.by_id(1, BusId(2)).unwrap() + 2.0 / 3.0).abs() < tol); // 1->2 line
        assert!((g.by_id(2, BusId(2)).unwrap() - 1.0 / 3.0).abs() < tol); // 2->3 line
        assert!((g.by_id(3, BusId(2)).unwrap() + 1.0 / 3.0).abs() < tol); // 1->3 line
        for k in 0..3 {
            assert_eq!(g.get(k, 0), 0.0);
        }
    }

    #[test]
    fn singular_reactances_detected() {
        let mut net = triangle(1000.0);
        for l in &mut net.lines {
            l.reactance = 1e300;
        }
        assert!(matches!(
            compute_gsf(&net),
            Err(GridError::SingularSusceptanceMatrix)
        ));
    }
}
