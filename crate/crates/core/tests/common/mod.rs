#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use socialgrid_core::building::{
    BuildingProfile, EnergyModel, HourSeries, ProductivityCurve, RegressionModel, WeatherProfile,
};
use socialgrid_core::grid::{Bus, BusId, BusKind, GeneratorOffer, Line, LoadBid, NetworkModel};
use socialgrid_core::pricing::solve_dc_dlmp;
use socialgrid_core::grid::compute_gsf;
use socialgrid_core::social::{SocialContext, SocialCostParams};

pub fn bus(id: u32, kind: BusKind) -> Bus {
    Bus {
        id: BusId(id),
        kind,
        active_load: 0.0,
        reactive_load: 0.0,
    }
}

pub fn line(id: u32, from: u32, to: u32, reactance: f64, limit: f64) -> Line {
    Line {
        id,
        from_bus: BusId(from),
        to_bus: BusId(to),
        reactance,
        flow_limit: limit,
    }
}

pub fn offer(bus: u32, price: f64, q_max: f64) -> GeneratorOffer {
    GeneratorOffer {
        bus: BusId(bus),
        offer_price: price,
        q_min: 0.0,
        q_max,
    }
}

pub fn bid(bus: u32, demand: f64) -> LoadBid {
    LoadBid {
        bus: BusId(bus),
        bid_price: 500.0,
        demand,
    }
}

/// Raw parts of a random connected network: a random spanning tree on
/// buses 1..=n plus `extra` chords. Bus 1 is the slack source.
pub struct Parts {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub offers: Vec<GeneratorOffer>,
    pub bids: Vec<LoadBid>,
}

impl Parts {
    pub fn build(&self) -> NetworkModel {
        NetworkModel::new(
            self.buses.clone(),
            self.lines.clone(),
            self.offers.clone(),
            self.bids.clone(),
            BusId(1),
        )
        .unwrap()
    }
}

pub fn random_parts(rng: &mut ChaCha8Rng, n: usize, extra: usize, limit: (f64, f64)) -> Parts {
    let n = n.max(2) as u32;
    let buses: Vec<Bus> = (1..=n)
        .map(|i| bus(i, if i == 1 { BusKind::Source } else { BusKind::Load }))
        .collect();
    let mut lines = Vec::new();
    let mut id = 1;
    let lim = |rng: &mut ChaCha8Rng| if limit.0 >= limit.1 { limit.0 } else { rng.gen_range(limit.0..limit.1) };
    for i in 2..=n {
        let j = rng.gen_range(1..i);
        let l = lim(rng);
        lines.push(line(id, j, i, rng.gen_range(0.05..0.5), l));
        id += 1;
    }
    for _ in 0..extra {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b {
            let l = lim(rng);
            lines.push(line(id, a, b, rng.gen_range(0.05..0.5), l));
            id += 1;
        }
    }
    let bids: Vec<LoadBid> = (2..=n).map(|i| bid(i, rng.gen_range(5.0..60.0))).collect();
    let total: f64 = bids.iter().map(|b| b.demand).sum();
    let mut offers = vec![offer(1, rng.gen_range(30.0..50.0), 4.0 * total)];
    for _ in 0..rng.gen_range(1..=2) {
        let at = rng.gen_range(2..=n);
        offers.push(offer(at, rng.gen_range(40.0..95.0), rng.gen_range(0.2..1.5) * total));
    }
    Parts {
        buses,
        lines,
        offers,
        bids,
    }
}

/// A random network that the market can clear, possibly congested.
pub fn feasible_network(rng: &mut ChaCha8Rng, n: usize, extra: usize, limit: (f64, f64)) -> NetworkModel {
    loop {
        let net = random_parts(rng, n, extra, limit).build();
        let gsf = compute_gsf(&net).unwrap();
        if solve_dc_dlmp(&net, &gsf).is_ok() {
            return net;
        }
    }
}

pub fn regression(scale: f64) -> EnergyModel {
    EnergyModel::LinearRegression(RegressionModel {
        scale,
        ..RegressionModel::default()
    })
}

pub fn building(bus: u32, occupancy: Vec<f64>, scale: f64) -> BuildingProfile {
    BuildingProfile {
        bus: BusId(bus),
        name: format!("b{bus}"),
        baseline_load: HourSeries {
            start: 10,
            values: vec![20.0; occupancy.len()],
        },
        occupancy: HourSeries { start: 10, values: occupancy },
        energy_model: regression(scale),
        productivity: ProductivityCurve::default(),
    }
}

pub fn weather(hours: usize, base: f64) -> WeatherProfile {
    WeatherProfile {
        outdoor: HourSeries {
            start: 10,
            values: (0..hours).map(|i| base + i as f64).collect(),
        },
    }
}

/// Triangle with a single large offer at the slack: prices are uniform.
pub fn triangle(limit: f64) -> NetworkModel {
    NetworkModel::new(
        vec![bus(1, BusKind::Source), bus(2, BusKind::Load), bus(3, BusKind::Load)],
        vec![
            line(1, 1, 2, 0.1, limit),
            line(2, 1, 3, 0.1, limit),
            line(3, 2, 3, 0.1, limit),
        ],
        vec![offer(1, 60.0, 1e6)],
        vec![bid(2, 30.0), bid(3, 40.0)],
        BusId(1),
    )
    .unwrap()
}

/// Random buildings on the uncongested triangle, 12 covered hours from 10.
pub fn random_triangle_ctx(rng: &mut ChaCha8Rng, players: usize) -> SocialContext {
    let mut buses = [2, 3, 1];
    buses.shuffle(rng);
    let buildings = (0..players)
        .map(|p| {
            let occ = (0..12).map(|_| rng.gen_range(0.0..400.0)).collect();
            building(buses[p % 3], occ, rng.gen_range(0.005..0.05))
        })
        .collect();
    SocialContext::new(
        triangle(1e6),
        buildings,
        weather(12, rng.gen_range(60.0..85.0)),
        SocialCostParams::default(),
    )
    .unwrap()
}

/// A random subset (sorted, at least `min`) of the 64..=79 °F integer grid.
pub fn random_grid(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<f64> {
    let mut all: Vec<f64> = (64..=79).map(f64::from).collect();
    all.shuffle(rng);
    let mut g: Vec<f64> = all[..rng.gen_range(min..=max)].to_vec();
    g.sort_by(f64::total_cmp);
    g
}
