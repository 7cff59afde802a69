//! The bundled 60-bus campus dataset and five-building summer scenario.

use std::collections::BTreeMap;

use crate::grid::{build_network, NetworkModel};
use crate::scenario::{Scenario, ScenarioConfig, ScenarioError};

pub const DU60_JSON: &str = include_str!("../data/du60.json");
/// Lines into buses 32/33 tightened and bus 33's load multiplied by five.
pub const DU60_CONGESTED_JSON: &str = include_str!("../data/du60_congested.json");
pub const PROFILES_CSV: &str = include_str!("../data/profiles.csv");
pub const SCENARIO_TOML: &str = include_str!("../data/scenario.toml");

pub fn network() -> NetworkModel {
    build_network(DU60_JSON).expect("bundled network is valid")
}

pub fn congested_network() -> NetworkModel {
    build_network(DU60_CONGESTED_JSON).expect("bundled network is valid")
}

pub fn scenario_config() -> ScenarioConfig {
    ScenarioConfig::from_toml(SCENARIO_TOML).expect("bundled scenario parses")
}

/// The bundled scenario with `config` applied on top of the bundled files.
pub fn scenario_with(config: ScenarioConfig) -> Result<Scenario, ScenarioError> {
    Scenario::from_parts(config, DU60_JSON, PROFILES_CSV, &BTreeMap::new())
}

pub fn scenario() -> Scenario {
    scenario_with(scenario_config()).expect("bundled scenario loads")
}
