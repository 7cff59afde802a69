//! Campus-grid nodal pricing and HVAC setpoint scheduling.
//!
//! The crate computes DC-OPF distribution locational marginal prices from a
//! network model, evaluates the hourly social cost of building setpoints
//! (utility cost plus lost productivity), searches for setpoint equilibria
//! with best-response dynamics and prunes strategy sets with tabular
//! multi-agent Q-learning.

pub mod building;
pub mod bundled;
pub mod exec;
pub mod game;
pub mod grid;
pub mod linalg;
pub mod lp;
pub mod marl;
pub mod pricing;
pub mod scenario;
pub mod social;

pub use exec::Execution;
