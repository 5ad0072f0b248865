//! Wiring for desk-scale deployments of the three-layer search federation.

pub mod scenario;

pub use scenario::{run_scenario, MetricsReport, Scenario, ScenarioConfig, ScenarioError, Transport};
