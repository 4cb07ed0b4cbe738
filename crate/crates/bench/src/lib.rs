//! Fixtures shared by the benchmarks.

use lambda_lqg::scenario::{Scenario, ScenarioModel};

/// The bundled default scenario, built.
pub fn default_model() -> ScenarioModel {
    Scenario::default().build().expect("default scenario builds")
}
