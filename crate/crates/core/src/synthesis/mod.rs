//! Controller synthesis for the architectures compared by the toolkit.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::delay::Agent;
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::lti::DiscreteController;

pub mod finite;
pub mod fir;
pub mod innovation;
pub mod legacy;
pub mod lqg;

pub use finite::{
    finite_horizon_cost, finite_horizon_decentralized, finite_horizon_gains, finite_horizon_lqg,
    finite_horizon_oracle, FiniteHorizonGains, FiniteHorizonPolicy, Horizon, OracleResult,
};
pub use fir::{structured_fir_youla, FirStructure, InnerLoop, StructuredSynthesisResult};
pub use innovation::{InnovationController, InnovationRunner, StepOutput};
pub use legacy::{legacy_baseline, LegacyBaseline, LegacyParams};
pub use lqg::{
    block_diagonal_lqg, centralized_delayed_lqg, decentralized_delayed_lqg,
    delay_augmented_plant, kalman_filter, local_filters, lqg_delay_free, KalmanFilter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    CentralizedDelayFree,
    CentralizedDelayed { d: usize },
    Decentralized { d1: usize, d2: usize },
    BlockDiagonal { d1: usize },
    StructuredFir { d1: usize, d2: usize, taps: usize },
}

impl Architecture {
    pub fn label(&self) -> String {
        match *self {
            Architecture::CentralizedDelayFree => "cen_delayfree".into(),
            Architecture::CentralizedDelayed { d } => format!("cen_d{d}"),
            Architecture::Decentralized { d1, d2 } => format!("dec_{d1}_{d2}"),
            Architecture::BlockDiagonal { d1 } => format!("blockdiag_d{d1}"),
            Architecture::StructuredFir { d1, d2, taps } => format!("fir_{d1}_{d2}_n{taps}"),
        }
    }
}

/// What one agent holds in a two-agent design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentController {
    pub agent: Agent,
    pub states: Range<usize>,
    pub inputs: Range<usize>,
    pub outputs: Range<usize>,
    /// Kalman measurement-update gain of the agent's subsystem.
    #[serde(with = "linalg::rows")]
    pub filter_gain: Mat,
    #[serde(with = "linalg::rows")]
    pub predictor_gain: Mat,
    /// Rows of the tail regulator acting on the agent's inputs.
    #[serde(with = "linalg::rows")]
    pub regulator_gain: Mat,
    /// Taps on the agent's own innovations, from the first available age.
    #[serde(with = "linalg::rows::vec")]
    pub own_taps: Vec<Mat>,
    /// Taps on the innovations received from the other agent.
    #[serde(with = "linalg::rows::vec")]
    pub cross_taps: Vec<Mat>,
    /// Buffer length on the agent's own measurement.
    pub own_delay: usize,
    /// Extra buffering of received messages; `None` when nothing is exchanged.
    pub message_delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRealization {
    pub architecture: Architecture,
    pub controller: InnovationController,
    pub agents: Vec<AgentController>,
    /// Average cost predicted by the synthesis itself.
    pub design_cost: f64,
}

impl ControllerRealization {
    pub fn state_space(&self) -> DiscreteController {
        self.controller.to_discrete()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.controller.validate()?;
        Ok(r)
    }
}
