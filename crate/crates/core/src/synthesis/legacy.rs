//! Coarse/fine desaturation baseline.
//!
//! Each agent runs its own loop: a local Kalman filter on its delayed
//! measurement, prediction over the delay with the inputs actually applied,
//! and the block-diagonal regulator row. The fine command is limited; the
//! shortfall is handed to the coarse actuator over the cross link, and
//! coarse commands inside a deadband are dropped.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::delay::DiscreteDelays;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lti::PartitionedPlant;
use crate::sim::{Policy, PolicyRunner};

use super::lqg::{block_diagonal_tail, local_filters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyParams {
    /// Limit on the fine command magnitude.
    pub fine_limit: Option<f64>,
    /// Coarse command per unit of fine shortfall.
    pub desat_gain: f64,
    /// Coarse commands below this magnitude are not issued.
    pub coarse_deadband: f64,
}

impl Default for LegacyParams {
    fn default() -> Self {
        Self {
            fine_limit: None,
            desat_gain: 0.0,
            coarse_deadband: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct AgentLoop {
    states: std::ops::Range<usize>,
    outputs: std::ops::Range<usize>,
    input: usize,
    a: Mat,
    b: Mat,
    c: Mat,
    k_f: Mat,
    /// `L_p − A K_f`.
    cross: Mat,
    f: Mat,
}

#[derive(Debug, Clone)]
pub struct LegacyBaseline {
    pub params: LegacyParams,
    pub delays: DiscreteDelays,
    n_inputs: usize,
    n_outputs: usize,
    agents: [AgentLoop; 2],
}

/// Fine subsystem is block 0 and coarse is block 1, one input each.
pub fn legacy_baseline(
    plant: &PartitionedPlant,
    delays: DiscreteDelays,
    params: LegacyParams,
) -> Result<LegacyBaseline> {
    let delays = DiscreteDelays::new(delays.d1, delays.d2)?;
    if plant.n_blocks() != 2
        || plant.blocks.iter().any(|b| b.inputs.len() != 1)
        || !plant.is_block_diagonal()
    {
        return Err(Error::param("plant", "legacy baseline needs two decoupled single-input subsystems"));
    }
    if params.fine_limit.is_some_and(|c| c.is_nan() || c <= 0.0)
        || params.coarse_deadband.is_nan()
        || params.coarse_deadband < 0.0
        || !params.desat_gain.is_finite()
    {
        return Err(Error::param("legacy", "limit must be > 0, deadband >= 0, gain finite"));
    }
    let filters = local_filters(plant)?;
    let tail = block_diagonal_tail(plant)?;
    let agent = |i: usize| {
        let blk = &plant.blocks[i];
        let lb = plant.local(i);
        let kf = &filters[i];
        AgentLoop {
            states: blk.states.clone(),
            outputs: blk.outputs.clone(),
            input: blk.inputs.start,
            cross: &kf.l_p - &lb.a * &kf.k_f,
            k_f: kf.k_f.clone(),
            f: tail
                .f
                .view((blk.inputs.start, blk.states.start), (1, blk.states.len()))
                .into_owned(),
            a: lb.a,
            b: lb.b2,
            c: lb.c2,
        }
    };
    let g = &plant.realization;
    Ok(LegacyBaseline {
        params,
        delays,
        n_inputs: g.n_inputs(),
        n_outputs: g.n_outputs(),
        agents: [agent(0), agent(1)],
    })
}

struct AgentState {
    prior: Mat,
    measurements: VecDeque<(Mat, bool)>,
    applied: VecDeque<f64>,
}

impl AgentLoop {
    fn start(&self, d1: usize) -> AgentState {
        let n = self.states.len();
        AgentState {
            prior: Mat::zeros(n, 1),
            measurements: std::iter::repeat_n((Mat::zeros(self.outputs.len(), 1), false), d1).collect(),
            applied: std::iter::repeat_n(0.0, d1).collect(),
        }
    }

    /// Returns the desired command, the filtered estimate at the delayed
    /// time and its innovation.
    fn desired(&self, st: &mut AgentState, y: &Mat, measured: bool) -> (f64, Mat, Mat) {
        let own = y.rows(self.outputs.start, self.outputs.len()).into_owned();
        st.measurements.push_back((own, measured));
        let (y_old, valid) = st.measurements.pop_front().expect("buffer holds d1 + 1 samples");
        let e = if valid {
            &y_old - &self.c * &st.prior
        } else {
            Mat::zeros(self.outputs.len(), 1)
        };
        let filtered = &st.prior + &self.k_f * &e;
        let now = if st.applied.is_empty() {
            filtered.clone()
        } else {
            let mut x = &self.a * &filtered + &self.b * st.applied[0] + &self.cross * &e;
            for u in st.applied.iter().skip(1) {
                x = &self.a * &x + &self.b * *u;
            }
            x
        };
        ((&self.f * now)[(0, 0)], filtered, e)
    }

    fn commit(&self, st: &mut AgentState, filtered: Mat, e: Mat, applied: f64) {
        st.applied.push_back(applied);
        let oldest = st.applied.pop_front().expect("nonempty");
        st.prior = &self.a * filtered + &self.b * oldest + &self.cross * e;
    }
}

struct LegacyRunner<'a> {
    base: &'a LegacyBaseline,
    states: [AgentState; 2],
    shortfall: VecDeque<f64>,
}

impl PolicyRunner for LegacyRunner<'_> {
    fn step(&mut self, y: &Mat, measured: bool) -> Mat {
        let [fine, coarse] = &self.base.agents;
        let p = &self.base.params;
        let [sf, sc] = &mut self.states;

        let (want_f, filt_f, e_f) = fine.desired(sf, y, measured);
        let got_f = match p.fine_limit {
            Some(l) => want_f.clamp(-l, l),
            None => want_f,
        };
        self.shortfall.push_back(want_f - got_f);
        let handed = self.shortfall.pop_front().unwrap_or(0.0);

        let (want_c, filt_c, e_c) = coarse.desired(sc, y, measured);
        let cmd_c = want_c + p.desat_gain * handed;
        let got_c = if cmd_c.abs() < p.coarse_deadband { 0.0 } else { cmd_c };

        fine.commit(sf, filt_f, e_f, got_f);
        coarse.commit(sc, filt_c, e_c, got_c);
        let mut u = Mat::zeros(self.base.n_inputs, 1);
        u[(fine.input, 0)] = got_f;
        u[(coarse.input, 0)] = got_c;
        u
    }
}

impl Policy for LegacyBaseline {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn start(&self) -> Box<dyn PolicyRunner + '_> {
        let d1 = self.delays.d1;
        Box::new(LegacyRunner {
            base: self,
            states: [self.agents[0].start(d1), self.agents[1].start(d1)],
            shortfall: std::iter::repeat_n(0.0, self.delays.d2 - self.delays.d1).collect(),
        })
    }
}
