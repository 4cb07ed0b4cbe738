//! Linear controllers in innovation form.
//!
//! The controller keeps a tail state `ζ` together with short histories of
//! innovations. At each step it forms the model prediction, the innovation
//! `e = ỹ − C x̂`, and the command
//! `u = F ζ + Σ_a M_a e(age a)`.
//! Responses to an innovation of age below `tail_age` are explicit FIR taps;
//! from `tail_age` on they are carried by `ζ⁺ = A_tail ζ + Ψ e(tail_age)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::DiscreteController;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationController {
    /// Samples of pure delay between the measurement and the controller.
    pub input_delay: usize,
    /// Age, in samples, of the freshest innovation.
    pub first_age: usize,
    /// Age at which responses are handed to the tail system.
    pub tail_age: usize,
    #[serde(with = "linalg::rows")]
    pub c_model: Mat,
    /// `M_a` for `a = first_age..tail_age`.
    #[serde(with = "linalg::rows::vec")]
    pub taps: Vec<Mat>,
    /// Response `Φ_b` of the model state at age `b = 1..tail_age`.
    #[serde(with = "linalg::rows::vec")]
    pub prediction: Vec<Mat>,
    /// `Ψ = Φ_tail_age`.
    #[serde(with = "linalg::rows")]
    pub entry: Mat,
    #[serde(with = "linalg::rows")]
    pub tail_a: Mat,
    #[serde(with = "linalg::rows")]
    pub tail_f: Mat,
}

/// Result of one controller step on a batch of columns.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: Mat,
    pub u: Mat,
    pub innovation: Mat,
    pub estimate: Mat,
}

impl InnovationController {
    pub fn validate(&self) -> Result<()> {
        let n = self.c_model.ncols();
        let p = self.c_model.nrows();
        let m = self.tail_f.nrows();
        let bad = |what: &str| Err(Error::Dimension(format!("innovation controller: {what}")));
        if self.tail_age < self.first_age.max(1) {
            return bad("tail_age must be >= max(1, first_age)");
        }
        if self.taps.len() != self.tail_age - self.first_age {
            return bad("taps must cover ages first_age..tail_age");
        }
        if self.prediction.len() + 1 != self.tail_age {
            return bad("prediction must cover ages 1..tail_age");
        }
        if self.taps.iter().any(|t| t.shape() != (m, p))
            || self.prediction.iter().any(|t| t.shape() != (n, p))
            || self.entry.shape() != (n, p)
            || self.tail_a.shape() != (n, n)
            || self.tail_f.shape() != (m, n)
        {
            return bad("matrix shapes are inconsistent");
        }
        Ok(())
    }

    pub fn n_model(&self) -> usize {
        self.c_model.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c_model.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.tail_f.nrows()
    }

    fn zeta_len(&self) -> usize {
        self.first_age.max(1)
    }

    fn oldest_age(&self) -> usize {
        self.tail_age.max(self.first_age + self.tail_age - 1)
    }

    fn hist_len(&self) -> usize {
        self.oldest_age() - self.first_age
    }

    /// Dimension of the stacked state `[y buffer; ζ history; e history]`.
    pub fn state_dim(&self) -> usize {
        let p = self.n_outputs();
        self.input_delay * p + self.zeta_len() * self.n_model() + self.hist_len() * p
    }

    /// One step on `k` columns. With `gate_open == false` the innovation is
    /// forced to zero (prediction-only update).
    pub fn step(&self, state: &Mat, y: &Mat, gate_open: bool) -> StepOutput {
        let p = self.n_outputs();
        let n = self.n_model();
        let k = y.ncols();
        let d = self.input_delay;
        let zl = self.zeta_len();
        let hl = self.hist_len();
        let z0 = d * p;
        let e0 = z0 + zl * n;

        let ybuf = |i: usize| state.view((i * p, 0), (p, k));
        let zeta = |i: usize| state.view((z0 + i * n, 0), (n, k));
        let hist = |i: usize| state.view((e0 + i * p, 0), (p, k));

        let y_in = if d == 0 {
            y.clone()
        } else {
            ybuf(d - 1).into_owned()
        };
        let fa = self.first_age;
        let ta = self.tail_age;
        // Innovation of age `a`, for ages that are already stored.
        let stored = |a: usize| hist(a - fa - 1).into_owned();

        let tail_from_hist = |e_tail: &Mat| &self.tail_a * zeta(0) + &self.entry * e_tail;

        let mut zeta_now = None;
        let zeta_ref = if fa == 0 {
            let z = tail_from_hist(&stored(ta));
            zeta_now = Some(z.clone());
            z
        } else {
            zeta(fa - 1).into_owned()
        };
        let mut estimate = zeta_ref;
        for b in 1..ta {
            estimate += &self.prediction[b - 1] * stored(fa + b);
        }
        let e = if gate_open {
            y_in - &self.c_model * &estimate
        } else {
            Mat::zeros(p, k)
        };
        let at = |a: usize| if a == fa { e.clone() } else { stored(a) };
        let zeta_new = match zeta_now {
            Some(z) => z,
            None => tail_from_hist(&at(ta)),
        };
        let mut u = &self.tail_f * &zeta_new;
        for a in fa..ta {
            u += &self.taps[a - fa] * at(a);
        }

        let mut next = Mat::zeros(state.nrows(), k);
        if d > 0 {
            next.view_mut((0, 0), (p, k)).copy_from(y);
            for i in 1..d {
                next.view_mut((i * p, 0), (p, k)).copy_from(&ybuf(i - 1));
            }
        }
        next.view_mut((z0, 0), (n, k)).copy_from(&zeta_new);
        for i in 1..zl {
            next.view_mut((z0 + i * n, 0), (n, k)).copy_from(&zeta(i - 1));
        }
        if hl > 0 {
            next.view_mut((e0, 0), (p, k)).copy_from(&e);
            for i in 1..hl {
                next.view_mut((e0 + i * p, 0), (p, k)).copy_from(&hist(i - 1));
            }
        }
        StepOutput {
            state: next,
            u,
            innovation: e,
            estimate,
        }
    }

    /// State-space form `y → u`, obtained by applying the step to unit
    /// vectors.
    pub fn to_discrete(&self) -> DiscreteController {
        let dim = self.state_dim();
        let p = self.n_outputs();
        let from_state = self.step(&Mat::identity(dim, dim), &Mat::zeros(p, dim), true);
        let from_input = self.step(&Mat::zeros(dim, p), &Mat::identity(p, p), true);
        DiscreteController {
            a: from_state.state,
            b: from_input.state,
            c: from_state.u,
            d: from_input.u,
        }
    }
}

/// Stateful wrapper used by the simulator. Measurement validity travels
/// through the input delay line together with the samples.
#[derive(Debug, Clone)]
pub struct InnovationRunner<'a> {
    ctrl: &'a InnovationController,
    state: Mat,
    valid: VecDeque<bool>,
}

impl<'a> InnovationRunner<'a> {
    pub fn new(ctrl: &'a InnovationController, columns: usize) -> Self {
        Self {
            ctrl,
            state: Mat::zeros(ctrl.state_dim(), columns),
            valid: std::iter::repeat_n(true, ctrl.input_delay).collect(),
        }
    }

    pub fn step(&mut self, y: &Mat, valid: bool) -> StepOutput {
        let open = if self.ctrl.input_delay == 0 {
            valid
        } else {
            self.valid.push_back(valid);
            self.valid.pop_front().unwrap_or(true)
        };
        let out = self.ctrl.step(&self.state, y, open);
        self.state = out.state.clone();
        out
    }
}
