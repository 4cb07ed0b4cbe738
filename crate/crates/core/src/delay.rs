//! Delay specifications, discretization of delays, delay buffers and the
//! information sets of the two-agent graph.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

const ROUNDING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteDelays {
    pub d1: usize,
    pub d2: usize,
}

impl DiscreteDelays {
    pub fn new(d1: usize, d2: usize) -> Result<Self> {
        if d1 > d2 {
            return Err(Error::DelayViolation(format!(
                "d1 <= d2 (got d1 = {d1}, d2 = {d2})"
            )));
        }
        Ok(Self { d1, d2 })
    }

    /// Lag (in steps) after which agent `i` may use measurements of agent `j`.
    pub fn lag(&self, i: Agent, j: Agent) -> usize {
        if i == j {
            self.d1
        } else {
            self.d2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    /// Self delay τ1 in seconds.
    pub tau_self: f64,
    /// Cross delay τ2 in seconds.
    pub tau_cross: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscretePart>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretePart {
    pub d1: usize,
    pub d2: usize,
    pub h: f64,
    /// Largest `d − τ/h` introduced by rounding up, zero for exact multiples.
    pub rounding_residual: f64,
}

impl DelaySpec {
    pub fn new(tau_self: f64, tau_cross: f64) -> Self {
        Self {
            tau_self,
            tau_cross,
            discrete: None,
        }
    }

    pub fn discrete_delays(&self) -> Option<DiscreteDelays> {
        self.discrete.map(|d| DiscreteDelays { d1: d.d1, d2: d.d2 })
    }
}

/// Which inequality of `τ1 < τ2 < 2τ1` failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayViolation {
    Negative,
    CrossNotLarger,
    TriangleBroken,
}

impl fmt::Display for DelayViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DelayViolation::Negative => "τ1 ≥ 0 and τ2 ≥ 0",
            DelayViolation::CrossNotLarger => "τ2 > τ1",
            DelayViolation::TriangleBroken => "τ2 < 2τ1",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    pub violations: Vec<DelayViolation>,
}

impl DelayReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::DelayViolation(format!(
                "{v} (triangle inequality 2τ1 > τ2 > τ1)"
            ))),
        }
    }
}

/// Checks `τ1 = τ2 = 0` or `τ1 < τ2 < 2τ1`.
pub fn validate_delays(tau_self: f64, tau_cross: f64) -> DelayReport {
    let mut violations = Vec::new();
    if !(tau_self >= 0.0 && tau_cross >= 0.0) {
        violations.push(DelayViolation::Negative);
    } else if !(tau_self == 0.0 && tau_cross == 0.0) {
        if tau_cross <= tau_self {
            violations.push(DelayViolation::CrossNotLarger);
        }
        if tau_cross >= 2.0 * tau_self {
            violations.push(DelayViolation::TriangleBroken);
        }
    }
    DelayReport { violations }
}

fn steps(tau: f64, h: f64) -> (usize, f64) {
    let r = tau / h;
    let nearest = r.round();
    if (r - nearest).abs() <= ROUNDING_TOL {
        (nearest as usize, 0.0)
    } else {
        let up = r.ceil();
        (up as usize, up - r)
    }
}

/// Converts the delays to sample counts at step `h`.
pub fn to_discrete(spec: &DelaySpec, h: f64) -> Result<DelaySpec> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("h", format!("must be > 0, got {h}")));
    }
    if !(spec.tau_self >= 0.0 && spec.tau_cross >= 0.0) {
        return Err(Error::DelayViolation("τ1 ≥ 0 and τ2 ≥ 0".into()));
    }
    let (d1, r1) = steps(spec.tau_self, h);
    let (d2, r2) = steps(spec.tau_cross, h);
    if d1 > d2 {
        return Err(Error::DelayViolation(format!(
            "d1 <= d2 after rounding (d1 = {d1}, d2 = {d2})"
        )));
    }
    if d2 > 2 * d1 {
        return Err(Error::DelayViolation(format!(
            "d2 <= 2·d1 after rounding (d1 = {d1}, d2 = {d2})"
        )));
    }
    Ok(DelaySpec {
        discrete: Some(DiscretePart {
            d1,
            d2,
            h,
            rounding_residual: r1.max(r2),
        }),
        ..*spec
    })
}

/// Fixed-length FIFO delay line: `push` at time `t` returns the value pushed
/// at `t − d`, or zeros while the line is still filling.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    queue: VecDeque<Vector>,
    len: usize,
}

impl DelayBuffer {
    pub fn new(len: usize, dim: usize) -> Self {
        Self {
            queue: (0..len).map(|_| Vector::zeros(dim)).collect(),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, v: Vector) -> Vector {
        if self.len == 0 {
            return v;
        }
        self.queue.push_back(v);
        self.queue.pop_front().expect("buffer is nonempty")
    }

    pub fn reset(&mut self) {
        for v in &mut self.queue {
            v.fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    P,
    S,
}

impl Agent {
    pub const ALL: [Agent; 2] = [Agent::P, Agent::S];

    pub fn index(self) -> usize {
        match self {
            Agent::P => 0,
            Agent::S => 1,
        }
    }

    pub fn other(self) -> Agent {
        match self {
            Agent::P => Agent::S,
            Agent::S => Agent::P,
        }
    }

    pub fn from_index(i: usize) -> Agent {
        if i == 0 {
            Agent::P
        } else {
            Agent::S
        }
    }
}

/// Measurements of `source` that are available at time `t`: indices
/// `0..end` (empty when `end == 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Availability {
    pub source: Agent,
    pub end: usize,
}

impl Availability {
    pub fn range(&self) -> std::ops::Range<usize> {
        0..self.end
    }

    pub fn contains(&self, k: usize) -> bool {
        k < self.end
    }
}

/// Information available to `agent` at step `t`: its own measurements up to
/// `t − d1` and the other agent's up to `t − d2`.
pub fn information_set(agent: Agent, t: usize, delays: DiscreteDelays) -> [Availability; 2] {
    let end = |lag: usize| (t + 1).saturating_sub(lag);
    [
        Availability {
            source: agent,
            end: end(delays.d1),
        },
        Availability {
            source: agent.other(),
            end: end(delays.d2),
        },
    ]
}

/// Two-node delay graph: edge `j → i` carries delay `lag(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InformationGraph {
    pub delays: DiscreteDelays,
}

impl InformationGraph {
    pub fn new(delays: DiscreteDelays) -> Self {
        Self { delays }
    }

    /// Shortest-path delay from `from` to `to`.
    pub fn path_delay(&self, from: Agent, to: Agent) -> usize {
        if from == to {
            self.delays.d1
        } else {
            self.delays.d2
        }
    }

    /// `structure[i][j]` is true when `u_i` may depend on `y_j` at all.
    pub fn structure(&self) -> [[bool; 2]; 2] {
        [[true, true], [true, true]]
    }

    /// Whether lag `k` from `y_j` to `u_i` is permitted.
    pub fn allows(&self, i: Agent, j: Agent, k: usize) -> bool {
        k >= self.delays.lag(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_examples() {
        assert!(validate_delays(1e-3, 1.5e-3).is_ok());
        let r = validate_delays(1e-3, 2.5e-3);
        assert_eq!(r.violations, vec![DelayViolation::TriangleBroken]);
        assert!(r.violations[0].to_string().contains("τ2 < 2τ1"));
        assert!(validate_delays(0.0, 0.0).is_ok());
        assert!(!validate_delays(1e-3, 1e-3).is_ok());
    }

    #[test]
    fn discrete_examples() {
        let d = to_discrete(&DelaySpec::new(1e-3, 1.5e-3), 0.5e-3).unwrap();
        let p = d.discrete.unwrap();
        assert_eq!((p.d1, p.d2), (2, 3));
        assert_eq!(p.rounding_residual, 0.0);

        let d = to_discrete(&DelaySpec::new(1.2e-3, 1.5e-3), 0.5e-3).unwrap();
        let p = d.discrete.unwrap();
        assert_eq!((p.d1, p.d2), (3, 3));
        assert!((p.rounding_residual - 0.6).abs() < 1e-9);

        let d = to_discrete(&DelaySpec::new(0.0, 0.0), 1e-3).unwrap();
        assert_eq!(d.discrete_delays(), Some(DiscreteDelays { d1: 0, d2: 0 }));
    }

    #[test]
    fn discrete_rejects_broken_order() {
        assert!(to_discrete(&DelaySpec::new(1e-3, 3e-3), 1e-3).is_err());
        assert!(to_discrete(&DelaySpec::new(1e-3, 1e-3), 0.0).is_err());
    }

    #[test]
    fn buffer_delays_by_length() {
        let mut b = DelayBuffer::new(2, 1);
        let out: Vec<f64> = (1..=5)
            .map(|k| b.push(Vector::from_element(1, k as f64))[0])
            .collect();
        assert_eq!(out, vec![0.0, 0.0, 1.0, 2.0, 3.0]);
        let mut z = DelayBuffer::new(0, 1);
        assert_eq!(z.push(Vector::from_element(1, 7.0))[0], 7.0);
    }

    #[test]
    fn information_examples() {
        let d = DiscreteDelays::new(2, 3).unwrap();
        let [own, cross] = information_set(Agent::P, 10, d);
        assert_eq!(own.range(), 0..9);
        assert_eq!(cross.range(), 0..8);
        assert_eq!(cross.source, Agent::S);
        let [own, _] = information_set(Agent::S, 1, d);
        assert_eq!(own.end, 0);
        let eq = DiscreteDelays::new(2, 2).unwrap();
        let [own, cross] = information_set(Agent::P, 5, eq);
        assert_eq!(own.end, cross.end);
    }

    #[test]
    fn graph_closure_is_complete() {
        let g = InformationGraph::new(DiscreteDelays::new(2, 3).unwrap());
        assert!(g.structure().iter().flatten().all(|&b| b));
        assert_eq!(g.path_delay(Agent::P, Agent::S), 3);
        assert!(!g.allows(Agent::P, Agent::S, 2));
        assert!(g.allows(Agent::P, Agent::P, 2));
    }
}
