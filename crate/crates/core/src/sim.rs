//! Closed-loop simulation, Monte Carlo cost estimation and exact H2 cost.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{close_loop, DiscreteController, StateSpaceModel, TimeDomain};
use crate::riccati::solve_lyapunov;
use crate::synthesis::{ControllerRealization, InnovationController, InnovationRunner};

/// Fraction of each run discarded before averaging.
pub const BURN_IN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstPattern {
    pub pulses_per_burst: usize,
    pub interburst_steps: usize,
}

impl Default for BurstPattern {
    fn default() -> Self {
        Self::continuous()
    }
}

impl BurstPattern {
    /// Measurements at every step.
    pub fn continuous() -> Self {
        Self {
            pulses_per_burst: 1,
            interburst_steps: 0,
        }
    }

    pub fn new(pulses_per_burst: usize, interburst_steps: usize) -> Result<Self> {
        if pulses_per_burst == 0 {
            return Err(Error::param("pulses_per_burst", "must be at least 1"));
        }
        Ok(Self {
            pulses_per_burst,
            interburst_steps,
        })
    }

    /// Whether a measurement is taken at step `t`.
    pub fn is_measured(&self, t: usize) -> bool {
        t % (self.pulses_per_burst + self.interburst_steps) < self.pulses_per_burst
    }
}

/// A control law that can be run step by step.
pub trait Policy: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn start(&self) -> Box<dyn PolicyRunner + '_>;
}

pub trait PolicyRunner {
    /// Command for the current step given the current measurement.
    /// `measured == false` during inter-burst steps.
    fn step(&mut self, y: &Mat, measured: bool) -> Mat;
}

struct Innovation<'a>(InnovationRunner<'a>);

impl PolicyRunner for Innovation<'_> {
    fn step(&mut self, y: &Mat, measured: bool) -> Mat {
        self.0.step(y, measured).u
    }
}

impl Policy for InnovationController {
    fn n_inputs(&self) -> usize {
        InnovationController::n_inputs(self)
    }
    fn n_outputs(&self) -> usize {
        InnovationController::n_outputs(self)
    }
    fn start(&self) -> Box<dyn PolicyRunner + '_> {
        Box::new(Innovation(InnovationRunner::new(self, 1)))
    }
}

impl Policy for ControllerRealization {
    fn n_inputs(&self) -> usize {
        self.controller.n_inputs()
    }
    fn n_outputs(&self) -> usize {
        self.controller.n_outputs()
    }
    fn start(&self) -> Box<dyn PolicyRunner + '_> {
        self.controller.start()
    }
}

struct StateSpaceRunner<'a> {
    k: &'a DiscreteController,
    xi: Mat,
}

impl PolicyRunner for StateSpaceRunner<'_> {
    fn step(&mut self, y: &Mat, measured: bool) -> Mat {
        // Without an innovation to suppress, a missing sample reads as zero.
        let y = if measured {
            y.clone()
        } else {
            Mat::zeros(y.nrows(), 1)
        };
        let u = &self.k.c * &self.xi + &self.k.d * &y;
        self.xi = &self.k.a * &self.xi + &self.k.b * &y;
        u
    }
}

impl Policy for DiscreteController {
    fn n_inputs(&self) -> usize {
        self.d.nrows()
    }
    fn n_outputs(&self) -> usize {
        self.d.ncols()
    }
    fn start(&self) -> Box<dyn PolicyRunner + '_> {
        Box::new(StateSpaceRunner {
            k: self,
            xi: Mat::zeros(self.a.nrows(), 1),
        })
    }
}

/// Standard normal noise keyed by `(seed, t)`: the ChaCha stream number is
/// the time step and channels are read in order, so every sample is
/// independent of how runs are scheduled.
pub fn noise_sample(seed: u64, t: usize, channels: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    Mat::from_fn(channels, 1, |_, _| StandardNormal.sample(&mut rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub seed: u64,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// `|z[t]|²` with `z = C1 x + D12 u`.
    pub cost: Vec<f64>,
    pub burst_mask: Vec<bool>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    /// `e_λ[t] = c_λ x[t]` for a wavelength row `c_λ`.
    pub fn wavelength_error(&self, row: &Mat) -> Vec<f64> {
        self.x
            .iter()
            .map(|x| row.iter().zip(x).map(|(c, v)| c * v).sum())
            .collect()
    }

    pub fn mean_cost(&self, burn_in: usize) -> f64 {
        let tail = &self.cost[burn_in.min(self.cost.len())..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    /// CSV with columns `t, x*, u*, y*, e_lambda, cost, burst_mask`.
    pub fn write_csv<W: Write>(&self, out: W, wavelength_row: Option<&Mat>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dims = |v: &Vec<Vec<f64>>| v.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..dims(&self.x)).map(|i| format!("x{i}")));
        header.extend((0..dims(&self.u)).map(|i| format!("u{i}")));
        header.extend((0..dims(&self.y)).map(|i| format!("y{i}")));
        header.extend(["e_lambda", "cost", "burst_mask"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        let e = wavelength_row.map(|r| self.wavelength_error(r));
        for t in 0..self.len() {
            let mut rec = vec![t.to_string()];
            for v in [&self.x[t], &self.u[t], &self.y[t]] {
                rec.extend(v.iter().map(|x| x.to_string()));
            }
            rec.push(e.as_ref().map_or(String::new(), |e| e[t].to_string()));
            rec.push(self.cost[t].to_string());
            rec.push(u8::from(self.burst_mask[t]).to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

fn check_dims(plant: &StateSpaceModel, policy: &dyn Policy) -> Result<()> {
    if !plant.is_discrete() {
        return Err(Error::DomainMismatch("simulation needs a discrete plant".into()));
    }
    if policy.n_inputs() != plant.n_inputs() || policy.n_outputs() != plant.n_outputs() {
        return Err(Error::Dimension(format!(
            "controller is {}×{}, plant needs {}×{}",
            policy.n_inputs(),
            policy.n_outputs(),
            plant.n_inputs(),
            plant.n_outputs()
        )));
    }
    Ok(())
}

/// Runs the loop, calling `visit(t, x, u, y, cost, measured)` every step.
fn run<F>(
    plant: &StateSpaceModel,
    policy: &dyn Policy,
    steps: usize,
    seed: u64,
    burst: BurstPattern,
    mut visit: F,
) where
    F: FnMut(usize, &Mat, &Mat, &Mat, f64, bool),
{
    let mut runner = policy.start();
    let mut x = Mat::zeros(plant.n_states(), 1);
    for t in 0..steps {
        let w = noise_sample(seed, t, plant.n_noise());
        let y = &plant.c2 * &x + &plant.d21 * &w;
        let measured = burst.is_measured(t);
        let u = runner.step(&y, measured);
        let z = &plant.c1 * &x + &plant.d12 * &u;
        visit(t, &x, &u, &y, z.norm_squared(), measured);
        x = &plant.a * &x + &plant.b1 * &w + &plant.b2 * &u;
    }
}

pub fn simulate(
    plant: &StateSpaceModel,
    policy: &dyn Policy,
    steps: usize,
    seed: u64,
    burst: BurstPattern,
) -> Result<SimulationTrace> {
    check_dims(plant, policy)?;
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    let col = |m: &Mat| m.iter().copied().collect::<Vec<f64>>();
    let mut tr = SimulationTrace {
        seed,
        x: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        cost: Vec::with_capacity(steps),
        burst_mask: Vec::with_capacity(steps),
    };
    run(plant, policy, steps, seed, burst, |_, x, u, y, c, m| {
        tr.x.push(col(x));
        tr.u.push(col(u));
        tr.y.push(col(y));
        tr.cost.push(c);
        tr.burst_mask.push(m);
    });
    Ok(tr)
}

/// Time-averaged cost of one run after discarding the burn-in.
pub fn run_average_cost(
    plant: &StateSpaceModel,
    policy: &dyn Policy,
    steps: usize,
    seed: u64,
    burst: BurstPattern,
) -> Result<f64> {
    check_dims(plant, policy)?;
    let burn = burn_in(steps);
    if steps <= burn {
        return Err(Error::param("steps", "too short for the burn-in"));
    }
    let mut sum = 0.0;
    run(plant, policy, steps, seed, burst, |t, _, _, _, c, _| {
        if t >= burn {
            sum += c;
        }
    });
    Ok(sum / (steps - burn) as f64)
}

pub fn burn_in(steps: usize) -> usize {
    (steps as f64 * BURN_IN_FRACTION).floor() as usize
}

/// Average cost `tr(C P Cᵀ + D Dᵀ)` of the closed loop driven by unit
/// white noise.
pub fn exact_h2_cost(plant: &StateSpaceModel, controller: &DiscreteController) -> Result<f64> {
    let cl = close_loop(plant, controller)?;
    let rho = linalg::spectral_radius(&cl.a);
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let p = solve_lyapunov(&cl.a, &(&cl.b * cl.b.transpose()), TimeDomain::Discrete)?;
    Ok((&cl.c * p * cl.c.transpose()).trace() + (&cl.d * cl.d.transpose()).trace())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub architecture: String,
    pub exact_h2: Option<f64>,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub n_runs: usize,
    pub steps: usize,
    /// Per-run averages in seed order.
    pub runs: Vec<f64>,
}

impl CostReport {
    /// `|mc_mean − exact_h2| ≤ 3·mc_stderr`, when the exact value is known.
    pub fn is_consistent(&self) -> Option<bool> {
        self.exact_h2
            .map(|j| (self.mc_mean - j).abs() <= 3.0 * self.mc_stderr)
    }

    /// `sqrt(s₁² + s₂²)`.
    pub fn combined_stderr(&self, other: &CostReport) -> f64 {
        self.mc_stderr.hypot(other.mc_stderr)
    }

    /// Mean and standard error of the per-seed differences `self − other`.
    /// Both reports must come from the same seeds.
    pub fn paired_difference(&self, other: &CostReport) -> Result<(f64, f64)> {
        if self.runs.len() != other.runs.len() || self.runs.len() < 2 {
            return Err(Error::param("runs", "paired comparison needs matching runs"));
        }
        let d: Vec<f64> = self.runs.iter().zip(&other.runs).map(|(a, b)| a - b).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok((mean, (var / n).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_runs: usize,
    pub steps: usize,
    pub base_seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            n_runs: 32,
            steps: 20_000,
            base_seed: 1,
        }
    }
}

/// Mean and standard error of the per-run averages over seeds
/// `base_seed..base_seed + n_runs`, run in parallel.
pub fn estimate_cost(
    name: &str,
    plant: &StateSpaceModel,
    policy: &dyn Policy,
    mc: MonteCarlo,
    burst: BurstPattern,
    exact_h2: Option<f64>,
) -> Result<CostReport> {
    if mc.n_runs < 2 {
        return Err(Error::param("n_runs", "need at least two runs"));
    }
    let runs: Vec<f64> = (0..mc.n_runs as u64)
        .into_par_iter()
        .map(|k| run_average_cost(plant, policy, mc.steps, mc.base_seed + k, burst))
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let var = runs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CostReport {
        architecture: name.to_string(),
        exact_h2,
        mc_mean: mean,
        mc_stderr: (var / n).sqrt(),
        n_runs: mc.n_runs,
        steps: mc.steps,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant(a: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            Mat::from_element(1, 1, a),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::from_element(1, 1, 1.0),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            Mat::from_element(1, 1, 1.0),
            Mat::from_row_slice(2, 1, &[0.0, 0.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
            Some(1.0),
        )
        .unwrap()
    }

    #[test]
    fn bursts() {
        let b = BurstPattern::new(3, 2).unwrap();
        let m: Vec<bool> = (0..7).map(|t| b.is_measured(t)).collect();
        assert_eq!(m, vec![true, true, true, false, false, true, true]);
        assert!(BurstPattern::new(0, 1).is_err());
    }

    #[test]
    fn open_loop_h2() {
        let k = DiscreteController::static_gain(Mat::zeros(1, 1));
        let j = exact_h2_cost(&scalar_plant(0.5), &k).unwrap();
        assert!((j - 4.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            exact_h2_cost(&scalar_plant(1.5), &k),
            Err(Error::UnstableClosedLoop(_))
        ));
    }

    #[test]
    fn noise_is_keyed_by_step() {
        let a = noise_sample(7, 100, 3);
        let b = noise_sample(7, 100, 3);
        let c = noise_sample(7, 101, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trace_csv_has_header() {
        let k = DiscreteController::static_gain(Mat::zeros(1, 1));
        let tr = simulate(&scalar_plant(0.5), &k, 3, 1, BurstPattern::continuous()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(&Mat::from_element(1, 1, 2.0))).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,x0,u0,y0,e_lambda,cost,burst_mask"));
        assert_eq!(s.lines().count(), 4);
    }
}
