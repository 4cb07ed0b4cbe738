//! Finite-horizon problems: time-varying LQG gains, the time-varying
//! decentralized policy and an independent convex oracle.
//!
//! The horizon covers steps `t = 0..T`. The cost is
//! `E[Σ_t |z_t|² + x_Tᵀ X_T x_T]` with `x_0 ~ N(0, Σ0)` and unit white noise.

use crate::delay::DiscreteDelays;
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, spd_solve, symmetrize, Mat};
use crate::lti::{PartitionedPlant, StateSpaceModel};
use crate::riccati::riccati_recursion_finite;

use super::lqg::{source_response, KalmanFilter};

const ORACLE_MAX_STEPS: usize = 25;
const ORACLE_MAX_STATES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub steps: usize,
    /// Covariance of `x_0`.
    pub initial_cov: Mat,
    /// Terminal weight `X_T`.
    pub terminal: Mat,
}

impl Horizon {
    /// Identity initial covariance, no terminal weight.
    pub fn new(plant: &StateSpaceModel, steps: usize) -> Self {
        let n = plant.n_states();
        Self {
            steps,
            initial_cov: Mat::identity(n, n),
            terminal: Mat::zeros(n, n),
        }
    }

    fn check(&self, plant: &StateSpaceModel) -> Result<()> {
        if !plant.is_discrete() {
            return Err(Error::DomainMismatch("finite horizon needs a discrete plant".into()));
        }
        if self.steps == 0 {
            return Err(Error::param("T", "horizon must be at least one step"));
        }
        let n = plant.n_states();
        if self.initial_cov.shape() != (n, n) || self.terminal.shape() != (n, n) {
            return Err(Error::Dimension("horizon matrices must be n×n".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FiniteHorizonGains {
    /// Time-varying filter, element `t` for the measurement at step `t`.
    pub filter: Vec<KalmanFilter>,
    /// Prior covariance of `x_T` given measurements up to `T − 1`.
    pub terminal_cov: Mat,
    /// `(X_t, F_t)` for `t = 0..T`.
    pub regulator: Vec<(Mat, Mat)>,
}

/// Forward filter recursion from `Σ0` and backward regulator recursion from
/// `X_T`.
pub fn finite_horizon_gains(plant: &StateSpaceModel, horizon: &Horizon) -> Result<FiniteHorizonGains> {
    horizon.check(plant)?;
    let (filter, terminal_cov) = filter_recursion(
        &plant.a,
        &plant.b1,
        &plant.c2,
        &plant.d21,
        &horizon.initial_cov,
        horizon.steps,
    )?;
    let regulator = riccati_recursion_finite(
        &plant.a,
        &plant.b2,
        &plant.c1,
        &plant.d12,
        &horizon.terminal,
        horizon.steps,
    )?;
    Ok(FiniteHorizonGains {
        filter,
        terminal_cov,
        regulator,
    })
}

fn filter_recursion(
    a: &Mat,
    b1: &Mat,
    c2: &Mat,
    d21: &Mat,
    initial: &Mat,
    steps: usize,
) -> Result<(Vec<KalmanFilter>, Mat)> {
    let mut p = symmetrize(initial);
    let mut out = Vec::with_capacity(steps);
    let cross = b1 * d21.transpose();
    for _ in 0..steps {
        let s = symmetrize(&(c2 * &p * c2.transpose() + d21 * d21.transpose()));
        let k_f = spd_solve(&s, &(c2 * &p))?.transpose();
        let l_p = spd_solve(&s, &(c2 * &p * a.transpose() + cross.transpose()))?.transpose();
        let p_f = symmetrize(&(&p - &k_f * &s * k_f.transpose()));
        let next = symmetrize(&(a * &p * a.transpose() + b1 * b1.transpose() - &l_p * &s * l_p.transpose()));
        out.push(KalmanFilter { p, s, k_f, l_p, p_f });
        p = next;
    }
    Ok((out, p))
}

/// Time-varying controller acting on innovations:
/// `u_t = Σ_{s ≤ t} μ_{t,s} e_s`, with `e_s` the innovation of the
/// time-varying filter driven by the applied inputs.
#[derive(Debug, Clone)]
pub struct FiniteHorizonPolicy {
    pub delays: DiscreteDelays,
    pub filter: Vec<KalmanFilter>,
    /// `taps[t][s] = μ_{t,s}` (m × p), for `s ≤ t`.
    pub taps: Vec<Vec<Mat>>,
    /// Cost predicted by the synthesis.
    pub design_cost: f64,
}

/// Optimal time-varying policy under the two-agent delay pattern. Each
/// innovation source `(block, time)` is solved by a backward pass over its
/// ages down to the terminal weight.
pub fn finite_horizon_decentralized(
    plant: &PartitionedPlant,
    delays: DiscreteDelays,
    horizon: &Horizon,
) -> Result<FiniteHorizonPolicy> {
    let g = &plant.realization;
    horizon.check(g)?;
    let delays = DiscreteDelays::new(delays.d1, delays.d2)?;
    if !plant.is_block_diagonal() {
        return Err(Error::param("plant", "expected decoupled subsystems"));
    }
    let (m, p) = (g.n_inputs(), g.n_outputs());
    let steps = horizon.steps;
    for (i, bi) in plant.blocks.iter().enumerate() {
        for (j, bj) in plant.blocks.iter().enumerate() {
            let block = horizon.initial_cov.view((bi.states.start, bj.states.start), (bi.states.len(), bj.states.len()));
            if i != j && block.iter().any(|v| *v != 0.0) {
                return Err(Error::param("initial_cov", "must be block-diagonal"));
            }
        }
    }

    // Per-block filters, then their global embedding.
    let locals: Vec<Vec<KalmanFilter>> = (0..plant.n_blocks())
        .map(|j| {
            let lb = plant.local(j);
            let st = &plant.blocks[j].states;
            let sigma = horizon.initial_cov.view((st.start, st.start), (st.len(), st.len())).into_owned();
            filter_recursion(&lb.a, &lb.b1, &lb.c2, &lb.d21, &sigma, steps).map(|f| f.0)
        })
        .collect::<Result<_>>()?;
    let (global, terminal_cov) = filter_recursion(&g.a, &g.b1, &g.c2, &g.d21, &horizon.initial_cov, steps)?;

    let mut taps = vec![Vec::new(); steps];
    for (t, row) in taps.iter_mut().enumerate() {
        *row = vec![Mat::zeros(m, p); t + 1];
    }
    let mut cost = (&horizon.terminal * &terminal_cov).trace();
    for f in &global {
        cost += (&g.c1 * &f.p_f * g.c1.transpose()).trace();
    }
    for (j, filters) in locals.iter().enumerate() {
        let own: Vec<usize> = plant.blocks[j].inputs.clone().collect();
        let outputs = plant.blocks[j].outputs.clone();
        let allowed = |age: usize| -> Vec<usize> {
            (0..m)
                .filter(|i| {
                    let lag = if own.contains(i) { delays.d1 } else { delays.d2 };
                    age >= lag
                })
                .collect()
        };
        for (s, kf) in filters.iter().enumerate() {
            let resp = source_response(plant, j, kf, &allowed, steps - s, &horizon.terminal)?;
            cost += (&kf.s * &resp.x0).trace();
            for (age, mu) in resp.mu.iter().enumerate() {
                taps[s + age][s]
                    .view_mut((0, outputs.start), (m, outputs.len()))
                    .copy_from(mu);
            }
        }
    }
    Ok(FiniteHorizonPolicy {
        delays,
        filter: global,
        taps,
        design_cost: cost,
    })
}

/// Linear maps from the stacked noise `ω = [ξ0; w_0; …; w_{T−1}]` (unit
/// covariance) to plant signals.
struct NoiseMaps {
    dim: usize,
    x0: Mat,
    q: usize,
    n0: usize,
}

impl NoiseMaps {
    fn new(g: &StateSpaceModel, horizon: &Horizon) -> Result<Self> {
        let n = g.n_states();
        let q = g.n_noise();
        let root = psd_factor(&horizon.initial_cov)?.transpose();
        let n0 = root.ncols();
        let dim = n0 + horizon.steps * q;
        let mut x0 = Mat::zeros(n, dim);
        x0.view_mut((0, 0), (n, n0)).copy_from(&root);
        Ok(Self { dim, x0, q, n0 })
    }

    fn noise(&self, t: usize) -> Mat {
        let mut w = Mat::zeros(self.q, self.dim);
        w.view_mut((0, self.n0 + t * self.q), (self.q, self.q))
            .copy_from(&Mat::identity(self.q, self.q));
        w
    }
}

/// Exact finite-horizon cost of a time-varying innovation policy.
pub fn finite_horizon_cost(
    plant: &StateSpaceModel,
    horizon: &Horizon,
    policy: &FiniteHorizonPolicy,
) -> Result<f64> {
    horizon.check(plant)?;
    if policy.taps.len() != horizon.steps || policy.filter.len() != horizon.steps {
        return Err(Error::Dimension("policy length differs from the horizon".into()));
    }
    let g = plant;
    let maps = NoiseMaps::new(g, horizon)?;
    let mut x = maps.x0.clone();
    let mut prior = Mat::zeros(g.n_states(), maps.dim);
    let mut innovations: Vec<Mat> = Vec::with_capacity(horizon.steps);
    let mut cost = 0.0;
    for t in 0..horizon.steps {
        let w = maps.noise(t);
        let kf = &policy.filter[t];
        let e = &g.c2 * &x + &g.d21 * &w - &g.c2 * &prior;
        innovations.push(e);
        let mut u = Mat::zeros(g.n_inputs(), maps.dim);
        for (s, mu) in policy.taps[t].iter().enumerate() {
            u += mu * &innovations[s];
        }
        let z = &g.c1 * &x + &g.d12 * &u;
        cost += z.norm_squared();
        let e = &innovations[t];
        let filtered = &prior + &kf.k_f * e;
        prior = &g.a * &filtered + &g.b2 * &u + (&kf.l_p - &g.a * &kf.k_f) * e;
        x = &g.a * &x + &g.b1 * &w + &g.b2 * &u;
    }
    cost += (x.transpose() * &horizon.terminal * &x).trace();
    Ok(cost)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// `gains[t][s]` maps the control-free measurement at `s` to `u_t`.
    pub gains: Vec<Vec<Mat>>,
    pub cost: f64,
    pub n_params: usize,
}

/// Best linear policy under the delay pattern, by direct convex
/// optimization. Inputs react to the control-free measurements
/// `ȳ_s = y_s − (response of y_s to past inputs)`; for decoupled subsystems
/// each agent can form its own `ȳ`, so this class has the same delay
/// pattern as output feedback on `y`. The cost is quadratic in the free gain
/// entries and is minimized through the normal equations.
pub fn finite_horizon_oracle(
    plant: &PartitionedPlant,
    delays: DiscreteDelays,
    horizon: &Horizon,
) -> Result<OracleResult> {
    let g = &plant.realization;
    horizon.check(g)?;
    let delays = DiscreteDelays::new(delays.d1, delays.d2)?;
    if horizon.steps > ORACLE_MAX_STEPS {
        return Err(Error::param("T", format!("oracle supports at most {ORACLE_MAX_STEPS} steps")));
    }
    if g.n_states() > ORACLE_MAX_STATES {
        return Err(Error::param("plant", format!("oracle supports at most {ORACLE_MAX_STATES} states")));
    }
    if !plant.is_block_diagonal() {
        return Err(Error::param("plant", "expected decoupled subsystems"));
    }
    let (m, p, nz) = (g.n_inputs(), g.n_outputs(), g.n_regulated());
    let steps = horizon.steps;
    let maps = NoiseMaps::new(g, horizon)?;
    let term = psd_factor(&horizon.terminal)?;
    let nt = term.nrows();
    let rows = steps * nz + nt;

    // Open loop: z = Pzw ω + Pzu u, ȳ = Pyw ω.
    let mut pzw = Mat::zeros(rows, maps.dim);
    let mut pyw = Mat::zeros(steps * p, maps.dim);
    let mut x = maps.x0.clone();
    for t in 0..steps {
        let w = maps.noise(t);
        pzw.view_mut((t * nz, 0), (nz, maps.dim)).copy_from(&(&g.c1 * &x));
        pyw.view_mut((t * p, 0), (p, maps.dim))
            .copy_from(&(&g.c2 * &x + &g.d21 * &w));
        x = &g.a * &x + &g.b1 * &w;
    }
    pzw.view_mut((steps * nz, 0), (nt, maps.dim)).copy_from(&(&term * &x));

    let mut pzu = Mat::zeros(rows, steps * m);
    for s in 0..steps {
        pzu.view_mut((s * nz, s * m), (nz, m)).copy_from(&g.d12);
        let mut resp = g.b2.clone();
        for t in s + 1..steps {
            pzu.view_mut((t * nz, s * m), (nz, m)).copy_from(&(&g.c1 * &resp));
            resp = &g.a * &resp;
        }
        pzu.view_mut((steps * nz, s * m), (nt, m)).copy_from(&(&term * &resp));
    }

    let block_of_input = |i: usize| plant.blocks.iter().position(|b| b.inputs.contains(&i));
    let block_of_output = |j: usize| plant.blocks.iter().position(|b| b.outputs.contains(&j));
    let mut params: Vec<(usize, usize)> = Vec::new();
    for t in 0..steps {
        for i in 0..m {
            for s in 0..=t {
                for j in 0..p {
                    let lag = if block_of_input(i) == block_of_output(j) { delays.d1 } else { delays.d2 };
                    if t - s >= lag {
                        params.push((t * m + i, s * p + j));
                    }
                }
            }
        }
    }

    let uu = pzu.transpose() * &pzu;
    let yy = &pyw * pyw.transpose();
    let cross = pzu.transpose() * &pzw * pyw.transpose();
    let k = params.len();
    let gram = Mat::from_fn(k, k, |a, b| {
        let (ra, ca) = params[a];
        let (rb, cb) = params[b];
        uu[(ra, rb)] * yy[(cb, ca)]
    });
    let rhs = Mat::from_fn(k, 1, |a, _| cross[params[a]]);
    let base = pzw.norm_squared();
    let theta = if k == 0 {
        Mat::zeros(0, 1)
    } else {
        match spd_solve(&gram, &rhs) {
            Ok(v) => -v,
            Err(_) => {
                log::warn!("oracle normal equations are singular; using a pseudo-inverse");
                let svd = gram.clone().svd(true, true);
                let tol = 1e-12 * svd.singular_values.max();
                -svd.solve(&rhs, tol).map_err(|e| Error::Numerical(e.to_string()))?
            }
        }
    };
    let cost = base + (rhs.transpose() * &theta)[(0, 0)];

    let mut gains: Vec<Vec<Mat>> = (0..steps).map(|t| vec![Mat::zeros(m, p); t + 1]).collect();
    for (a, &(r, c)) in params.iter().enumerate() {
        gains[r / m][c / p][(r % m, c % p)] = theta[(a, 0)];
    }
    Ok(OracleResult {
        gains,
        cost,
        n_params: k,
    })
}

/// Time-varying centralized LQG, `u_t = F_t x̂_{t|t}`, written as an
/// innovation policy.
pub fn finite_horizon_lqg(plant: &StateSpaceModel, horizon: &Horizon) -> Result<FiniteHorizonPolicy> {
    let gains = finite_horizon_gains(plant, horizon)?;
    let steps = horizon.steps;
    let (m, p) = (plant.n_inputs(), plant.n_outputs());
    let mut taps: Vec<Vec<Mat>> = (0..steps).map(|t| vec![Mat::zeros(m, p); t + 1]).collect();
    for s in 0..steps {
        let kf = &gains.filter[s];
        let mut phi = kf.k_f.clone();
        for t in s..steps {
            let mu = &gains.regulator[t].1 * &phi;
            phi = if t == s {
                &kf.l_p + &plant.b2 * &mu
            } else {
                &plant.a * &phi + &plant.b2 * &mu
            };
            taps[t][s] = mu;
        }
    }
    let mut policy = FiniteHorizonPolicy {
        delays: DiscreteDelays { d1: 0, d2: 0 },
        filter: gains.filter,
        taps,
        design_cost: 0.0,
    };
    policy.design_cost = finite_horizon_cost(plant, horizon, &policy)?;
    Ok(policy)
}
