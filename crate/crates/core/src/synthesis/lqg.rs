//! Stationary LQG designs: delay-free, centralized with a uniform delay,
//! decentralized with self/cross delays, and block-diagonal.

use crate::delay::{Agent, DiscreteDelays};
use crate::error::{Error, Result};
use crate::linalg::{block_diag_mats, spd_solve, symmetrize, Mat};
use crate::lti::{PartitionedPlant, StateSpaceModel, TimeDomain};
use crate::riccati::{riccati_step, solve_dare, solve_lyapunov, AreProblem, AreSolution};

use super::innovation::InnovationController;
use super::{AgentController, Architecture, ControllerRealization};

/// Stationary Kalman filter of one model.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    /// Prediction error covariance.
    pub p: Mat,
    /// Innovation covariance `C P Cᵀ + D21 D21ᵀ`.
    pub s: Mat,
    /// Measurement-update gain `P Cᵀ S⁻¹`.
    pub k_f: Mat,
    /// One-step predictor gain `A K_f + B1 D21ᵀ S⁻¹`.
    pub l_p: Mat,
    /// Filtered error covariance `P − K_f S K_fᵀ`.
    pub p_f: Mat,
}

pub fn kalman_filter(a: &Mat, b1: &Mat, c2: &Mat, d21: &Mat) -> Result<KalmanFilter> {
    let dual = AreProblem::new(
        a.transpose(),
        c2.transpose(),
        b1.transpose(),
        d21.transpose(),
    )?;
    let sol = solve_dare(&dual).map_err(|e| Error::synthesis("kalman", e))?;
    let p = sol.x;
    let s = symmetrize(&(c2 * &p * c2.transpose() + d21 * d21.transpose()));
    let k_f = spd_solve(&s, &(c2 * &p)).map_err(|e| Error::synthesis("kalman", e))?.transpose();
    let l_p = -sol.f.transpose();
    let p_f = symmetrize(&(&p - &k_f * &s * k_f.transpose()));
    Ok(KalmanFilter { p, s, k_f, l_p, p_f })
}

fn regulator(model: &StateSpaceModel) -> Result<AreSolution> {
    let prob = AreProblem::new(
        model.a.clone(),
        model.b2.clone(),
        model.c1.clone(),
        model.d12.clone(),
    )?;
    solve_dare(&prob).map_err(|e| Error::synthesis("regulator", e))
}

fn require_discrete(model: &StateSpaceModel) -> Result<()> {
    if model.is_discrete() {
        Ok(())
    } else {
        Err(Error::DomainMismatch("synthesis needs a discrete plant".into()))
    }
}

/// Delay-free LQG: `u = F x̂ + M₀ e`, with `x̂` the one-step prediction.
/// `M₀ = F K_f` when process and measurement noise are uncorrelated.
pub fn lqg_delay_free(plant: &StateSpaceModel) -> Result<ControllerRealization> {
    require_discrete(plant)?;
    let kf = kalman_filter(&plant.a, &plant.b1, &plant.c2, &plant.d21)?;
    let reg = regulator(plant)?;
    let (b, c1, d12) = (&plant.b2, &plant.c1, &plant.d12);
    let x = &reg.x;
    let r = d12.transpose() * d12 + b.transpose() * x * b;
    let m0 = -spd_solve(
        &r,
        &(b.transpose() * x * &kf.l_p + d12.transpose() * c1 * &kf.k_f),
    )?;
    let entry = &kf.l_p + b * &m0;
    let at_zero = c1 * &kf.k_f + d12 * &m0;
    let x0 = entry.transpose() * x * &entry + at_zero.transpose() * &at_zero;
    let cost = (&kf.s * x0).trace() + (c1 * &kf.p_f * c1.transpose()).trace();
    let controller = InnovationController {
        input_delay: 0,
        first_age: 0,
        tail_age: 1,
        c_model: plant.c2.clone(),
        taps: vec![m0],
        prediction: Vec::new(),
        entry,
        tail_a: &plant.a + b * &reg.f,
        tail_f: reg.f.clone(),
    };
    controller.validate()?;
    Ok(ControllerRealization {
        architecture: Architecture::CentralizedDelayFree,
        controller,
        agents: Vec::new(),
        design_cost: cost,
    })
}

/// Plant whose measurement is delayed `d` samples through a chain on `C2 x`.
/// The measurement noise is relabelled as fresh noise at the chain output,
/// which is exact when process and measurement noise are uncorrelated.
pub fn delay_augmented_plant(plant: &StateSpaceModel, d: usize) -> Result<StateSpaceModel> {
    require_discrete(plant)?;
    if d == 0 {
        return Ok(plant.clone());
    }
    let cross = &plant.b1 * plant.d21.transpose();
    if cross.abs().max() > 1e-12 * (plant.b1.norm() * plant.d21.norm()).max(1e-300) {
        return Err(Error::Unsupported(
            "measurement-delay augmentation needs uncorrelated process and measurement noise"
                .into(),
        ));
    }
    let (n, p, q) = (plant.n_states(), plant.n_outputs(), plant.n_noise());
    let na = n + d * p;
    let mut a = Mat::zeros(na, na);
    a.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    a.view_mut((n, 0), (p, n)).copy_from(&plant.c2);
    for k in 1..d {
        a.view_mut((n + k * p, n + (k - 1) * p), (p, p))
            .copy_from(&Mat::identity(p, p));
    }
    let mut b1 = Mat::zeros(na, 2 * q);
    b1.view_mut((0, 0), (n, q)).copy_from(&plant.b1);
    let mut b2 = Mat::zeros(na, plant.n_inputs());
    b2.view_mut((0, 0), (n, plant.n_inputs())).copy_from(&plant.b2);
    let mut c1 = Mat::zeros(plant.n_regulated(), na);
    c1.view_mut((0, 0), (plant.n_regulated(), n)).copy_from(&plant.c1);
    let mut c2 = Mat::zeros(p, na);
    c2.view_mut((0, n + (d - 1) * p), (p, p))
        .copy_from(&Mat::identity(p, p));
    let mut d21 = Mat::zeros(p, 2 * q);
    d21.view_mut((0, q), (p, q)).copy_from(&plant.d21);
    StateSpaceModel::new(a, b1, b2, c1, c2, plant.d12.clone(), d21, plant.h)
}

/// Optimal LQG when every measurement reaches the controller `d` samples
/// late, through state augmentation and a `d`-sample input buffer.
pub fn centralized_delayed_lqg(plant: &StateSpaceModel, d: usize) -> Result<ControllerRealization> {
    if d == 0 {
        return lqg_delay_free(plant);
    }
    let aug = delay_augmented_plant(plant, d)?;
    let mut real = lqg_delay_free(&aug)?;
    real.controller.input_delay = d;
    real.architecture = Architecture::CentralizedDelayed { d };
    Ok(real)
}

/// Per-block Kalman filters of a block-diagonal plant.
pub fn local_filters(plant: &PartitionedPlant) -> Result<Vec<KalmanFilter>> {
    (0..plant.n_blocks())
        .map(|i| {
            let lb = plant.local(i);
            kalman_filter(&lb.a, &lb.b1, &lb.c2, &lb.d21)
        })
        .collect()
}

/// Response of the estimate to one innovation source, by age.
#[derive(Debug, Clone)]
pub(crate) struct SourceResponse {
    /// Control `μ_a` (m × p_j) for `a = 0..tail_age`.
    pub mu: Vec<Mat>,
    /// Estimate response `Φ_a` (n × p_j) for `a = 0..=tail_age`.
    pub phi: Vec<Mat>,
    /// Cost-to-go of the source as a quadratic form in the innovation.
    pub x0: Mat,
}

pub(crate) fn select_cols(m: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub(crate) fn embed_rows(m: &Mat, rows: &[usize], total: usize) -> Mat {
    let mut out = Mat::zeros(total, m.ncols());
    for (k, &r) in rows.iter().enumerate() {
        out.set_row(r, &m.row(k));
    }
    out
}

/// Backward pass over ages of one source followed by a forward pass for its
/// responses. `allowed(a)` lists the input channels that may react at age
/// `a < tail_age`; from `tail_age` on the cost-to-go is `x_tail`.
pub(crate) fn source_response(
    plant: &PartitionedPlant,
    block: usize,
    kf: &KalmanFilter,
    allowed: &dyn Fn(usize) -> Vec<usize>,
    tail_age: usize,
    x_tail: &Mat,
) -> Result<SourceResponse> {
    let g = &plant.realization;
    let (n, m) = (g.n_states(), g.n_inputs());
    let rows: Vec<usize> = plant.blocks[block].states.clone().collect();
    let l_p = embed_rows(&kf.l_p, &rows, n);
    let k_f = embed_rows(&kf.k_f, &rows, n);

    let step = |a: &Mat, c: &Mat, cols: &[usize], x: &Mat| -> Result<(Mat, Mat)> {
        if cols.is_empty() {
            let x_new = symmetrize(&(a.transpose() * x * a + c.transpose() * c));
            Ok((x_new, Mat::zeros(0, a.ncols())))
        } else {
            riccati_step(a, &select_cols(&g.b2, cols), c, &select_cols(&g.d12, cols), x)
        }
    };

    let mut gains = vec![Mat::zeros(0, 0); tail_age];
    let mut x = x_tail.clone();
    for a in (1..tail_age).rev() {
        let (xa, fa) = step(&g.a, &g.c1, &allowed(a), &x)?;
        gains[a] = fa;
        x = xa;
    }
    let c0 = &g.c1 * &k_f;
    let cols0 = allowed(0);
    let (x0, f0) = step(&l_p, &c0, &cols0, &x)?;

    let mut mu = Vec::with_capacity(tail_age);
    let mut phi = Vec::with_capacity(tail_age + 1);
    let mu0 = embed_rows(&f0, &cols0, m);
    phi.push(k_f);
    phi.push(&l_p + &g.b2 * &mu0);
    mu.push(mu0);
    for (a, gain) in gains.iter().enumerate().skip(1) {
        let cols = allowed(a);
        let mua = embed_rows(&(gain * &phi[a]), &cols, m);
        let next = &g.a * &phi[a] + &g.b2 * &mua;
        mu.push(mua);
        phi.push(next);
    }
    Ok(SourceResponse { mu, phi, x0 })
}

/// Tail of a design: closed-loop matrix, gain and cost-to-go.
pub(crate) struct Tail {
    pub a: Mat,
    pub f: Mat,
    pub x: Mat,
}

pub(crate) fn centralized_tail(plant: &StateSpaceModel) -> Result<Tail> {
    let reg = regulator(plant)?;
    Ok(Tail {
        a: &plant.a + &plant.b2 * &reg.f,
        f: reg.f,
        x: reg.x,
    })
}

/// Each block regulated by its own inputs against the shared cost.
pub(crate) fn block_diagonal_tail(plant: &PartitionedPlant) -> Result<Tail> {
    let g = &plant.realization;
    let mut gains = Vec::with_capacity(plant.n_blocks());
    for i in 0..plant.n_blocks() {
        let lb = plant.local(i);
        let prob = AreProblem::new(lb.a, lb.b2, lb.c1, lb.d12)?;
        let sol = solve_dare(&prob).map_err(|e| Error::synthesis("block regulator", e))?;
        gains.push(sol.f);
    }
    let f = block_diag_mats(gains.iter());
    let a = &g.a + &g.b2 * &f;
    let cz = &g.c1 + &g.d12 * &f;
    let x = symmetrize(&solve_lyapunov(
        &a.transpose(),
        &(cz.transpose() * cz),
        TimeDomain::Discrete,
    )?);
    Ok(Tail { a, f, x })
}

/// Assembles the innovation-form controller from per-source responses.
pub(crate) fn assemble(
    plant: &PartitionedPlant,
    responses: &[SourceResponse],
    first_age: usize,
    tail_age: usize,
    tail: &Tail,
) -> Result<InnovationController> {
    let g = &plant.realization;
    let (n, m, p) = (g.n_states(), g.n_inputs(), g.n_outputs());
    let hstack = |pick: &dyn Fn(&SourceResponse) -> &Mat, rows: usize| {
        let mut out = Mat::zeros(rows, p);
        for (j, r) in responses.iter().enumerate() {
            let cols = &plant.blocks[j].outputs;
            out.view_mut((0, cols.start), (rows, cols.len()))
                .copy_from(pick(r));
        }
        out
    };
    let taps = (first_age..tail_age)
        .map(|a| hstack(&|r: &SourceResponse| &r.mu[a], m))
        .collect();
    let prediction = (1..tail_age)
        .map(|b| hstack(&|r: &SourceResponse| &r.phi[b], n))
        .collect();
    let entry = hstack(&|r: &SourceResponse| &r.phi[tail_age], n);
    let c = InnovationController {
        input_delay: first_age,
        first_age,
        tail_age,
        c_model: g.c2.clone(),
        taps,
        prediction,
        entry,
        tail_a: tail.a.clone(),
        tail_f: tail.f.clone(),
    };
    c.validate()?;
    Ok(c)
}

pub(crate) fn design_cost(plant: &PartitionedPlant, filters: &[KalmanFilter], responses: &[SourceResponse]) -> f64 {
    let g = &plant.realization;
    let p_f = block_diag_mats(filters.iter().map(|f| &f.p_f));
    let estimation = (&g.c1 * p_f * g.c1.transpose()).trace();
    let control: f64 = filters
        .iter()
        .zip(responses)
        .map(|(f, r)| (&f.s * &r.x0).trace())
        .sum();
    estimation + control
}

fn agent_views(
    plant: &PartitionedPlant,
    filters: &[KalmanFilter],
    ctrl: &InnovationController,
    own_delay: usize,
    message_delay: Option<usize>,
) -> Vec<AgentController> {
    (0..plant.n_blocks())
        .map(|i| {
            let b = &plant.blocks[i];
            let other = &plant.blocks[1 - i];
            let rows = |m: &Mat, cols: &std::ops::Range<usize>| {
                m.view((b.inputs.start, cols.start), (b.inputs.len(), cols.len()))
                    .into_owned()
            };
            AgentController {
                agent: Agent::from_index(i),
                states: b.states.clone(),
                inputs: b.inputs.clone(),
                outputs: b.outputs.clone(),
                filter_gain: filters[i].k_f.clone(),
                predictor_gain: filters[i].l_p.clone(),
                regulator_gain: ctrl
                    .tail_f
                    .view((b.inputs.start, 0), (b.inputs.len(), ctrl.n_model()))
                    .into_owned(),
                own_taps: ctrl.taps.iter().map(|t| rows(t, &b.outputs)).collect(),
                cross_taps: ctrl.taps.iter().map(|t| rows(t, &other.outputs)).collect(),
                own_delay,
                message_delay,
            }
        })
        .collect()
}

fn check_two_blocks(plant: &PartitionedPlant) -> Result<()> {
    require_discrete(&plant.realization)?;
    if plant.n_blocks() != 2 {
        return Err(Error::param("plant", "expected exactly two subsystems"));
    }
    if !plant.is_block_diagonal() {
        return Err(Error::param("plant", "dynamics, noise and sensing must be block-diagonal"));
    }
    Ok(())
}

/// Optimal controller when agent `i` sees its own measurements `d1`
/// samples late and the other agent's `d2` samples late.
///
/// Each agent runs a Kalman filter on its own subsystem and forwards its
/// innovations. Every innovation is answered by the owning agent alone
/// between ages `d1` and `d2`, and by both agents with the centralized
/// regulator afterwards.
pub fn decentralized_delayed_lqg(
    plant: &PartitionedPlant,
    delays: DiscreteDelays,
) -> Result<ControllerRealization> {
    check_two_blocks(plant)?;
    let DiscreteDelays { d1, d2 } = DiscreteDelays::new(delays.d1, delays.d2)?;
    let filters = local_filters(plant)?;
    let tail = centralized_tail(&plant.realization)?;
    let tail_age = d2.max(1);
    let all: Vec<usize> = (0..plant.realization.n_inputs()).collect();
    let responses = (0..2)
        .map(|j| {
            let own: Vec<usize> = plant.blocks[j].inputs.clone().collect();
            let allowed = |a: usize| {
                if a >= d2 {
                    all.clone()
                } else if a >= d1 {
                    own.clone()
                } else {
                    Vec::new()
                }
            };
            source_response(plant, j, &filters[j], &allowed, tail_age, &tail.x)
        })
        .collect::<Result<Vec<_>>>()?;
    let controller = assemble(plant, &responses, d1, tail_age, &tail)?;
    let agents = agent_views(plant, &filters, &controller, d1, Some(d2 - d1));
    Ok(ControllerRealization {
        architecture: Architecture::Decentralized { d1, d2 },
        design_cost: design_cost(plant, &filters, &responses),
        controller,
        agents,
    })
}

/// Fully decoupled agents, each using only its own measurements with delay
/// `d1` (the limit of the decentralized design as `d2 → ∞`).
pub fn block_diagonal_lqg(plant: &PartitionedPlant, d1: usize) -> Result<ControllerRealization> {
    check_two_blocks(plant)?;
    let filters = local_filters(plant)?;
    let tail = block_diagonal_tail(plant)?;
    let tail_age = d1.max(1);
    let responses = (0..2)
        .map(|j| {
            let own: Vec<usize> = plant.blocks[j].inputs.clone().collect();
            let allowed = |a: usize| if a >= d1 { own.clone() } else { Vec::new() };
            source_response(plant, j, &filters[j], &allowed, tail_age, &tail.x)
        })
        .collect::<Result<Vec<_>>>()?;
    let controller = assemble(plant, &responses, d1, tail_age, &tail)?;
    let agents = agent_views(plant, &filters, &controller, d1, None);
    Ok(ControllerRealization {
        architecture: Architecture::BlockDiagonal { d1 },
        design_cost: design_cost(plant, &filters, &responses),
        controller,
        agents,
    })
}
