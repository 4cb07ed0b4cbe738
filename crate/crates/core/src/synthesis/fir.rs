//! Structured FIR synthesis by least squares over innovation-response taps.

use serde::{Deserialize, Serialize};

use crate::delay::DiscreteDelays;
use crate::error::{Error, Result};
use crate::linalg::{self, psd_factor, Mat};
use crate::lti::PartitionedPlant;
use crate::sim::exact_h2_cost;

use super::lqg::{
    assemble, block_diagonal_tail, centralized_tail, design_cost, local_filters, SourceResponse,
    Tail,
};
use super::{Architecture, ControllerRealization};

/// Which taps are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirStructure {
    /// Own taps from lag `d1`, cross taps from lag `d2`.
    Delayed,
    /// Own taps from lag `d1`, no cross taps at any lag.
    NoCross,
    /// Every tap free from lag 0.
    Unconstrained,
}

/// Inner loop applied to responses older than the FIR window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLoop {
    /// Centralized regulator, admissible once both agents know a source.
    Centralized,
    /// Each agent regulates its own subsystem.
    BlockDiagonal,
}

impl FirStructure {
    /// The inner loop the structure admits after the FIR window.
    pub fn default_inner_loop(self) -> InnerLoop {
        match self {
            FirStructure::NoCross => InnerLoop::BlockDiagonal,
            _ => InnerLoop::Centralized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredSynthesisResult {
    pub n_taps: usize,
    pub structure: FirStructure,
    pub inner_loop: InnerLoop,
    /// Closed-loop cost of the realized controller (Lyapunov).
    pub h2_cost: f64,
    /// Optimal value of the least-squares problem.
    pub ls_cost: f64,
    pub realization: ControllerRealization,
}

impl StructuredSynthesisResult {
    /// Tap `a` maps innovations of age `a` to inputs (`a = 0..n_taps`).
    pub fn taps(&self) -> Vec<Mat> {
        let c = &self.realization.controller;
        let (m, p) = (c.n_inputs(), c.n_outputs());
        (0..c.tail_age)
            .map(|a| {
                if a < c.first_age {
                    Mat::zeros(m, p)
                } else {
                    c.taps[a - c.first_age].clone()
                }
            })
            .collect()
    }
}

/// Minimizes the average cost over FIR taps of length `n_taps` on the
/// innovations, subject to `structure`, with `inner_loop` acting on
/// responses of age `n_taps` and older.
pub fn structured_fir_youla(
    plant: &PartitionedPlant,
    delays: DiscreteDelays,
    n_taps: usize,
    structure: FirStructure,
    inner_loop: InnerLoop,
) -> Result<StructuredSynthesisResult> {
    let DiscreteDelays { d1, d2 } = DiscreteDelays::new(delays.d1, delays.d2)?;
    if plant.n_blocks() != 2 || !plant.is_block_diagonal() {
        return Err(Error::param("plant", "expected two decoupled subsystems"));
    }
    let min_taps = match structure {
        FirStructure::Unconstrained => 1,
        _ => d2 + 1,
    };
    if n_taps < min_taps {
        return Err(Error::param(
            "fir_length",
            format!("need at least {min_taps} taps, got {n_taps}"),
        ));
    }
    if inner_loop == InnerLoop::Centralized && structure == FirStructure::NoCross {
        return Err(Error::param(
            "inner_loop",
            "a centralized inner loop uses cross information",
        ));
    }
    let g = &plant.realization;
    let filters = local_filters(plant)?;
    let tail: Tail = match inner_loop {
        InnerLoop::Centralized => centralized_tail(g)?,
        InnerLoop::BlockDiagonal => block_diagonal_tail(plant)?,
    };
    let tail_root = psd_factor(&tail.x)?;
    let first_age = match structure {
        FirStructure::Unconstrained => 0,
        _ => d1,
    };

    let mut responses = Vec::with_capacity(2);
    for j in 0..2 {
        let own = plant.blocks[j].inputs.clone();
        let allowed = |a: usize, input: usize| match structure {
            FirStructure::Unconstrained => true,
            FirStructure::Delayed => {
                if own.contains(&input) {
                    a >= d1
                } else {
                    a >= d2
                }
            }
            FirStructure::NoCross => own.contains(&input) && a >= d1,
        };
        responses.push(solve_source(plant, j, &filters[j], n_taps, &allowed, &tail_root)?);
    }

    let controller = assemble(plant, &responses, first_age, n_taps, &tail)?;
    let ls_cost = design_cost(plant, &filters, &responses);
    let realization = ControllerRealization {
        architecture: Architecture::StructuredFir {
            d1,
            d2,
            taps: n_taps,
        },
        controller,
        agents: Vec::new(),
        design_cost: ls_cost,
    };
    let h2_cost = exact_h2_cost(g, &realization.state_space())?;
    Ok(StructuredSynthesisResult {
        n_taps,
        structure,
        inner_loop,
        h2_cost,
        ls_cost,
        realization,
    })
}

/// Least squares for one innovation source. Columns of the innovation are
/// independent problems with the same structure, so they are solved as
/// separate right-hand sides.
fn solve_source(
    plant: &PartitionedPlant,
    block: usize,
    kf: &super::KalmanFilter,
    n_taps: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
    tail_root: &Mat,
) -> Result<SourceResponse> {
    let g = &plant.realization;
    let (n, m, nz) = (g.n_states(), g.n_inputs(), g.n_regulated());
    let states = plant.blocks[block].states.clone();
    let pj = kf.k_f.ncols();
    let embed = |local: &Mat| {
        let mut out = Mat::zeros(n, local.ncols());
        out.view_mut((states.start, 0), (states.len(), local.ncols()))
            .copy_from(local);
        out
    };
    let k_f = embed(&kf.k_f);
    let l_p = embed(&kf.l_p);

    // Variable layout: for each age, the allowed input channels in order.
    let mut slots: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n_taps);
    let mut nv = 0;
    for a in 0..n_taps {
        let mut row = Vec::new();
        for i in 0..m {
            if allowed(a, i) {
                row.push((i, nv));
                nv += 1;
            }
        }
        slots.push(row);
    }
    let select = |a: usize| {
        let mut s = Mat::zeros(m, nv);
        for &(i, k) in &slots[a] {
            s[(i, k)] = 1.0;
        }
        s
    };

    // Affine maps φ_a = φc + Φv v, residual r = rc + J v.
    let rows = n_taps * nz + tail_root.nrows();
    let mut rc = Mat::zeros(rows, pj);
    let mut jac = Mat::zeros(rows, nv);
    let mut phi_c = k_f.clone();
    let mut phi_v = Mat::zeros(n, nv);
    for a in 0..n_taps {
        let s = select(a);
        rc.view_mut((a * nz, 0), (nz, pj))
            .copy_from(&(&g.c1 * &phi_c));
        jac.view_mut((a * nz, 0), (nz, nv))
            .copy_from(&(&g.c1 * &phi_v + &g.d12 * &s));
        let (next_c, next_v) = if a == 0 {
            (l_p.clone(), &g.b2 * &s)
        } else {
            (&g.a * &phi_c, &g.a * &phi_v + &g.b2 * &s)
        };
        phi_c = next_c;
        phi_v = next_v;
    }
    let base = n_taps * nz;
    rc.view_mut((base, 0), (tail_root.nrows(), pj))
        .copy_from(&(tail_root * &phi_c));
    jac.view_mut((base, 0), (tail_root.nrows(), nv))
        .copy_from(&(tail_root * &phi_v));

    let v = if nv == 0 {
        Mat::zeros(0, pj)
    } else {
        let svd = jac.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1e-300);
        -svd.solve(&rc, tol)
            .map_err(|e| Error::Numerical(format!("least squares: {e}")))?
    };
    let residual = &rc + &jac * &v;
    let x0 = linalg::symmetrize(&(residual.transpose() * &residual));

    let mut mu = Vec::with_capacity(n_taps);
    let mut phi = Vec::with_capacity(n_taps + 1);
    phi.push(k_f);
    for a in 0..n_taps {
        let ma = select(a) * &v;
        let next = if a == 0 {
            &l_p + &g.b2 * &ma
        } else {
            &g.a * &phi[a] + &g.b2 * &ma
        };
        mu.push(ma);
        phi.push(next);
    }
    Ok(SourceResponse { mu, phi, x0 })
}
