//! PZT and stepper subsystem models, the optics-coupled cost and the global
//! partitioned plant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag_mats, psd_factor, Mat};
use crate::lti::{self, BlockRanges, PartitionedPlant, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorKind {
    Pzt,
    Stepper,
}

/// One actuator + prism channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemModel {
    pub kind: ActuatorKind,
    /// Continuous-time model. `C1`/`D12` hold the channel's own wavelength
    /// contribution; the global plant replaces them with the coupled cost.
    pub model: StateSpaceModel,
    /// Row map from state to prism position (the quantity the optics see).
    pub position: Mat,
    /// nm per position unit.
    pub optics_gain: f64,
    pub control_weight: f64,
}

impl SubsystemModel {
    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PztParams {
    pub omega_n: f64,
    pub zeta: f64,
    pub k_dc: f64,
    pub noise_std: f64,
    pub optics_gain: f64,
    pub rho: f64,
}

impl Default for PztParams {
    fn default() -> Self {
        Self {
            omega_n: 2.0 * PI * 500.0,
            zeta: 0.6,
            k_dc: 1.0,
            noise_std: 1.0,
            optics_gain: 0.05,
            rho: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperParams {
    pub tau_motor: f64,
    pub k_dc: f64,
    pub noise_std: f64,
    pub optics_gain: f64,
    pub rho: f64,
}

impl Default for StepperParams {
    fn default() -> Self {
        Self {
            tau_motor: 0.05,
            k_dc: 1.0,
            noise_std: 1.0,
            optics_gain: 0.25,
            rho: 1e-3,
        }
    }
}

/// `B1 = [σ I, 0]`, `D21 = [0, σ I]`: independent process and measurement noise.
fn noise_maps(n: usize, p: usize, std: f64) -> (Mat, Mat) {
    let mut b1 = Mat::zeros(n, n + p);
    b1.view_mut((0, 0), (n, n))
        .copy_from(&(Mat::identity(n, n) * std));
    let mut d21 = Mat::zeros(p, n + p);
    d21.view_mut((0, n), (p, p))
        .copy_from(&(Mat::identity(p, p) * std));
    (b1, d21)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {v}")))
    }
}

fn nonzero(name: &'static str, v: f64) -> Result<()> {
    if v != 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be nonzero, got {v}")))
    }
}

/// PZT + prism: second-order actuator `ẍ = −ωn²x − 2ζωn ẋ + k ωn² v`
/// driven by the drive voltage `v`, which integrates the command `u = Δv`.
/// States `[position, velocity, voltage]`; the measurement is the position.
pub fn make_pzt_model(p: &PztParams) -> Result<SubsystemModel> {
    positive("omega_n", p.omega_n)?;
    if !(0.0..2.0).contains(&p.zeta) {
        return Err(Error::param("zeta", format!("must lie in [0, 2), got {}", p.zeta)));
    }
    nonzero("k_dc", p.k_dc)?;
    nonzero("optics_gain", p.optics_gain)?;
    positive("rho", p.rho)?;
    positive("noise_std", p.noise_std)?;
    let w2 = p.omega_n * p.omega_n;
    let a = Mat::from_row_slice(
        3,
        3,
        &[
            0.0, 1.0, 0.0, //
            -w2, -2.0 * p.zeta * p.omega_n, p.k_dc * w2, //
            0.0, 0.0, 0.0,
        ],
    );
    let b2 = Mat::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    let c2 = Mat::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let (b1, d21) = noise_maps(3, 1, p.noise_std);
    let model = StateSpaceModel::new(
        a,
        b1,
        b2,
        &c2 * p.optics_gain,
        c2.clone(),
        Mat::zeros(1, 1),
        d21,
        None,
    )?;
    Ok(SubsystemModel {
        kind: ActuatorKind::Pzt,
        model,
        position: c2,
        optics_gain: p.optics_gain,
        control_weight: p.rho,
    })
}

/// Stepper + prism: first-order rate lag followed by an integrator.
/// States `[rate, position]`.
pub fn make_stepper_model(p: &StepperParams) -> Result<SubsystemModel> {
    positive("tau_motor", p.tau_motor)?;
    nonzero("k_dc", p.k_dc)?;
    nonzero("optics_gain", p.optics_gain)?;
    positive("rho", p.rho)?;
    positive("noise_std", p.noise_std)?;
    let a = Mat::from_row_slice(2, 2, &[-1.0 / p.tau_motor, 0.0, 1.0, 0.0]);
    let b2 = Mat::from_row_slice(2, 1, &[p.k_dc / p.tau_motor, 0.0]);
    let c2 = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
    let (b1, d21) = noise_maps(2, 1, p.noise_std);
    let model = StateSpaceModel::new(
        a,
        b1,
        b2,
        &c2 * p.optics_gain,
        c2.clone(),
        Mat::zeros(1, 1),
        d21,
        None,
    )?;
    Ok(SubsystemModel {
        kind: ActuatorKind::Stepper,
        model,
        position: c2,
        optics_gain: p.optics_gain,
        control_weight: p.rho,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: Mat,
    pub r: Mat,
    /// Wavelength-error row `c_λ = [K_OP·pos_P, K_OS·pos_S]`.
    pub wavelength_row: Mat,
    pub eps_reg: f64,
    pub warnings: Vec<String>,
}

/// `Q = c_λᵀc_λ + ε·I`, `R = diag(ρ_P, ρ_S)`.
pub fn build_cost_matrices(subsystems: &[SubsystemModel], eps_reg: f64) -> Result<CostSpec> {
    if subsystems.len() != 2
        || subsystems[0].kind != ActuatorKind::Pzt
        || subsystems[1].kind != ActuatorKind::Stepper
    {
        return Err(Error::param(
            "subsystems",
            "expected exactly [PZT, Stepper] in that order",
        ));
    }
    if !(eps_reg >= 0.0 && eps_reg.is_finite()) {
        return Err(Error::param("eps_reg", format!("must be >= 0, got {eps_reg}")));
    }
    let rows: Vec<Mat> = subsystems
        .iter()
        .map(|s| &s.position * s.optics_gain)
        .collect();
    let n: usize = rows.iter().map(|r| r.ncols()).sum();
    let mut c_lambda = Mat::zeros(1, n);
    let mut off = 0;
    for r in &rows {
        c_lambda.view_mut((0, off), (1, r.ncols())).copy_from(r);
        off += r.ncols();
    }
    let q = c_lambda.transpose() * &c_lambda + Mat::identity(n, n) * eps_reg;
    let weights: Vec<Mat> = subsystems
        .iter()
        .map(|s| Mat::identity(s.model.n_inputs(), s.model.n_inputs()) * s.control_weight)
        .collect();
    let r = block_diag_mats(weights.iter());
    let mut warnings = Vec::new();
    let (rho_p, rho_s) = (subsystems[0].control_weight, subsystems[1].control_weight);
    if rho_p <= rho_s {
        let msg = format!(
            "control weights have rho_P = {rho_p} <= rho_S = {rho_s}; the fine actuator is usually penalized more"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(CostSpec {
        q,
        r,
        wavelength_row: c_lambda,
        eps_reg,
        warnings,
    })
}

/// Stacks the subsystems and forms `C1 = [Q^{1/2}; 0]`, `D12 = [0; R^{1/2}]`.
pub fn assemble_global_plant(
    subsystems: &[SubsystemModel],
    cost: &CostSpec,
) -> Result<PartitionedPlant> {
    let models: Vec<StateSpaceModel> = subsystems.iter().map(|s| s.model.clone()).collect();
    let mut plant = lti::block_diag(&models)?;
    let n = plant.realization.n_states();
    let m = plant.realization.n_inputs();
    if cost.q.shape() != (n, n) || cost.r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "cost matrices {:?}/{:?} do not match plant with n = {n}, m = {m}",
            cost.q.shape(),
            cost.r.shape()
        )));
    }
    let q_half = psd_factor(&cost.q)?;
    let r_half = cost
        .r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::param("R", "Cholesky factorization failed (R must be PD)"))?
        .l()
        .transpose();
    let mut c1 = Mat::zeros(n + m, n);
    c1.view_mut((0, 0), (n, n)).copy_from(&q_half);
    let mut d12 = Mat::zeros(n + m, m);
    d12.view_mut((n, 0), (m, m)).copy_from(&r_half);
    plant.realization.c1 = c1;
    plant.realization.d12 = d12;
    plant.realization.validate()?;
    Ok(plant)
}

/// Zero-order-hold discretization of each block. The discrete noise of block
/// `i` is `[process_i; measurement_i]`, which keeps `B1`/`D21` block-diagonal.
pub fn discretize_plant(plant: &PartitionedPlant, h: f64) -> Result<PartitionedPlant> {
    let g = &plant.realization;
    if g.is_discrete() {
        return Err(Error::DomainMismatch("plant is already discrete".into()));
    }
    let mut locals = Vec::with_capacity(plant.n_blocks());
    for i in 0..plant.n_blocks() {
        let lb = plant.local(i);
        let local = StateSpaceModel::new(
            lb.a,
            lb.b1,
            lb.b2,
            Mat::zeros(1, plant.blocks[i].states.len()),
            lb.c2,
            Mat::zeros(1, plant.blocks[i].inputs.len()),
            lb.d21,
            None,
        )?;
        locals.push(lti::discretize_zoh(&local, h)?);
    }
    let mut out = lti::block_diag(&locals)?;
    out.realization.c1 = g.c1.clone();
    out.realization.d12 = g.d12.clone();
    out.realization.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub freq_hz: f64,
    /// Regularization added to the oscillator's B2 rows and C2 column.
    pub eps: f64,
    #[serde(default = "default_disturbance_std")]
    pub noise_std: f64,
    /// Damping ratio of the oscillator; 0 gives the undamped model.
    #[serde(default)]
    pub damping: f64,
}

fn default_disturbance_std() -> f64 {
    1.0
}

/// Appends a two-state oscillator at `freq_hz` to a subsystem. The
/// oscillator is driven by its own process-noise channel and its first state
/// adds to the prism position seen by both the measurement and the optics.
pub fn augment_disturbance(sub: &SubsystemModel, d: &DisturbanceSpec) -> Result<SubsystemModel> {
    positive("freq_hz", d.freq_hz)?;
    positive("eps", d.eps)?;
    positive("noise_std", d.noise_std)?;
    if !(0.0..1.0).contains(&d.damping) {
        return Err(Error::param("damping", "must lie in [0, 1)"));
    }
    let m = &sub.model;
    let (n, p, q, nu) = (m.n_states(), m.n_outputs(), m.n_noise(), m.n_inputs());
    let w = 2.0 * PI * d.freq_hz;
    let osc = Mat::from_row_slice(2, 2, &[0.0, w, -w, -2.0 * d.damping * w]);
    let a = block_diag_mats([&m.a, &osc]);

    // Noise layout stays [process…, disturbance, measurement…].
    let n_proc = q - p;
    let mut b1 = Mat::zeros(n + 2, q + 1);
    b1.view_mut((0, 0), (n, n_proc))
        .copy_from(&m.b1.columns(0, n_proc));
    b1.view_mut((0, n_proc + 1), (n, p))
        .copy_from(&m.b1.columns(n_proc, p));
    b1[(n + 1, n_proc)] = d.noise_std;
    let mut d21 = Mat::zeros(p, q + 1);
    d21.view_mut((0, 0), (p, n_proc))
        .copy_from(&m.d21.columns(0, n_proc));
    d21.view_mut((0, n_proc + 1), (p, p))
        .copy_from(&m.d21.columns(n_proc, p));

    let mut b2 = Mat::zeros(n + 2, nu);
    b2.view_mut((0, 0), (n, nu)).copy_from(&m.b2);
    for j in 0..nu {
        b2[(n, j)] = d.eps;
        b2[(n + 1, j)] = d.eps;
    }
    let mut position = Mat::zeros(1, n + 2);
    position.view_mut((0, 0), (1, n)).copy_from(&sub.position);
    position[(0, n)] = 1.0;
    let mut c2 = Mat::zeros(p, n + 2);
    c2.view_mut((0, 0), (p, n)).copy_from(&m.c2);
    for i in 0..p {
        c2[(i, n)] += 1.0;
        c2[(i, n + 1)] += d.eps;
    }
    let model = StateSpaceModel::new(
        a,
        b1,
        b2,
        &position * sub.optics_gain,
        c2,
        m.d12.clone(),
        d21,
        None,
    )?;
    Ok(SubsystemModel {
        kind: sub.kind,
        model,
        position,
        optics_gain: sub.optics_gain,
        control_weight: sub.control_weight,
    })
}

/// Frequency at which a tone at `f` appears after sampling at `fs`.
pub fn aliased_frequency(f: f64, fs: f64) -> Result<f64> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::param("f", "must be >= 0"));
    }
    positive("fs", fs)?;
    Ok((f - fs * (f / fs).round()).abs())
}

/// Block ranges of the state vector of a [`PartitionedPlant`], for callers
/// that only need the index bookkeeping.
pub fn state_ranges(plant: &PartitionedPlant) -> Vec<std::ops::Range<usize>> {
    plant.blocks.iter().map(|b: &BlockRanges| b.states.clone()).collect()
}

/// Default two-subsystem scenario plant in continuous time.
pub fn default_subsystems() -> Result<Vec<SubsystemModel>> {
    Ok(vec![
        make_pzt_model(&PztParams::default())?,
        make_stepper_model(&StepperParams::default())?,
    ])
}

/// Two scalar discrete subsystems (fine, coarse) sharing a summed output
/// penalty. Small enough for the finite-horizon oracle.
pub fn reduced_scalar_plant() -> Result<PartitionedPlant> {
    let scalar = |a: f64, b1: [f64; 2]| {
        let m = |v: f64| Mat::from_element(1, 1, v);
        StateSpaceModel::new(
            m(a),
            Mat::from_row_slice(1, 2, &[b1[0], 0.0]),
            m(1.0),
            m(1.0),
            m(1.0),
            m(0.0),
            Mat::from_row_slice(1, 2, &[0.0, b1[1]]),
            Some(1.0),
        )
    };
    let mut plant = lti::block_diag(&[scalar(0.6, [0.5, 0.3])?, scalar(0.98, [0.2, 0.4])?])?;
    let (gain_p, gain_s) = (0.5, 1.0);
    let (rho_p, rho_s): (f64, f64) = (0.1, 0.01);
    let g = &mut plant.realization;
    g.c1 = Mat::from_row_slice(3, 2, &[gain_p, gain_s, 0.0, 0.0, 0.0, 0.0]);
    g.d12 = Mat::from_row_slice(3, 2, &[0.0, 0.0, rho_p.sqrt(), 0.0, 0.0, rho_s.sqrt()]);
    g.validate()?;
    Ok(plant)
}

pub fn wavelength_error(cost: &CostSpec, x: &[f64]) -> f64 {
    cost.wavelength_row
        .iter()
        .zip(x)
        .map(|(c, v)| c * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::riccati::{is_observable, is_stabilizable};
    use crate::lti::TimeDomain;

    #[test]
    fn pzt_second_order_poles() {
        let s = make_pzt_model(&PztParams {
            omega_n: 1.0,
            zeta: 0.5,
            ..PztParams::default()
        })
        .unwrap();
        let blk = s.model.a.view((0, 0), (2, 2)).into_owned();
        let mut ev = linalg::eigenvalues(&blk);
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0].re + 0.5).abs() < 1e-12);
        assert!((ev[1].im - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pzt_zeta_boundaries() {
        let ok = make_pzt_model(&PztParams {
            zeta: 0.0,
            ..PztParams::default()
        });
        assert!(ok.is_ok());
        let bad = make_pzt_model(&PztParams {
            zeta: -0.1,
            ..PztParams::default()
        });
        assert!(matches!(bad.unwrap_err(), Error::InvalidParameter { name: "zeta", .. }));
    }

    #[test]
    fn stepper_eigenvalues_and_gain() {
        let s = make_stepper_model(&StepperParams {
            tau_motor: 1.0,
            ..StepperParams::default()
        })
        .unwrap();
        let mut ev: Vec<f64> = linalg::eigenvalues(&s.model.a).iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
        // rate/u DC gain of the first-order lag: −b/a.
        let dc = -s.model.b2[(0, 0)] / s.model.a[(0, 0)];
        assert!((dc - 1.0).abs() < 1e-15);
        assert!(make_stepper_model(&StepperParams {
            tau_motor: 0.0,
            ..StepperParams::default()
        })
        .is_err());
    }

    #[test]
    fn cost_outer_product() {
        let subs = vec![
            make_pzt_model(&PztParams {
                optics_gain: 1.0,
                ..PztParams::default()
            })
            .unwrap(),
            make_stepper_model(&StepperParams {
                optics_gain: 2.0,
                ..StepperParams::default()
            })
            .unwrap(),
        ];
        let c = build_cost_matrices(&subs, 0.0).unwrap();
        assert_eq!(c.q[(0, 0)], 1.0);
        assert_eq!(c.q[(0, 4)], 2.0);
        assert_eq!(c.q.rank(1e-12), 1);
        let c = build_cost_matrices(&subs, 1e-6).unwrap();
        assert!(linalg::min_sym_eigenvalue(&c.q) >= 1e-6 - 1e-15);
    }

    #[test]
    fn cost_warns_on_weight_order() {
        let subs = vec![
            make_pzt_model(&PztParams {
                rho: 1e-4,
                ..PztParams::default()
            })
            .unwrap(),
            make_stepper_model(&StepperParams::default()).unwrap(),
        ];
        assert_eq!(build_cost_matrices(&subs, 0.0).unwrap().warnings.len(), 1);
        let subs = default_subsystems().unwrap();
        assert!(build_cost_matrices(&subs, 0.0).unwrap().warnings.is_empty());
    }

    #[test]
    fn global_plant_factors() {
        let subs = default_subsystems().unwrap();
        let cost = build_cost_matrices(&subs, 0.0).unwrap();
        let plant = assemble_global_plant(&subs, &cost).unwrap();
        let g = &plant.realization;
        assert!((g.c1.transpose() * &g.c1 - &cost.q).abs().max() < 1e-12);
        assert!((g.d12.transpose() * &g.d12 - &cost.r).abs().max() < 1e-12);
        let nonzero_rows = (0..g.c1.nrows()).filter(|&i| g.c1.row(i).norm() > 0.0).count();
        assert_eq!(nonzero_rows, 1);
        assert!(plant.is_block_diagonal());
    }

    #[test]
    fn aliasing() {
        assert_eq!(aliased_frequency(60.0, 100.0).unwrap(), 40.0);
        assert_eq!(aliased_frequency(6000.0, 4000.0).unwrap(), 2000.0);
        assert_eq!(aliased_frequency(100.0, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn oscillator_block() {
        let sub = default_subsystems().unwrap().remove(0);
        let aug = augment_disturbance(
            &sub,
            &DisturbanceSpec {
                freq_hz: 1.0,
                eps: 1e-6,
                noise_std: 1.0,
                damping: 0.0,
            },
        )
        .unwrap();
        let blk = aug.model.a.view((3, 3), (2, 2)).into_owned();
        let w = 2.0 * PI;
        assert_eq!(blk, Mat::from_row_slice(2, 2, &[0.0, w, -w, 0.0]));
        let err = augment_disturbance(
            &sub,
            &DisturbanceSpec {
                freq_hz: 1.0,
                eps: 0.0,
                noise_std: 1.0,
                damping: 0.0,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn models_are_observable_and_controllable() {
        for s in default_subsystems().unwrap() {
            assert!(is_observable(&s.model.c2, &s.model.a));
            assert!(is_stabilizable(&s.model.a, &s.model.b2, TimeDomain::Continuous));
        }
    }
}
