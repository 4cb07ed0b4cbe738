//! State-space containers, interconnection and zero-order-hold discretization.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag_mats, psd_factor, symmetrize, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

/// Generalized plant `x' = A x + B1 w + B2 u`, `z = C1 x + D12 u`,
/// `y = C2 x + D21 w` (no w→z or u→y feedthrough).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d12: Mat,
    pub d21: Mat,
    /// Sample period in seconds; `None` for continuous-time models.
    pub h: Option<f64>,
}

impl StateSpaceModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat,
        b1: Mat,
        b2: Mat,
        c1: Mat,
        c2: Mat,
        d12: Mat,
        d21: Mat,
        h: Option<f64>,
    ) -> Result<Self> {
        let m = Self {
            a,
            b1,
            b2,
            c1,
            c2,
            d12,
            d21,
            h,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let check = |cond: bool, what: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::Dimension(what.to_string()))
            }
        };
        check(self.a.ncols() == n, "A must be square")?;
        check(n >= 1, "model needs at least one state")?;
        check(self.b1.nrows() == n, "B1 rows must equal state dimension")?;
        check(self.b2.nrows() == n, "B2 rows must equal state dimension")?;
        check(self.c1.ncols() == n, "C1 columns must equal state dimension")?;
        check(self.c2.ncols() == n, "C2 columns must equal state dimension")?;
        check(
            self.d12.shape() == (self.c1.nrows(), self.b2.ncols()),
            "D12 must be p1×m",
        )?;
        check(
            self.d21.shape() == (self.c2.nrows(), self.b1.ncols()),
            "D21 must be p×q",
        )?;
        check(self.b2.ncols() >= 1, "model needs at least one control input")?;
        check(self.c2.nrows() >= 1, "model needs at least one measurement")?;
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::param("h", format!("sample period must be > 0, got {h}")));
            }
        }
        Ok(())
    }

    pub fn time_domain(&self) -> TimeDomain {
        if self.h.is_some() {
            TimeDomain::Discrete
        } else {
            TimeDomain::Continuous
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.h.is_some()
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b2.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c2.nrows()
    }
    pub fn n_noise(&self) -> usize {
        self.b1.ncols()
    }
    pub fn n_regulated(&self) -> usize {
        self.c1.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    #[serde(rename = "A", with = "linalg::rows")]
    a: Mat,
    #[serde(rename = "B1", with = "linalg::rows")]
    b1: Mat,
    #[serde(rename = "B2", with = "linalg::rows")]
    b2: Mat,
    #[serde(rename = "C1", with = "linalg::rows")]
    c1: Mat,
    #[serde(rename = "C2", with = "linalg::rows")]
    c2: Mat,
    #[serde(rename = "D12", with = "linalg::rows")]
    d12: Mat,
    #[serde(rename = "D21", with = "linalg::rows")]
    d21: Mat,
    time_domain: TimeDomain,
    h: Option<f64>,
}

impl Serialize for StateSpaceModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelRepr {
            a: self.a.clone(),
            b1: self.b1.clone(),
            b2: self.b2.clone(),
            c1: self.c1.clone(),
            c2: self.c2.clone(),
            d12: self.d12.clone(),
            d21: self.d21.clone(),
            time_domain: self.time_domain(),
            h: self.h,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateSpaceModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ModelRepr::deserialize(d)?;
        match (r.time_domain, r.h) {
            (TimeDomain::Continuous, Some(_)) => {
                return Err(D::Error::custom("continuous model must not carry h"))
            }
            (TimeDomain::Discrete, None) => {
                return Err(D::Error::custom("discrete model requires h"))
            }
            _ => {}
        }
        Ok(StateSpaceModel {
            a: r.a,
            b1: r.b1,
            b2: r.b2,
            c1: r.c1,
            c2: r.c2,
            d12: r.d12,
            d21: r.d21,
            h: r.h,
        })
    }
}

/// Index ranges of one subsystem inside a stacked model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRanges {
    pub states: Range<usize>,
    pub inputs: Range<usize>,
    pub outputs: Range<usize>,
    pub noise: Range<usize>,
}

/// A stacked model whose dynamics, noise and measurement maps are
/// block-diagonal with respect to `blocks`. `C1`/`D12` may couple blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedPlant {
    pub realization: StateSpaceModel,
    pub blocks: Vec<BlockRanges>,
}

impl PartitionedPlant {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Checks exact block-diagonality of A, B1, B2, C2 and D21.
    pub fn is_block_diagonal(&self) -> bool {
        let m = &self.realization;
        let off_zero = |mat: &Mat, rows: fn(&BlockRanges) -> Range<usize>, cols: fn(&BlockRanges) -> Range<usize>| {
            for (i, bi) in self.blocks.iter().enumerate() {
                for (j, bj) in self.blocks.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    for r in rows(bi) {
                        for c in cols(bj) {
                            if mat[(r, c)] != 0.0 {
                                return false;
                            }
                        }
                    }
                }
            }
            true
        };
        off_zero(&m.a, |b| b.states.clone(), |b| b.states.clone())
            && off_zero(&m.b1, |b| b.states.clone(), |b| b.noise.clone())
            && off_zero(&m.b2, |b| b.states.clone(), |b| b.inputs.clone())
            && off_zero(&m.c2, |b| b.outputs.clone(), |b| b.states.clone())
            && off_zero(&m.d21, |b| b.outputs.clone(), |b| b.noise.clone())
    }

    /// Subsystem `i` with its own dynamics, noise and measurement maps.
    pub fn local(&self, i: usize) -> LocalBlock {
        let b = &self.blocks[i];
        let m = &self.realization;
        let sub = |mat: &Mat, r: &Range<usize>, c: &Range<usize>| {
            mat.view((r.start, c.start), (r.len(), c.len())).into_owned()
        };
        LocalBlock {
            a: sub(&m.a, &b.states, &b.states),
            b1: sub(&m.b1, &b.states, &b.noise),
            b2: sub(&m.b2, &b.states, &b.inputs),
            c2: sub(&m.c2, &b.outputs, &b.states),
            d21: sub(&m.d21, &b.outputs, &b.noise),
            c1: m.c1.columns(b.states.start, b.states.len()).into_owned(),
            d12: m.d12.columns(b.inputs.start, b.inputs.len()).into_owned(),
        }
    }
}

/// The matrices of one subsystem, with its columns of the shared C1/D12.
#[derive(Debug, Clone)]
pub struct LocalBlock {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c2: Mat,
    pub d21: Mat,
    pub c1: Mat,
    pub d12: Mat,
}

pub fn block_diag(models: &[StateSpaceModel]) -> Result<PartitionedPlant> {
    let first = models
        .first()
        .ok_or_else(|| Error::Dimension("block_diag needs at least one model".into()))?;
    for m in models {
        match (first.h, m.h) {
            (None, None) => {}
            (Some(a), Some(b)) if a == b => {}
            _ => {
                return Err(Error::DomainMismatch(
                    "all models must share the time domain and sample period".into(),
                ))
            }
        }
    }
    let mut blocks = Vec::with_capacity(models.len());
    let (mut n, mut m, mut p, mut q) = (0, 0, 0, 0);
    for md in models {
        blocks.push(BlockRanges {
            states: n..n + md.n_states(),
            inputs: m..m + md.n_inputs(),
            outputs: p..p + md.n_outputs(),
            noise: q..q + md.n_noise(),
        });
        n += md.n_states();
        m += md.n_inputs();
        p += md.n_outputs();
        q += md.n_noise();
    }
    let realization = StateSpaceModel::new(
        block_diag_mats(models.iter().map(|m| &m.a)),
        block_diag_mats(models.iter().map(|m| &m.b1)),
        block_diag_mats(models.iter().map(|m| &m.b2)),
        block_diag_mats(models.iter().map(|m| &m.c1)),
        block_diag_mats(models.iter().map(|m| &m.c2)),
        block_diag_mats(models.iter().map(|m| &m.d12)),
        block_diag_mats(models.iter().map(|m| &m.d21)),
        first.h,
    )?;
    Ok(PartitionedPlant {
        realization,
        blocks,
    })
}

/// Discrete LTI controller `ξ⁺ = A ξ + B y`, `u = C ξ + D y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteController {
    #[serde(with = "linalg::rows")]
    pub a: Mat,
    #[serde(with = "linalg::rows")]
    pub b: Mat,
    #[serde(with = "linalg::rows")]
    pub c: Mat,
    #[serde(with = "linalg::rows")]
    pub d: Mat,
}

impl DiscreteController {
    /// Static gain `u = K y`.
    pub fn static_gain(k: Mat) -> Self {
        let (m, p) = k.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, p),
            c: Mat::zeros(m, 0),
            d: k,
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// Markov parameters `D, CB, CAB, …` up to `count` terms.
    pub fn markov_parameters(&self, count: usize) -> Vec<Mat> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ak_b = self.b.clone();
        for _ in 1..count {
            out.push(&self.c * &ak_b);
            ak_b = &self.a * ak_b;
        }
        out
    }
}

/// Closed-loop map `w → z`: `x⁺ = A x + B w`, `z = C x + D w`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

/// Lower linear-fractional interconnection of a discrete plant with a
/// discrete controller (D22 = 0, so always well posed).
pub fn close_loop(plant: &StateSpaceModel, k: &DiscreteController) -> Result<ClosedLoop> {
    if !plant.is_discrete() {
        return Err(Error::Unsupported(
            "close_loop needs a discrete plant; discretize first so delays become buffers".into(),
        ));
    }
    let (n, nk) = (plant.n_states(), k.n_states());
    if k.b.nrows() != nk || k.c.ncols() != nk || k.a.ncols() != nk {
        return Err(Error::Dimension("controller matrices are inconsistent".into()));
    }
    if k.d.ncols() != plant.n_outputs() || k.b.ncols() != plant.n_outputs() {
        return Err(Error::Dimension(format!(
            "controller input dimension {} != plant measurement dimension {}",
            k.d.ncols(),
            plant.n_outputs()
        )));
    }
    if k.d.nrows() != plant.n_inputs() || k.c.nrows() != plant.n_inputs() {
        return Err(Error::Dimension(format!(
            "controller output dimension {} != plant input dimension {}",
            k.d.nrows(),
            plant.n_inputs()
        )));
    }
    let b2dk = &plant.b2 * &k.d;
    let mut a = Mat::zeros(n + nk, n + nk);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(&plant.a + &b2dk * &plant.c2));
    a.view_mut((0, n), (n, nk)).copy_from(&(&plant.b2 * &k.c));
    a.view_mut((n, 0), (nk, n)).copy_from(&(&k.b * &plant.c2));
    a.view_mut((n, n), (nk, nk)).copy_from(&k.a);

    let q = plant.n_noise();
    let mut b = Mat::zeros(n + nk, q);
    b.view_mut((0, 0), (n, q))
        .copy_from(&(&plant.b1 + &b2dk * &plant.d21));
    b.view_mut((n, 0), (nk, q)).copy_from(&(&k.b * &plant.d21));

    let p1 = plant.n_regulated();
    let d12dk = &plant.d12 * &k.d;
    let mut c = Mat::zeros(p1, n + nk);
    c.view_mut((0, 0), (p1, n))
        .copy_from(&(&plant.c1 + &d12dk * &plant.c2));
    c.view_mut((0, n), (p1, nk)).copy_from(&(&plant.d12 * &k.c));
    let d = d12dk * &plant.d21;
    Ok(ClosedLoop { a, b, c, d })
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::param("h", format!("sample period must be > 0, got {h}")))
    }
}

/// `(e^{Ah}, ∫₀ʰ e^{Aτ}dτ · B)` from one exponential of `[[A, B], [0, 0]]·h`.
pub fn zoh_pair(a: &Mat, b: &Mat, h: f64) -> Result<(Mat, Mat)> {
    check_h(h)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut big = Mat::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    big.view_mut((0, n), (n, m)).copy_from(&(b * h));
    let e = big.exp();
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Process-noise covariance `∫₀ʰ e^{Aτ} B1 B1ᵀ e^{Aᵀτ} dτ` and measurement
/// noise covariance `D21 D21ᵀ / h` of the sampled model.
pub fn discretize_noise(model: &StateSpaceModel, h: f64) -> Result<(Mat, Mat)> {
    check_h(h)?;
    if model.is_discrete() {
        return Err(Error::DomainMismatch("model is already discrete".into()));
    }
    let n = model.n_states();
    let w = &model.b1 * model.b1.transpose();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-&model.a * h));
    big.view_mut((0, n), (n, n)).copy_from(&(w * h));
    big.view_mut((n, n), (n, n))
        .copy_from(&(model.a.transpose() * h));
    let e = big.exp();
    let g12 = e.view((0, n), (n, n)).into_owned();
    let g22 = e.view((n, n), (n, n)).into_owned();
    let qd = symmetrize(&(g22.transpose() * g12));
    let rd = symmetrize(&(&model.d21 * model.d21.transpose() / h));
    Ok((qd, rd))
}

/// Zero-order-hold discretization.
///
/// The discrete noise vector is `[w_process; w_measurement]` with
/// `B1d B1dᵀ = Qd` and `D21d D21dᵀ = Rd` from [`discretize_noise`]; the
/// continuous model must therefore have uncorrelated process and measurement
/// noise (`B1 D21ᵀ = 0`).
pub fn discretize_zoh(model: &StateSpaceModel, h: f64) -> Result<StateSpaceModel> {
    check_h(h)?;
    if model.is_discrete() {
        return Err(Error::DomainMismatch("model is already discrete".into()));
    }
    let cross = &model.b1 * model.d21.transpose();
    if cross.abs().max() > 0.0 {
        return Err(Error::Unsupported(
            "correlated process/measurement noise (B1 D21ᵀ ≠ 0)".into(),
        ));
    }
    let (ad, b2d) = zoh_pair(&model.a, &model.b2, h)?;
    let (qd, rd) = discretize_noise(model, h)?;
    let n = model.n_states();
    let p = model.n_outputs();
    let qf = psd_factor(&qd)?.transpose();
    let rf = match rd.clone().cholesky() {
        Some(ch) => ch.l(),
        None => psd_factor(&rd)?.transpose(),
    };
    let mut b1d = Mat::zeros(n, n + p);
    b1d.view_mut((0, 0), (n, n)).copy_from(&qf);
    let mut d21d = Mat::zeros(p, n + p);
    d21d.view_mut((0, n), (p, p)).copy_from(&rf);
    StateSpaceModel::new(
        ad,
        b1d,
        b2d,
        model.c1.clone(),
        model.c2.clone(),
        model.d12.clone(),
        d21d,
        Some(h),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, h: Option<f64>) -> StateSpaceModel {
        let s = |v: f64| Mat::from_element(1, 1, v);
        StateSpaceModel::new(
            s(a),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(0.0),
            s(0.0),
            h,
        )
        .unwrap()
    }

    #[test]
    fn block_diag_of_scalars() {
        let p = block_diag(&[scalar(1.0, None), scalar(2.0, None)]).unwrap();
        assert_eq!(p.realization.a, Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert!(p.is_block_diagonal());
    }

    #[test]
    fn block_diag_single_is_identity() {
        let m = scalar(0.3, Some(0.1));
        let p = block_diag(std::slice::from_ref(&m)).unwrap();
        assert_eq!(p.realization, m);
    }

    #[test]
    fn block_diag_rejects_mixed_domains() {
        let err = block_diag(&[scalar(1.0, None), scalar(1.0, Some(0.1))]).unwrap_err();
        assert!(matches!(err, Error::DomainMismatch(_)));
    }

    #[test]
    fn double_integrator_zoh() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ad, bd) = zoh_pair(&a, &b, 1.0).unwrap();
        assert!((ad - Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).abs().max() < 1e-14);
        assert!((bd - Mat::from_row_slice(2, 1, &[0.5, 1.0])).abs().max() < 1e-14);
    }

    #[test]
    fn integrator_zoh() {
        let (ad, bd) =
            zoh_pair(&Mat::zeros(1, 1), &Mat::from_element(1, 1, 1.0), 0.25).unwrap();
        assert_eq!(ad[(0, 0)], 1.0);
        assert!((bd[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zoh_rejects_nonpositive_h() {
        assert!(discretize_zoh(&scalar(-1.0, None), 0.0).is_err());
        assert!(discretize_noise(&scalar(-1.0, None), -1.0).is_err());
    }

    #[test]
    fn measurement_noise_scales_with_rate() {
        let mut m = scalar(0.0, None);
        m.b1 = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        m.d21 = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        let (qd, rd) = discretize_noise(&m, 0.25).unwrap();
        assert!((rd[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((qd[(0, 0)] - 0.25).abs() < 1e-14);
        let (_, rd) = discretize_noise(&m, 0.5).unwrap();
        assert!((rd[(0, 0)] - 2.0).abs() < 1e-14);
        let (qd, _) = discretize_noise(&m, 0.5).unwrap();
        assert!((qd[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn close_loop_exact_cancellation() {
        // x⁺ = w, z = x + u, y = x, u = -y  ⇒  z ≡ 0.
        let s = |v: f64| Mat::from_element(1, 1, v);
        let plant = StateSpaceModel::new(
            s(0.0),
            s(1.0),
            s(0.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(0.0),
            Some(1.0),
        )
        .unwrap();
        let cl = close_loop(&plant, &DiscreteController::static_gain(s(-1.0))).unwrap();
        assert_eq!(cl.c.abs().max(), 0.0);
        assert_eq!(cl.d.abs().max(), 0.0);
    }

    #[test]
    fn close_loop_zero_controller_is_open_loop() {
        let plant = scalar(0.5, Some(1.0));
        let cl = close_loop(&plant, &DiscreteController::static_gain(Mat::zeros(1, 1))).unwrap();
        assert_eq!(cl.a, plant.a);
        assert_eq!(cl.b, plant.b1);
        assert_eq!(cl.c, plant.c1);
    }

    #[test]
    fn close_loop_deadbeat() {
        // x⁺ = 0.5x + w + u, y = x, u = -0.5 y.
        let plant = scalar(0.5, Some(1.0));
        let cl = close_loop(&plant, &DiscreteController::static_gain(Mat::from_element(1, 1, -0.5)))
            .unwrap();
        assert_eq!(cl.a[(0, 0)], 0.0);
    }

    #[test]
    fn close_loop_rejects_continuous() {
        let err = close_loop(
            &scalar(0.5, None),
            &DiscreteController::static_gain(Mat::zeros(1, 1)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn close_loop_dimension_mismatch() {
        let err = close_loop(
            &scalar(0.5, Some(1.0)),
            &DiscreteController::static_gain(Mat::zeros(1, 2)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn json_requires_h_for_discrete() {
        let m = scalar(0.5, Some(0.1));
        let s = m.to_json().unwrap();
        assert!(s.contains("\"time_domain\": \"discrete\""));
        let bad = s.replace("\"h\": 0.1", "\"h\": null");
        assert!(StateSpaceModel::from_json(&bad).is_err());
    }
}
