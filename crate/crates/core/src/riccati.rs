//! Algebraic Riccati and Lyapunov solvers.
//!
//! Problems use the output-weighted form ARE(A, B, C, D): the cost is
//! `∫|Cx + Du|²` (or `Σ|Cx + Du|²`), so `Q = CᵀC`, `R = DᵀD` and the cross
//! weight `S = CᵀD` is kept explicit. The stabilizing gain is
//! `F = −(DᵀD)⁻¹(BᵀX + DᵀC)` in continuous time and
//! `F = −(DᵀD + BᵀXB)⁻¹(BᵀXA + DᵀC)` in discrete time.
//!
//! - CARE: stable invariant subspace of the Hamiltonian via the matrix sign
//!   function.
//! - DARE: structure-preserving doubling on the symplectic pencil, which
//!   needs neither an invertible `A` nor any ordered QZ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, complex_rank, eigenvalues, inverse, kron, psd_factor, solve, spd_solve, symmetrize,
    to_complex, Mat,
};
use crate::lti::TimeDomain;

pub const RESIDUAL_TOL: f64 = 1e-9;
pub const PBH_RANK_TOL: f64 = 1e-8;
const KRONECKER_MAX_N: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreProblem {
    #[serde(with = "linalg::rows")]
    pub a: Mat,
    #[serde(with = "linalg::rows")]
    pub b: Mat,
    #[serde(with = "linalg::rows")]
    pub c: Mat,
    #[serde(with = "linalg::rows")]
    pub d: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreSolution {
    #[serde(with = "linalg::rows")]
    pub x: Mat,
    #[serde(with = "linalg::rows")]
    pub f: Mat,
    pub residual_norm: f64,
}

impl AreProblem {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let p = Self { a, b, c, d };
        p.check_dims()?;
        Ok(p)
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n
            || self.b.nrows() != n
            || self.c.ncols() != n
            || self.d.shape() != (self.c.nrows(), self.b.ncols())
        {
            return Err(Error::Dimension(format!(
                "ARE(A {:?}, B {:?}, C {:?}, D {:?})",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        Ok(())
    }

    /// Dual quadruple `(Aᵀ, Cᵀ, Bᵀ, Dᵀ)`.
    pub fn dual(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    fn weights(&self) -> Result<Weights> {
        let r = self.d.transpose() * &self.d;
        if r.clone().cholesky().is_none() {
            return Err(Error::param("D", "DᵀD must be positive definite"));
        }
        let s = self.c.transpose() * &self.d;
        let r_inv_st = spd_solve(&r, &s.transpose())?;
        let a_bar = &self.a - &self.b * &r_inv_st;
        let q_bar = symmetrize(&(self.c.transpose() * &self.c - &s * &r_inv_st));
        let g = symmetrize(&(&self.b * spd_solve(&r, &self.b.transpose())?));
        Ok(Weights {
            r,
            s,
            a_bar,
            q_bar,
            g,
        })
    }
}

struct Weights {
    r: Mat,
    s: Mat,
    a_bar: Mat,
    q_bar: Mat,
    g: Mat,
}

fn in_unstable_region(z: num_complex::Complex64, domain: TimeDomain) -> bool {
    match domain {
        TimeDomain::Continuous => z.re >= -1e-10,
        TimeDomain::Discrete => z.norm() >= 1.0 - 1e-10,
    }
}

/// PBH stabilizability test of `(A, B)`.
pub fn is_stabilizable(a: &Mat, b: &Mat, domain: TimeDomain) -> bool {
    let n = a.nrows();
    let ac = to_complex(a);
    let bc = to_complex(b);
    eigenvalues(a)
        .into_iter()
        .filter(|&z| in_unstable_region(z, domain))
        .all(|z| {
            let mut m = ac.clone();
            for i in 0..n {
                m[(i, i)] -= z;
            }
            let mut pbh = nalgebra::DMatrix::zeros(n, n + b.ncols());
            pbh.view_mut((0, 0), (n, n)).copy_from(&m);
            pbh.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
            let scale = pbh.norm().max(1e-300);
            complex_rank(&pbh, PBH_RANK_TOL * scale) == n
        })
}

/// PBH detectability test of `(C, A)`.
pub fn is_detectable(c: &Mat, a: &Mat, domain: TimeDomain) -> bool {
    is_stabilizable(&a.transpose(), &c.transpose(), domain)
}

/// Observability by the rank of `[C; CA; …; CA^{n−1}]`.
pub fn is_observable(c: &Mat, a: &Mat) -> bool {
    let n = a.nrows();
    let p = c.nrows();
    let mut obs = Mat::zeros(n * p, n);
    let mut row = c.clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&row);
        row = &row * a;
    }
    let scale = obs.norm().max(1e-300);
    obs.rank(1e-10 * scale) == n
}

fn check_assumptions(prob: &AreProblem, w: &Weights, domain: TimeDomain) -> Result<()> {
    if !is_stabilizable(&prob.a, &prob.b, domain) {
        return Err(Error::NoStabilizingSolution("(A, B) is not stabilizable".into()));
    }
    let c_bar = psd_factor(&w.q_bar)?;
    if !is_detectable(&c_bar, &w.a_bar, domain) {
        return Err(Error::NoStabilizingSolution(
            "(C, A) is not detectable after removing the cross term".into(),
        ));
    }
    Ok(())
}

pub fn care_residual(prob: &AreProblem, x: &Mat) -> Mat {
    let (a, b, c, d) = (&prob.a, &prob.b, &prob.c, &prob.d);
    let r = d.transpose() * d;
    let k = x * b + c.transpose() * d;
    let rk = spd_solve(&r, &k.transpose()).unwrap_or_else(|_| Mat::zeros(b.ncols(), a.nrows()));
    a.transpose() * x + x * a + c.transpose() * c - k * rk
}

pub fn dare_residual(prob: &AreProblem, x: &Mat) -> Mat {
    let (a, b, c, d) = (&prob.a, &prob.b, &prob.c, &prob.d);
    let r = d.transpose() * d + b.transpose() * x * b;
    let k = a.transpose() * x * b + c.transpose() * d;
    let rk = spd_solve(&r, &k.transpose()).unwrap_or_else(|_| Mat::zeros(b.ncols(), a.nrows()));
    a.transpose() * x * a - x + c.transpose() * c - k * rk
}

fn relative(res: &Mat, scale_terms: &[f64]) -> f64 {
    let scale: f64 = scale_terms.iter().sum::<f64>().max(1.0);
    res.norm() / scale
}

fn care_relative_residual(prob: &AreProblem, x: &Mat) -> f64 {
    let res = care_residual(prob, x);
    let ax = (prob.a.transpose() * x).norm();
    relative(&res, &[2.0 * ax, (prob.c.transpose() * &prob.c).norm(), x.norm()])
}

fn dare_relative_residual(prob: &AreProblem, x: &Mat) -> f64 {
    let res = dare_residual(prob, x);
    let axa = (prob.a.transpose() * x * &prob.a).norm();
    relative(&res, &[axa, x.norm(), (prob.c.transpose() * &prob.c).norm()])
}

/// Stabilizing gain of the continuous problem for a given `X`.
pub fn care_gain(prob: &AreProblem, x: &Mat) -> Result<Mat> {
    let r = prob.d.transpose() * &prob.d;
    let k = prob.b.transpose() * x + prob.d.transpose() * &prob.c;
    Ok(-spd_solve(&r, &k)?)
}

/// Stabilizing gain of the discrete problem for a given `X`.
pub fn dare_gain(prob: &AreProblem, x: &Mat) -> Result<Mat> {
    let r = prob.d.transpose() * &prob.d + prob.b.transpose() * x * &prob.b;
    let k = prob.b.transpose() * x * &prob.a + prob.d.transpose() * &prob.c;
    Ok(-spd_solve(&r, &k)?)
}

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(h: &Mat) -> Result<Mat> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..100 {
        let zi = inverse(&z).map_err(|_| {
            Error::IllPosed("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        let det = z.clone().lu().determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * c + zi / c) * 0.5;
        let diff = (&next - &z).norm();
        z = next;
        if diff <= 1e-14 * z.norm() {
            return Ok(z);
        }
    }
    Err(Error::IllPosed(
        "sign iteration did not converge (eigenvalues near the imaginary axis)".into(),
    ))
}

pub fn solve_care(prob: &AreProblem) -> Result<AreSolution> {
    prob.check_dims()?;
    let w = prob.weights()?;
    check_assumptions(prob, &w, TimeDomain::Continuous)?;
    let n = prob.a.nrows();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&w.a_bar);
    h.view_mut((0, n), (n, n)).copy_from(&(-&w.g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&w.q_bar));
    h.view_mut((n, n), (n, n)).copy_from(&(-w.a_bar.transpose()));
    let hscale = h.norm().max(1e-300);
    if eigenvalues(&h)
        .iter()
        .any(|z| z.re.abs() <= 1e-12 * hscale)
    {
        return Err(Error::IllPosed(
            "Hamiltonian has eigenvalues on the imaginary axis".into(),
        ));
    }
    let s = matrix_sign(&h)?;
    // Stable subspace = ker(S + I): [S12; S22 + I] X = −[S11 + I; S21].
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&s.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(s.view((n, n), (n, n)) + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(s.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-s.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut x = symmetrize(&x);
    // One defect-correction step: solve the Lyapunov equation for the error.
    let mut residual = care_relative_residual(prob, &x);
    if residual > 1e-12 {
        let f = care_gain(prob, &x)?;
        let acl = &prob.a + &prob.b * &f;
        let res = care_residual(prob, &x);
        if let Ok(dx) = solve_lyapunov(&acl.transpose(), &res, TimeDomain::Continuous) {
            let cand = symmetrize(&(&x + dx));
            let r2 = care_relative_residual(prob, &cand);
            if r2 < residual {
                x = cand;
                residual = r2;
            }
        }
    }
    let f = care_gain(prob, &x)?;
    let acl = &prob.a + &prob.b * &f;
    if !linalg::is_hurwitz(&acl) {
        return Err(Error::NoStabilizingSolution(
            "closed loop A + BF is not Hurwitz".into(),
        ));
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "CARE relative residual {residual:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok(AreSolution {
        x,
        f,
        residual_norm: residual,
    })
}

/// Structure-preserving doubling for `X = ĀᵀXĀ − ĀᵀXG(I + … )… + Q̄`.
fn sda(a0: &Mat, g0: &Mat, h0: &Mat) -> Result<Mat> {
    let n = a0.nrows();
    let eye = Mat::identity(n, n);
    let (mut a, mut g, mut h) = (a0.clone(), g0.clone(), h0.clone());
    for _ in 0..200 {
        let w = &eye + &g * &h;
        let w_a = solve(&w, &a)
            .map_err(|_| Error::IllPosed("doubling step hit a singular pencil".into()))?;
        let w_g = solve(&w, &g)
            .map_err(|_| Error::IllPosed("doubling step hit a singular pencil".into()))?;
        let h_next = symmetrize(&(&h + a.transpose() * &h * &w_a));
        let g_next = symmetrize(&(&g + &a * w_g * a.transpose()));
        let a_next = &a * w_a;
        let change = (&h_next - &h).norm();
        h = h_next;
        g = g_next;
        a = a_next;
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::IllPosed("doubling iteration diverged".into()));
        }
        if change <= 1e-15 * h.norm().max(1e-300) || a.norm() <= 1e-300 {
            return Ok(h);
        }
    }
    Err(Error::IllPosed(
        "doubling iteration did not converge (symplectic eigenvalues near the unit circle)".into(),
    ))
}

pub fn solve_dare(prob: &AreProblem) -> Result<AreSolution> {
    prob.check_dims()?;
    let w = prob.weights()?;
    check_assumptions(prob, &w, TimeDomain::Discrete)?;
    let _ = (&w.r, &w.s);
    let mut x = sda(&w.a_bar, &w.g, &w.q_bar)?;
    let mut residual = dare_relative_residual(prob, &x);
    if residual > 1e-12 {
        // Defect correction against the closed-loop Stein equation.
        for _ in 0..3 {
            let f = dare_gain(prob, &x)?;
            let acl = &prob.a + &prob.b * &f;
            let res = dare_residual(prob, &x);
            let Ok(dx) = solve_lyapunov(&acl.transpose(), &res, TimeDomain::Discrete) else {
                break;
            };
            let cand = symmetrize(&(&x + dx));
            let r2 = dare_relative_residual(prob, &cand);
            if r2 >= residual {
                break;
            }
            x = cand;
            residual = r2;
            if residual <= 1e-13 {
                break;
            }
        }
    }
    let f = dare_gain(prob, &x)?;
    let acl = &prob.a + &prob.b * &f;
    if !linalg::is_schur_stable(&acl) {
        return Err(Error::NoStabilizingSolution(
            "closed loop A + BF is not Schur stable".into(),
        ));
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "DARE relative residual {residual:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok(AreSolution {
        x,
        f,
        residual_norm: residual,
    })
}

/// One backward step of the discrete Riccati map: returns `(X_t, F_t)` given
/// the cost-to-go `X_{t+1}`.
pub fn riccati_step(a: &Mat, b: &Mat, c: &Mat, d: &Mat, x_next: &Mat) -> Result<(Mat, Mat)> {
    let r = d.transpose() * d + b.transpose() * x_next * b;
    let k = b.transpose() * x_next * a + d.transpose() * c;
    let f = -spd_solve(&r, &k)?;
    let acl = a + b * &f;
    let ccl = c + d * &f;
    let x = symmetrize(&(acl.transpose() * x_next * &acl + ccl.transpose() * ccl));
    Ok((x, f))
}

/// Backward recursion from the terminal weight `X_T`. Element `t` of the
/// result is `(X_t, F_t)` for `t = 0..T`, with `F_t` the optimal gain at
/// step `t`.
pub fn riccati_recursion_finite(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    d: &Mat,
    terminal: &Mat,
    steps: usize,
) -> Result<Vec<(Mat, Mat)>> {
    AreProblem::new(a.clone(), b.clone(), c.clone(), d.clone())?;
    if steps == 0 {
        return Err(Error::param("T", "horizon must be at least one step"));
    }
    if terminal.shape() != a.shape() {
        return Err(Error::Dimension("terminal weight must be n×n".into()));
    }
    if linalg::min_sym_eigenvalue(terminal) < -1e-12 * terminal.norm().max(1.0)
        || (terminal - terminal.transpose()).norm() > 1e-12 * terminal.norm().max(1.0)
    {
        return Err(Error::param("X_T", "terminal weight must be symmetric PSD"));
    }
    let mut out = vec![(Mat::zeros(0, 0), Mat::zeros(0, 0)); steps];
    let mut x = terminal.clone();
    for t in (0..steps).rev() {
        let (xt, ft) = riccati_step(a, b, c, d, &x)?;
        out[t] = (xt.clone(), ft);
        x = xt;
    }
    Ok(out)
}

/// Continuous `AP + PAᵀ + W = 0` or discrete `APAᵀ − P + W = 0`.
pub fn solve_lyapunov(a: &Mat, w: &Mat, domain: TimeDomain) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || w.shape() != (n, n) {
        return Err(Error::Dimension("solve_lyapunov needs square A and W".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let stable = match domain {
        TimeDomain::Continuous => linalg::is_hurwitz(a),
        TimeDomain::Discrete => linalg::is_schur_stable(a),
    };
    if !stable {
        return Err(Error::NoLyapunovSolution(format!(
            "A is not {}",
            match domain {
                TimeDomain::Continuous => "Hurwitz",
                TimeDomain::Discrete => "Schur stable",
            }
        )));
    }
    let p = if n <= KRONECKER_MAX_N {
        lyapunov_kronecker(a, w, domain)?
    } else {
        match domain {
            TimeDomain::Discrete => stein_doubling(a, w),
            TimeDomain::Continuous => {
                // Cayley map to an equivalent Stein equation.
                let scale = linalg::norm2(a).max(1e-12);
                let eye = Mat::identity(n, n);
                let am = a / scale;
                let inv = inverse(&(&eye - &am))?;
                let ad = &inv * (&eye + &am);
                let wd = &inv * (w / scale) * inv.transpose() * 2.0;
                stein_doubling(&ad, &symmetrize(&wd))
            }
        }
    };
    Ok(symmetrize(&p))
}

fn lyapunov_kronecker(a: &Mat, w: &Mat, domain: TimeDomain) -> Result<Mat> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    // Column-major vec: vec(A P Bᵀ) = (B ⊗ A) vec(P).
    let op = match domain {
        TimeDomain::Continuous => kron(&eye, a) + kron(a, &eye),
        TimeDomain::Discrete => kron(a, a) - Mat::identity(n * n, n * n),
    };
    let lu = op.lu();
    let singular = || Error::NoLyapunovSolution("singular Lyapunov operator".into());
    let rhs = Mat::from_column_slice(n * n, 1, (-w).as_slice());
    let sol = lu.solve(&rhs).ok_or_else(singular)?;
    let mut p = symmetrize(&Mat::from_column_slice(n, n, sol.as_slice()));
    // Iterative refinement against the residual of the symmetric iterate.
    for _ in 0..3 {
        let res = match domain {
            TimeDomain::Continuous => a * &p + &p * a.transpose() + w,
            TimeDomain::Discrete => a * &p * a.transpose() - &p + w,
        };
        if res.norm() <= 1e-16 * (w.norm() + p.norm()) {
            break;
        }
        let rhs = Mat::from_column_slice(n * n, 1, (-res).as_slice());
        let dp = lu.solve(&rhs).ok_or_else(singular)?;
        p += symmetrize(&Mat::from_column_slice(n, n, dp.as_slice()));
    }
    Ok(p)
}

/// `P = Σ_k A^k W (Aᵀ)^k` by squaring, with residual correction.
fn stein_doubling(a: &Mat, w: &Mat) -> Mat {
    let sum = |w: &Mat| {
        let mut p = w.clone();
        let mut ak = a.clone();
        for _ in 0..80 {
            let inc = &ak * &p * ak.transpose();
            let done = inc.norm() <= 1e-18 * p.norm().max(1e-300);
            p += inc;
            if done {
                break;
            }
            ak = &ak * &ak;
        }
        p
    };
    let mut p = sum(w);
    for _ in 0..2 {
        let res = a * &p * a.transpose() - &p + w;
        if res.norm() <= 1e-15 * (1.0 + p.norm()) {
            break;
        }
        p += sum(&symmetrize(&res));
    }
    p
}

pub fn lyapunov_residual(a: &Mat, w: &Mat, p: &Mat, domain: TimeDomain) -> f64 {
    let r = match domain {
        TimeDomain::Continuous => a * p + p * a.transpose() + w,
        TimeDomain::Discrete => a * p * a.transpose() - p + w,
    };
    r.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    /// Scalar problem with `Q = c²`, `R = d²` and no cross weight.
    fn scalar(a: f64, b: f64, c: f64, d: f64) -> AreProblem {
        AreProblem::new(
            s(a),
            s(b),
            Mat::from_row_slice(2, 1, &[c, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, d]),
        )
        .unwrap()
    }

    #[test]
    fn care_scalar_symmetric() {
        let sol = solve_care(&scalar(0.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((sol.x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((sol.f[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn care_scalar_unstable() {
        // 2X + 1 − X² = 0 ⇒ X = 1 + √2.
        let sol = solve_care(&scalar(1.0, 1.0, 1.0, 1.0)).unwrap();
        let x = 1.0 + 2f64.sqrt();
        assert!((sol.x[(0, 0)] - x).abs() < 1e-10);
        assert!((sol.f[(0, 0)] + x).abs() < 1e-10);
    }

    #[test]
    fn care_zero_cost() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]);
        let p = AreProblem::new(a, Mat::from_row_slice(2, 1, &[1.0, 1.0]), Mat::zeros(1, 2), s(1.0))
            .unwrap();
        let sol = solve_care(&p).unwrap();
        assert!(sol.x.norm() < 1e-12);
        assert!(sol.f.norm() < 1e-12);
    }

    #[test]
    fn dare_golden_ratio() {
        let sol = solve_dare(&scalar(1.0, 1.0, 1.0, 1.0)).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.x[(0, 0)] - phi).abs() < 1e-10);
        assert!((sol.f[(0, 0)] + 1.0 / phi).abs() < 1e-10);
    }

    #[test]
    fn dare_one_step_decay() {
        let c = Mat::from_row_slice(1, 2, &[1.0, 2.0]);
        let p = AreProblem::new(
            Mat::zeros(2, 2),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let sol = solve_dare(&p).unwrap();
        assert!((&sol.x - c.transpose() * &c).norm() < 1e-12);
        assert!(sol.f.norm() < 1e-12);
    }

    #[test]
    fn dare_decoupled_matches_scalar() {
        let eye = Mat::identity(2, 2);
        let p = AreProblem::new(&eye * 0.5, eye.clone(), eye.clone(), eye.clone()).unwrap();
        let sol = solve_dare(&p).unwrap();
        let raw = AreProblem::new(s(0.5), s(1.0), s(1.0), s(1.0)).unwrap();
        let xs = solve_dare(&raw).unwrap().x[(0, 0)];
        assert!((&sol.x - &eye * xs).norm() < 1e-12);
    }

    #[test]
    fn dare_rejects_unstabilizable() {
        let p = scalar(2.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            solve_dare(&p).unwrap_err(),
            Error::NoStabilizingSolution(_)
        ));
    }

    #[test]
    fn care_rejects_undetectable() {
        let p = scalar(1.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            solve_care(&p).unwrap_err(),
            Error::NoStabilizingSolution(_)
        ));
    }

    #[test]
    fn dare_rejects_singular_feedthrough() {
        let p = scalar(0.5, 1.0, 1.0, 0.0);
        assert!(matches!(solve_dare(&p).unwrap_err(), Error::InvalidParameter { .. }));
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&s(0.5), &s(1.0), TimeDomain::Discrete).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        let p = solve_lyapunov(&s(-1.0), &s(2.0), TimeDomain::Continuous).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            solve_lyapunov(&s(1.0), &s(1.0), TimeDomain::Discrete).unwrap_err(),
            Error::NoLyapunovSolution(_)
        ));
        assert!(solve_lyapunov(&s(0.1), &s(1.0), TimeDomain::Continuous).is_err());
    }

    #[test]
    fn doubling_matches_kronecker() {
        let n = 6;
        let a = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.05 - 0.1);
        let w = Mat::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let w = symmetrize(&w);
        let pk = lyapunov_kronecker(&a, &w, TimeDomain::Discrete).unwrap();
        let pd = stein_doubling(&a, &w);
        assert!((pk - pd).norm() < 1e-12);
    }

    #[test]
    fn finite_recursion_static_problem() {
        let c = Mat::from_row_slice(2, 1, &[1.0, 0.5]);
        let d = Mat::from_row_slice(2, 1, &[0.0, 2.0]);
        let out = riccati_recursion_finite(&s(0.9), &s(1.0), &c, &d, &Mat::zeros(1, 1), 1).unwrap();
        let expected = -(d.transpose() * &d).try_inverse().unwrap() * d.transpose() * &c;
        assert!((&out[0].1 - expected).norm() < 1e-15);
    }

    #[test]
    fn finite_recursion_memoryless() {
        let c = Mat::from_row_slice(2, 1, &[1.5, 0.0]);
        let d = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let out = riccati_recursion_finite(&s(0.0), &s(1.0), &c, &d, &Mat::zeros(1, 1), 5).unwrap();
        for (x, _) in out {
            assert!((x[(0, 0)] - 2.25).abs() < 1e-15);
        }
    }

    #[test]
    fn finite_recursion_rejects_non_psd_terminal() {
        assert!(riccati_recursion_finite(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &s(-1.0), 3).is_err());
        assert!(riccati_recursion_finite(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &s(0.0), 0).is_err());
    }
}
