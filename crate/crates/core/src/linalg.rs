//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Block-diagonal concatenation. Zero-sized blocks are allowed.
pub fn block_diag_mats<'a>(blocks: impl IntoIterator<Item = &'a Mat>) -> Mat {
    let blocks: Vec<&Mat> = blocks.into_iter().collect();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_real_part(a: &Mat) -> f64 {
    eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_schur_stable(a: &Mat) -> bool {
    spectral_radius(a) < 1.0
}

pub fn is_hurwitz(a: &Mat) -> bool {
    a.nrows() == 0 || max_real_part(a) < 0.0
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Returns F with FᵀF = M for a symmetric PSD M.
///
/// Uses Cholesky (F = Lᵀ) when M is positive definite and an eigenvalue
/// square root otherwise; eigenvalues below `1e-13·‖M‖` are treated as zero,
/// which keeps the rank of F equal to the numerical rank of M.
pub fn psd_factor(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension("psd_factor needs a square matrix".into()));
    }
    let sym = symmetrize(m);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l().transpose());
    }
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut f = Mat::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam < -1e-9 * scale.max(1.0) {
            return Err(Error::Numerical(format!(
                "matrix is not positive semidefinite (eigenvalue {lam:e})"
            )));
        }
        if lam > tol {
            let s = lam.sqrt();
            for j in 0..n {
                f[(k, j)] = s * eig.eigenvectors[(j, k)];
            }
        }
    }
    // Put nonzero rows first so rank-deficient factors read naturally.
    let mut rows: Vec<(f64, usize)> = (0..n).map(|k| (eig.eigenvalues[k], k)).collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Mat::zeros(n, n);
    for (dst, (_, src)) in rows.into_iter().enumerate() {
        out.set_row(dst, &f.row(src));
    }
    Ok(out)
}

/// Solves the symmetric positive definite system M X = B.
pub fn spd_solve(m: &Mat, b: &Mat) -> Result<Mat> {
    match symmetrize(m).cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => m
            .clone()
            .lu()
            .solve(b)
            .ok_or_else(|| Error::Numerical("singular system".into())),
    }
}

pub fn solve(m: &Mat, b: &Mat) -> Result<Mat> {
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular system".into()))
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Numerical rank of a complex matrix via singular values.
pub fn complex_rank(m: &DMatrix<Complex64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn to_complex(m: &Mat) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Largest singular value (2-norm).
pub fn norm2(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod rows {
    use super::Mat;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        if m.nrows() == 0 {
            // Keep the column count for empty matrices.
            return (Vec::<Vec<f64>>::new(), m.ncols()).serialize(s);
        }
        rows.serialize(s)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Rows(Vec<Vec<f64>>),
        Empty((Vec<Vec<f64>>, usize)),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Empty((_, cols)) => Ok(Mat::zeros(0, cols)),
            Repr::Rows(rows) => {
                let nr = rows.len();
                let nc = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != nc) {
                    return Err(D::Error::custom("ragged matrix rows"));
                }
                Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
            }
        }
    }

    pub mod vec {
        use super::super::Mat;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] Mat);

        pub fn serialize<S: Serializer>(v: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            let w: Vec<Wrap> = v.iter().cloned().map(Wrap).collect();
            w.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            let w: Vec<Wrap> = Vec::deserialize(d)?;
            Ok(w.into_iter().map(|w| w.0).collect())
        }
    }
}
