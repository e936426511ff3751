//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_min(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn lambda_max(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Symmetric positive semidefinite square root.
pub fn psd_sqrt(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut d = Vector::zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -1e-10 * scale {
            return Err(Error::Numeric(format!(
                "square root of indefinite matrix (eigenvalue {l:.3e})"
            )));
        }
        d[i] = l.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * Mat::from_diagonal(&d) * v.transpose())))
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn spectral_radius(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest generalized eigenvalue of the pencil (a, b) with b positive definite.
pub fn generalized_lambda_max(a: &Mat, b: &Mat) -> Result<f64> {
    let chol = symmetrize(b).cholesky().ok_or_else(|| {
        Error::Numeric("generalized eigenproblem: right matrix not positive definite".into())
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    Ok(lambda_max(&(&linv * symmetrize(a) * linv.transpose())))
}

/// Minimum-norm least-squares solution of `a x = b` and the Frobenius residual.
pub fn min_norm_lstsq(a: &Mat, b: &Mat) -> Result<(Mat, f64)> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(
            "least-squares right-hand side rows",
            a.nrows(),
            b.nrows(),
        ));
    }
    if a.ncols() == 0 {
        let res = frobenius(b);
        return Ok((Mat::zeros(0, b.ncols()), res));
    }
    if a.nrows() == 0 {
        return Ok((Mat::zeros(a.ncols(), b.ncols()), 0.0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * (a.nrows().max(a.ncols()) as f64) * smax;
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::Numeric(format!("least squares: {e}")))?;
    let res = frobenius(&(a * &x - b));
    Ok((x, res))
}

/// Ratio of smallest to largest singular value, zero for empty input.
pub fn column_conditioning(p: &Mat) -> (f64, f64) {
    let s = singular_values(p);
    if s.len() < p.ncols() || s.is_empty() {
        return (0.0, s.first().copied().unwrap_or(0.0));
    }
    (s[s.len() - 1], s[0])
}

/// Solves the Stein equation `X = a' X a + q` by Smith doubling.
pub fn solve_stein(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::dims("Stein equation", n, q.nrows()));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Numeric(format!(
            "Stein equation needs a Schur-stable matrix, spectral radius {rho:.6}"
        )));
    }
    let mut x = symmetrize(q);
    let mut ak = a.clone();
    let mut converged = false;
    for _ in 0..80 {
        let inc = ak.transpose() * &x * &ak;
        x += &inc;
        x = symmetrize(&x);
        ak = &ak * &ak;
        if frobenius(&inc) <= 1e-17 * frobenius(&x) || ak.amax() == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("Smith doubling did not converge".into()));
    }
    let res = frobenius(&(a.transpose() * &x * a - &x + q));
    let scale = frobenius(&x) * (1.0 + spectral_norm(a).powi(2)) + frobenius(q);
    if res > 1e-8 * scale {
        return Err(Error::Numeric(format!(
            "Stein residual {res:.3e} exceeds tolerance (scale {scale:.3e})"
        )));
    }
    Ok(x)
}

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `X = a'Xa - a'Xb (r + b'Xb)^-1 b'Xa + q`, computed by structured doubling.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let rinv = symmetrize(r)
        .cholesky()
        .ok_or_else(|| Error::Numeric("Riccati input weight not positive definite".into()))?
        .inverse();
    let mut ak = a.clone();
    let mut g = symmetrize(&(b * rinv * b.transpose()));
    let mut h = symmetrize(q);
    let eye = Mat::identity(n, n);
    let mut converged = false;
    for _ in 0..100 {
        let w = &eye + &g * &h;
        let lu = w.lu();
        let wa = lu
            .solve(&ak)
            .ok_or_else(|| Error::Numeric("singular doubling step".into()))?;
        let wg = lu
            .solve(&g)
            .ok_or_else(|| Error::Numeric("singular doubling step".into()))?;
        let a_next = &ak * &wa;
        let g_next = symmetrize(&(&g + &ak * wg * ak.transpose()));
        let h_next = symmetrize(&(&h + ak.transpose() * &h * &wa));
        let diff = frobenius(&(&h_next - &h));
        ak = a_next;
        g = g_next;
        h = h_next;
        if diff <= 1e-14 * frobenius(&h) {
            converged = true;
            break;
        }
    }
    if !converged || !h.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("Riccati doubling did not converge".into()));
    }
    let btx = b.transpose() * &h;
    let s = r + &btx * b;
    let gain = s
        .lu()
        .solve(&(&btx * a))
        .ok_or_else(|| Error::Numeric("singular Riccati gain system".into()))?;
    let res = a.transpose() * &h * a - &h - a.transpose() * btx.transpose() * &gain + q;
    let scale = frobenius(&h) * (1.0 + spectral_norm(a).powi(2)) + frobenius(q);
    if frobenius(&res) > 1e-7 * scale {
        return Err(Error::Numeric(format!(
            "Riccati residual {:.3e} exceeds tolerance",
            frobenius(&res)
        )));
    }
    Ok(h)
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != nc {
            return Err(Error::Parse(format!(
                "ragged matrix: row {i} has {} entries, expected {nc}",
                r.len()
            )));
        }
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Block-diagonal / stacked helpers.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let nr = blocks.first().map_or(0, |b| b.nrows());
    let nc: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(nr, nc);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (nr, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let nc = blocks.first().map_or(0, |b| b.ncols());
    let nr: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(nr, nc);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), nc)).copy_from(b);
        r += b.nrows();
    }
    out
}


/// Serde adapter writing matrices as lists of rows.
pub mod rows {
    use super::{from_rows, to_rows, Mat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let r = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&r).map_err(D::Error::custom)
    }
}

pub mod rows_opt {
    use super::{from_rows, to_rows, Mat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Mat>, D::Error> {
        let r = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        r.map(|r| from_rows(&r).map_err(D::Error::custom))
            .transpose()
    }
}
