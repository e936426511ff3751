//! Construction of abstract subsystems and interface maps from a chosen `P`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{column_conditioning, frobenius, min_norm_lstsq, Mat};
use crate::model::ModeMatrices;

const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ConditionResiduals {
    pub state: f64,
    pub internal: f64,
}

/// Abstract matrices and interface terms for one mode.
#[derive(Debug, Clone)]
pub struct Interconnection {
    pub a_hat: Mat,
    pub q: Mat,
    pub t: Mat,
    pub c_hat: Mat,
    pub residuals: ConditionResiduals,
}

fn check_rank(p: &Mat, s: usize) -> Result<()> {
    let (smin, smax) = column_conditioning(p);
    if p.ncols() > p.nrows() || smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::RankDeficientP {
            mode: s,
            sigma_min: smin,
        });
    }
    Ok(())
}

/// Solves `A P = P Ah - B Q`, `D = P Dh - B T`, `C P = Ch`.
///
/// `Q` (and `T` when `D_hat` is free) is the minimum-norm input term that moves the
/// right-hand side into `range(P)`; then `Ah = P^+ (A P + B Q)`. With `P = I` this gives
/// `Q = 0`. A residual above `1e-8 (1 + |rhs|)` means no exact solution exists for this `P`.
pub fn solve_interconnection_conditions(
    mode: &ModeMatrices,
    p: &Mat,
    d_hat: &Mat,
    s: usize,
) -> Result<Interconnection> {
    let n = mode.a.nrows();
    if p.nrows() != n {
        return Err(Error::dims(format!("mode {s}: P rows"), n, p.nrows()));
    }
    check_rank(p, s)?;
    let nh = p.ncols();
    if d_hat.nrows() != nh || d_hat.ncols() != mode.d.ncols() {
        return Err(Error::dims(
            format!("mode {s}: D_hat shape"),
            nh * mode.d.ncols(),
            d_hat.nrows() * d_hat.ncols(),
        ));
    }
    let ap = &mode.a * p;
    let (a_hat, q, res_state) = range_split(p, &mode.b, &ap)?;
    let tol_state = RESIDUAL_TOL * (1.0 + frobenius(&ap));
    if res_state > tol_state {
        return Err(Error::InfeasibleConditions {
            equation: "A P = P A_hat - B Q",
            mode: s,
            residual: res_state,
            tolerance: tol_state,
        });
    }

    let rhs = p * d_hat - &mode.d;
    let (t, res_int) = min_norm_lstsq(&mode.b, &rhs)?;
    let tol_int = RESIDUAL_TOL * (1.0 + frobenius(&mode.d));
    if res_int > tol_int {
        return Err(Error::InfeasibleConditions {
            equation: "D = P D_hat - B T",
            mode: s,
            residual: res_int,
            tolerance: tol_int,
        });
    }
    Ok(Interconnection {
        a_hat,
        q,
        t,
        c_hat: &mode.c * p,
        residuals: ConditionResiduals {
            state: res_state,
            internal: res_int,
        },
    })
}

/// Solves `P H = R + B X` with `X` of minimum norm among those minimizing the part of
/// `R + B X` outside `range(P)`. Returns `(H, X, |R + B X - P H|)`.
///
/// The outside part is measured in an orthonormal basis `N` of `range(P)^perp`; projecting
/// with `I - P P^+` instead leaves `n_hat` spurious near-zero singular values in the
/// projected `B` that the least-squares cutoff may or may not catch.
fn range_split(p: &Mat, b: &Mat, r: &Mat) -> Result<(Mat, Mat, f64)> {
    let n = p.nrows();
    let (p_pinv, _) = min_norm_lstsq(p, &Mat::identity(n, n))?;
    let proj = Mat::identity(n, n) - p * &p_pinv;
    let eig = proj.symmetric_eigen();
    let cols: Vec<_> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let x = if cols.is_empty() {
        Mat::zeros(b.ncols(), r.ncols())
    } else {
        let basis = Mat::from_columns(&cols);
        min_norm_lstsq(&(basis.transpose() * b), &(-(basis.transpose() * r)))?.0
    };
    let target = r + b * &x;
    let h = &p_pinv * &target;
    let res = frobenius(&(&target - p * &h));
    Ok((h, x, res))
}

/// Chooses `(D_hat, T)` from `P D_hat = D + B T` with `T` as small as possible.
pub fn split_internal_input(mode: &ModeMatrices, p: &Mat, s: usize) -> Result<(Mat, Mat)> {
    let (d_hat, t, res) = range_split(p, &mode.b, &mode.d)?;
    let tol = RESIDUAL_TOL * (1.0 + frobenius(&mode.d));
    if res > tol {
        return Err(Error::InfeasibleConditions {
            equation: "D = P D_hat - B T",
            mode: s,
            residual: res,
            tolerance: tol,
        });
    }
    Ok((d_hat, t))
}

/// `R = (B'MB)^-1 B'M P Bh`.
pub fn compute_interface_gain_r(b: &Mat, m: &Mat, p: &Mat, b_hat: &Mat) -> Result<Mat> {
    let btm = b.transpose() * m;
    let g = &btm * b;
    if g.clone().cholesky().is_none() {
        return Err(Error::Numeric(
            "B'MB is singular; B needs full column rank".into(),
        ));
    }
    // LU rather than the Cholesky factor: it reproduces R = I exactly when P Bh = B.
    g.lu()
        .solve(&(btm * p * b_hat))
        .ok_or_else(|| Error::Numeric("B'MB is singular; B needs full column rank".into()))
}

/// Trivial abstraction `P = I`, `Ah = A`, `Dh = D`, `Q = 0`, `T = 0`.
pub fn identity_abstraction(mode: &ModeMatrices) -> (Mat, Interconnection) {
    let n = mode.a.nrows();
    let m = mode.b.ncols();
    (
        Mat::identity(n, n),
        Interconnection {
            a_hat: mode.a.clone(),
            q: Mat::zeros(m, n),
            t: Mat::zeros(m, mode.d.ncols()),
            c_hat: mode.c.clone(),
            residuals: ConditionResiduals {
                state: 0.0,
                internal: 0.0,
            },
        },
    )
}

/// Frobenius residuals of the three conditions for given matrices.
pub fn condition_residuals(
    mode: &ModeMatrices,
    p: &Mat,
    ic: &Interconnection,
    d_hat: &Mat,
) -> [f64; 3] {
    let r1 = frobenius(&(&mode.a * p - p * &ic.a_hat + &mode.b * &ic.q));
    let r2 = frobenius(&(&mode.d - p * d_hat + &mode.b * &ic.t));
    let r3 = frobenius(&(&mode.c * p - &ic.c_hat));
    [r1, r2, r3]
}
