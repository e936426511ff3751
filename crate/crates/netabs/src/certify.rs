//! Local simulation-function certificates for one subsystem kind.
//!
//! A certificate is a family of quadratic forms
//! `V_s(x, xh) = (x - P_s xh)' M_s (x - P_s xh)` together with the scalars
//! `alpha, kappa, epsilon, tau, lambda, rho_int, rho_ext`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::{KindBundle, ModeBundle};
use crate::error::{Error, Result};
use crate::linalg::{
    generalized_lambda_max, lambda_max, lambda_min, solve_stein, spectral_norm, spectral_radius,
    symmetrize, Mat, Vector,
};
use crate::model::{ModeMatrices, SwitchedSubsystem};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyParams {
    pub kappa: f64,
    pub epsilon: f64,
    /// Regularization of the Lyapunov right-hand side; `None` picks `1e-6 trace(C'C + I)`.
    pub delta: Option<f64>,
    /// Rescale all `M_s` by one common factor so that `M_s >= C_s'C_s` is tight in the worst mode.
    pub normalize: bool,
    /// Relative tolerance for the matrix inequality checks.
    pub tol: f64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            epsilon: 1.0,
            delta: None,
            normalize: true,
            tol: 1e-9,
        }
    }
}

impl CertifyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn c(&self) -> f64 {
        c_factor(self.epsilon)
    }

    /// Largest closed-loop spectral radius compatible with `kappa` and `epsilon`.
    pub fn decay_bound(&self) -> f64 {
        (self.kappa / self.c()).sqrt()
    }
}

pub fn c_factor(epsilon: f64) -> f64 {
    1.0 + epsilon + 1.0 / epsilon
}

pub fn default_delta(c: &Mat) -> f64 {
    let n = c.ncols();
    1e-6 * ((c.transpose() * c).trace() + n as f64)
}

/// Solves `At' M At - M = -(C'C + delta I)/kappa` with `At = sqrt(c/kappa) (A + B K)`.
pub fn solve_lyapunov_certificate(
    mode: &ModeMatrices,
    k: &Mat,
    s: usize,
    params: &CertifyParams,
) -> Result<Mat> {
    params.validate()?;
    let acl = &mode.a + &mode.b * k;
    let bound = params.decay_bound();
    let radius = spectral_radius(&acl);
    if radius >= bound {
        return Err(Error::NotSchurStable {
            mode: s,
            radius,
            bound,
        });
    }
    let n = mode.a.nrows();
    let delta = params.delta.unwrap_or_else(|| default_delta(&mode.c));
    let at = acl * (params.c() / params.kappa).sqrt();
    let q = (mode.c.transpose() * &mode.c + Mat::identity(n, n) * delta) / params.kappa;
    solve_stein(&at, &q)
}

/// Scales all `ms` by `max_s lambda_max(C_s M_s^-1 C_s')`, making `M_s >= C_s'C_s` tight
/// in the worst mode while keeping the ratios between modes.
pub fn normalize_alpha(ms: &mut [Mat], cs: &[&Mat]) -> Result<f64> {
    let mut scale: f64 = 0.0;
    for (m, c) in ms.iter().zip(cs) {
        let minv = symmetrize(m)
            .cholesky()
            .ok_or_else(|| Error::Numeric("certificate matrix not positive definite".into()))?
            .inverse();
        scale = scale.max(lambda_max(&(*c * minv * c.transpose())));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Numeric(
            "degenerate output map in normalization".into(),
        ));
    }
    for m in ms.iter_mut() {
        *m = symmetrize(&(&*m * scale));
    }
    Ok(scale)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Cond22Margins {
    /// `lambda_min(M - C'C)`.
    pub output: f64,
    /// `lambda_min(kappa M - c (A+BK)' M (A+BK))`.
    pub decay: f64,
}

pub fn cond22_margins(
    mode: &ModeMatrices,
    m: &Mat,
    k: &Mat,
    kappa: f64,
    epsilon: f64,
) -> Cond22Margins {
    let acl = &mode.a + &mode.b * k;
    let output = lambda_min(&(m - mode.c.transpose() * &mode.c));
    let decay = lambda_min(&(m * kappa - acl.transpose() * m * &acl * c_factor(epsilon)));
    Cond22Margins { output, decay }
}

/// Checks both matrix inequalities with a tolerance relative to `|M|`.
pub fn verify_cond22(
    mode: &ModeMatrices,
    m: &Mat,
    k: &Mat,
    s: usize,
    params: &CertifyParams,
) -> Result<Cond22Margins> {
    let margins = cond22_margins(mode, m, k, params.kappa, params.epsilon);
    let tol = params.tol * spectral_norm(m).max(1.0);
    if margins.output < -tol {
        return Err(Error::CertificateViolation {
            condition: "M >= C'C",
            mode: s,
            margin: margins.output,
        });
    }
    if margins.decay < -tol {
        return Err(Error::CertificateViolation {
            condition: "c (A+BK)' M (A+BK) <= kappa M",
            mode: s,
            margin: margins.decay,
        });
    }
    Ok(margins)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tau {
    pub value: f64,
    /// True when the eigenvalue-ratio bound was used instead of the exact pencil ratio.
    pub conservative: bool,
}

/// Mode-switch factor: smallest `tau` with `V_s' <= tau V_s` for all mode pairs.
pub fn compute_tau(ms: &[Mat], ps: &[Mat]) -> Result<Tau> {
    if ms.is_empty() {
        return Err(Error::InvalidParameter("no certificate matrices".into()));
    }
    if ms.len() == 1 || ms.iter().all(|m| m == &ms[0]) {
        return Ok(Tau {
            value: 1.0,
            conservative: false,
        });
    }
    let p0 = &ps[0];
    let same_p = ps
        .iter()
        .all(|p| p.shape() == p0.shape() && (p - p0).amax() <= 1e-14 * p0.amax().max(1.0));
    if same_p {
        let mut tau: f64 = 1.0;
        for (i, mi) in ms.iter().enumerate() {
            for (j, mj) in ms.iter().enumerate() {
                if i != j {
                    tau = tau.max(generalized_lambda_max(mj, mi)?);
                }
            }
        }
        Ok(Tau {
            value: tau,
            conservative: false,
        })
    } else {
        Ok(Tau {
            value: conservative_tau(ms),
            conservative: true,
        })
    }
}

/// `max_s lambda_max(M_s) / min_s lambda_min(M_s)`.
pub fn conservative_tau(ms: &[Mat]) -> f64 {
    let hi = ms.iter().map(lambda_max).fold(f64::MIN, f64::max);
    let lo = ms.iter().map(lambda_min).fold(f64::MAX, f64::min);
    hi / lo
}

/// Data per mode needed for the supply rates.
pub struct GainInputs<'a> {
    pub m: &'a Mat,
    pub b: &'a Mat,
    pub d: &'a Mat,
    pub p: &'a Mat,
    pub b_hat: &'a Mat,
    pub r: &'a Mat,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GainScalars {
    pub lambda: f64,
    pub rho_int: f64,
    pub rho_ext: f64,
}

/// `lambda = 1 - tau kappa`, `rho_int = tau c max_s |sqrt(M) D|^2`,
/// `rho_ext = tau c max_s |sqrt(M) (B R - P Bh)|^2`.
pub fn compute_gain_scalars(
    tau: f64,
    kappa: f64,
    epsilon: f64,
    modes: &[GainInputs<'_>],
) -> Result<GainScalars> {
    let lambda = 1.0 - tau * kappa;
    if lambda <= 0.0 {
        return Err(Error::CertificateInfeasible(format!(
            "tau * kappa = {:.6} >= 1 (tau {tau:.6}, kappa {kappa})",
            tau * kappa
        )));
    }
    let c = c_factor(epsilon);
    let mut int: f64 = 0.0;
    let mut ext: f64 = 0.0;
    for g in modes {
        if g.d.ncols() > 0 {
            int = int.max(lambda_max(&(g.d.transpose() * g.m * g.d)));
        }
        let x = g.b * g.r - g.p * g.b_hat;
        if x.ncols() > 0 {
            ext = ext.max(lambda_max(&(x.transpose() * g.m * &x)));
        }
    }
    Ok(GainScalars {
        lambda,
        rho_int: tau * c * int,
        rho_ext: tau * c * ext,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalCertificate {
    pub alpha: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub tau_conservative: bool,
    pub lambda: f64,
    pub rho_int: f64,
    pub rho_ext: f64,
    pub margins: Vec<Cond22Margins>,
}

impl LocalCertificate {
    pub fn v(&self, mode: &ModeBundle, x: &Vector, xh: &Vector) -> f64 {
        let e = x - &mode.p * xh;
        e.dot(&(&mode.m * &e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub samples: usize,
    /// Smallest `(rhs - lhs) / scale` over all samples.
    pub worst_relative_slack: f64,
    pub worst_sample: usize,
    pub violations: usize,
    pub tol: f64,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Samples random states, inputs and mode pairs and checks the one-step dissipation inequality
/// `V_s'(x+, xh+) - V_s(x, xh) <= -lambda V_s + rho_ext |uh|^2 + rho_int |w - wh|^2`.
pub fn verify_local_dissipation_sampled(
    kind: &SwitchedSubsystem,
    bundle: &KindBundle,
    samples: usize,
    seed: u64,
    tol: f64,
) -> DissipationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cert = &bundle.certificate;
    let r = kind.num_modes();
    let mut report = DissipationReport {
        samples,
        worst_relative_slack: f64::INFINITY,
        worst_sample: 0,
        violations: 0,
        tol,
    };
    for idx in 0..samples {
        let s = idx % r;
        let s2 = (idx / r) % r;
        let mm = kind.mode(s);
        let mb = &bundle.modes[s];
        let n = mm.a.nrows();
        let nh = mb.a_hat.nrows();
        let x = gaussian(&mut rng, n);
        let xh = gaussian(&mut rng, nh);
        let uh = gaussian(&mut rng, mb.b_hat.ncols());
        let w = gaussian(&mut rng, mm.d.ncols());
        let wh = gaussian(&mut rng, mm.d.ncols());
        let u = mb.interface(&x, &xh, &uh, &wh);
        let xn = &mm.a * &x + &mm.d * &w + &mm.b * &u;
        let xhn = &mb.a_hat * &xh + &mb.d_hat * &wh + &mb.b_hat * &uh;
        let v0 = cert.v(mb, &x, &xh);
        let v1 = cert.v(&bundle.modes[s2], &xn, &xhn);
        let ext = cert.rho_ext * uh.norm_squared();
        let int = cert.rho_int * (&w - &wh).norm_squared();
        let rhs = (1.0 - cert.lambda) * v0 + ext + int;
        let scale = v1.abs().max(v0.abs()).max(ext).max(int).max(1.0);
        let slack = (rhs - v1) / scale;
        if slack < report.worst_relative_slack {
            report.worst_relative_slack = slack;
            report.worst_sample = idx;
        }
        if slack < -tol {
            report.violations += 1;
        }
    }
    report
}
