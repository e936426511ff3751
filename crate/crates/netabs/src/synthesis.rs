//! Controller gain synthesis strategies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_dare, spectral_radius, Mat, Vector};
use crate::model::ModeMatrices;
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisRequest {
    /// Required strict upper bound on the closed-loop spectral radius.
    pub decay: f64,
    /// Added to the state weight `C'C`.
    pub delta: f64,
    pub r_weight: f64,
    pub poles: Option<Vec<f64>>,
    pub seed: u64,
}

pub trait GainSynthesis: Named + Send + Sync {
    fn synthesize(&self, mode: &ModeMatrices, req: &SynthesisRequest) -> Result<Mat>;
}

/// LQR on the decay-scaled pair `(A/decay, B/decay)`.
pub struct Lqr;

impl Named for Lqr {
    fn name(&self) -> &'static str {
        "lqr"
    }
}

impl GainSynthesis for Lqr {
    fn synthesize(&self, mode: &ModeMatrices, req: &SynthesisRequest) -> Result<Mat> {
        let n = mode.a.nrows();
        let m = mode.b.ncols();
        let g = 1.0 / req.decay;
        let a = &mode.a * g;
        let b = &mode.b * g;
        let q = mode.c.transpose() * &mode.c + Mat::identity(n, n) * req.delta;
        let r = Mat::identity(m, m) * req.r_weight;
        let x = solve_dare(&a, &b, &q, &r)?;
        let btx = b.transpose() * &x;
        let k = -(r + &btx * &b)
            .lu()
            .solve(&(btx * &a))
            .ok_or_else(|| Error::Numeric("singular LQR gain system".into()))?;
        let radius = spectral_radius(&(&mode.a + &mode.b * &k));
        if radius >= req.decay {
            return Err(Error::NotSchurStable {
                mode: 0,
                radius,
                bound: req.decay,
            });
        }
        Ok(k)
    }
}

/// Ackermann placement through a seeded random input direction.
pub struct PolePlacement;

impl Named for PolePlacement {
    fn name(&self) -> &'static str {
        "pole_placement"
    }
}

impl PolePlacement {
    fn default_poles(n: usize, decay: f64) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * decay];
        }
        (0..n)
            .map(|i| decay * (0.2 + 0.6 * i as f64 / (n - 1) as f64))
            .collect()
    }
}

impl GainSynthesis for PolePlacement {
    fn synthesize(&self, mode: &ModeMatrices, req: &SynthesisRequest) -> Result<Mat> {
        let n = mode.a.nrows();
        let m = mode.b.ncols();
        let poles = req
            .poles
            .clone()
            .unwrap_or_else(|| Self::default_poles(n, req.decay));
        if poles.len() != n {
            return Err(Error::dims("number of poles", n, poles.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let mut gdir = Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        gdir /= gdir.norm();
        let b = &mode.b * &gdir;
        let mut ctrb = Mat::zeros(n, n);
        let mut col = b.clone();
        for j in 0..n {
            ctrb.set_column(j, &col);
            col = &mode.a * col;
        }
        let mut phi = Mat::identity(n, n);
        for &p in &poles {
            phi *= &mode.a - Mat::identity(n, n) * p;
        }
        let mut en = Vector::zeros(n);
        en[n - 1] = 1.0;
        let z = ctrb.transpose().lu().solve(&en).ok_or_else(|| {
            Error::Numeric("pair not controllable through the chosen input direction".into())
        })?;
        let krow = z.transpose() * phi;
        let k = -(&gdir * krow);
        let acl = &mode.a + &mode.b * &k;
        let mut got: Vec<f64> = acl.complex_eigenvalues().iter().map(|c| c.re).collect();
        let mut want = poles.clone();
        got.sort_by(|a, b| a.total_cmp(b));
        want.sort_by(|a, b| a.total_cmp(b));
        let dev = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let imag = acl
            .complex_eigenvalues()
            .iter()
            .map(|c| c.im.abs())
            .fold(0.0, f64::max);
        let scale = 1.0 + want.iter().map(|p| p.abs()).fold(0.0, f64::max);
        if dev.max(imag) > 1e-6 * scale {
            return Err(Error::Numeric(format!(
                "pole placement inaccurate (deviation {:.3e}); ill-conditioned controllability matrix",
                dev.max(imag)
            )));
        }
        let radius = spectral_radius(&acl);
        if radius >= req.decay {
            return Err(Error::NotSchurStable {
                mode: 0,
                radius,
                bound: req.decay,
            });
        }
        Ok(k)
    }
}

pub fn gain_registry() -> Registry<dyn GainSynthesis> {
    let mut reg: Registry<dyn GainSynthesis> = Registry::new("gain synthesis method");
    reg.register(Box::new(Lqr));
    reg.register(Box::new(PolePlacement));
    reg
}
