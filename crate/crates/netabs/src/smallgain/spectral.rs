use serde::Serialize;

use super::GainOperator;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Power used by the Gelfand estimate.
    pub k: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
            k: 8,
        }
    }
}

/// Bounds on `r(Psi)`; `upper` is always a valid upper bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralEstimate {
    pub upper: f64,
    pub lower: Option<f64>,
    pub iterations: usize,
}

pub trait SpectralRadiusEstimator: Named + Send + Sync {
    fn estimate(&self, op: &GainOperator, opts: &SpectralOptions) -> Result<SpectralEstimate>;
}

/// Induced 1-norm (largest column sum).
pub struct ColumnSum;

impl Named for ColumnSum {
    fn name(&self) -> &'static str {
        "column_sum"
    }
}

impl SpectralRadiusEstimator for ColumnSum {
    fn estimate(&self, op: &GainOperator, _: &SpectralOptions) -> Result<SpectralEstimate> {
        let upper = op.psi_column_sums().into_iter().fold(0.0, f64::max);
        Ok(SpectralEstimate {
            upper,
            lower: None,
            iterations: 0,
        })
    }
}

/// Power iteration on `Psi + I` with Collatz-Wielandt bracketing.
pub struct PowerIteration;

impl Named for PowerIteration {
    fn name(&self) -> &'static str {
        "power_iteration"
    }
}

impl SpectralRadiusEstimator for PowerIteration {
    fn estimate(&self, op: &GainOperator, opts: &SpectralOptions) -> Result<SpectralEstimate> {
        let n = op.len();
        if n == 0 {
            return Ok(SpectralEstimate {
                upper: 0.0,
                lower: Some(0.0),
                iterations: 0,
            });
        }
        let mut x = vec![1.0; n];
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let px = op.psi_mul(&x);
            let y: Vec<f64> = px.iter().zip(&x).map(|(p, xi)| p + xi).collect();
            let mut rmin = f64::INFINITY;
            let mut rmax: f64 = 0.0;
            for (yi, xi) in y.iter().zip(&x) {
                let r = yi / xi;
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
            lo = f64::max(lo, rmin - 1.0);
            hi = f64::min(hi, rmax - 1.0);
            let scale = y.iter().copied().fold(0.0, f64::max);
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::Numeric("power iteration lost positivity".into()));
            }
            x = y.into_iter().map(|v| v / scale).collect();
            if x.iter().any(|&v| v < 1e-300) {
                // deflated components: the remaining bracket is still valid
                return Ok(SpectralEstimate {
                    upper: hi.max(0.0),
                    lower: Some(lo.max(0.0)),
                    iterations: it,
                });
            }
            if hi - lo <= opts.tol * (1.0 + hi.abs()) {
                return Ok(SpectralEstimate {
                    upper: hi.max(0.0),
                    lower: Some(lo.max(0.0)),
                    iterations: it,
                });
            }
        }
        Ok(SpectralEstimate {
            upper: hi.max(0.0),
            lower: Some(lo.max(0.0)),
            iterations: opts.max_iter,
        })
    }
}

/// `|Psi^k|_1^(1/k)`.
pub struct Gelfand;

impl Named for Gelfand {
    fn name(&self) -> &'static str {
        "gelfand"
    }
}

impl SpectralRadiusEstimator for Gelfand {
    fn estimate(&self, op: &GainOperator, opts: &SpectralOptions) -> Result<SpectralEstimate> {
        let k = opts.k.max(1);
        let mut v = vec![1.0; op.len()];
        for _ in 0..k {
            v = op.psi_left_mul(&v);
        }
        let norm = v.into_iter().fold(0.0, f64::max);
        Ok(SpectralEstimate {
            upper: norm.powf(1.0 / k as f64),
            lower: None,
            iterations: k,
        })
    }
}

pub fn spectral_registry() -> Registry<dyn SpectralRadiusEstimator> {
    let mut reg: Registry<dyn SpectralRadiusEstimator> = Registry::new("spectral radius estimator");
    reg.register(Box::new(ColumnSum));
    reg.register(Box::new(PowerIteration));
    reg.register(Box::new(Gelfand));
    reg
}
