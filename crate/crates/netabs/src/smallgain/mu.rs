use serde::{Deserialize, Serialize};

use super::GainOperator;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy)]
pub struct MuOptions {
    pub bisection_steps: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            bisection_steps: 60,
            max_iter: 5_000,
            tol: 1e-13,
        }
    }
}

/// Weights with `min mu = 1` and the decay rate they achieve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuCertificate {
    pub mu: Vec<f64>,
    /// `min_i (mu_i lambda_i - (mu' Gamma)_i) / mu_i`, recomputed from `mu`.
    pub lambda_inf: f64,
    pub worst_index: usize,
    pub method: String,
}

pub trait MuFinder: Named + Send + Sync {
    /// Returns a certificate with positive `lambda_inf` or the violated index.
    fn find(&self, op: &GainOperator, opts: &MuOptions) -> Result<MuCertificate>;
}

fn certificate(op: &GainOperator, mut mu: Vec<f64>, method: &str) -> Result<MuCertificate> {
    let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0 && lo.is_finite()) {
        return Err(Error::Numeric(
            "weight vector is not strictly positive".into(),
        ));
    }
    mu.iter_mut().for_each(|m| *m /= lo);
    let (lambda_inf, worst_index) = op.achieved_decay(&mu);
    if lambda_inf <= 0.0 {
        return Err(Error::SmallGainInfeasible {
            index: worst_index,
            slack: lambda_inf,
        });
    }
    Ok(MuCertificate {
        mu,
        lambda_inf,
        worst_index,
        method: method.to_string(),
    })
}

/// `mu = 1`.
pub struct UniformMu;

impl Named for UniformMu {
    fn name(&self) -> &'static str {
        "uniform"
    }
}

impl MuFinder for UniformMu {
    fn find(&self, op: &GainOperator, _: &MuOptions) -> Result<MuCertificate> {
        certificate(op, vec![1.0; op.len()], self.name())
    }
}

/// Bisection on the decay rate `l`, with `mu' = 1' + mu' Gamma (Lambda - l I)^-1` solved by
/// fixed-point iteration at each trial rate.
pub struct NeumannMu;

impl Named for NeumannMu {
    fn name(&self) -> &'static str {
        "neumann"
    }
}

impl NeumannMu {
    fn solve_at(op: &GainOperator, l: f64, opts: &MuOptions) -> Option<Vec<f64>> {
        let n = op.len();
        let shift: Vec<f64> = (0..n).map(|i| op.lambda(i) - l).collect();
        if shift.iter().any(|&s| s <= 0.0) {
            return None;
        }
        let mut mu = vec![1.0; n];
        for _ in 0..opts.max_iter {
            let g = op.left_gamma(&mu);
            let next: Vec<f64> = (0..n).map(|j| 1.0 + g[j] / shift[j]).collect();
            let mut diff: f64 = 0.0;
            let mut size: f64 = 0.0;
            for (a, b) in next.iter().zip(&mu) {
                diff = diff.max((a - b).abs());
                size = size.max(a.abs());
            }
            if !size.is_finite() || size > 1e15 {
                return None;
            }
            mu = next;
            if diff <= opts.tol * size {
                return Some(mu);
            }
        }
        None
    }
}

impl MuFinder for NeumannMu {
    fn find(&self, op: &GainOperator, opts: &MuOptions) -> Result<MuCertificate> {
        if op.is_empty() {
            return Err(Error::InvalidParameter("empty network".into()));
        }
        let lmin = (0..op.len())
            .map(|i| op.lambda(i))
            .fold(f64::INFINITY, f64::min);
        let mut best = match Self::solve_at(op, 0.0, opts) {
            Some(mu) => mu,
            None => {
                let (slack, index) = op.achieved_decay(&vec![1.0; op.len()]);
                return Err(Error::SmallGainInfeasible {
                    index,
                    slack: slack.min(0.0),
                });
            }
        };
        let (mut lo, mut hi) = (0.0, lmin);
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            match Self::solve_at(op, mid, opts) {
                Some(mu) => {
                    best = mu;
                    lo = mid;
                }
                None => hi = mid,
            }
            if hi - lo <= 1e-12 * lmin {
                break;
            }
        }
        certificate(op, best, self.name())
    }
}

/// Uniform weights when they already work, otherwise the Neumann search.
pub struct AutoMu;

impl Named for AutoMu {
    fn name(&self) -> &'static str {
        "auto"
    }
}

impl MuFinder for AutoMu {
    fn find(&self, op: &GainOperator, opts: &MuOptions) -> Result<MuCertificate> {
        let homogeneous = (0..op.len()).all(|i| op.lambda(i) == op.lambda(0));
        match UniformMu.find(op, opts) {
            Ok(c) if homogeneous => Ok(c),
            uniform => match NeumannMu.find(op, opts) {
                Ok(n) => match uniform {
                    Ok(u) if u.lambda_inf >= n.lambda_inf => Ok(u),
                    _ => Ok(n),
                },
                Err(e) => uniform.map_err(|_| e),
            },
        }
    }
}

pub fn mu_registry() -> Registry<dyn MuFinder> {
    let mut reg: Registry<dyn MuFinder> = Registry::new("weight finder");
    reg.register(Box::new(AutoMu));
    reg.register(Box::new(UniformMu));
    reg.register(Box::new(NeumannMu));
    reg
}
