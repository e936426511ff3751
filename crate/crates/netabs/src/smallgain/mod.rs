//! Gain operator of a network, spectral-radius estimates, weight vectors and
//! the aggregate certificate of the whole interconnection.

mod mu;
mod spectral;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bundle::AbstractionBundle;
use crate::certify::LocalCertificate;
use crate::error::{Error, Result};
use crate::model::{Network, NetworkTemplate, Source};

pub use mu::{mu_registry, AutoMu, MuCertificate, MuFinder, MuOptions, NeumannMu, UniformMu};
pub use spectral::{
    spectral_registry, ColumnSum, Gelfand, PowerIteration, SpectralEstimate, SpectralOptions,
    SpectralRadiusEstimator,
};

/// Local certificate data attached to a node.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeGains {
    pub lambda: f64,
    pub alpha: f64,
    pub rho_int: f64,
    pub rho_ext: f64,
    pub n_bar: usize,
    /// Number of (mode, boundary channel) inputs, counted in the worst mode.
    pub boundary_inputs: usize,
}

impl NodeGains {
    fn from_cert(c: &LocalCertificate, n_bar: usize, boundary_inputs: usize) -> Self {
        Self {
            lambda: c.lambda,
            alpha: c.alpha,
            rho_int: c.rho_int,
            rho_ext: c.rho_ext,
            n_bar,
            boundary_inputs,
        }
    }
}

/// Sparse nonnegative `Gamma` with row-wise storage plus the diagonal `Lambda`.
#[derive(Debug, Clone)]
pub struct GainOperator {
    pub nodes: Vec<NodeGains>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl GainOperator {
    /// `gamma_ij = rho_int_i * Nbar_i / alpha_j` over the union of in-neighbors; zero gains are
    /// not stored.
    pub fn from_network(net: &Network, bundle: &AbstractionBundle) -> Result<Self> {
        if bundle.kinds.len() != net.kinds.len() {
            return Err(Error::dims(
                "certified kinds",
                net.kinds.len(),
                bundle.kinds.len(),
            ));
        }
        let nodes: Vec<NodeGains> = (0..net.len())
            .map(|i| {
                let boundary = net.nodes[i]
                    .in_neighbors
                    .iter()
                    .map(|l| {
                        l.iter()
                            .filter(|s| matches!(s, Source::Boundary(_)))
                            .count()
                    })
                    .max()
                    .unwrap_or(0);
                NodeGains::from_cert(
                    &bundle.kinds[net.nodes[i].kind].certificate,
                    net.max_in_degree(i),
                    boundary,
                )
            })
            .collect();
        let rows = (0..net.len())
            .map(|i| {
                let g = &nodes[i];
                net.union_in_neighbors(i)
                    .into_iter()
                    .map(|j| (j, g.rho_int * g.n_bar as f64 / nodes[j].alpha))
                    .filter(|&(_, v)| v != 0.0)
                    .collect()
            })
            .collect();
        Ok(Self { nodes, rows })
    }

    pub fn from_parts(nodes: Vec<NodeGains>, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let n = nodes.len();
        let mut rows = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::dims("gain triplet index", n, i.max(j)));
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative gain at ({i}, {j})"
                )));
            }
            rows[i].push((j, v));
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        Ok(Self { nodes, rows })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.nodes[i].lambda
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
            .collect()
    }

    /// `(mu' Gamma)_j`.
    pub fn left_gamma(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                out[j] += mu[i] * v;
            }
        }
        out
    }

    /// `Psi x` with `Psi = Lambda^-1 Gamma`.
    pub fn psi_mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, v)| v * x[j]).sum::<f64>() / self.nodes[i].lambda)
            .collect()
    }

    /// `v' Psi`.
    pub fn psi_left_mul(&self, v: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = v
            .iter()
            .zip(&self.nodes)
            .map(|(x, g)| x / g.lambda)
            .collect();
        self.left_gamma(&scaled)
    }

    pub fn psi_column_sums(&self) -> Vec<f64> {
        self.psi_left_mul(&vec![1.0; self.len()])
    }

    pub fn dense_psi(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] += v / self.nodes[i].lambda;
            }
        }
        m
    }

    /// Smallest normalized slack `(mu_i lambda_i - (mu' Gamma)_i) / mu_i` and its index.
    pub fn achieved_decay(&self, mu: &[f64]) -> (f64, usize) {
        let mg = self.left_gamma(mu);
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let v = (mu[i] * self.nodes[i].lambda - mg[i]) / mu[i];
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Writes `i j value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n {}", self.len())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }

    pub fn write_lambda<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, g) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {:e}", g.lambda)?;
        }
        Ok(())
    }
}

/// Parses `i j value` lines, skipping blank lines and `#` comments.
pub fn read_triplets<R: BufRead>(r: R) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let bad = || Error::Parse(format!("triplet line {}: '{t}'", ln + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        out.push((
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

pub fn write_vector<W: Write>(v: &[f64], mut w: W) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        writeln!(w, "{i} {x:e}")?;
    }
    Ok(())
}

/// Column-sum bound of `Psi` and the uniform-weight decay for a homogeneous template.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TemplateBound {
    pub column_sum: f64,
    pub lambda_inf: f64,
}

pub fn template_bound(template: &NetworkTemplate, cert: &LocalCertificate) -> TemplateBound {
    let g = cert.rho_int * template.max_in_degree() as f64 / cert.alpha;
    let fan = template.union_offsets().len() as f64;
    TemplateBound {
        column_sum: g * fan / cert.lambda,
        lambda_inf: cert.lambda - g * fan,
    }
}

/// Constants of the network-level simulation function and output envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateCertificate {
    pub mu: Vec<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub lambda_inf: f64,
    /// `mu_min * alpha_min`.
    pub alpha: f64,
    /// `mu_max * max rho_ext`.
    pub rho_ext: f64,
    /// Supply coefficient for boundary-channel mismatch.
    pub rho_boundary: f64,
    pub eps_tilde: f64,
    pub theta: f64,
    pub beta: f64,
    /// `gamma_ext(t) = gamma_ext_coeff * t`.
    pub gamma_ext_coeff: f64,
    pub gamma_boundary_coeff: f64,
}

impl AggregateCertificate {
    pub fn new(op: &GainOperator, mu: &MuCertificate, eps_tilde: Option<f64>) -> Result<Self> {
        let lam = mu.lambda_inf;
        if !(lam > 0.0) {
            return Err(Error::SmallGainInfeasible {
                index: mu.worst_index,
                slack: lam,
            });
        }
        let eps = eps_tilde.unwrap_or(lam / 2.0);
        if !(eps > 0.0 && eps < lam) {
            return Err(Error::InvalidParameter(format!(
                "eps_tilde must lie in (0, {lam}), got {eps}"
            )));
        }
        let mu_min = mu.mu.iter().copied().fold(f64::INFINITY, f64::min);
        let mu_max = mu.mu.iter().copied().fold(0.0, f64::max);
        let alpha_min = op
            .nodes
            .iter()
            .map(|g| g.alpha)
            .fold(f64::INFINITY, f64::min);
        let rho_ext = mu_max * op.nodes.iter().map(|g| g.rho_ext).fold(0.0, f64::max);
        let rho_boundary = mu_max
            * op.nodes
                .iter()
                .filter(|g| g.boundary_inputs > 0)
                .map(|g| g.rho_int)
                .fold(0.0, f64::max);
        let alpha = mu_min * alpha_min;
        let k = 2.0 * (1.0 - eps) / (alpha * (lam - eps));
        Ok(Self {
            mu: mu.mu.clone(),
            mu_min,
            mu_max,
            lambda_inf: lam,
            alpha,
            rho_ext,
            rho_boundary,
            eps_tilde: eps,
            theta: (2.0 / alpha).sqrt(),
            beta: (1.0 - eps).sqrt(),
            gamma_ext_coeff: (k * rho_ext).sqrt(),
            gamma_boundary_coeff: (k * rho_boundary).sqrt(),
        })
    }

    /// `theta beta^k sqrt(V0) + gamma_ext(sup |uh|) + gamma_b(sup |boundary mismatch|)`.
    pub fn envelope(&self, k: usize, v0: f64, sup_uh: f64, sup_boundary: f64) -> f64 {
        self.theta * self.beta.powi(k as i32) * v0.max(0.0).sqrt()
            + self.gamma_ext_coeff * sup_uh
            + self.gamma_boundary_coeff * sup_boundary
    }
}
