//! Certification of every subsystem kind of a network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{
    compute_interface_gain_r, identity_abstraction, solve_interconnection_conditions,
    split_internal_input,
};
use crate::bundle::{AbstractionBundle, KindBundle, ModeBundle};
use crate::certify::{
    compute_gain_scalars, compute_tau, cond22_margins, default_delta, normalize_alpha,
    solve_lyapunov_certificate, verify_cond22, verify_local_dissipation_sampled, CertifyParams,
    Cond22Margins, DissipationReport, GainInputs, LocalCertificate,
};
use crate::error::{Error, Result};
use crate::linalg::{frobenius, spectral_norm, Mat};
use crate::model::{Design, KindDesign, Network, SwitchedSubsystem};
use crate::synthesis::{gain_registry, SynthesisRequest};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    #[serde(flatten)]
    pub certify: CertifyParams,
    /// Registered gain-synthesis strategy used when a mode has no explicit `K`.
    pub synthesis: String,
    pub r_weight: f64,
    pub poles: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            certify: CertifyParams::default(),
            synthesis: "lqr".into(),
            r_weight: 1e-6,
            poles: None,
            seed: 0,
        }
    }
}

/// Builds the abstraction and local certificate for one kind.
pub fn certify_kind(
    kind: &SwitchedSubsystem,
    design: Option<&KindDesign>,
    params: &PipelineParams,
) -> Result<KindBundle> {
    params.certify.validate()?;
    let registry = gain_registry();
    let synth = registry.get(&params.synthesis)?;
    let mut gains = Vec::with_capacity(kind.num_modes());
    let mut ms = Vec::with_capacity(kind.num_modes());
    for (s, mode) in kind.modes().iter().enumerate() {
        let md = design.and_then(|d| d.modes.get(s));
        let k = match md.and_then(|d| d.k.clone()) {
            Some(k) => k,
            None => {
                let req = SynthesisRequest {
                    decay: params.certify.decay_bound(),
                    delta: params
                        .certify
                        .delta
                        .unwrap_or_else(|| default_delta(&mode.c)),
                    r_weight: params.r_weight,
                    poles: params.poles.clone(),
                    seed: params.seed.wrapping_add(s as u64),
                };
                synth.synthesize(mode, &req).map_err(|e| match e {
                    crate::Error::NotSchurStable { radius, bound, .. } => {
                        crate::Error::NotSchurStable {
                            mode: s,
                            radius,
                            bound,
                        }
                    }
                    other => other,
                })?
            }
        };
        ms.push(solve_lyapunov_certificate(mode, &k, s, &params.certify)?);
        gains.push(k);
    }
    if params.certify.normalize {
        let cs: Vec<&Mat> = kind.modes().iter().map(|m| &m.c).collect();
        normalize_alpha(&mut ms, &cs)?;
    }

    let mut modes = Vec::with_capacity(kind.num_modes());
    let mut margins = Vec::with_capacity(kind.num_modes());
    for (s, ((mode, k), m)) in kind.modes().iter().zip(gains).zip(ms).enumerate() {
        let md = design.and_then(|d| d.modes.get(s));
        margins.push(verify_cond22(mode, &m, &k, s, &params.certify)?);

        let (p, ic, d_hat) = match md.and_then(|d| d.p.clone()) {
            None => {
                let (p, ic) = identity_abstraction(mode);
                (p, ic, mode.d.clone())
            }
            Some(p) => {
                let d_hat = match md.and_then(|d| d.d_hat.clone()) {
                    Some(dh) => dh,
                    None => split_internal_input(mode, &p, s)?.0,
                };
                let ic = solve_interconnection_conditions(mode, &p, &d_hat, s)?;
                (p, ic, d_hat)
            }
        };
        let nh = p.ncols();
        let b_hat = md
            .and_then(|d| d.b_hat.clone())
            .unwrap_or_else(|| Mat::identity(nh, nh));
        let r = compute_interface_gain_r(&mode.b, &m, &p, &b_hat)?;
        modes.push(ModeBundle {
            k,
            m,
            p,
            q: ic.q,
            r,
            t: ic.t,
            a_hat: ic.a_hat,
            b_hat,
            c_hat: ic.c_hat,
            d_hat,
            k_hat: md.and_then(|d| d.k_hat.clone()),
        });
    }
    let ms: Vec<Mat> = modes.iter().map(|b| b.m.clone()).collect();
    let ps: Vec<Mat> = modes.iter().map(|b| b.p.clone()).collect();
    let tau = compute_tau(&ms, &ps)?;
    let inputs: Vec<GainInputs<'_>> = modes
        .iter()
        .zip(kind.modes())
        .map(|(b, mm)| GainInputs {
            m: &b.m,
            b: &mm.b,
            d: &mm.d,
            p: &b.p,
            b_hat: &b.b_hat,
            r: &b.r,
        })
        .collect();
    let g = compute_gain_scalars(
        tau.value,
        params.certify.kappa,
        params.certify.epsilon,
        &inputs,
    )?;
    let certificate = LocalCertificate {
        alpha: 1.0,
        kappa: params.certify.kappa,
        epsilon: params.certify.epsilon,
        tau: tau.value,
        tau_conservative: tau.conservative,
        lambda: g.lambda,
        rho_int: g.rho_int,
        rho_ext: g.rho_ext,
        margins,
    };
    Ok(KindBundle { certificate, modes })
}

/// Certifies all kinds in parallel.
pub fn certify_network(
    net: &Network,
    design: &Design,
    params: &PipelineParams,
) -> Result<AbstractionBundle> {
    let kinds = net
        .kinds
        .par_iter()
        .enumerate()
        .map(|(i, k)| certify_kind(k, design.kinds.get(i), params))
        .collect::<Result<Vec<_>>>()?;
    Ok(AbstractionBundle { kinds })
}

/// Re-check of one stored mode.
#[derive(Debug, Clone, Serialize)]
pub struct ModeCheck {
    pub mode: usize,
    pub margins: Cond22Margins,
    pub margin_tol: f64,
    /// `|A P - P Ah + B Q|`, `|D - P Dh + B T|`, `|C P - Ch|`.
    pub residuals: [f64; 3],
    pub residual_tol: [f64; 3],
}

impl ModeCheck {
    pub fn passed(&self) -> bool {
        self.margins.output >= -self.margin_tol
            && self.margins.decay >= -self.margin_tol
            && self
                .residuals
                .iter()
                .zip(&self.residual_tol)
                .all(|(r, t)| r <= t)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KindCheck {
    pub kind: usize,
    pub modes: Vec<ModeCheck>,
    pub tau_recomputed: f64,
    pub tau_stored: f64,
    pub dissipation: DissipationReport,
}

impl KindCheck {
    pub fn passed(&self) -> bool {
        self.modes.iter().all(ModeCheck::passed)
            && self.tau_recomputed <= self.tau_stored * (1.0 + 1e-9)
            && self.dissipation.passed()
    }
}

/// Independently re-verifies a stored bundle against the network matrices.
pub fn check_bundle(
    net: &Network,
    bundle: &AbstractionBundle,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<KindCheck>> {
    if bundle.kinds.len() != net.kinds.len() {
        return Err(Error::dims(
            "certified kinds",
            net.kinds.len(),
            bundle.kinds.len(),
        ));
    }
    net.kinds
        .par_iter()
        .zip(&bundle.kinds)
        .enumerate()
        .map(|(ki, (kind, kb))| {
            if kb.modes.len() != kind.num_modes() {
                return Err(Error::dims(
                    format!("kind {ki}: certified modes"),
                    kind.num_modes(),
                    kb.modes.len(),
                ));
            }
            let cert = &kb.certificate;
            let modes = kind
                .modes()
                .iter()
                .zip(&kb.modes)
                .enumerate()
                .map(|(s, (mm, mb))| {
                    let ap = &mm.a * &mb.p;
                    let cp = &mm.c * &mb.p;
                    ModeCheck {
                        mode: s,
                        margins: cond22_margins(mm, &mb.m, &mb.k, cert.kappa, cert.epsilon),
                        margin_tol: tol * spectral_norm(&mb.m).max(1.0),
                        residuals: [
                            frobenius(&(&ap - &mb.p * &mb.a_hat + &mm.b * &mb.q)),
                            frobenius(&(&mm.d - &mb.p * &mb.d_hat + &mm.b * &mb.t)),
                            frobenius(&(&cp - &mb.c_hat)),
                        ],
                        residual_tol: [
                            1e-8 * (1.0 + frobenius(&ap)),
                            1e-8 * (1.0 + frobenius(&mm.d)),
                            1e-8 * (1.0 + frobenius(&cp)),
                        ],
                    }
                })
                .collect();
            let ms: Vec<Mat> = kb.modes.iter().map(|b| b.m.clone()).collect();
            let ps: Vec<Mat> = kb.modes.iter().map(|b| b.p.clone()).collect();
            Ok(KindCheck {
                kind: ki,
                modes,
                tau_recomputed: compute_tau(&ms, &ps)?.value,
                tau_stored: cert.tau,
                dissipation: verify_local_dissipation_sampled(
                    kind,
                    kb,
                    samples,
                    seed.wrapping_add(ki as u64),
                    tol,
                ),
            })
        })
        .collect()
}
