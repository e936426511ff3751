//! Islanded AC microgrid of distributed generation units (DGUs) on a ring.
//!
//! DGU state: `(V_d, V_q, I_td, I_tq, nu_d, nu_q)`, output `(V_d, V_q)`, exogenous input
//! `(I_Ld, I_Lq, ref_d, ref_q)`. Each mode has its own line to the neighbor feeding it.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::AbstractionBundle;
use crate::certify::LocalCertificate;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{
    Design, KindDesign, ModeDesign, ModeMatrices, Network, NetworkTemplate, SwitchedSubsystem,
    SwitchingSignal, Wrap,
};
use crate::pipeline::{certify_network, PipelineParams};
use crate::simulator::{
    check_envelope, ConstantExogenous, EnvelopeReport, Feedback, NetworkState, Simulation,
    TrajectorySink, ZeroBoundary,
};
use crate::smallgain::{
    mu_registry, spectral_registry, template_bound, AggregateCertificate, GainOperator, MuOptions,
    SpectralOptions, TemplateBound,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub r: f64,
    pub l: f64,
}

/// Electrical parameters of one DGU and of the line used in each mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DguParams {
    pub r_t: f64,
    pub l_t: f64,
    pub c_t: f64,
    /// Transformer ratio.
    pub k: f64,
    pub f0: f64,
    pub t_s: f64,
    pub lines: Vec<LineParams>,
}

/// Line admittance terms for one line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineCoefficients {
    pub x: f64,
    pub z2: f64,
    /// `R / Z^2`
    pub a: f64,
    /// `X / Z^2`
    pub b: f64,
}

impl DguParams {
    pub fn standard() -> Self {
        Self {
            r_t: 1.5e-3,
            l_t: 300e-6,
            c_t: 460e-6,
            k: 1.0,
            f0: 60.0,
            t_s: 1e-4,
            lines: vec![
                LineParams { r: 1e-3, l: 10e-3 },
                LineParams { r: 1.2e-3, l: 8e-3 },
            ],
        }
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("r_t", self.r_t),
            ("l_t", self.l_t),
            ("c_t", self.c_t),
            ("k", self.k),
            ("f0", self.f0),
            ("t_s", self.t_s),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "DGU parameter {name} must be positive, got {v}"
                )));
            }
        }
        if self.lines.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one line (mode) is required".into(),
            ));
        }
        for (s, l) in self.lines.iter().enumerate() {
            if !(l.r > 0.0 && l.l > 0.0 && l.r.is_finite() && l.l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "line of mode {s} needs positive R and L"
                )));
            }
        }
        Ok(())
    }

    pub fn line_coefficients(&self, line: &LineParams) -> LineCoefficients {
        let x = self.omega0() * line.l;
        let z2 = line.r * line.r + x * x;
        LineCoefficients {
            x,
            z2,
            a: line.r / z2,
            b: x / z2,
        }
    }
}

/// One DGU mode fed through `lines` (one block of `w` per line).
pub fn dgu_mode(p: &DguParams, lines: &[LineParams]) -> ModeMatrices {
    let ts = p.t_s;
    let w0 = p.omega0();
    let g = ts / p.c_t;
    let (sa, sb) = lines.iter().fold((0.0, 0.0), |(sa, sb), l| {
        let c = p.line_coefficients(l);
        (sa + c.a, sb + c.b)
    });
    let mut a = Mat::identity(6, 6);
    a[(0, 0)] -= g * sa;
    a[(0, 1)] = ts * w0 - g * sb;
    a[(0, 2)] = ts * p.k / p.c_t;
    a[(1, 0)] = -ts * w0 + g * sb;
    a[(1, 1)] -= g * sa;
    a[(1, 3)] = ts * p.k / p.c_t;
    a[(2, 0)] = -ts * p.k / p.l_t;
    a[(2, 2)] -= ts * p.r_t / p.l_t;
    a[(2, 3)] = ts * w0;
    a[(3, 1)] = -ts * p.k / p.l_t;
    a[(3, 2)] = -ts * w0;
    a[(3, 3)] -= ts * p.r_t / p.l_t;
    a[(4, 0)] = -ts;
    a[(5, 1)] = -ts;

    let mut d = Mat::zeros(6, 2 * lines.len());
    for (j, l) in lines.iter().enumerate() {
        let c = p.line_coefficients(l);
        d[(0, 2 * j)] = g * c.a;
        d[(0, 2 * j + 1)] = g * c.b;
        d[(1, 2 * j)] = -g * c.b;
        d[(1, 2 * j + 1)] = g * c.a;
    }
    let mut b = Mat::zeros(6, 2);
    b[(2, 0)] = ts / p.l_t;
    b[(3, 1)] = ts / p.l_t;
    let mut c = Mat::zeros(2, 6);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = 1.0;
    // Load currents enter without t_s, references through the integrators.
    let mut h = Mat::zeros(6, 4);
    h[(0, 0)] = -1.0 / p.c_t;
    h[(1, 1)] = -1.0 / p.c_t;
    h[(4, 2)] = ts;
    h[(5, 3)] = ts;
    ModeMatrices::new(a, b, c, d).with_exogenous(h)
}

/// Switched DGU with one in-neighbor per mode, through `params.lines[s]`.
pub fn build_dgu(params: &DguParams) -> Result<SwitchedSubsystem> {
    params.validate()?;
    SwitchedSubsystem::new(
        params
            .lines
            .iter()
            .map(|l| dgu_mode(params, std::slice::from_ref(l)))
            .collect(),
    )
}

/// Voltage and integrator states kept by the abstraction.
pub const ABSTRACT_STATES: [usize; 4] = [0, 1, 4, 5];

/// `P = [e1 e2 e5 e6]`, `D_hat = D[sel]`, `B_hat = I`; used for every mode.
pub fn dgu_design(kind: &SwitchedSubsystem) -> KindDesign {
    let mut p = Mat::zeros(6, 4);
    for (c, &r) in ABSTRACT_STATES.iter().enumerate() {
        p[(r, c)] = 1.0;
    }
    KindDesign {
        modes: kind
            .modes()
            .iter()
            .map(|m| ModeDesign {
                p: Some(p.clone()),
                d_hat: Some(m.d.select_rows(&ABSTRACT_STATES)),
                b_hat: Some(Mat::identity(4, 4)),
                ..ModeDesign::default()
            })
            .collect(),
    }
}

/// Three-dimensional projection onto `V_d + V_q`-type coordinates with its closed-form `Q`
/// and `D_hat`. Only used as a comparison point; it does not satisfy `A P = P A_hat - B Q`.
pub struct ProjectionCandidate {
    pub p: Mat,
    pub q: Mat,
    pub d_hat: Mat,
}

pub fn rotated_projection(params: &DguParams, s: usize) -> ProjectionCandidate {
    let c = params.line_coefficients(&params.lines[s]);
    let (a, b) = (c.a, c.b);
    let f = 1.0 / (2.0 * params.c_t);
    let pt = Mat::from_row_slice(
        3,
        6,
        &[
            0., 0., 0., 0., 1., 1., b, a, 0., 0., 0., 0., a, -b, 0., 0., -1., -1.,
        ],
    );
    let g = params.t_s * params.k / (2.0 * params.c_t);
    ProjectionCandidate {
        p: pt.transpose() * f,
        q: Mat::from_row_slice(2, 3, &[0., -b, -a, 0., -a, b]) * g,
        d_hat: Mat::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 0.]) * params.t_s,
    }
}

/// Ring template: mode 0 is fed by `i - 1`, mode 1 by `i + 1`.
pub fn ring_template(params: &DguParams, switch_period: usize) -> Result<NetworkTemplate> {
    if params.lines.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "ring topology needs 2 modes, got {}",
            params.lines.len()
        )));
    }
    if switch_period == 0 {
        return Err(Error::InvalidParameter(
            "switch period must be positive".into(),
        ));
    }
    NetworkTemplate::new(
        build_dgu(params)?,
        vec![vec![-1], vec![1]],
        SwitchingSignal::alternating(switch_period),
    )
}

pub fn circular_topology(
    params: &DguParams,
    n: usize,
    switch_period: usize,
    wrap: Wrap,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a circular microgrid needs at least 2 units, got {n}"
        )));
    }
    ring_template(params, switch_period)?.instantiate(n, wrap)
}

/// Named scenario settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MicrogridPreset {
    pub name: String,
    pub dgu: DguParams,
    pub kappa: f64,
    pub epsilon: f64,
    pub switch_period: usize,
    /// Voltage reference `(d, q)` in per unit.
    pub reference: [f64; 2],
    pub load: [f64; 2],
    pub x_hat0: [f64; 4],
    /// Template offset `x(0) - P x_hat(0)`, jittered per unit.
    pub mismatch: [f64; 6],
    pub jitter: f64,
    /// `K_hat = A_hat - shift I`.
    pub k_hat_shift: f64,
}

impl Default for MicrogridPreset {
    fn default() -> Self {
        Self {
            name: "paper".into(),
            dgu: DguParams::standard(),
            kappa: 0.5,
            epsilon: 1.0,
            switch_period: 4,
            reference: [0.8, 0.2],
            load: [0.0, 0.0],
            x_hat0: [0.2, 0.1, 0.0, 0.0],
            mismatch: [0.3, -0.2, 0.1, 0.05, 1e-4, -1e-4],
            jitter: 0.02,
            k_hat_shift: 0.7,
        }
    }
}

pub const PRESET_NAMES: [&str; 2] = ["paper", "weak"];

/// `paper`: standard DGU and lines. `weak`: line inductances five times larger.
pub fn preset(name: &str) -> Result<MicrogridPreset> {
    let mut p = MicrogridPreset::default();
    match name {
        "paper" => {}
        "weak" => {
            p.name = "weak".into();
            p.dgu.lines.iter_mut().for_each(|l| l.l *= 5.0);
        }
        _ => {
            return Err(Error::UnknownStrategy {
                kind: "microgrid preset",
                name: name.to_string(),
                available: PRESET_NAMES.join(", "),
            })
        }
    }
    Ok(p)
}

impl MicrogridPreset {
    pub fn pipeline_params(&self, base: &PipelineParams) -> PipelineParams {
        let mut p = base.clone();
        p.certify.kappa = self.kappa;
        p.certify.epsilon = self.epsilon;
        p
    }

    pub fn exogenous(&self) -> Vector {
        Vector::from_column_slice(&[
            self.load[0],
            self.load[1],
            self.reference[0],
            self.reference[1],
        ])
    }
}

/// Certifies the DGU kind of `net` and sets `K_hat = A_hat - shift I` in every mode.
pub fn certify_microgrid(
    net: &Network,
    preset: &MicrogridPreset,
    params: &PipelineParams,
) -> Result<AbstractionBundle> {
    let design = Design {
        kinds: net.kinds.iter().map(|k| dgu_design(k)).collect(),
    };
    let mut bundle = certify_network(net, &design, &preset.pipeline_params(params))?;
    for kb in &mut bundle.kinds {
        for mb in &mut kb.modes {
            let nh = mb.a_hat.nrows();
            mb.k_hat = Some(&mb.a_hat - Mat::identity(nh, nh) * preset.k_hat_shift);
        }
    }
    Ok(bundle)
}

/// Seeded initial state; node `i` draws the same jitter whatever the network size.
pub fn initial_state(
    net: &Network,
    bundle: &AbstractionBundle,
    preset: &MicrogridPreset,
    seed: u64,
) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xh0 = Vector::from_column_slice(&preset.x_hat0);
    let (x, x_hat) = (0..net.len())
        .map(|i| {
            let p = &bundle.kinds[net.nodes[i].kind].modes[0].p;
            let off = Vector::from_fn(6, |r, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                preset.mismatch[r] * (1.0 + preset.jitter * z)
            });
            (p * &xh0 + off, xh0.clone())
        })
        .unzip();
    NetworkState::new(net, x, x_hat)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub preset: MicrogridPreset,
    pub size: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Closed ring, or the open truncation with boundary channels.
    pub open: bool,
    pub mu_method: String,
    pub spectral_method: String,
    /// Steps excluded from the monotone-decay check; `None` means two switching periods.
    pub burn_in: Option<usize>,
    pub pipeline: PipelineParams,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        Self {
            preset: MicrogridPreset::default(),
            size: 100,
            horizon: 300,
            seed: 1,
            open: false,
            mu_method: "uniform".into(),
            spectral_method: "power_iteration".into(),
            burn_in: None,
            pipeline: PipelineParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStudyReport {
    pub preset: String,
    pub size: usize,
    pub horizon: usize,
    pub certificate: LocalCertificate,
    pub template: TemplateBound,
    pub radius_upper: f64,
    pub radius_lower: Option<f64>,
    /// Decay of the weighted sum, negative when small-gain fails.
    pub lambda_inf: f64,
    pub feasible: bool,
    pub aggregate: Option<AggregateCertificate>,
    pub envelope: Option<EnvelopeReport>,
    pub error_norms: Vec<f64>,
    /// `e(k) / e(0)`.
    pub normalized_error: Vec<f64>,
    pub burn_in: usize,
    /// First step `k >= burn_in` where `e` rises, ignoring values below `1e-12`.
    pub first_increase: Option<usize>,
    pub abstract_input_norms: Vec<f64>,
    /// Mean `(V_d, V_q)` over units.
    pub mean_output: Vec<Vec<f64>>,
}

/// Certify, aggregate and simulate the ring.
pub fn run_case_study(
    cfg: &CaseStudyConfig,
    sink: &mut dyn TrajectorySink,
) -> Result<CaseStudyReport> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let pre = &cfg.preset;
    let wrap = if cfg.open { Wrap::Open } else { Wrap::Ring };
    let template = ring_template(&pre.dgu, pre.switch_period)?;
    if cfg.size < 2 {
        return Err(Error::InvalidParameter(format!(
            "a circular microgrid needs at least 2 units, got {}",
            cfg.size
        )));
    }
    let net = template.instantiate(cfg.size, wrap)?;
    let bundle = certify_microgrid(&net, pre, &cfg.pipeline)?;
    let certificate = bundle.kinds[0].certificate.clone();
    let op = GainOperator::from_network(&net, &bundle)?;
    let spectral = spectral_registry();
    let est = spectral
        .get(&cfg.spectral_method)?
        .estimate(&op, &SpectralOptions::default())?;
    let (mu, aggregate, lambda_inf) = match mu_registry()
        .get(&cfg.mu_method)?
        .find(&op, &MuOptions::default())
    {
        Ok(m) => {
            let agg = AggregateCertificate::new(&op, &m, None)?;
            (m.mu.clone(), Some(agg), m.lambda_inf)
        }
        Err(Error::SmallGainInfeasible { .. }) => {
            let ones = vec![1.0; net.len()];
            let (l, _) = op.achieved_decay(&ones);
            (ones, None, l)
        }
        Err(e) => return Err(e),
    };

    let init = initial_state(&net, &bundle, pre, cfg.seed);
    let exo = ConstantExogenous(pre.exogenous());
    let sim = Simulation {
        network: &net,
        bundle: &bundle,
        input: &Feedback,
        boundary: &ZeroBoundary,
        exogenous: Some(&exo),
        weights: Some(&mu),
    };
    let res = sim.run(&init, cfg.horizon, sink)?;
    let envelope = aggregate.as_ref().map(|agg| {
        let v0 = res.lyapunov.as_ref().map_or(0.0, |v| v[0]);
        check_envelope(&res, agg, v0)
    });
    let e0 = res.error_norms[0];
    let normalized_error: Vec<f64> = res
        .error_norms
        .iter()
        .map(|e| if e0 > 0.0 { e / e0 } else { *e })
        .collect();
    let burn_in = cfg.burn_in.unwrap_or(2 * pre.switch_period);
    let first_increase = first_increase(&normalized_error, burn_in);
    Ok(CaseStudyReport {
        preset: pre.name.clone(),
        size: cfg.size,
        horizon: cfg.horizon,
        template: template_bound(&template, &certificate),
        certificate,
        radius_upper: est.upper,
        radius_lower: est.lower,
        lambda_inf,
        feasible: aggregate.is_some(),
        aggregate,
        envelope,
        error_norms: res.error_norms,
        normalized_error,
        burn_in,
        first_increase,
        abstract_input_norms: res.abstract_input_norms,
        mean_output: res.mean_output,
    })
}

fn first_increase(e: &[f64], burn_in: usize) -> Option<usize> {
    (burn_in..e.len().saturating_sub(1))
        .take_while(|&k| e[k] >= 1e-12)
        .find(|&k| e[k + 1] > e[k])
}
