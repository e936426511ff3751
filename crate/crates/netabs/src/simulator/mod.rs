//! Closed-loop simulation of a concrete network driven through its abstraction.
//!
//! Each node carries the concrete state `x`, the abstract state `xh` and a
//! feedforward state `x_d` that absorbs the exogenous input:
//! `x_d+ = (A + B K) x_d + D w_d + H d`. The concrete input is always the
//! interface map applied to `(x, xh, uh, wh)`, and the reported error is
//! `y - y_d - yh` on the external output blocks. With `d = 0` and `x_d(0) = 0`
//! the feedforward state stays at zero.

mod policies;
mod sink;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::AbstractionBundle;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{Network, Source};
use crate::smallgain::AggregateCertificate;

pub use policies::{
    boundary_policy_registry, input_policy_registry, BoundaryPolicy, ConstantBoundary,
    ConstantExogenous, ConstantInput, ExogenousSignal, Feedback, InputPolicy, PolicyParams,
    Sinusoid, TraceBoundary, TraceInput, ZeroBoundary, ZeroInput,
};
pub use sink::{
    read_binary, BinaryRecord, BinarySink, CsvSink, MemorySink, NullSink, Record, Signal,
    TrajectorySink, BINARY_MAGIC,
};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Vec<Vector>,
    pub x_hat: Vec<Vector>,
    pub x_d: Vec<Vector>,
}

impl NetworkState {
    /// Zero feedforward state.
    pub fn new(net: &Network, x: Vec<Vector>, x_hat: Vec<Vector>) -> Self {
        let x_d = (0..net.len())
            .map(|i| Vector::zeros(net.kind_of(i).state_dim()))
            .collect();
        Self { x, x_hat, x_d }
    }

    /// Seeded start: `xh ~ N(0, scale^2)` per node, and `x = P xh` plus an independent
    /// `N(0, scale^2)` offset unless `kind` is `Matched`.
    pub fn sampled(
        net: &Network,
        bundle: &AbstractionBundle,
        kind: InitialKind,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if bundle.kinds.len() != net.kinds.len() {
            return Err(Error::dims(
                "certified kinds",
                net.kinds.len(),
                bundle.kinds.len(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vector {
            Vector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
        };
        let mut x = Vec::with_capacity(net.len());
        let mut x_hat = Vec::with_capacity(net.len());
        for i in 0..net.len() {
            let mb = &bundle.kinds[net.nodes[i].kind].modes[net.mode_at(i, 0)?];
            let n = net.kind_of(i).state_dim();
            let (xi, xhi) = match kind {
                InitialKind::Zero => (Vector::zeros(n), Vector::zeros(mb.abstract_dim())),
                InitialKind::Matched => {
                    let xh = draw(mb.abstract_dim());
                    (&mb.p * &xh, xh)
                }
                InitialKind::Random => {
                    let xh = draw(mb.abstract_dim());
                    (&mb.p * &xh + draw(n), xh)
                }
            };
            x.push(xi);
            x_hat.push(xhi);
        }
        Ok(Self::new(net, x, x_hat))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    Matched,
    Random,
}

pub struct Simulation<'a> {
    pub network: &'a Network,
    pub bundle: &'a AbstractionBundle,
    pub input: &'a dyn InputPolicy,
    pub boundary: &'a dyn BoundaryPolicy,
    pub exogenous: Option<&'a dyn ExogenousSignal>,
    /// Weights used to evaluate the aggregate simulation function along the run.
    pub weights: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    /// `|y - y_d - yh|` for `k = 0..=horizon`.
    pub error_norms: Vec<f64>,
    /// `|uh(k)|` for `k = 0..horizon`.
    pub abstract_input_norms: Vec<f64>,
    /// Boundary mismatch `sqrt(sum_i sum_b |x~_b - x~h_b|^2)` for `k = 0..horizon`.
    pub boundary_mismatch: Vec<f64>,
    /// Aggregate simulation function for `k = 0..=horizon` when weights were given.
    pub lyapunov: Option<Vec<f64>>,
    /// Mean external output across nodes, `k = 0..=horizon`.
    pub mean_output: Vec<Vec<f64>>,
    #[serde(skip)]
    pub final_state: Option<NetworkState>,
}

struct NodeOutputs {
    y: Vector,
    y_hat: Vector,
    y_d: Vector,
}

struct NodeStep {
    x: Vector,
    x_hat: Vector,
    x_d: Vector,
    u: Vector,
    u_hat: Vector,
    boundary_sq: f64,
}

impl<'a> Simulation<'a> {
    fn check(&self, init: &NetworkState, horizon: usize) -> Result<()> {
        let net = self.network;
        if self.bundle.kinds.len() != net.kinds.len() {
            return Err(Error::dims(
                "certified kinds",
                net.kinds.len(),
                self.bundle.kinds.len(),
            ));
        }
        net.validate_horizon(horizon + 1)?;
        for (name, parts) in [("x", &init.x), ("x_hat", &init.x_hat), ("x_d", &init.x_d)] {
            if parts.len() != net.len() {
                return Err(Error::dims(
                    format!("initial {name} blocks"),
                    net.len(),
                    parts.len(),
                ));
            }
        }
        for i in 0..net.len() {
            let kind = net.kind_of(i);
            let kb = &self.bundle.kinds[net.nodes[i].kind];
            if kb.modes.len() != kind.num_modes() {
                return Err(Error::dims(
                    format!("subsystem {i}: certified modes"),
                    kind.num_modes(),
                    kb.modes.len(),
                ));
            }
            let nh = kb.modes[0].abstract_dim();
            if init.x[i].len() != kind.state_dim() || init.x_d[i].len() != kind.state_dim() {
                return Err(Error::dims(
                    format!("subsystem {i}: initial state"),
                    kind.state_dim(),
                    init.x[i].len(),
                ));
            }
            if init.x_hat[i].len() != nh {
                return Err(Error::dims(
                    format!("subsystem {i}: initial abstract state"),
                    nh,
                    init.x_hat[i].len(),
                ));
            }
        }
        if let Some(w) = self.weights {
            if w.len() != net.len() {
                return Err(Error::dims("weights", net.len(), w.len()));
            }
        }
        Ok(())
    }

    fn lyapunov(&self, st: &NetworkState, modes: &[usize]) -> Option<f64> {
        let w = self.weights?;
        let net = self.network;
        Some(
            (0..net.len())
                .map(|i| {
                    let mb = &self.bundle.kinds[net.nodes[i].kind].modes[modes[i]];
                    let e = &st.x[i] - &st.x_d[i] - &mb.p * &st.x_hat[i];
                    w[i] * e.dot(&(&mb.m * &e))
                })
                .sum(),
        )
    }

    fn outputs(&self, st: &NetworkState, modes: &[usize]) -> Vec<NodeOutputs> {
        let net = self.network;
        (0..net.len())
            .into_par_iter()
            .map(|i| {
                let mm = net.kind_of(i).mode(modes[i]);
                let mb = &self.bundle.kinds[net.nodes[i].kind].modes[modes[i]];
                NodeOutputs {
                    y: &mm.c * &st.x[i],
                    y_hat: &mb.c_hat * &st.x_hat[i],
                    y_d: &mm.c * &st.x_d[i],
                }
            })
            .collect()
    }

    /// External error norm and mean external output.
    fn measure(&self, outs: &[NodeOutputs]) -> (f64, Vec<f64>) {
        let net = self.network;
        let mut err = 0.0;
        let mut mean: Vec<f64> = Vec::new();
        let mut uniform = true;
        for (i, o) in outs.iter().enumerate() {
            let rows = net.nodes[i].partition.external_rows(o.y.len());
            for &r in &rows {
                let e = o.y[r] - o.y_d[r] - o.y_hat[r];
                err += e * e;
            }
            if i == 0 {
                mean = rows.iter().map(|&r| o.y[r]).collect();
            } else if uniform && rows.len() == mean.len() {
                for (m, &r) in mean.iter_mut().zip(&rows) {
                    *m += o.y[r];
                }
            } else {
                uniform = false;
            }
        }
        if !uniform {
            mean.clear();
        }
        let n = outs.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        (err.sqrt(), mean)
    }

    fn gather(
        &self,
        i: usize,
        s: usize,
        k: usize,
        outs: &[NodeOutputs],
    ) -> Result<(Vector, Vector, Vector, f64)> {
        let net = self.network;
        let width = net.kind_of(i).mode(s).d.ncols();
        let mut w = Vector::zeros(width);
        let mut wh = Vector::zeros(width);
        let mut wd = Vector::zeros(width);
        let mut boundary_sq = 0.0;
        let mut off = 0;
        for &src in &net.nodes[i].in_neighbors[s] {
            match src {
                Source::Node(j) => {
                    let q = outs[j].y.len();
                    let rows = net.nodes[j].partition.rows_for(i, q).unwrap_or_default();
                    for (c, &r) in rows.iter().enumerate() {
                        w[off + c] = outs[j].y[r];
                        wh[off + c] = outs[j].y_hat[r];
                        wd[off + c] = outs[j].y_d[r];
                    }
                    off += rows.len();
                }
                Source::Boundary(b) => {
                    let bw = net.boundary[b].width;
                    let (v, vh) = self.boundary.values(k, b, bw)?;
                    boundary_sq += (&v - &vh).norm_squared();
                    w.rows_mut(off, bw).copy_from(&v);
                    wh.rows_mut(off, bw).copy_from(&vh);
                    off += bw;
                }
            }
        }
        Ok((w, wh, wd, boundary_sq))
    }

    pub fn run(
        &self,
        init: &NetworkState,
        horizon: usize,
        sink: &mut dyn TrajectorySink,
    ) -> Result<SimulationResult> {
        self.check(init, horizon)?;
        let net = self.network;
        let n = net.len();
        let mut st = init.clone();
        let mut result = SimulationResult {
            error_norms: Vec::with_capacity(horizon + 1),
            abstract_input_norms: Vec::with_capacity(horizon),
            boundary_mismatch: Vec::with_capacity(horizon),
            lyapunov: self.weights.map(|_| Vec::with_capacity(horizon + 1)),
            mean_output: Vec::with_capacity(horizon + 1),
            final_state: None,
        };
        for k in 0..=horizon {
            let modes = (0..n)
                .map(|i| net.mode_at(i, k))
                .collect::<Result<Vec<_>>>()?;
            let outs = self.outputs(&st, &modes);
            let (err, mean) = self.measure(&outs);
            result.error_norms.push(err);
            result.mean_output.push(mean);
            if let (Some(v), Some(series)) = (self.lyapunov(&st, &modes), result.lyapunov.as_mut())
            {
                series.push(v);
            }
            if sink.wants_nodes() {
                for i in 0..n {
                    sink.record(k, i, Signal::State, st.x[i].as_slice())?;
                    sink.record(k, i, Signal::AbstractState, st.x_hat[i].as_slice())?;
                    sink.record(k, i, Signal::Output, outs[i].y.as_slice())?;
                    sink.record(k, i, Signal::AbstractOutput, outs[i].y_hat.as_slice())?;
                }
            }
            if k == horizon {
                break;
            }
            let steps = (0..n)
                .into_par_iter()
                .map(|i| {
                    let s = modes[i];
                    let mm = net.kind_of(i).mode(s);
                    let mb = &self.bundle.kinds[net.nodes[i].kind].modes[s];
                    let (w, wh, wd, boundary_sq) = self.gather(i, s, k, &outs)?;
                    let u_hat = self.input.input(k, i, &st.x_hat[i], mb)?;
                    if u_hat.len() != mb.b_hat.ncols() {
                        return Err(Error::dims(
                            format!("subsystem {i}: abstract input"),
                            mb.b_hat.ncols(),
                            u_hat.len(),
                        ));
                    }
                    let u = mb.interface(&st.x[i], &st.x_hat[i], &u_hat, &wh);
                    let mut x = &mm.a * &st.x[i] + &mm.b * &u;
                    let mut x_d = (&mm.a + &mm.b * &mb.k) * &st.x_d[i];
                    if !w.is_empty() {
                        x += &mm.d * &w;
                        x_d += &mm.d * &wd;
                    }
                    if let (Some(h), Some(ex)) = (&mm.h, self.exogenous) {
                        let d = ex.value(k, i);
                        if d.len() != h.ncols() {
                            return Err(Error::dims(
                                format!("subsystem {i}: exogenous input"),
                                h.ncols(),
                                d.len(),
                            ));
                        }
                        let hd = h * d;
                        x += &hd;
                        x_d += &hd;
                    }
                    let mut x_hat = &mb.a_hat * &st.x_hat[i] + &mb.b_hat * &u_hat;
                    if !wh.is_empty() {
                        x_hat += &mb.d_hat * &wh;
                    }
                    Ok(NodeStep {
                        x,
                        x_hat,
                        x_d,
                        u,
                        u_hat,
                        boundary_sq,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut uh_sq = 0.0;
            let mut b_sq = 0.0;
            for (i, step) in steps.into_iter().enumerate() {
                uh_sq += step.u_hat.norm_squared();
                b_sq += step.boundary_sq;
                if sink.wants_nodes() {
                    sink.record(k, i, Signal::Input, step.u.as_slice())?;
                    sink.record(k, i, Signal::AbstractInput, step.u_hat.as_slice())?;
                }
                st.x[i] = step.x;
                st.x_hat[i] = step.x_hat;
                st.x_d[i] = step.x_d;
            }
            result.abstract_input_norms.push(uh_sq.sqrt());
            result.boundary_mismatch.push(b_sq.sqrt());
        }
        sink.finish()?;
        result.final_state = Some(st);
        Ok(result)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub holds: bool,
    /// Largest `e(k) / bound(k)`.
    pub worst_ratio: f64,
    pub worst_step: usize,
    pub first_violation: Option<usize>,
    pub violations: usize,
}

/// Compares `e(k)` with `theta beta^k sqrt(V0) + gamma_ext(sup_{j<k} |uh(j)|) + boundary term`.
pub fn check_envelope(
    result: &SimulationResult,
    agg: &AggregateCertificate,
    v0: f64,
) -> EnvelopeReport {
    let mut sup_u: f64 = 0.0;
    let mut sup_b: f64 = 0.0;
    let mut report = EnvelopeReport {
        holds: true,
        worst_ratio: 0.0,
        worst_step: 0,
        first_violation: None,
        violations: 0,
    };
    for (k, &e) in result.error_norms.iter().enumerate() {
        if k > 0 {
            sup_u = sup_u.max(result.abstract_input_norms[k - 1]);
            sup_b = sup_b.max(result.boundary_mismatch[k - 1]);
        }
        let bound = agg.envelope(k, v0, sup_u, sup_b);
        let ratio = if bound > 0.0 {
            e / bound
        } else if e > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_step = k;
        }
        if e > bound * (1.0 + 1e-9) + 1e-12 {
            report.holds = false;
            report.violations += 1;
            report.first_violation.get_or_insert(k);
        }
    }
    report
}
