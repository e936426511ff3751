//! Abstract input, boundary and exogenous signal policies.

use serde::{Deserialize, Serialize};

use crate::bundle::ModeBundle;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::registry::{Named, Registry};

/// Chooses the abstract input of node `node` at step `k`.
pub trait InputPolicy: Named + Send + Sync {
    fn input(&self, k: usize, node: usize, x_hat: &Vector, mode: &ModeBundle) -> Result<Vector>;
}

/// `uh = -Kh xh`.
pub struct Feedback;

impl Named for Feedback {
    fn name(&self) -> &'static str {
        "feedback"
    }
}

impl InputPolicy for Feedback {
    fn input(&self, _: usize, node: usize, x_hat: &Vector, mode: &ModeBundle) -> Result<Vector> {
        let kh = mode.k_hat.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "feedback policy needs an abstract gain K_hat (subsystem {node})"
            ))
        })?;
        Ok(-(kh * x_hat))
    }
}

pub struct ZeroInput;

impl Named for ZeroInput {
    fn name(&self) -> &'static str {
        "zero"
    }
}

impl InputPolicy for ZeroInput {
    fn input(&self, _: usize, _: usize, _: &Vector, mode: &ModeBundle) -> Result<Vector> {
        Ok(Vector::zeros(mode.b_hat.ncols()))
    }
}

/// Same constant vector for every node and step.
pub struct ConstantInput(pub Vec<f64>);

impl Named for ConstantInput {
    fn name(&self) -> &'static str {
        "constant"
    }
}

fn sized(v: &[f64], width: usize) -> Result<Vector> {
    if v.len() != width {
        return Err(Error::dims("policy value width", width, v.len()));
    }
    Ok(Vector::from_column_slice(v))
}

impl InputPolicy for ConstantInput {
    fn input(&self, _: usize, _: usize, _: &Vector, mode: &ModeBundle) -> Result<Vector> {
        sized(&self.0, mode.b_hat.ncols())
    }
}

/// `uh_i(k) = amplitude sin(omega k + i)` in every component.
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
}

impl Named for Sinusoid {
    fn name(&self) -> &'static str {
        "sinusoid"
    }
}

impl InputPolicy for Sinusoid {
    fn input(&self, k: usize, node: usize, _: &Vector, mode: &ModeBundle) -> Result<Vector> {
        let m = mode.b_hat.ncols();
        Ok(Vector::from_fn(m, |j, _| {
            self.amplitude * (self.omega * k as f64 + node as f64 + j as f64).sin()
        }))
    }
}

/// Replays one recorded vector per step (shared by all nodes), holding the last one.
pub struct TraceInput(pub Vec<Vec<f64>>);

impl Named for TraceInput {
    fn name(&self) -> &'static str {
        "trace"
    }
}

impl InputPolicy for TraceInput {
    fn input(&self, k: usize, _: usize, _: &Vector, mode: &ModeBundle) -> Result<Vector> {
        let row = self
            .0
            .get(k)
            .or(self.0.last())
            .ok_or_else(|| Error::InvalidParameter("empty input trace".into()))?;
        sized(row, mode.b_hat.ncols())
    }
}

/// Parameters for the parameterized policies.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub value: Vec<f64>,
    pub trace: Vec<Vec<f64>>,
    pub amplitude: f64,
    pub omega: f64,
}

pub fn input_policy_registry(p: &PolicyParams) -> Registry<dyn InputPolicy> {
    let mut reg: Registry<dyn InputPolicy> = Registry::new("abstract input policy");
    reg.register(Box::new(Feedback));
    reg.register(Box::new(ZeroInput));
    reg.register(Box::new(ConstantInput(p.value.clone())));
    reg.register(Box::new(Sinusoid {
        amplitude: p.amplitude,
        omega: p.omega,
    }));
    reg.register(Box::new(TraceInput(p.trace.clone())));
    reg
}

/// Signals on boundary channels: `(concrete, abstract)`.
pub trait BoundaryPolicy: Named + Send + Sync {
    fn values(&self, k: usize, channel: usize, width: usize) -> Result<(Vector, Vector)>;
}

pub struct ZeroBoundary;

impl Named for ZeroBoundary {
    fn name(&self) -> &'static str {
        "zero"
    }
}

impl BoundaryPolicy for ZeroBoundary {
    fn values(&self, _: usize, _: usize, width: usize) -> Result<(Vector, Vector)> {
        Ok((Vector::zeros(width), Vector::zeros(width)))
    }
}

/// Same constant on both sides.
pub struct ConstantBoundary(pub Vec<f64>);

impl Named for ConstantBoundary {
    fn name(&self) -> &'static str {
        "constant"
    }
}

impl BoundaryPolicy for ConstantBoundary {
    fn values(&self, _: usize, _: usize, width: usize) -> Result<(Vector, Vector)> {
        let v = sized(&self.0, width)?;
        Ok((v.clone(), v))
    }
}

/// Replayed trace on both sides, holding the last value.
pub struct TraceBoundary(pub Vec<Vec<f64>>);

impl Named for TraceBoundary {
    fn name(&self) -> &'static str {
        "trace"
    }
}

impl BoundaryPolicy for TraceBoundary {
    fn values(&self, k: usize, _: usize, width: usize) -> Result<(Vector, Vector)> {
        let row = self
            .0
            .get(k)
            .or(self.0.last())
            .ok_or_else(|| Error::InvalidParameter("empty boundary trace".into()))?;
        let v = sized(row, width)?;
        Ok((v.clone(), v))
    }
}

pub fn boundary_policy_registry(p: &PolicyParams) -> Registry<dyn BoundaryPolicy> {
    let mut reg: Registry<dyn BoundaryPolicy> = Registry::new("boundary policy");
    reg.register(Box::new(ZeroBoundary));
    reg.register(Box::new(ConstantBoundary(p.value.clone())));
    reg.register(Box::new(TraceBoundary(p.trace.clone())));
    reg
}

/// Exogenous input `d` of each node.
pub trait ExogenousSignal: Send + Sync {
    fn value(&self, k: usize, node: usize) -> Vector;
}

pub struct ConstantExogenous(pub Vector);

impl ExogenousSignal for ConstantExogenous {
    fn value(&self, _: usize, _: usize) -> Vector {
        self.0.clone()
    }
}
