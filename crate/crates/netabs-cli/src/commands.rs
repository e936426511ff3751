//! Subcommand bodies. Each writes its files under the output directory and a
//! `<command>_report.json` carrying the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use netabs::bundle::AbstractionBundle;
use netabs::linalg::Vector;
use netabs::microgrid::run_case_study;
use netabs::model::{Design, Network, NetworkFile};
use netabs::pipeline::{certify_network, check_bundle};
use netabs::simulator::{
    boundary_policy_registry, check_envelope, input_policy_registry, BinarySink, ConstantExogenous,
    CsvSink, ExogenousSignal, NetworkState, NullSink, Simulation, TrajectorySink,
};
use netabs::smallgain::{
    mu_registry, spectral_registry, write_vector, AggregateCertificate, GainOperator,
    MuCertificate, MuOptions, SpectralEstimate, SpectralOptions,
};
use netabs::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, TrajectoryFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Infeasible,
    EnvelopeViolated,
    Failed,
}

pub struct Context {
    pub cfg: Config,
    pub out: PathBuf,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: Config, out: PathBuf) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash()?;
        fs::create_dir_all(&out)?;
        Ok(Self { cfg, out, hash })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn report<T: Serialize>(&self, command: &str, status: Status, body: &T) -> Result<()> {
        let doc = json!({
            "command": command,
            "status": status,
            "config_hash": self.hash,
            "version": env!("CARGO_PKG_VERSION"),
            "report": body,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(self.path(&format!("{command}_report.json")), text + "\n")?;
        Ok(())
    }

    /// Machine-readable record of a failed command.
    pub fn failure(&self, command: &str, err: &Error) -> Result<()> {
        let body = json!({ "class": format!("{:?}", err.class()), "error": err.to_string() });
        self.report(command, Status::Failed, &body)
    }

    fn network(&self) -> Result<(Network, Design)> {
        let path = self.cfg.network.as_ref().ok_or_else(|| {
            Error::InvalidParameter(
                "no network file: set `network` in the config or pass --network".into(),
            )
        })?;
        let text = read(path, "network file")?;
        let (net, design) = NetworkFile::parse(&text)?.build()?;
        match self.cfg.truncate {
            Some(n) if n < net.len() => Ok((net.truncate(n)?, design)),
            _ => Ok((net, design)),
        }
    }

    fn bundle(&self) -> Result<AbstractionBundle> {
        let path = self
            .cfg
            .bundle
            .clone()
            .unwrap_or_else(|| self.path("bundle.toml"));
        if !path.exists() {
            return Err(Error::InvalidParameter(format!(
                "bundle {} not found; run `netabs certify` first or set `bundle`",
                path.display()
            )));
        }
        AbstractionBundle::from_toml(&read(&path, "bundle")?)
    }
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {what} {}: {e}", path.display())))
}

fn write_bundle(ctx: &Context, bundle: &AbstractionBundle) -> Result<()> {
    fs::write(ctx.path("bundle.toml"), bundle.to_toml()?)?;
    Ok(())
}

pub fn certify(ctx: &Context) -> Result<Status> {
    let (net, design) = ctx.network()?;
    let bundle = certify_network(&net, &design, &ctx.cfg.certify)?;
    write_bundle(ctx, &bundle)?;
    let kinds: Vec<_> = bundle
        .kinds
        .iter()
        .enumerate()
        .map(|(i, kb)| {
            json!({
                "kind": i,
                "modes": kb.modes.len(),
                "state_dim": net.kinds[i].state_dim(),
                "abstract_dim": kb.modes[0].abstract_dim(),
                "certificate": kb.certificate,
            })
        })
        .collect();
    ctx.report(
        "certify",
        Status::Ok,
        &json!({ "subsystems": net.len(), "kinds": kinds }),
    )?;
    println!(
        "certified {} kind(s) for {} subsystem(s)",
        bundle.kinds.len(),
        net.len()
    );
    Ok(Status::Ok)
}

pub fn abstraction(ctx: &Context) -> Result<Status> {
    let (net, design) = ctx.network()?;
    let bundle = certify_network(&net, &design, &ctx.cfg.certify)?;
    write_bundle(ctx, &bundle)?;
    let checks = check_bundle(&net, &bundle, 0, ctx.cfg.verify.seed, ctx.cfg.verify.tol)?;
    let kinds: Vec<_> = checks
        .iter()
        .zip(&bundle.kinds)
        .map(|(c, kb)| {
            let modes: Vec<_> = c
                .modes
                .iter()
                .zip(&kb.modes)
                .map(|(m, mb)| {
                    json!({
                        "mode": m.mode,
                        "state_dim": mb.p.nrows(),
                        "abstract_dim": mb.p.ncols(),
                        "residuals": m.residuals,
                        "residual_tol": m.residual_tol,
                    })
                })
                .collect();
            json!({ "kind": c.kind, "modes": modes })
        })
        .collect();
    ctx.report("abstract", Status::Ok, &json!({ "kinds": kinds }))?;
    println!(
        "abstraction written to {}",
        ctx.path("bundle.toml").display()
    );
    Ok(Status::Ok)
}

struct SmallGain {
    op: GainOperator,
    estimate: SpectralEstimate,
    mu: std::result::Result<MuCertificate, Error>,
    aggregate: Option<AggregateCertificate>,
}

fn small_gain(ctx: &Context, net: &Network, bundle: &AbstractionBundle) -> Result<SmallGain> {
    let sg = &ctx.cfg.smallgain;
    let op = GainOperator::from_network(net, bundle)?;
    let opts = SpectralOptions {
        max_iter: sg.max_iter,
        tol: sg.tol,
        k: sg.gelfand_k,
    };
    let estimate = spectral_registry()
        .get(&sg.spectral)?
        .estimate(&op, &opts)?;
    let mut mu = match mu_registry()
        .get(&sg.method)?
        .find(&op, &MuOptions::default())
    {
        Err(e @ Error::SmallGainInfeasible { .. }) => Err(e),
        other => Ok(other?),
    };
    if let (Ok(m), Some(target)) = (&mu, sg.lambda_target) {
        if m.lambda_inf < target {
            mu = Err(Error::SmallGainInfeasible {
                index: m.worst_index,
                slack: m.lambda_inf - target,
            });
        }
    }
    let aggregate = match &mu {
        Ok(m) => Some(AggregateCertificate::new(&op, m, sg.eps_tilde)?),
        Err(_) => None,
    };
    Ok(SmallGain {
        op,
        estimate,
        mu,
        aggregate,
    })
}

fn small_gain_body(sg: &SmallGain) -> serde_json::Value {
    json!({
        "subsystems": sg.op.len(),
        "nonzeros": sg.op.nnz(),
        "radius_upper": sg.estimate.upper,
        "radius_lower": sg.estimate.lower,
        "iterations": sg.estimate.iterations,
        "lambda_inf": sg.mu.as_ref().ok().map(|m| m.lambda_inf),
        "mu_method": sg.mu.as_ref().ok().map(|m| m.method.clone()),
        "failure": sg.mu.as_ref().err().map(|e| e.to_string()),
        "aggregate": sg.aggregate.as_ref().map(|a| json!({
            "mu_min": a.mu_min,
            "mu_max": a.mu_max,
            "alpha": a.alpha,
            "eps_tilde": a.eps_tilde,
            "theta": a.theta,
            "beta": a.beta,
            "gamma_ext_coeff": a.gamma_ext_coeff,
            "gamma_boundary_coeff": a.gamma_boundary_coeff,
        })),
    })
}

pub fn smallgain(ctx: &Context) -> Result<Status> {
    let (net, _) = ctx.network()?;
    let bundle = ctx.bundle()?;
    let sg = small_gain(ctx, &net, &bundle)?;
    sg.op
        .write_triplets(fs::File::create(ctx.path("gamma.triplets"))?)?;
    sg.op
        .write_lambda(fs::File::create(ctx.path("lambda.txt"))?)?;
    let status = match &sg.mu {
        Ok(m) => {
            write_vector(&m.mu, fs::File::create(ctx.path("mu.txt"))?)?;
            println!(
                "small-gain holds: lambda_inf = {:e}, r(Psi) <= {:e}",
                m.lambda_inf, sg.estimate.upper
            );
            Status::Ok
        }
        Err(e) => {
            eprintln!("small-gain infeasible: {e}");
            Status::Infeasible
        }
    };
    ctx.report("smallgain", status, &small_gain_body(&sg))?;
    Ok(status)
}

fn trajectory_sink(ctx: &Context, format: TrajectoryFormat) -> Result<Box<dyn TrajectorySink>> {
    Ok(match format {
        TrajectoryFormat::Csv => Box::new(CsvSink::create(&ctx.path("trajectory.csv"))?),
        TrajectoryFormat::Binary => Box::new(BinarySink::create(&ctx.path("trajectory.bin"))?),
        TrajectoryFormat::None => Box::new(NullSink),
    })
}

pub fn simulate(ctx: &Context) -> Result<Status> {
    let sc = &ctx.cfg.simulate;
    let (net, _) = ctx.network()?;
    let bundle = ctx.bundle()?;
    let sg = small_gain(ctx, &net, &bundle)?;
    let inputs = input_policy_registry(&sc.policy);
    let boundaries = boundary_policy_registry(&sc.policy);
    let exo = sc
        .exogenous
        .as_ref()
        .map(|v| ConstantExogenous(Vector::from_column_slice(v)));
    let init = NetworkState::sampled(&net, &bundle, sc.initial, sc.scale, sc.seed)?;
    let weights = sg.mu.as_ref().ok().map(|m| m.mu.clone());
    let sim = Simulation {
        network: &net,
        bundle: &bundle,
        input: inputs.get(&sc.input)?,
        boundary: boundaries.get(&sc.boundary)?,
        exogenous: exo.as_ref().map(|e| e as &dyn ExogenousSignal),
        weights: weights.as_deref(),
    };
    let mut sink = trajectory_sink(ctx, sc.trajectory)?;
    let res = sim.run(&init, sc.horizon, sink.as_mut())?;

    let mut w = csv::Writer::from_path(ctx.path("series.csv"))?;
    w.write_record([
        "step",
        "error",
        "abstract_input",
        "boundary_mismatch",
        "lyapunov",
    ])?;
    for k in 0..=sc.horizon {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([
            k.to_string(),
            format!("{:e}", res.error_norms[k]),
            opt(res.abstract_input_norms.get(k).copied()),
            opt(res.boundary_mismatch.get(k).copied()),
            opt(res.lyapunov.as_ref().map(|v| v[k])),
        ])?;
    }
    w.flush()?;

    let envelope = sg.aggregate.as_ref().map(|agg| {
        let v0 = res.lyapunov.as_ref().map_or(0.0, |v| v[0]);
        check_envelope(&res, agg, v0)
    });
    let status = match &envelope {
        Some(e) if !e.holds => Status::EnvelopeViolated,
        _ => Status::Ok,
    };
    match &envelope {
        Some(e) => println!(
            "envelope: {} violations (worst ratio {:.3e})",
            e.violations, e.worst_ratio
        ),
        None => println!("no small-gain certificate; envelope not checked"),
    }
    let body = json!({
        "subsystems": net.len(),
        "horizon": sc.horizon,
        "final_error": res.error_norms.last(),
        "max_error": res.error_norms.iter().copied().fold(0.0, f64::max),
        "small_gain": small_gain_body(&sg),
        "envelope": envelope,
    });
    ctx.report("simulate", status, &body)?;
    Ok(status)
}

pub fn microgrid(ctx: &Context) -> Result<Status> {
    let mc = &ctx.cfg.microgrid;
    let case = mc.case_study(&ctx.cfg.certify)?;
    let mut sink = trajectory_sink(ctx, mc.trajectory)?;
    let r = run_case_study(&case, sink.as_mut())?;

    let mut w = csv::Writer::from_path(ctx.path("error_norms.csv"))?;
    w.write_record(["step", "error", "normalized_error", "abstract_input"])?;
    for k in 0..r.error_norms.len() {
        w.write_record([
            k.to_string(),
            format!("{:e}", r.error_norms[k]),
            format!("{:e}", r.normalized_error[k]),
            r.abstract_input_norms
                .get(k)
                .map(|v| format!("{v:e}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(ctx.path("outputs.csv"))?;
    w.write_record(["step", "v_d", "v_q"])?;
    for (k, y) in r.mean_output.iter().enumerate() {
        w.write_record([k.to_string(), format!("{:e}", y[0]), format!("{:e}", y[1])])?;
    }
    w.flush()?;

    let status = if r.feasible {
        Status::Ok
    } else {
        Status::Infeasible
    };
    let body = json!({
        "preset": r.preset,
        "size": r.size,
        "horizon": r.horizon,
        "certificate": r.certificate,
        "template": r.template,
        "radius_upper": r.radius_upper,
        "radius_lower": r.radius_lower,
        "lambda_inf": r.lambda_inf,
        "feasible": r.feasible,
        "aggregate": r.aggregate.as_ref().map(|a| json!({
            "theta": a.theta,
            "beta": a.beta,
            "gamma_ext_coeff": a.gamma_ext_coeff,
            "gamma_boundary_coeff": a.gamma_boundary_coeff,
        })),
        "envelope": r.envelope,
        "initial_error": r.error_norms[0],
        "final_error": r.error_norms.last(),
        "final_output": r.mean_output.last(),
        "burn_in": r.burn_in,
        "first_increase": r.first_increase,
    });
    ctx.report("microgrid", status, &body)?;
    println!(
        "microgrid {} n={}: lambda_inf = {:.6}, r(Psi) <= {:.6}, e(K)/e(0) = {:.3e}",
        r.preset,
        r.size,
        r.lambda_inf,
        r.radius_upper,
        r.normalized_error.last().copied().unwrap_or(0.0)
    );
    if !r.feasible {
        eprintln!("small-gain condition fails for this preset; series written without an envelope");
    }
    Ok(status)
}

pub fn verify(ctx: &Context) -> Result<Status> {
    let vc = &ctx.cfg.verify;
    let (net, _) = ctx.network()?;
    let bundle = ctx.bundle()?;
    let checks = check_bundle(&net, &bundle, vc.samples, vc.seed, vc.tol)?;
    let sg = small_gain(ctx, &net, &bundle)?;
    let local_ok = checks.iter().all(|c| c.passed());
    let status = if local_ok && sg.mu.is_ok() {
        Status::Ok
    } else {
        Status::Infeasible
    };
    ctx.report(
        "verify",
        status,
        &json!({ "local_passed": local_ok, "kinds": checks, "small_gain": small_gain_body(&sg) }),
    )?;
    println!(
        "local certificates: {}; small-gain: {}",
        if local_ok { "ok" } else { "FAILED" },
        if sg.mu.is_ok() { "ok" } else { "infeasible" }
    );
    Ok(status)
}
