//! Acceptance criteria 1-9. Runs without the libtest harness so each criterion prints exactly
//! one `[PASS]` or `[FAIL]` line; the process exits nonzero when any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use netabs::builder::{
    compute_interface_gain_r, identity_abstraction, solve_interconnection_conditions,
};
use netabs::certify::{
    compute_gain_scalars, cond22_margins, conservative_tau, solve_lyapunov_certificate,
    verify_cond22, verify_local_dissipation_sampled, GainInputs, LocalCertificate,
};
use netabs::linalg::{frobenius, hstack, lambda_min, min_norm_lstsq, spectral_norm, Mat};
use netabs::microgrid::{
    build_dgu, preset, ring_template, rotated_projection, run_case_study, CaseStudyConfig,
    DguParams,
};
use netabs::model::ModeMatrices;
use netabs::pipeline::{certify_kind, PipelineParams};
use netabs::simulator::{InitialKind, NetworkState, NullSink, Simulation, Sinusoid, ZeroBoundary};
use netabs::smallgain::{
    mu_registry, spectral_registry, template_bound, GainOperator, MuOptions, NodeGains,
    SpectralOptions,
};
use rand::RngExt;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed > limit {
        Err(format!(
            "{detail}; runtime {elapsed:.2?} exceeds {limit:.0?}"
        ))
    } else {
        Ok(detail)
    }
}

fn microgrid_modes() -> Vec<ModeMatrices> {
    build_dgu(&DguParams::standard()).unwrap().modes().to_vec()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let modes = microgrid_modes();
    let mut parts = Vec::new();
    let mut ok = true;
    for (s, m) in common::printed_microgrid_m().iter().enumerate() {
        let c = &modes[s].c;
        let margin = lambda_min(&(m - c.transpose() * c));
        let tol = 1e-6 * spectral_norm(m);
        ok &= margin >= -tol;
        parts.push(format!(
            "mode {s}: lambda_min(M - C'C) = {margin:.4} (tol -{tol:.1e})"
        ));
    }
    let detail = parts.join(", ");
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(1), detail)
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let tau = conservative_tau(&common::printed_microgrid_m());
    let target = 67.61;
    let rel = (tau - target).abs() / target;
    let detail = format!(
        "conservative tau = {tau:.4}, expected {target} (relative gap {:.1}%, allowed 2%)",
        rel * 100.0
    );
    if rel > 0.02 {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(1), detail)
}

fn criterion_3() -> Outcome {
    let params = DguParams::standard();
    let modes = microgrid_modes();
    let ms = common::printed_microgrid_m();
    let (kappa, epsilon) = (0.01, 1.0);
    let tau = conservative_tau(&ms);
    let cands: Vec<_> = (0..2).map(|s| rotated_projection(&params, s)).collect();
    let b_hat = Mat::identity(3, 3);
    let rs: Vec<Mat> = (0..2)
        .map(|s| compute_interface_gain_r(&modes[s].b, &ms[s], &cands[s].p, &b_hat))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let inputs: Vec<GainInputs<'_>> = (0..2)
        .map(|s| GainInputs {
            m: &ms[s],
            b: &modes[s].b,
            d: &modes[s].d,
            p: &cands[s].p,
            b_hat: &b_hat,
            r: &rs[s],
        })
        .collect();
    let g = compute_gain_scalars(tau, kappa, epsilon, &inputs).map_err(|e| e.to_string())?;
    let cert = LocalCertificate {
        alpha: 1.0,
        kappa,
        epsilon,
        tau,
        tau_conservative: true,
        lambda: g.lambda,
        rho_int: g.rho_int,
        rho_ext: g.rho_ext,
        margins: Vec::new(),
    };
    let template = ring_template(&params, 4).map_err(|e| e.to_string())?;
    let col = template_bound(&template, &cert).column_sum;
    let cmp = |name: &str, got: f64, want: f64| {
        let rel = (got - want).abs() / want;
        let verdict = if rel <= 0.05 { "agrees" } else { "discrepancy" };
        format!(
            "{name} = {got:.4} vs {want} ({verdict}, {:.0}%)",
            rel * 100.0
        )
    };
    if ![g.rho_int, g.rho_ext, col].iter().all(|v| v.is_finite()) {
        return Err("non-finite recomputed value".into());
    }
    Ok(format!(
        "logged comparison: {}; {}; {}",
        cmp("rho_int", g.rho_int, 0.321),
        cmp("rho_ext", g.rho_ext, 512.312),
        cmp("column-sum r(Psi)", col, 0.991)
    ))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut rng = common::rng(4);
    let params = PipelineParams::default();
    let (mut accepted, mut tried) = (0, 0);
    let mut worst_margin = f64::INFINITY;
    let mut worst_slack = f64::INFINITY;
    while accepted < 50 {
        tried += 1;
        if tried > 2000 {
            return Err(format!(
                "only {accepted} instances accepted in {tried} draws"
            ));
        }
        let shape = common::KindShape::random(&mut rng, 6, [1, 1], 0.3);
        let (kind, design) = common::random_kind(&mut rng, shape);
        let Ok(bundle) = certify_kind(&kind, Some(&design), &params) else {
            continue;
        };
        let cp = &params.certify;
        for (s, (mode, mb)) in kind.modes().iter().zip(&bundle.modes).enumerate() {
            // Fresh construction from the stored gain, unnormalized.
            let m = solve_lyapunov_certificate(mode, &mb.k, s, cp).map_err(|e| e.to_string())?;
            let raw = verify_cond22(mode, &m, &mb.k, s, cp).map_err(|e| e.to_string())?;
            let stored = cond22_margins(mode, &mb.m, &mb.k, cp.kappa, cp.epsilon);
            let tol = cp.tol * spectral_norm(&mb.m).max(1.0);
            if stored.output < -tol || stored.decay < -tol {
                return Err(format!(
                    "instance {accepted} mode {s}: negative margins {stored:?}"
                ));
            }
            worst_margin = worst_margin.min(
                raw.output
                    .min(raw.decay)
                    .min(stored.output)
                    .min(stored.decay),
            );
        }
        let rep = verify_local_dissipation_sampled(&kind, &bundle, 1000, tried as u64, 1e-8);
        worst_slack = worst_slack.min(rep.worst_relative_slack);
        if !rep.passed() {
            return Err(format!(
                "instance {accepted}: {} dissipation violations (worst slack {:.3e})",
                rep.violations, rep.worst_relative_slack
            ));
        }
        accepted += 1;
    }
    within(
        t.elapsed(),
        Duration::from_secs(30),
        format!("50 instances ({tried} draws), smallest margin {worst_margin:.2e}, worst relative slack {worst_slack:.2e}, 0 violations"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = common::rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let shape = common::KindShape::random(&mut rng, 6, [1, 2], 1.0);
        let (kind, _) = common::random_kind(&mut rng, shape);
        for (s, mode) in kind.modes().iter().enumerate() {
            let (p, ic) = identity_abstraction(mode);
            let via_solver = solve_interconnection_conditions(mode, &p, &mode.d, s)
                .map_err(|e| e.to_string())?;
            for ic in [&ic, &via_solver] {
                let errs = [
                    frobenius(&(&ic.a_hat - &mode.a)),
                    frobenius(&(&ic.c_hat - &mode.c)),
                    frobenius(&ic.q),
                    frobenius(&ic.t),
                ];
                worst = errs.iter().copied().fold(worst, f64::max);
            }
        }
    }
    if worst >= 1e-12 {
        return Err(format!("identity abstraction residual {worst:.2e}"));
    }
    let params = DguParams::standard();
    let modes = microgrid_modes();
    let mut parts = Vec::new();
    let mut ok = true;
    for (s, mode) in modes.iter().enumerate() {
        let cand = rotated_projection(&params, s);
        match solve_interconnection_conditions(mode, &cand.p, &cand.d_hat, s) {
            Ok(ic) => {
                let gap = (&ic.q - &cand.q).amax();
                ok &= gap <= 1e-8;
                parts.push(format!("mode {s}: |Q - Q_formula|_max = {gap:.2e}"));
            }
            Err(e) => {
                ok = false;
                let lhs = hstack(&[&cand.p, &(-&mode.b)]);
                let (x, res) =
                    min_norm_lstsq(&lhs, &(&mode.a * &cand.p)).map_err(|e| e.to_string())?;
                let q_ls = x.rows(cand.p.ncols(), mode.b.ncols()).into_owned();
                parts.push(format!(
                    "mode {s}: {e}; least-squares Q differs from the formula by {:.2e} (residual {res:.2e})",
                    (&q_ls - &cand.q).amax()
                ));
            }
        }
    }
    let detail = format!("identity residual {worst:.1e}; {}", parts.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit_nodes(n: usize, lambda: f64) -> Vec<NodeGains> {
    vec![
        NodeGains {
            lambda,
            alpha: 1.0,
            rho_int: 0.0,
            rho_ext: 0.0,
            n_bar: 1,
            boundary_inputs: 0,
        };
        n
    ]
}

fn circulant(n: usize, c: f64, lambda: f64) -> GainOperator {
    let trip: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, c)).collect();
    GainOperator::from_parts(unit_nodes(n, lambda), &trip).unwrap()
}

/// `min_j (mu_j lambda_j - sum_i mu_i gamma_ij - lambda_inf mu_j)` from the raw triplets.
fn mu_slack(op: &GainOperator, mu: &[f64], lambda_inf: f64) -> f64 {
    let mut col = vec![0.0; op.len()];
    for (i, j, g) in op.triplets() {
        col[j] += mu[i] * g;
    }
    (0..op.len())
        .map(|j| mu[j] * op.lambda(j) - col[j] - lambda_inf * mu[j])
        .fold(f64::INFINITY, f64::min)
}

fn criterion_6() -> Outcome {
    let power = spectral_registry();
    let power = power.get("power_iteration").unwrap();
    let finders = mu_registry();
    let mut parts = Vec::new();
    for n in [3, 10] {
        let c = 0.7;
        let op = circulant(n, c, 1.0);
        let est = power
            .estimate(&op, &SpectralOptions::default())
            .map_err(|e| e.to_string())?;
        if (est.upper - c).abs() > 1e-6 {
            return Err(format!("n={n}: power iteration {} vs {c}", est.upper));
        }
        parts.push(format!("n={n}: r = {:.9}", est.upper));
    }
    // Weights on heterogeneous operators, rechecked from the triplets.
    let mut rng = common::rng(6);
    let mut worst = f64::INFINITY;
    for trial in 0..20 {
        let n = rng.random_range(3..=10);
        let nodes: Vec<NodeGains> = (0..n)
            .map(|_| NodeGains {
                lambda: rng.random_range(0.3..1.0),
                ..unit_nodes(1, 1.0)[0]
            })
            .collect();
        let trip: Vec<_> = (0..n)
            .flat_map(|i| {
                let j = (i + 1 + trial % (n - 1)) % n;
                [
                    (i, j, 0.05 + 0.1 * (i as f64 / n as f64)),
                    (i, (i + 1) % n, 0.05),
                ]
            })
            .filter(|&(i, j, _)| i != j)
            .collect();
        let op = GainOperator::from_parts(nodes, &trip).unwrap();
        for name in ["uniform", "neumann", "auto"] {
            if let Ok(m) = finders.get(name).unwrap().find(&op, &MuOptions::default()) {
                worst = worst.min(mu_slack(&op, &m.mu, m.lambda_inf));
            }
        }
    }
    if worst < -1e-10 {
        return Err(format!("weight inequality slack {worst:.2e}"));
    }
    parts.push(format!("worst weight slack {worst:.1e}"));
    // Brute-force feasibility of mu'(Lambda - Gamma) > 0 on a grid, n = 3.
    let auto = finders.get("auto").unwrap();
    for c in [0.2, 0.6] {
        let op = circulant(3, c, 0.5);
        let grid: Vec<f64> = (0..=16).map(|k| 1.0 + 0.25 * k as f64).collect();
        let mut brute = false;
        for &a in &grid {
            for &b in &grid {
                for &d in &grid {
                    if mu_slack(&op, &[a, b, d], 0.0) > 0.0 {
                        brute = true;
                    }
                }
            }
        }
        let solver = auto.find(&op, &MuOptions::default()).is_ok();
        if brute != solver {
            return Err(format!("c={c}: brute force {brute}, solver {solver}"));
        }
        parts.push(format!("c={c}: feasible={solver} (both)"));
    }
    Ok(parts.join(", "))
}

fn criterion_7() -> Outcome {
    let mut rng = common::rng(7);
    let horizon = 200;
    let input = Sinusoid {
        amplitude: 0.5,
        omega: 0.37,
    };
    let mut worst_ratio: f64 = 0.0;
    let mut control: Option<common::Certified> = None;
    for idx in 0..20 {
        let c =
            common::certified_network(&mut rng, 8, 4, 500).ok_or("no certified network found")?;
        let init = NetworkState::sampled(&c.net, &c.bundle, InitialKind::Random, 1.0, idx)
            .map_err(|e| e.to_string())?;
        let sim = Simulation {
            network: &c.net,
            bundle: &c.bundle,
            input: &input,
            boundary: &ZeroBoundary,
            exogenous: None,
            weights: Some(&c.mu.mu),
        };
        let res = sim
            .run(&init, horizon, &mut NullSink)
            .map_err(|e| e.to_string())?;
        let v0 = res.lyapunov.as_ref().unwrap()[0];
        let mut sup_u: f64 = 0.0;
        for (k, &e) in res.error_norms.iter().enumerate() {
            if k > 0 {
                sup_u = sup_u.max(res.abstract_input_norms[k - 1]);
            }
            let env = c.agg.envelope(k, v0, sup_u, 0.0);
            if e > env + 1e-8 {
                return Err(format!(
                    "network {idx} ({} nodes): e({k}) = {e:.3e} > envelope {env:.3e}",
                    c.net.len()
                ));
            }
            if env > 0.0 {
                worst_ratio = worst_ratio.max(e / env);
            }
        }
        if control.is_none() {
            control = Some(c);
        }
    }
    // Control: an envelope shrunk tenfold must be caught on the same kind of run.
    let c = control.unwrap();
    let mut bad = c.agg.clone();
    bad.theta *= 0.1;
    bad.gamma_ext_coeff *= 0.1;
    let init = NetworkState::sampled(&c.net, &c.bundle, InitialKind::Random, 1.0, 99)
        .map_err(|e| e.to_string())?;
    let sim = Simulation {
        network: &c.net,
        bundle: &c.bundle,
        input: &input,
        boundary: &ZeroBoundary,
        exogenous: None,
        weights: Some(&c.mu.mu),
    };
    let res = sim
        .run(&init, horizon, &mut NullSink)
        .map_err(|e| e.to_string())?;
    let v0 = res.lyapunov.as_ref().unwrap()[0];
    let mut sup_u: f64 = 0.0;
    let mut detected = 0;
    for (k, &e) in res.error_norms.iter().enumerate() {
        if k > 0 {
            sup_u = sup_u.max(res.abstract_input_norms[k - 1]);
        }
        if e > bad.envelope(k, v0, sup_u, 0.0) + 1e-8 {
            detected += 1;
        }
    }
    if detected == 0 {
        return Err("shrunken envelope produced no detected violation".into());
    }
    Ok(format!("20 networks x {horizon} steps within envelope (max e/env {worst_ratio:.3}); control case: {detected} violations detected"))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let reports: Vec<_> = [25, 100, 400]
        .iter()
        .map(|&n| {
            let cfg = CaseStudyConfig {
                size: n,
                horizon: 300,
                ..CaseStudyConfig::default()
            };
            run_case_study(&cfg, &mut NullSink)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let base = &reports[0];
    let lambda_equal = reports
        .iter()
        .all(|r| r.lambda_inf.to_bits() == base.lambda_inf.to_bits());
    let sup = reports[1..]
        .iter()
        .map(|r| {
            r.normalized_error
                .iter()
                .zip(&base.normalized_error)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let feasible = reports.iter().all(|r| r.feasible);
    let constants_equal = feasible
        && reports.iter().all(|r| {
            let (a, b) = (
                r.aggregate.as_ref().unwrap(),
                base.aggregate.as_ref().unwrap(),
            );
            a.theta == b.theta
                && a.beta == b.beta
                && a.gamma_ext_coeff == b.gamma_ext_coeff
                && a.lambda_inf == b.lambda_inf
        });
    let detail = format!(
        "lambda_inf = {:.6} at every size (identical: {lambda_equal}), small-gain certified: {feasible}, \
         envelope constants identical: {constants_equal}, profile sup-distance {sup:.2e}, runtime {elapsed:.2?}",
        base.lambda_inf
    );
    if !(feasible && lambda_equal && constants_equal && sup <= 0.05) {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(300), detail)
}

fn criterion_9() -> Outcome {
    let cfg = CaseStudyConfig {
        preset: preset("paper").unwrap(),
        size: 100,
        horizon: 300,
        ..CaseStudyConfig::default()
    };
    if cfg.preset.switch_period != 4 || cfg.preset.reference != [0.8, 0.2] {
        return Err("preset does not match the scenario".into());
    }
    let r = run_case_study(&cfg, &mut NullSink).map_err(|e| e.to_string())?;
    let ne = &r.normalized_error;
    let u0 = r.abstract_input_norms[0];
    let u_end = *r.abstract_input_norms.last().unwrap();
    if !(u_end <= 1e-6 * u0) {
        return Err(format!("|uh| did not vanish: {u0:.3e} -> {u_end:.3e}"));
    }
    if let Some(k) = r.first_increase {
        return Err(format!(
            "error increases at step {k} (burn-in {}): {:.3e} -> {:.3e}",
            r.burn_in,
            ne[k],
            ne[k + 1]
        ));
    }
    let hit = ne
        .iter()
        .position(|&e| e < 0.01)
        .ok_or_else(|| format!("final ratio {:.3e}", ne[ne.len() - 1]))?;
    let y = r.mean_output.last().unwrap();
    Ok(format!(
        "|uh| {u0:.2e} -> {u_end:.1e}; monotone after step {} (two switching periods); below 1% at step {hit}; final mean output ({:.4}, {:.4})",
        r.burn_in, y[0], y[1]
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "output bound on printed certificates", criterion_1),
        (2, "mode-comparison constant", criterion_2),
        (3, "microgrid gain scalars", criterion_3),
        (4, "constructed certificate soundness", criterion_4),
        (5, "interconnection-condition exactness", criterion_5),
        (6, "small-gain oracles", criterion_6),
        (7, "envelope soundness", criterion_7),
        (8, "size invariance", criterion_8),
        (9, "microgrid tracking demo", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, title, f) in criteria {
        let out = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match out {
            Ok(d) => println!("[PASS] criterion {n} ({title}): {d}"),
            Err(d) => {
                println!("[FAIL] criterion {n} ({title}): {d}");
                failed.push(n);
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed {:?}",
        9 - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
