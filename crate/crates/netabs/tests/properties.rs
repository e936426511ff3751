//! Randomized invariants. Instances are drawn from seeded generators so failures
//! reproduce from the printed seed.

mod common;

use std::sync::Arc;

use netabs::builder::{compute_interface_gain_r, solve_interconnection_conditions};
use netabs::bundle::AbstractionBundle;
use netabs::certify::{compute_gain_scalars, compute_tau, GainInputs};
use netabs::linalg::{frobenius, Mat, Vector};
use netabs::model::{
    Design, KindDesign, ModeMatrices, Network, NetworkFile, Node, OutputPartition, Source,
    SwitchedSubsystem,
};
use netabs::pipeline::{certify_network, PipelineParams};
use netabs::simulator::{
    ConstantInput, InitialKind, NetworkState, NullSink, Simulation, SimulationResult, Sinusoid,
    ZeroBoundary,
};
use netabs::smallgain::{
    mu_registry, spectral_registry, GainOperator, MuOptions, NodeGains, SpectralOptions,
};
use netabs::Error;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(0x6e65_7461_6273),
        ..ProptestConfig::default()
    }
}

/// Network whose kinds share one output width, with designs; not necessarily certifiable.
fn random_instance(rng: &mut ChaCha8Rng, max_size: usize) -> (Network, Design) {
    let size = rng.random_range(2..=max_size);
    let degrees = [
        rng.random_range(1..=2usize.min(size - 1)),
        rng.random_range(1..=2usize.min(size - 1)),
    ];
    let q = rng.random_range(1..=2usize);
    let nk = rng.random_range(1..=2usize);
    let (kinds, designs): (Vec<_>, Vec<_>) = (0..nk)
        .map(|_| {
            let mut shape = common::KindShape::random(rng, 4, degrees, 0.2);
            shape.n = shape.n.max(q);
            shape.q = q;
            shape.widths = [degrees[0] * q, degrees[1] * q];
            common::random_kind(rng, shape)
        })
        .unzip();
    (
        common::random_network(rng, size, kinds, degrees),
        Design { kinds: designs },
    )
}

fn certified(seed: u64) -> common::Certified {
    let mut rng = common::rng(seed);
    common::certified_network(&mut rng, 6, 3, 2000)
        .expect("a certifiable instance within the attempt budget")
}

fn random_operator(rng: &mut ChaCha8Rng, n: usize, density: f64) -> GainOperator {
    let nodes = (0..n)
        .map(|_| NodeGains {
            lambda: rng.random_range(0.1..1.0),
            alpha: rng.random_range(0.5..2.0),
            rho_int: rng.random_range(0.0..0.5),
            rho_ext: 1.0,
            n_bar: 1,
            boundary_inputs: 0,
        })
        .collect();
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(density) {
                t.push((i, j, rng.random_range(0.0..0.3)));
            }
        }
    }
    GainOperator::from_parts(nodes, &t).unwrap()
}

fn simulate(c: &common::Certified, horizon: usize, seed: u64) -> SimulationResult {
    let input = Sinusoid {
        amplitude: 0.3,
        omega: 0.41,
    };
    let init = NetworkState::sampled(&c.net, &c.bundle, InitialKind::Random, 1.0, seed).unwrap();
    Simulation {
        network: &c.net,
        bundle: &c.bundle,
        input: &input,
        boundary: &ZeroBoundary,
        exogenous: None,
        weights: Some(&c.mu.mu),
    }
    .run(&init, horizon, &mut NullSink)
    .unwrap()
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    common::gauss(rng, n, 1, 1.0).column(0).into_owned()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn network_text_roundtrip(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (net, design) = random_instance(&mut rng, 8);
        let file = NetworkFile::from_network(&net, Some(&design));
        let text = file.to_text().unwrap();
        let parsed = NetworkFile::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &file);
        prop_assert_eq!(parsed.to_text().unwrap(), text);
        let (net2, design2) = parsed.build().unwrap();
        prop_assert_eq!(net2, net);
        prop_assert_eq!(design2, design);
    }

    #[test]
    fn truncation_is_valid(seed in any::<u64>(), frac in 0.1f64..1.0) {
        let mut rng = common::rng(seed);
        let (net, _) = random_instance(&mut rng, 10);
        let keep = ((net.len() as f64 * frac).ceil() as usize).clamp(1, net.len());
        let t = net.truncate(keep).unwrap();
        t.validate().unwrap();
        prop_assert_eq!(t.len(), keep);
        for (i, node) in t.nodes.iter().enumerate() {
            for (s, list) in node.in_neighbors.iter().enumerate() {
                prop_assert_eq!(list.len(), net.nodes[i].in_neighbors[s].len());
                for (src, orig) in list.iter().zip(&net.nodes[i].in_neighbors[s]) {
                    match (*src, *orig) {
                        (Source::Node(j), Source::Node(j0)) => prop_assert!(j == j0 && j < keep),
                        (Source::Boundary(b), Source::Node(j0)) => {
                            prop_assert!(j0 >= keep);
                            prop_assert_eq!(t.boundary[b].origin, Some(j0));
                            prop_assert_eq!(Some(t.boundary[b].width), net.block_width(*orig, i));
                        }
                        other => prop_assert!(false, "unexpected source pair {:?}", other),
                    }
                }
            }
        }
    }

    #[test]
    fn power_estimate_below_column_sum(seed in any::<u64>(), n in 2usize..30, density in 0.05f64..0.6) {
        let mut rng = common::rng(seed);
        let op = random_operator(&mut rng, n, density);
        let reg = spectral_registry();
        let opts = SpectralOptions::default();
        let col = reg.get("column_sum").unwrap().estimate(&op, &opts).unwrap().upper;
        for name in ["power_iteration", "gelfand"] {
            let est = reg.get(name).unwrap().estimate(&op, &opts).unwrap();
            prop_assert!(est.upper <= col + 1e-9, "{} {} > column sum {}", name, est.upper, col);
            if let Some(lo) = est.lower {
                prop_assert!(lo <= est.upper + 1e-9);
            }
        }
    }

    #[test]
    fn weights_satisfy_decay_inequality(seed in any::<u64>(), n in 2usize..30, density in 0.05f64..0.6) {
        let mut rng = common::rng(seed);
        let op = random_operator(&mut rng, n, density);
        for name in ["uniform", "neumann", "auto"] {
            let Ok(mu) = mu_registry().get(name).unwrap().find(&op, &MuOptions::default()) else { continue };
            prop_assert!(mu.lambda_inf > 0.0);
            let lo = mu.mu.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!((lo - 1.0).abs() < 1e-12);
            // Recheck from the triplets, independent of the finder.
            let mut col = vec![0.0; n];
            for (i, j, g) in op.triplets() {
                col[j] += mu.mu[i] * g;
            }
            for j in 0..n {
                let slack = mu.mu[j] * op.lambda(j) - col[j] - mu.lambda_inf * mu.mu[j];
                prop_assert!(slack >= -1e-10 * mu.mu[j].max(1.0), "{} index {} slack {}", name, j, slack);
            }
        }
    }

    #[test]
    fn gain_scaling_scales_column_sums(seed in any::<u64>(), n in 2usize..20, c in 0.1f64..5.0) {
        let mut rng = common::rng(seed);
        let op = random_operator(&mut rng, n, 0.3);
        let nodes: Vec<NodeGains> = op.nodes.iter().map(|g| NodeGains { rho_int: c * g.rho_int, ..*g }).collect();
        let t: Vec<_> = op.triplets().into_iter().map(|(i, j, g)| (i, j, c * g)).collect();
        let scaled = GainOperator::from_parts(nodes, &t).unwrap();
        for (a, b) in op.psi_column_sums().iter().zip(scaled.psi_column_sums()) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let reg = mu_registry();
        let uniform = reg.get("uniform").unwrap();
        let bigger = GainOperator::from_parts(op.nodes.clone(), &op.triplets().into_iter().map(|(i, j, g)| (i, j, 2.0 * g)).collect::<Vec<_>>()).unwrap();
        if uniform.find(&bigger, &MuOptions::default()).is_ok() {
            prop_assert!(uniform.find(&op, &MuOptions::default()).is_ok());
        }
    }

    #[test]
    fn tau_is_one_for_equal_certificates(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = common::rng(seed);
        let g = common::gauss(&mut rng, n, n, 1.0);
        let m = &g * g.transpose() + Mat::identity(n, n);
        let p = common::gauss(&mut rng, n, 2.min(n), 1.0);
        let tau = compute_tau(&[m.clone(), m.clone(), m], &[p.clone(), p.clone(), p]).unwrap();
        prop_assert_eq!(tau.value, 1.0);
    }

    #[test]
    fn scaling_certificates_scales_gains(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(2..=5usize);
        let (nh, m) = (rng.random_range(1..=n), rng.random_range(1..=n));
        let ms: Vec<Mat> = (0..2).map(|_| { let g = common::gauss(&mut rng, n, n, 1.0); &g * g.transpose() + Mat::identity(n, n) }).collect();
        let p = common::gauss(&mut rng, n, nh, 1.0);
        let b = common::gauss(&mut rng, n, m, 1.0);
        let d = common::gauss(&mut rng, n, 2, 1.0);
        let b_hat = Mat::identity(nh, nh);
        let gains = |ms: &[Mat]| {
            let tau = compute_tau(ms, &[p.clone(), p.clone()]).unwrap();
            let rs: Vec<Mat> = ms.iter().map(|mm| compute_interface_gain_r(&b, mm, &p, &b_hat).unwrap()).collect();
            let inputs: Vec<_> = ms.iter().zip(&rs).map(|(mm, r)| GainInputs { m: mm, b: &b, d: &d, p: &p, b_hat: &b_hat, r }).collect();
            (tau, compute_gain_scalars(tau.value, 0.5 / tau.value.max(1.0), 1.0, &inputs).unwrap())
        };
        let (t1, g1) = gains(&ms);
        let scaled: Vec<Mat> = ms.iter().map(|mm| mm * c).collect();
        let (t2, g2) = gains(&scaled);
        prop_assert!((t1.value - t2.value).abs() <= 1e-9 * t1.value);
        prop_assert!((g1.lambda - g2.lambda).abs() <= 1e-9);
        prop_assert!((c * g1.rho_int - g2.rho_int).abs() <= 1e-8 * g2.rho_int.max(1e-300));
        // X = B R - P Bh vanishes when B has full row rank; then rho_ext is rounding noise.
        let natural = c * t2.value * ms.iter().map(|mm| mm.norm()).fold(0.0, f64::max) * p.norm().powi(2);
        prop_assert!((c * g1.rho_ext - g2.rho_ext).abs() <= 1e-8 * g2.rho_ext + 1e-12 * natural, "{} vs {}", c * g1.rho_ext, g2.rho_ext);
    }

    #[test]
    fn identity_interface_has_no_external_gain(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(1..=5usize);
        let m = rng.random_range(1..=n);
        let g = common::gauss(&mut rng, n, n, 1.0);
        let mm = &g * g.transpose() + Mat::identity(n, n);
        let b = common::gauss(&mut rng, n, m, 1.0);
        let p = Mat::identity(n, n);
        let r = compute_interface_gain_r(&b, &mm, &p, &b).unwrap();
        let x = &b * &r - &p * &b;
        prop_assert!(frobenius(&x) <= 1e-9 * (1.0 + frobenius(&b)));
    }

    #[test]
    fn residuals_invariant_under_orthogonal_basis_change(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(2..=6usize);
        let nh = rng.random_range(1..n);
        let m = rng.random_range(1..=n);
        let mode = ModeMatrices::new(
            common::gauss(&mut rng, n, n, 0.5),
            common::gauss(&mut rng, n, m, 1.0),
            common::gauss(&mut rng, 1, n, 1.0),
            common::gauss(&mut rng, n, 1, 1.0),
        );
        let p = common::gauss(&mut rng, n, nh, 1.0);
        let d_hat = common::gauss(&mut rng, nh, 1, 1.0);
        let u = common::gauss(&mut rng, nh, nh, 1.0).qr().q();
        let pu = &p * &u;
        let d_hat_u = u.transpose() * &d_hat;
        let residual = |r: Result<_, Error>| match r {
            Ok(ic) => { let ic: netabs::builder::Interconnection = ic; (ic.residuals.state, ic.residuals.internal) }
            Err(Error::InfeasibleConditions { residual, equation, .. }) => {
                if equation.starts_with("A P") { (residual, f64::NAN) } else { (0.0, residual) }
            }
            Err(e) => panic!("{e}"),
        };
        let (s1, i1) = residual(solve_interconnection_conditions(&mode, &p, &d_hat, 0));
        let (s2, i2) = residual(solve_interconnection_conditions(&mode, &pu, &d_hat_u, 0));
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-8 * (1.0 + a.abs());
        prop_assert!(close(s1, s2), "state residual {} vs {}", s1, s2);
        prop_assert!(close(i1, i2), "internal residual {} vs {}", i1, i2);
        if let (Ok(a), Ok(b)) = (solve_interconnection_conditions(&mode, &p, &d_hat, 0), solve_interconnection_conditions(&mode, &pu, &d_hat_u, 0)) {
            prop_assert!(frobenius(&(u.transpose() * &a.a_hat * &u - &b.a_hat)) <= 1e-8 * (1.0 + frobenius(&a.a_hat)));
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn outputs_match_on_projection_range(seed in any::<u64>()) {
        let c = certified(seed);
        let mut rng = common::rng(seed ^ 0x5eed);
        for (kind, kb) in c.net.kinds.iter().zip(&c.bundle.kinds) {
            for (mode, mb) in kind.modes().iter().zip(&kb.modes) {
                let xh = gauss_vec(&mut rng, mb.abstract_dim());
                let gap = (&mode.c * (&mb.p * &xh) - &mb.c_hat * &xh).norm();
                prop_assert!(gap <= 1e-10 * (1.0 + xh.norm()));
            }
        }
    }

    #[test]
    fn error_dynamics_identity(seed in any::<u64>()) {
        let c = certified(seed);
        let mut rng = common::rng(seed ^ 0xe55);
        for (kind, kb) in c.net.kinds.iter().zip(&c.bundle.kinds) {
            for (mode, mb) in kind.modes().iter().zip(&kb.modes) {
                let (n, nh, w) = (mode.a.nrows(), mb.abstract_dim(), mode.d.ncols());
                let x = gauss_vec(&mut rng, n);
                let xh = gauss_vec(&mut rng, nh);
                let uh = gauss_vec(&mut rng, mb.b_hat.ncols());
                let wv = gauss_vec(&mut rng, w);
                let wh = gauss_vec(&mut rng, w);
                let u = mb.interface(&x, &xh, &uh, &wh);
                let x_next = &mode.a * &x + &mode.b * u + &mode.d * &wv;
                let xh_next = &mb.a_hat * &xh + &mb.b_hat * &uh + &mb.d_hat * &wh;
                let direct = x_next - &mb.p * xh_next;
                let e = &x - &mb.p * &xh;
                let formula = (&mode.a + &mode.b * &mb.k) * e + &mode.d * (wv - wh) + (&mode.b * &mb.r - &mb.p * &mb.b_hat) * uh;
                prop_assert!((&direct - &formula).norm() <= 1e-9 * (1.0 + direct.norm()));
            }
        }
    }

    #[test]
    fn interface_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let c = certified(seed);
        let mut rng = common::rng(seed ^ 0x11);
        let mb = &c.bundle.kinds[0].modes[0];
        let (n, nh, w) = (mb.p.nrows(), mb.abstract_dim(), mb.t.ncols());
        let draw = |rng: &mut ChaCha8Rng| (gauss_vec(rng, n), gauss_vec(rng, nh), gauss_vec(rng, mb.b_hat.ncols()), gauss_vec(rng, w));
        let (x1, xh1, u1, w1) = draw(&mut rng);
        let (x2, xh2, u2, w2) = draw(&mut rng);
        let lhs = mb.interface(&(&x1 * a + &x2 * b), &(&xh1 * a + &xh2 * b), &(&u1 * a + &u2 * b), &(&w1 * a + &w2 * b));
        let rhs = mb.interface(&x1, &xh1, &u1, &w1) * a + mb.interface(&x2, &xh2, &u2, &w2) * b;
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn local_output_bound(seed in any::<u64>()) {
        let c = certified(seed);
        let mut rng = common::rng(seed ^ 0x22);
        for (kind, kb) in c.net.kinds.iter().zip(&c.bundle.kinds) {
            for (mode, mb) in kind.modes().iter().zip(&kb.modes) {
                for _ in 0..20 {
                    let x = gauss_vec(&mut rng, mode.a.nrows());
                    let xh = gauss_vec(&mut rng, mb.abstract_dim());
                    let gap = (&mode.c * &x - &mb.c_hat * &xh).norm_squared();
                    let v = kb.certificate.v(mb, &x, &xh);
                    prop_assert!(kb.certificate.alpha * gap <= v * (1.0 + 1e-9) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn aggregate_storage_bounds_output_gap(seed in any::<u64>()) {
        let c = certified(seed);
        let mut rng = common::rng(seed ^ 0x33);
        for _ in 0..10 {
            let (mut v, mut gap) = (0.0, 0.0);
            for (i, node) in c.net.nodes.iter().enumerate() {
                let kind = c.net.kind_of(i);
                let kb = &c.bundle.kinds[node.kind];
                let s = rng.random_range(0..kind.num_modes());
                let (mode, mb) = (kind.mode(s), &kb.modes[s]);
                let x = gauss_vec(&mut rng, mode.a.nrows());
                let xh = gauss_vec(&mut rng, mb.abstract_dim());
                v += c.mu.mu[i] * kb.certificate.v(mb, &x, &xh);
                let diff = &mode.c * &x - &mb.c_hat * &xh;
                gap += node.partition.external_rows(diff.len()).iter().map(|&r| diff[r] * diff[r]).sum::<f64>();
            }
            prop_assert!(c.agg.alpha * gap <= v * (1.0 + 1e-9) + 1e-12, "{} > {}", c.agg.alpha * gap, v);
        }
    }

    #[test]
    fn storage_decreases_along_trajectories(seed in any::<u64>()) {
        let c = certified(seed);
        let res = simulate(&c, 80, seed);
        let v = res.lyapunov.as_ref().unwrap();
        for k in 0..v.len() - 1 {
            let u = res.abstract_input_norms[k];
            let bound = (1.0 - c.agg.lambda_inf) * v[k] + c.agg.rho_ext * u * u;
            prop_assert!(v[k + 1] <= bound * (1.0 + 1e-8) + 1e-13, "step {}: {} > {}", k, v[k + 1], bound);
        }
    }

    #[test]
    fn envelope_holds(seed in any::<u64>()) {
        let c = certified(seed);
        let res = simulate(&c, 120, seed);
        let v0 = res.lyapunov.as_ref().unwrap()[0];
        let rep = netabs::simulator::check_envelope(&res, &c.agg, v0);
        prop_assert!(rep.holds, "first violation at {:?}", rep.first_violation);
    }

    #[test]
    fn thread_count_does_not_change_results(seed in any::<u64>()) {
        let c = certified(seed);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| simulate(&c, 40, seed))
        };
        let (a, b) = (run(1), run(4));
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.error_norms), bits(&b.error_norms));
        prop_assert_eq!(bits(a.lyapunov.as_ref().unwrap()), bits(b.lyapunov.as_ref().unwrap()));
        let (fa, fb) = (a.final_state.unwrap(), b.final_state.unwrap());
        prop_assert_eq!(fa.x, fb.x);
        prop_assert_eq!(fa.x_hat, fb.x_hat);
    }

    #[test]
    fn decoupled_nodes_evolve_in_isolation(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let size = rng.random_range(2..=5usize);
        let degrees = [1, 1];
        let mut shape = common::KindShape::random(&mut rng, 3, degrees, 0.0);
        shape.q = 1;
        shape.widths = [1, 1];
        let (kind, design) = common::random_kind(&mut rng, shape);
        prop_assert!(kind.modes().iter().all(|m| m.d.iter().all(|v| *v == 0.0)));
        let net = common::random_network(&mut rng, size, vec![kind.clone()], degrees);
        let params = PipelineParams::default();
        let Ok(bundle) = certify_network(&net, &Design { kinds: vec![design.clone()] }, &params) else { return Ok(()) };
        let input = ConstantInput(vec![0.3; shape.nh]);
        let init = NetworkState::sampled(&net, &bundle, InitialKind::Random, 1.0, seed).unwrap();
        let horizon = 30;
        let sim = |net: &Network, bundle: &AbstractionBundle, init: &NetworkState| {
            Simulation { network: net, bundle, input: &input, boundary: &ZeroBoundary, exogenous: None, weights: None }
                .run(init, horizon, &mut NullSink)
                .unwrap()
                .final_state
                .unwrap()
        };
        let joint = sim(&net, &bundle, &init);
        // Same kind with no internal input, one node at a time.
        let lone_kind = SwitchedSubsystem::new(
            kind.modes().iter().map(|m| ModeMatrices::new(m.a.clone(), m.b.clone(), m.c.clone(), Mat::zeros(m.a.nrows(), 0))).collect(),
        ).unwrap();
        let mut lone_design = design.clone();
        for md in &mut lone_design.modes {
            md.d_hat = Some(Mat::zeros(shape.nh, 0));
        }
        for i in 0..size {
            let node = Node {
                kind: 0,
                in_neighbors: vec![Vec::new(), Vec::new()],
                partition: OutputPartition::Broadcast,
                switching: Arc::clone(&net.nodes[i].switching),
            };
            let lone = Network::new(vec![Arc::new(lone_kind.clone())], vec![node], Vec::new()).unwrap();
            let lb = certify_network(&lone, &Design { kinds: vec![KindDesign { modes: lone_design.modes.clone() }] }, &params).unwrap();
            let li = NetworkState::new(&lone, vec![init.x[i].clone()], vec![init.x_hat[i].clone()]);
            let out = sim(&lone, &lb, &li);
            prop_assert!((&out.x[0] - &joint.x[i]).norm() <= 1e-12 * (1.0 + joint.x[i].norm()));
            prop_assert!((&out.x_hat[0] - &joint.x_hat[i]).norm() <= 1e-12 * (1.0 + joint.x_hat[i].norm()));
        }
    }
}
