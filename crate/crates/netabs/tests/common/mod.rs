//! Seeded random instances shared by the integration targets.
#![allow(dead_code)]

use std::sync::Arc;

use netabs::bundle::AbstractionBundle;
use netabs::linalg::{spectral_norm, Mat};
use netabs::model::{
    Design, KindDesign, ModeDesign, ModeMatrices, Network, Node, OutputPartition, Source,
    SwitchedSubsystem, SwitchingSignal,
};
use netabs::pipeline::{certify_network, PipelineParams};
use netabs::smallgain::{
    mu_registry, AggregateCertificate, GainOperator, MuCertificate, MuOptions,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Shape of a random kind.
#[derive(Debug, Clone, Copy)]
pub struct KindShape {
    pub n: usize,
    pub nh: usize,
    pub m: usize,
    pub q: usize,
    /// Internal input width per mode.
    pub widths: [usize; 2],
    pub coupling: f64,
}

impl KindShape {
    pub fn random(rng: &mut ChaCha8Rng, max_n: usize, degrees: [usize; 2], coupling: f64) -> Self {
        let n = rng.random_range(1..=max_n);
        let nh = rng.random_range(1..=n);
        let m = rng.random_range(1..=n);
        let q = rng.random_range(1..=2usize.min(n));
        Self {
            n,
            nh,
            m,
            q,
            widths: [degrees[0] * q, degrees[1] * q],
            coupling,
        }
    }
}

/// Two-mode kind built so that a common random `P` solves the interconnection conditions:
/// `A = (P Ah - B Q) P^+ + Z (I - P P^+)` and `D = P Dh - B T`.
pub fn random_kind(rng: &mut ChaCha8Rng, s: KindShape) -> (SwitchedSubsystem, KindDesign) {
    let p = gauss(rng, s.n, s.nh, 1.0);
    let pinv = p.clone().pseudo_inverse(1e-12).expect("pseudo inverse");
    let proj = Mat::identity(s.n, s.n) - &p * &pinv;
    let mut modes = Vec::new();
    let mut design = KindDesign::default();
    for w in s.widths {
        let b = gauss(rng, s.n, s.m, 1.0);
        let a_hat = gauss(rng, s.nh, s.nh, 0.9 / (s.nh as f64).sqrt());
        let q = gauss(rng, s.m, s.nh, 0.5);
        let z = gauss(rng, s.n, s.n, 0.9 / (s.n as f64).sqrt());
        let a = (&p * &a_hat - &b * &q) * &pinv + z * &proj;
        let d_hat = gauss(rng, s.nh, w, s.coupling);
        let t = gauss(rng, s.m, w, s.coupling);
        let d = &p * &d_hat - &b * t;
        let c = gauss(rng, s.q, s.n, 1.0);
        modes.push(ModeMatrices::new(a, b, c, d));
        design.modes.push(ModeDesign {
            p: Some(p.clone()),
            d_hat: Some(d_hat),
            ..ModeDesign::default()
        });
    }
    (
        SwitchedSubsystem::new(modes).expect("consistent kind"),
        design,
    )
}

/// Random directed graph with fixed in-degree per mode and per-node periodic switching.
pub fn random_network(
    rng: &mut ChaCha8Rng,
    size: usize,
    kinds: Vec<SwitchedSubsystem>,
    degrees: [usize; 2],
) -> Network {
    let nk = kinds.len();
    let nodes = (0..size)
        .map(|i| {
            let in_neighbors = degrees
                .iter()
                .map(|&d| {
                    let mut pool: Vec<usize> = (0..size).filter(|&j| j != i).collect();
                    let mut picked = Vec::new();
                    for _ in 0..d.min(pool.len()) {
                        let k = rng.random_range(0..pool.len());
                        picked.push(Source::Node(pool.swap_remove(k)));
                    }
                    picked
                })
                .collect();
            Node {
                kind: i % nk,
                in_neighbors,
                partition: OutputPartition::Broadcast,
                switching: Arc::new(SwitchingSignal::Periodic {
                    period: rng.random_range(1..=6),
                    offset: rng.random_range(0..6),
                    sequence: vec![0, 1],
                }),
            }
        })
        .collect();
    Network::new(kinds.into_iter().map(Arc::new).collect(), nodes, Vec::new())
        .expect("valid network")
}

pub struct Certified {
    pub net: Network,
    pub bundle: AbstractionBundle,
    pub op: GainOperator,
    pub mu: MuCertificate,
    pub agg: AggregateCertificate,
}

/// Rejection-samples a network of `2..=max_size` nodes that passes every certification stage
/// and whose abstract modes are contractive. Expanding abstractions drive `x` and `P x_hat`
/// to magnitudes where their difference is pure rounding noise.
pub fn certified_network(
    rng: &mut ChaCha8Rng,
    max_size: usize,
    max_n: usize,
    attempts: usize,
) -> Option<Certified> {
    for _ in 0..attempts {
        let size = rng.random_range(2..=max_size);
        let degrees = [
            rng.random_range(1..=2usize.min(size - 1)),
            rng.random_range(1..=2usize.min(size - 1)),
        ];
        let nk = rng.random_range(1..=2usize);
        // Broadcast outputs must have one width across kinds.
        let q = rng.random_range(1..=2usize.min(max_n));
        let (kinds, designs): (Vec<_>, Vec<_>) = (0..nk)
            .map(|_| {
                let mut shape = KindShape::random(rng, max_n, degrees, 0.05);
                shape.q = q;
                shape.widths = [degrees[0] * q, degrees[1] * q];
                random_kind(rng, shape)
            })
            .unzip();
        let net = random_network(rng, size, kinds, degrees);
        let design = Design { kinds: designs };
        let Ok(bundle) = certify_network(&net, &design, &PipelineParams::default()) else {
            continue;
        };
        if bundle
            .kinds
            .iter()
            .flat_map(|k| &k.modes)
            .any(|m| spectral_norm(&m.a_hat) >= 1.0)
        {
            continue;
        }
        let Ok(op) = GainOperator::from_network(&net, &bundle) else {
            continue;
        };
        let Ok(mu) = mu_registry()
            .get("auto")
            .unwrap()
            .find(&op, &MuOptions::default())
        else {
            continue;
        };
        let Ok(agg) = AggregateCertificate::new(&op, &mu, None) else {
            continue;
        };
        return Some(Certified {
            net,
            bundle,
            op,
            mu,
            agg,
        });
    }
    None
}

/// Symmetric matrix from its upper triangle, row by row.
pub fn from_upper(n: usize, upper: &[f64]) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut it = upper.iter();
    for i in 0..n {
        for j in i..n {
            let v = *it.next().expect("enough entries");
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Printed certificate matrices of the two microgrid modes.
pub fn printed_microgrid_m() -> [Mat; 2] {
    [
        from_upper(
            6,
            &[
                12.291, -0.473, 11.082, -1.081, 7.809, -1.665, 23.041, 0.535, 17.258, 1.780,
                -0.585, 37.993, 26.610, -0.607, -0.458, 47.840, 0.536, -0.358, 20.913, 2.330,
                23.559,
            ],
        ),
        from_upper(
            6,
            &[
                13.013, -0.801, 10.235, -2.132, 6.296, -1.819, 25.612, 0.669, 15.228, 1.171,
                -1.091, 38.619, 24.581, -1.167, -0.915, 49.145, 0.251, -0.958, 22.323, 3.244,
                25.158,
            ],
        ),
    ]
}
