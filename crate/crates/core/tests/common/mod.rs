#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tiltbeam::channel::ChannelSet;
use tiltbeam::harness::{drop_context, ExperimentConfig};
use tiltbeam::objective::{Beamformers, LinkGains, PowerModel, Weights};
use tiltbeam::seed::rng_from_seed;

/// A random but fully specified inner-problem instance.
pub struct Case {
    pub ch: ChannelSet,
    pub gains: LinkGains,
    pub w: Beamformers,
    pub pm: PowerModel,
    pub weights: Weights,
    pub eta: f64,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_from_seed(seed)
}

pub fn cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Beamformers with i.i.d. entries, each BS scaled to a random fraction of `p_max`.
pub fn random_beamformers(l: usize, k: usize, m: usize, p_max: f64, rng: &mut impl Rng) -> Beamformers {
    let mut w = Beamformers::zeros(l, k, m);
    for j in 0..l {
        for n in 0..k {
            for z in w.w_mut(j, n) {
                *z = cn(rng);
            }
        }
        let scale = (rng.random_range(0.05..1.0) * p_max / w.bs_power(j)).sqrt();
        for n in 0..k {
            w.w_mut(j, n).iter_mut().for_each(|z| *z *= scale);
        }
    }
    w
}

/// Geometry, channels and tilts from a seeded drop of a random small network.
pub fn drop_case(seed: u64) -> Case {
    let mut r = rng(seed);
    let mut cfg = ExperimentConfig::default();
    cfg.base_seed = seed;
    let l = r.random_range(1..=3usize);
    let k = r.random_range(1..=3usize);
    let m = r.random_range(1..=4usize);
    let net = cfg.network_for(k, m);
    let net = tiltbeam::scenario::NetworkConfig { num_cells: l, ..net };
    let ctx = drop_context(&cfg, &net, 0).expect("drop");
    let tilts: Vec<f64> = (0..l).map(|_| r.random_range(0.01..89.99)).collect();
    let gains = LinkGains::three_d(&ctx.drop, &ctx.boresights_deg, &cfg.pattern, &tilts).expect("gains");
    let p_dbm = r.random_range(22.0..50.0);
    let pm = cfg.power_model(p_dbm);
    let w = random_beamformers(l, k, m, pm.p_max, &mut r);
    let weights = Weights {
        b: (0..l * k).map(|_| r.random_range(0.2..2.0)).collect(),
    };
    let eta = r.random_range(0.0..0.5);
    Case { ch: ctx.channels, gains, w, pm, weights, eta }
}

/// Synthetic channels and gains spanning several orders of magnitude.
pub fn synthetic_case(seed: u64) -> Case {
    let mut r = rng(seed);
    let l = r.random_range(1..=3usize);
    let k = r.random_range(1..=3usize);
    let m = r.random_range(1..=4usize);
    let links = l * l * k;
    let g: Vec<Complex64> = (0..links * m)
        .map(|_| cn(&mut r) * 10f64.powf(r.random_range(-2.0..1.0)))
        .collect();
    let ch = ChannelSet::from_vectors(l, k, m, g).expect("channels");
    let alpha = (0..links).map(|_| 10f64.powf(r.random_range(-3.0..1.5))).collect();
    let gains = LinkGains::from_alpha(l, k, alpha).expect("gains");
    let pm = PowerModel {
        p_max: 10f64.powf(r.random_range(-1.0..2.0)),
        p_c: 1.0,
        p_0: 10.0,
        xi: r.random_range(0.5..2.0),
    };
    let w = random_beamformers(l, k, m, pm.p_max, &mut r);
    let weights = Weights {
        b: (0..l * k).map(|_| r.random_range(0.2..2.0)).collect(),
    };
    let eta = r.random_range(0.0..1.0);
    Case { ch, gains, w, pm, weights, eta }
}

/// Alternates between the two generators.
pub fn case(seed: u64) -> Case {
    if seed % 2 == 0 {
        drop_case(seed)
    } else {
        synthetic_case(seed)
    }
}
