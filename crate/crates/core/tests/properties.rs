mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use tiltbeam::objective::{
    all_mse, g_value, h_value, mse, sinr, user_rate_nats, Beamformers, LinkGains,
};
use tiltbeam::pattern::{gain_db, wrap_deg, PatternParams};
use tiltbeam::seed::derive_seed;
use tiltbeam::wmmse::{bs_lagrangian, solve_beamformers_bs, update_filters, update_slacks};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gain_stays_between_floor_and_peak(
        tilt in 0.0f64..90.0, theta in 0.0f64..90.0, bore in -720.0f64..720.0, phi in -720.0f64..720.0,
    ) {
        let p = PatternParams::default();
        let g = gain_db(&p, tilt, theta, bore, phi).unwrap();
        prop_assert!(g <= p.g_max_db + 1e-12);
        prop_assert!(g >= p.g_max_db - p.sll_az_db - p.sll_el_db - 1e-12);
    }

    #[test]
    fn gain_is_even_and_periodic(tilt in 10.0f64..80.0, off in 0.0f64..10.0, bore in -180.0f64..180.0, phi in -180.0f64..180.0) {
        let p = PatternParams::default();
        let a = gain_db(&p, tilt, tilt + off, bore, phi).unwrap();
        let b = gain_db(&p, tilt, tilt - off, bore + 360.0, phi - 720.0).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        let w = wrap_deg(bore - phi);
        prop_assert!(w > -180.0 && w <= 180.0);
    }

    #[test]
    fn derived_seeds_differ_by_stream(base in any::<u64>(), idx in 0u64..1000) {
        prop_assert_ne!(derive_seed(base, idx, 0), derive_seed(base, idx, 1));
        prop_assert_ne!(derive_seed(base, idx, 0), derive_seed(base, idx + 1, 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinr_matches_hand_expansion(seed in 0u64..10_000) {
        let c = common::case(seed);
        let (l, k) = (c.ch.num_cells, c.ch.users_per_cell);
        for j in 0..l {
            for m in 0..k {
                let mut signal = 0.0;
                let mut interference = 0.0;
                for i in 0..l {
                    for n in 0..k {
                        let g = c.ch.g(i, j, m);
                        let w = c.w.w(i, n);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for t in 0..g.len() {
                            acc += g[t].conj() * w[t];
                        }
                        let p = c.gains.alpha(i, j, m) * acc.norm_sqr();
                        if i == j && n == m { signal = p } else { interference += p }
                    }
                }
                let expect = signal / (1.0 + interference);
                let got = sinr(j, m, &c.w, &c.gains, &c.ch).unwrap();
                prop_assert!((got - expect).abs() <= 1e-10 * (1.0 + expect));
            }
        }
    }

    #[test]
    fn surrogate_equals_objective_at_optimal_filters(seed in 0u64..10_000) {
        let c = common::case(seed);
        let u = update_filters(&c.w, &c.gains, &c.ch).unwrap();
        let s = update_slacks(&c.w, &u, &c.gains, &c.ch).unwrap();
        let h = h_value(&c.w, &u, &s, &c.gains, &c.ch, c.eta, &c.pm, &c.weights).unwrap();
        let g = g_value(&c.w, &c.gains, &c.ch, c.eta, &c.pm, &c.weights).unwrap();
        prop_assert!((h - g).abs() <= 1e-9 * (1.0 + g.abs()));
    }

    #[test]
    fn optimal_filter_minimizes_mse(seed in 0u64..10_000, dr in -1.0f64..1.0, di in -1.0f64..1.0, scale in 1e-3f64..1.0) {
        let c = common::case(seed);
        let u = update_filters(&c.w, &c.gains, &c.ch).unwrap();
        let k = c.ch.users_per_cell;
        for (idx, &uo) in u.iter().enumerate() {
            let (j, m) = (idx / k, idx % k);
            let e0 = mse(j, m, &c.w, uo, &c.gains, &c.ch).unwrap();
            let du = Complex64::new(dr, di) * scale * (uo.norm() + 1e-3);
            let e1 = mse(j, m, &c.w, uo + du, &c.gains, &c.ch).unwrap();
            prop_assert!(e1 >= e0 - 1e-12 * e0.max(1.0));
        }
    }

    #[test]
    fn optimal_slack_maximizes_surrogate(seed in 0u64..10_000, f in 0.5f64..2.0) {
        let c = common::case(seed);
        let u = update_filters(&c.w, &c.gains, &c.ch).unwrap();
        let s = update_slacks(&c.w, &u, &c.gains, &c.ch).unwrap();
        let h0 = h_value(&c.w, &u, &s, &c.gains, &c.ch, c.eta, &c.pm, &c.weights).unwrap();
        let s1: Vec<f64> = s.iter().map(|x| x * f).collect();
        let h1 = h_value(&c.w, &u, &s1, &c.gains, &c.ch, c.eta, &c.pm, &c.weights).unwrap();
        prop_assert!(h1 <= h0 + 1e-12 * (1.0 + h0.abs()));
    }

    #[test]
    fn rates_ignore_beamformer_phase(seed in 0u64..10_000, phase in 0.0f64..6.283) {
        let c = common::case(seed);
        let mut w = c.w.clone();
        let rot = Complex64::from_polar(1.0, phase);
        for j in 0..w.num_cells {
            for m in 0..w.users_per_cell {
                w.w_mut(j, m).iter_mut().for_each(|z| *z *= rot);
            }
        }
        let k = c.ch.users_per_cell;
        for idx in 0..c.ch.num_cells * k {
            let a = user_rate_nats(idx / k, idx % k, &c.w, &c.gains, &c.ch).unwrap();
            let b = user_rate_nats(idx / k, idx % k, &w, &c.gains, &c.ch).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn rates_covariant_under_gain_rescaling(seed in 0u64..10_000, log_c in -2.0f64..2.0) {
        // Scaling every pattern gain by c and every beamformer by 1/sqrt(c) changes nothing.
        let c = common::synthetic_case(seed);
        let f = 10f64.powf(log_c);
        let (l, k) = (c.ch.num_cells, c.ch.users_per_cell);
        let mut alpha = Vec::new();
        for i in 0..l { for j in 0..l { for m in 0..k { alpha.push(c.gains.alpha(i, j, m) * f); } } }
        let gains = LinkGains::from_alpha(l, k, alpha).unwrap();
        let mut w = c.w.clone();
        w.data.iter_mut().for_each(|z| *z /= f.sqrt());
        let e0 = all_mse(&c.w, &update_filters(&c.w, &c.gains, &c.ch).unwrap(), &c.gains, &c.ch).unwrap();
        let e1 = all_mse(&w, &update_filters(&w, &gains, &c.ch).unwrap(), &gains, &c.ch).unwrap();
        for (a, b) in e0.iter().zip(&e1) {
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
        }
    }
}

/// Random search over the feasible set of a two-antenna BS never beats the solver.
#[test]
fn beamformer_update_beats_random_feasible_points() {
    for seed in 0..20u64 {
        let mut c = common::synthetic_case(seed * 2 + 1);
        // One cell, one user, two antennas.
        let mut r = common::rng(seed);
        let g: Vec<Complex64> = (0..2).map(|_| common::cn(&mut r)).collect();
        c.ch = tiltbeam::channel::ChannelSet::from_vectors(1, 1, 2, g).unwrap();
        c.gains = LinkGains::from_alpha(1, 1, vec![r.random_range(0.1..10.0)]).unwrap();
        c.weights = tiltbeam::objective::Weights::uniform(1, 1);
        c.w = common::random_beamformers(1, 1, 2, c.pm.p_max, &mut r);
        let u = update_filters(&c.w, &c.gains, &c.ch).unwrap();
        let s = update_slacks(&c.w, &u, &c.gains, &c.ch).unwrap();
        let sol = solve_beamformers_bs(0, &u, &s, &c.gains, &c.ch, c.eta, &c.pm, &c.weights, 1e-12).unwrap();
        let obj = |w: &[Complex64]| bs_lagrangian(0, w, 0.0, &u, &s, &c.gains, &c.ch, c.eta, &c.pm, &c.weights);
        let best = obj(&sol.w);
        for _ in 0..20_000 {
            let mut w = [common::cn(&mut r), common::cn(&mut r)];
            let n2: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            let scale = (r.random_range(0.0..1.0) * c.pm.p_max / n2).sqrt();
            w.iter_mut().for_each(|z| *z *= scale);
            assert!(obj(&w) <= best + 1e-9 * (1.0 + best.abs()), "seed {seed}");
        }
        assert!(sol.power <= c.pm.p_max * (1.0 + 1e-9));
    }
}

#[test]
fn zero_beamformers_give_zero_rate() {
    let c = common::drop_case(4);
    let w = Beamformers::zeros(c.ch.num_cells, c.ch.users_per_cell, c.ch.antennas);
    assert_eq!(g_value(&w, &c.gains, &c.ch, c.eta, &c.pm, &c.weights).unwrap(), 0.0);
}
