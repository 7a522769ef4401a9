mod common;

use tiltbeam::dinkelbach::{bisection_steps, f_eta, outer_solve, OuterConfig, StartPoint, TiltStrategy};
use tiltbeam::harness::{drop_context, instance, run_drop, run_sweep, ExperimentConfig, Mode};
use tiltbeam::objective::{r_max, total_ee, RateUnit};
use tiltbeam::pattern::{db_to_lin, PatternParams};
use tiltbeam::scenario::{build_layout, drop_users, NetworkConfig};
use tiltbeam::wmmse::{inner_solve, InnerOptions, InnerProblem};
use tiltbeam::Error;

fn desk() -> ExperimentConfig {
    ExperimentConfig::default()
}

#[test]
fn inner_solve_never_reports_a_descent() {
    for seed in 0..60 {
        let c = common::case(500 + seed);
        let prob = InnerProblem { ch: &c.ch, gains: &c.gains, eta: c.eta, pm: &c.pm, weights: &c.weights };
        let opts = InnerOptions { record_blocks: true, ..InnerOptions::default() };
        let r = inner_solve(&prob, c.w.clone(), &opts, true).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].g_value >= w[0].g_value - 1e-9 * (1.0 + w[0].g_value.abs())));
        for j in 0..c.ch.num_cells {
            assert!(r.state.w.bs_power(j) <= c.pm.p_max * (1.0 + 1e-9));
        }
    }
}

#[test]
fn ascent_violation_is_reported_not_hidden() {
    let e = Error::AscentViolation { iter: 3, before: 1.0, after: 0.5 };
    assert!(e.to_string().contains('3'));
}

#[test]
fn outer_solution_is_self_consistent() {
    let cfg = desk();
    let net = cfg.network.clone();
    for (d, p) in [(0usize, 22.0), (1, 40.0), (2, 50.0)] {
        let ctx = drop_context(&cfg, &net, d).unwrap();
        for mode in [Mode::Cluster3d, Mode::Baseline2d] {
            let inst = instance(&cfg, &net, &ctx, p, mode);
            let r = outer_solve(&inst, &cfg.outer, mode.strategy(), true).unwrap();
            let gains = inst.gains(r.solution.tilt_deg.as_deref()).unwrap();
            let ee = total_ee(&r.solution.w, &gains, &inst.channels, &inst.power, &inst.weights, RateUnit::Nats).unwrap();
            assert_eq!(ee, r.solution.ee);
            assert!((r.solution.ee - r.solution.eta).abs() <= 2.0 * cfg.outer.epsilon);
            assert_eq!(r.iterations, bisection_steps(r.eta_max_initial, cfg.outer.epsilon));
            assert_eq!(r.trace.len(), r.iterations);
            assert!(r.solution.eta >= 0.0 && r.solution.eta <= r.eta_max_initial);
            let bound = r_max(&inst.channels, inst.power.p_max, db_to_lin(cfg.pattern.g_max_db), &inst.weights).unwrap();
            assert!(r.sum_rate <= bound);
            for j in 0..net.num_cells {
                assert!(r.solution.w.bs_power(j) <= inst.power.p_max * (1.0 + 1e-9));
            }
            for row in &r.trace {
                assert!(row.eta_min <= row.eta_max);
            }
            if let Some(t) = &r.solution.tilt_deg {
                assert!(t.iter().all(|t| (0.01..=89.99).contains(t)));
            }
        }
    }
}

#[test]
fn f_of_eta_decreases_and_brackets_the_root() {
    let cfg = desk();
    let net = cfg.network.clone();
    let ctx = drop_context(&cfg, &net, 5).unwrap();
    let inst = instance(&cfg, &net, &ctx, 46.0, Mode::Cluster3d);
    let cold = StartPoint::cold(&inst);
    let eta_max = inst.eta_max().unwrap();
    let f: Vec<f64> = (0..=4)
        .map(|k| f_eta(&inst, eta_max * k as f64 / 4.0, &cfg.outer, TiltStrategy::Cluster, &cold, false).unwrap().f_value)
        .collect();
    assert!(f[0] > 0.0);
    assert!(f[4] <= 0.0);
    assert!(f.windows(2).all(|w| w[1] < w[0]), "{f:?}");
    assert!(f_eta(&inst, -1.0, &cfg.outer, TiltStrategy::Cluster, &cold, false).is_err());
}

#[test]
fn tilt_search_only_raises_g() {
    let cfg = desk();
    let net = cfg.network.clone();
    let ctx = drop_context(&cfg, &net, 2).unwrap();
    let inst = instance(&cfg, &net, &ctx, 40.0, Mode::Cluster3d);
    let cold = StartPoint::cold(&inst);
    let eta = 0.5 * inst.eta_max().unwrap();
    let fixed = f_eta(&inst, eta, &cfg.outer, TiltStrategy::Fixed, &cold, false).unwrap();
    let searched = f_eta(&inst, eta, &cfg.outer, TiltStrategy::Cluster, &cold, false).unwrap();
    assert!(searched.g_value >= fixed.g_value - 1e-9);
    assert!(searched.stats.tilt_evaluations > 0);
    assert_eq!(fixed.stats.tilt_evaluations, 0);
}

#[test]
fn cold_restart_can_be_disabled() {
    let mut cfg = desk();
    cfg.outer.cold_restart = false;
    let net = cfg.network.clone();
    let ctx = drop_context(&cfg, &net, 1).unwrap();
    let inst = instance(&cfg, &net, &ctx, 34.0, Mode::Cluster3d);
    let r = outer_solve(&inst, &cfg.outer, TiltStrategy::Cluster, false).unwrap();
    assert!((r.solution.ee - r.solution.eta).abs() <= 2.0 * cfg.outer.epsilon);
}

#[test]
fn flat_elevation_pattern_matches_the_2d_baseline() {
    let mut cfg = desk();
    cfg.pattern = PatternParams { sll_el_db: 1e-12, theta_3db_deg: 1e9, ..PatternParams::default() };
    let net = cfg.network.clone();
    for d in 0..3 {
        let ctx = drop_context(&cfg, &net, d).unwrap();
        let three = outer_solve(&instance(&cfg, &net, &ctx, 46.0, Mode::Cluster3d), &cfg.outer, TiltStrategy::Fixed, false)
            .unwrap();
        let two = outer_solve(&instance(&cfg, &net, &ctx, 46.0, Mode::Baseline2d), &cfg.outer, TiltStrategy::Fixed, false)
            .unwrap();
        assert!((three.solution.ee - two.solution.ee).abs() <= 1e-6, "{} vs {}", three.solution.ee, two.solution.ee);
    }
}

#[test]
fn drops_are_reproducible_and_worker_count_does_not_matter() {
    let cfg = desk();
    let net = cfg.network.clone();
    assert_eq!(run_drop(&cfg, &net, 3, 28.0).unwrap(), run_drop(&cfg, &net, 3, 28.0).unwrap());

    let mut small = desk();
    small.num_drops = 4;
    small.sweep_dbm = vec![28.0];
    small.modes = vec![Mode::Cluster3d, Mode::Baseline2d];
    small.workers = 1;
    let a = run_sweep(&small, |_| Ok(())).unwrap();
    small.workers = 3;
    let b = run_sweep(&small, |_| Ok(())).unwrap();
    let rows = |r: &tiltbeam::harness::SweepResult| r.rows().map(|x| x.to_csv_line()).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&b));
    assert_eq!(rows(&a).len(), 2);
}

#[test]
fn mean_user_distance_matches_numerical_integration() {
    let net = NetworkConfig { num_cells: 1, users_per_cell: 100_000, ..NetworkConfig::default() };
    let layout = build_layout(&net).unwrap();
    let d = drop_users(&net, &layout, 11);
    let empirical = d.distance_m.iter().sum::<f64>() / d.distance_m.len() as f64;

    // Polar integration over a regular hexagon minus a disc; the mean is
    // orientation-free, so use edges normal to multiples of 60 degrees.
    let r = net.cell_radius_m;
    let r0 = net.min_user_distance_m;
    let apothem = r * 3f64.sqrt() / 2.0;
    let n = 600_000;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let psi = (i as f64 + 0.5) / n as f64 * std::f64::consts::PI / 3.0 - std::f64::consts::PI / 6.0;
        let rho = apothem / psi.cos();
        num += (rho.powi(3) - r0.powi(3)) / 3.0;
        den += (rho.powi(2) - r0.powi(2)) / 2.0;
    }
    let analytic = num / den;
    assert!((empirical - analytic).abs() / analytic < 0.01, "{empirical} vs {analytic}");
    assert!(d.distance_m.iter().all(|&x| x >= r0));
}

#[test]
fn bad_outer_settings_are_rejected() {
    let cfg = OuterConfig { tilt_step_deg: 0.0, ..OuterConfig::default() };
    assert!(cfg.validate().is_err());
}

#[test]
fn seeded_drop_matches_frozen_values() {
    let cfg = desk();
    let net = cfg.network.clone();
    let rec = run_drop(&cfg, &net, 0, 40.0).unwrap();
    for (mode, ee, rate) in [
        (Mode::Cluster3d, 1.468713758019e-1, 7.637311541698),
        (Mode::Baseline2d, 1.479703826411e-1, 7.694460158653),
    ] {
        let o = rec.get(mode).unwrap();
        assert!((o.ee - ee).abs() <= 1e-6 * ee, "{} ee {}", mode.as_str(), o.ee);
        assert!((o.sum_rate_nats - rate).abs() <= 1e-6 * rate, "{} rate {}", mode.as_str(), o.sum_rate_nats);
    }
}
