//! Outer layer: bisection on the energy-efficiency parameter `eta`.
//!
//! For each `eta` the parametric problem `F(eta) = max f1 - eta f2` is solved
//! approximately by alternating WMMSE inner solves with per-BS tilt scans.
//! `F` is strictly decreasing with its root at the optimal EE, so the sign of
//! `F(eta)` tells which half of the bracket holds the root.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::objective::{
    consumed_power, r_max, total_ee, weighted_sum_rate, Beamformers, LinkGains, PatternMode, PowerModel,
    RateUnit, Solution, Weights,
};
use crate::pattern::{clustering_threshold_deg, concavity_halfwidth_deg, PatternParams};
use crate::scenario::Drop;
use crate::tiltsearch::{
    chosen_user, cluster_users, greedy_tilt_scan, oracle_candidates, scan_candidates, TILT_MAX_DEG, TILT_MIN_DEG,
};
use crate::wmmse::{inner_solve, update_filters, update_slacks, InnerOptions, InnerProblem, InnerState, InnerTraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterConfig {
    /// Bisection stops once the `eta` bracket is narrower than this.
    pub epsilon: f64,
    /// Inner stopping tolerance on successive `G` values.
    pub delta: f64,
    pub tilt_step_deg: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Cap on (inner solve, tilt scan) alternations per `F(eta)` evaluation.
    pub max_joint_rounds: usize,
    /// Overrides the AoA clustering threshold (degrees).
    pub cluster_threshold_deg: Option<f64>,
    /// Scan every cluster instead of only the chosen user's.
    pub scan_all_clusters: bool,
    pub lambda_tol: f64,
    /// Also evaluate every `F(eta)` from the cold start and keep the better one.
    pub cold_restart: bool,
    /// `|F| < zero_band * f2` is treated as `F = 0`.
    pub zero_band: f64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            delta: 1e-3,
            tilt_step_deg: 0.1,
            max_outer_iters: 64,
            max_inner_iters: 200,
            max_joint_rounds: 20,
            cluster_threshold_deg: None,
            scan_all_clusters: false,
            lambda_tol: 1e-12,
            cold_restart: true,
            zero_band: 1e-6,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.delta > 0.0 && self.tilt_step_deg > 0.0) {
            return Err(Error::Config("epsilon, delta and tilt step must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.max_joint_rounds == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if let Some(t) = self.cluster_threshold_deg {
            if !(t > 0.0) {
                return Err(Error::Config("cluster threshold must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn inner_options(&self) -> InnerOptions {
        InnerOptions {
            delta: self.delta,
            max_iters: self.max_inner_iters,
            lambda_tol: self.lambda_tol,
            ..InnerOptions::default()
        }
    }
}

/// How tilts are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltStrategy {
    /// Chosen-user cluster scan.
    Cluster,
    /// Scan of the whole feasible range.
    Exhaustive,
    /// Tilts are never moved from their initial values.
    Fixed,
}

/// One network realization with its power model and weights.
#[derive(Debug, Clone)]
pub struct Instance {
    pub drop: Drop,
    pub boresights_deg: Vec<f64>,
    pub pattern: PatternParams,
    pub channels: ChannelSet,
    pub power: PowerModel,
    pub weights: Weights,
    pub pattern_mode: PatternMode,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        let ch = &self.channels;
        if self.drop.num_cells != ch.num_cells || self.drop.users_per_cell != ch.users_per_cell {
            return Err(Error::Dimension("drop and channels disagree".into()));
        }
        self.pattern.validate()?;
        self.power.validate(ch.antennas, ch.num_cells)?;
        self.weights.validate(ch.num_cells * ch.users_per_cell)
    }

    /// Link gains at `tilts` (ignored in 2D mode).
    pub fn gains(&self, tilts: Option<&[f64]>) -> Result<LinkGains> {
        match (self.pattern_mode, tilts) {
            (PatternMode::TwoD, _) => LinkGains::two_d(&self.drop, &self.boresights_deg, &self.pattern),
            (PatternMode::ThreeD, Some(t)) => {
                LinkGains::three_d(&self.drop, &self.boresights_deg, &self.pattern, t)
            }
            (PatternMode::ThreeD, None) => Err(Error::Config("3D gains need tilts".into())),
        }
    }

    /// Starting tilts: the mean serving-link AoA of each cell.
    pub fn initial_tilts(&self) -> Option<Vec<f64>> {
        (self.pattern_mode == PatternMode::ThreeD).then(|| {
            (0..self.drop.num_cells)
                .map(|j| {
                    let a = self.drop.serving_aoas(j);
                    (a.iter().sum::<f64>() / a.len() as f64).clamp(TILT_MIN_DEG, TILT_MAX_DEG)
                })
                .collect()
        })
    }

    /// Static power floor `M L P_c + L P_0`.
    pub fn static_power(&self) -> f64 {
        self.power.static_power(self.channels.antennas, self.channels.num_cells)
    }

    pub fn eta_max(&self) -> Result<f64> {
        let peak = crate::pattern::db_to_lin(self.pattern.g_max_db);
        Ok(r_max(&self.channels, self.power.p_max, peak, &self.weights)? / self.static_power())
    }

    pub fn ee(&self, w: &Beamformers, tilts: Option<&[f64]>) -> Result<f64> {
        let gains = self.gains(tilts)?;
        total_ee(w, &gains, &self.channels, &self.power, &self.weights, RateUnit::Nats)
    }

    fn threshold(&self, cfg: &OuterConfig) -> f64 {
        cfg.cluster_threshold_deg
            .unwrap_or_else(|| clustering_threshold_deg(&self.pattern))
    }
}

/// Operating point used to start an `F(eta)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub w: Beamformers,
    pub tilts: Option<Vec<f64>>,
}

impl StartPoint {
    /// Matched beamformers at full power and mean-AoA tilts.
    pub fn cold(inst: &Instance) -> Self {
        Self {
            w: Beamformers::matched(&inst.channels, inst.power.p_max),
            tilts: inst.initial_tilts(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub inner_sweeps: usize,
    pub inner_solves: usize,
    pub inner_nonconverged: usize,
    pub tilt_evaluations: usize,
    pub joint_rounds: usize,
}

impl SolveStats {
    fn absorb(&mut self, o: &SolveStats) {
        self.inner_sweeps += o.inner_sweeps;
        self.inner_solves += o.inner_solves;
        self.inner_nonconverged += o.inner_nonconverged;
        self.tilt_evaluations += o.tilt_evaluations;
        self.joint_rounds += o.joint_rounds;
    }
}

/// Result of one `F(eta)` evaluation.
#[derive(Debug, Clone)]
pub struct FEval {
    pub eta: f64,
    /// `f1 - eta f2` at the returned point.
    pub f_value: f64,
    /// `f1 - eta xi sum ||w||^2` at the returned point.
    pub g_value: f64,
    pub w: Beamformers,
    pub tilts: Option<Vec<f64>>,
    pub u: Vec<Complex64>,
    pub s: Vec<f64>,
    pub stats: SolveStats,
    pub inner_trace: Vec<InnerTraceRow>,
}

/// Best tilt for BS `j` under `strategy`, with every candidate scored by the
/// true `G` after re-solving BS `j`'s beamformers at fixed filters and slacks.
fn scan_bs(
    inst: &Instance,
    cfg: &OuterConfig,
    strategy: TiltStrategy,
    j: usize,
    eta: f64,
    gains: &LinkGains,
    state: &InnerState,
    evaluations: &mut usize,
) -> Result<Option<(f64, f64, Beamformers)>> {
    let mut err = None;
    let mut eval = |t: f64| -> f64 {
        *evaluations += 1;
        let r = (|| {
            let mut g2 = gains.clone();
            g2.set_tilt(j, t)?;
            let prob = InnerProblem {
                ch: &inst.channels,
                gains: &g2,
                eta,
                pm: &inst.power,
                weights: &inst.weights,
            };
            let mut w = state.w.clone();
            prob.solve_bs(j, &state.u, &state.s, &mut w, cfg.lambda_tol)?;
            prob.g(&w)
        })();
        match r {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    };
    let best = match strategy {
        TiltStrategy::Fixed => return Ok(None),
        TiltStrategy::Exhaustive => {
            let aoas = inst.drop.serving_aoas(j);
            let hw = concavity_halfwidth_deg(&inst.pattern);
            let cand = oracle_candidates(&aoas, inst.threshold(cfg), hw, cfg.tilt_step_deg)?;
            scan_candidates(&cand, &mut eval)?
        }
        TiltStrategy::Cluster => {
            let aoas = inst.drop.serving_aoas(j);
            let clusters = cluster_users(&aoas, inst.threshold(cfg))?;
            let hw = concavity_halfwidth_deg(&inst.pattern);
            let (chosen, _) = chosen_user(&aoas, &mut eval);
            let mut best: Option<crate::tiltsearch::ScanResult> = None;
            for c in clusters.iter().filter(|c| cfg.scan_all_clusters || c.contains(chosen)) {
                let r = greedy_tilt_scan(c, hw, cfg.tilt_step_deg, &mut eval)?;
                if best.is_none_or(|b| r.value > b.value) {
                    best = Some(r);
                }
            }
            best.expect("chosen user belongs to a cluster")
        }
    };
    if let Some(e) = err {
        return Err(e);
    }
    // Rebuild the winning beamformers (deterministic, same as the evaluation).
    let mut g2 = gains.clone();
    g2.set_tilt(j, best.tilt_deg)?;
    let prob = InnerProblem {
        ch: &inst.channels,
        gains: &g2,
        eta,
        pm: &inst.power,
        weights: &inst.weights,
    };
    let mut w = state.w.clone();
    prob.solve_bs(j, &state.u, &state.s, &mut w, cfg.lambda_tol)?;
    Ok(Some((best.tilt_deg, best.value, w)))
}

/// Approximates `F(eta) = max_(W, tilt) f1 - eta f2` from `start`.
///
/// Alternates an inner solve at fixed tilts with one tilt scan per BS (in index
/// order, each using the latest tilts of the others). A scanned tilt is kept
/// only if it raises `G`, so `G` never decreases. Stops once a full round
/// improves `G` by less than `delta`.
pub fn f_eta(
    inst: &Instance,
    eta: f64,
    cfg: &OuterConfig,
    strategy: TiltStrategy,
    start: &StartPoint,
    trace: bool,
) -> Result<FEval> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta must be non-negative, got {eta}")));
    }
    let strategy = if inst.pattern_mode == PatternMode::TwoD {
        TiltStrategy::Fixed
    } else {
        strategy
    };
    let opts = cfg.inner_options();
    let mut tilts = start.tilts.clone();
    let mut gains = inst.gains(tilts.as_deref())?;
    let mut stats = SolveStats::default();
    let mut inner_trace = Vec::new();

    let solve = |gains: &LinkGains, w: Beamformers, stats: &mut SolveStats, rows: &mut Vec<InnerTraceRow>| {
        let prob = InnerProblem {
            ch: &inst.channels,
            gains,
            eta,
            pm: &inst.power,
            weights: &inst.weights,
        };
        let r = inner_solve(&prob, w, &opts, trace)?;
        stats.inner_solves += 1;
        stats.inner_sweeps += r.state.iter;
        stats.inner_nonconverged += usize::from(!r.converged);
        rows.extend(r.trace);
        Ok::<_, Error>(r.state)
    };

    let mut state = solve(&gains, start.w.clone(), &mut stats, &mut inner_trace)?;
    if strategy != TiltStrategy::Fixed {
        for _ in 0..cfg.max_joint_rounds {
            stats.joint_rounds += 1;
            let round_start = state.g_current;
            let mut moved = false;
            for j in 0..inst.channels.num_cells {
                let found = scan_bs(inst, cfg, strategy, j, eta, &gains, &state, &mut stats.tilt_evaluations)?;
                if let Some((t, value, w)) = found {
                    if value > state.g_current {
                        gains.set_tilt(j, t)?;
                        if let Some(ts) = tilts.as_mut() {
                            ts[j] = t;
                        }
                        let prob = InnerProblem {
                            ch: &inst.channels,
                            gains: &gains,
                            eta,
                            pm: &inst.power,
                            weights: &inst.weights,
                        };
                        state = prob.state(w)?;
                        moved = true;
                    }
                }
            }
            if moved {
                state = solve(&gains, state.w, &mut stats, &mut inner_trace)?;
            }
            if !moved || state.g_current - round_start < cfg.delta {
                break;
            }
        }
    }
    let f_value = state.g_current - eta * inst.static_power();
    Ok(FEval {
        eta,
        f_value,
        g_value: state.g_current,
        w: state.w,
        tilts,
        u: state.u,
        s: state.s,
        stats,
        inner_trace,
    })
}

/// One row of the outer diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterTraceRow {
    pub iter: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta: f64,
    pub f_value: f64,
}

impl OuterTraceRow {
    pub const HEADER: &'static str = "iter,eta_min,eta_max,eta,f_value";

    pub fn to_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{},{},{},{}", self.iter, self.eta_min, self.eta_max, self.eta, self.f_value);
        s
    }
}

#[derive(Debug, Clone)]
pub struct OuterResult {
    pub solution: Solution,
    /// Bisection steps taken.
    pub iterations: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_max_initial: f64,
    /// Weighted sum rate (nats) at the returned point.
    pub sum_rate: f64,
    /// Mean per-BS transmit power at the returned point.
    pub mean_bs_power: f64,
    pub stats: SolveStats,
    pub trace: Vec<OuterTraceRow>,
    pub inner_trace: Vec<InnerTraceRow>,
}

/// Number of bisection steps needed to shrink `[0, eta_max]` below `epsilon`.
pub fn bisection_steps(eta_max: f64, epsilon: f64) -> usize {
    let mut width = eta_max;
    let mut n = 0;
    while width >= epsilon {
        width /= 2.0;
        n += 1;
    }
    n
}

/// `F(eta)` from each start in turn, keeping the largest value (first wins
/// ties). Statistics and traces cover every run.
pub fn f_eta_best(
    inst: &Instance,
    eta: f64,
    cfg: &OuterConfig,
    strategy: TiltStrategy,
    starts: &[&StartPoint],
    trace: bool,
) -> Result<FEval> {
    let mut best: Option<FEval> = None;
    let mut stats = SolveStats::default();
    let mut rows = Vec::new();
    for start in starts {
        let fe = f_eta(inst, eta, cfg, strategy, start, trace)?;
        stats.absorb(&fe.stats);
        rows.extend(fe.inner_trace.iter().cloned());
        if best.as_ref().is_none_or(|b| fe.f_value > b.f_value) {
            best = Some(fe);
        }
    }
    let mut best = best.ok_or_else(|| Error::Config("no start point given".into()))?;
    best.stats = stats;
    best.inner_trace = rows;
    Ok(best)
}

/// Bisection on `eta` over `[0, R_max / (M L P_c + L P_0)]`.
///
/// `F(eta) > 0` raises `eta_min`, otherwise `eta_max` drops. Each evaluation
/// starts from the highest-EE point found so far, which keeps every bracket
/// update consistent with the best known point, and optionally also from the
/// cold start so a BS switched off at a large `eta` can come back. Returns that best point with
/// its EE recomputed from scratch.
pub fn outer_solve(inst: &Instance, cfg: &OuterConfig, strategy: TiltStrategy, trace: bool) -> Result<OuterResult> {
    inst.validate()?;
    cfg.validate()?;
    let cold = StartPoint::cold(inst);
    let mut best = cold.clone();
    let mut best_ee = inst.ee(&best.w, best.tilts.as_deref())?;
    let mut best_us: Option<(Vec<Complex64>, Vec<f64>)> = None;

    let eta_max_initial = inst.eta_max()?;
    let (mut eta_min, mut eta_max) = (0.0, eta_max_initial);
    let mut iterations = 0;
    let mut stats = SolveStats::default();
    let mut rows = Vec::new();
    let mut inner_rows = Vec::new();

    let consider = |fe: &FEval, best: &mut StartPoint, best_ee: &mut f64, best_us: &mut Option<_>| -> Result<()> {
        let ee = inst.ee(&fe.w, fe.tilts.as_deref())?;
        if ee > *best_ee || best_us.is_none() && ee >= *best_ee {
            *best_ee = ee;
            *best = StartPoint {
                w: fe.w.clone(),
                tilts: fe.tilts.clone(),
            };
            *best_us = Some((fe.u.clone(), fe.s.clone()));
        }
        Ok(())
    };

    while eta_max - eta_min >= cfg.epsilon && iterations < cfg.max_outer_iters {
        let eta = 0.5 * (eta_min + eta_max);
        let starts: Vec<&StartPoint> = if cfg.cold_restart && best != cold { vec![&best, &cold] } else { vec![&best] };
        let fe = f_eta_best(inst, eta, cfg, strategy, &starts, trace)?;
        iterations += 1;
        stats.absorb(&fe.stats);
        inner_rows.extend(fe.inner_trace.iter().cloned());
        consider(&fe, &mut best, &mut best_ee, &mut best_us)?;
        let f2 = consumed_power(&fe.w, &inst.power);
        if fe.f_value > cfg.zero_band * f2 {
            eta_min = eta;
        } else {
            eta_max = eta;
        }
        rows.push(OuterTraceRow {
            iter: iterations,
            eta_min,
            eta_max,
            eta,
            f_value: fe.f_value,
        });
    }
    if best_us.is_none() {
        // Degenerate bracket: nothing was solved, so solve once at eta_min.
        let starts: Vec<&StartPoint> = if cfg.cold_restart && best != cold { vec![&best, &cold] } else { vec![&best] };
        let fe = f_eta_best(inst, eta_min, cfg, strategy, &starts, trace)?;
        stats.absorb(&fe.stats);
        consider(&fe, &mut best, &mut best_ee, &mut best_us)?;
    }

    let gains = inst.gains(best.tilts.as_deref())?;
    let (u, s) = match best_us {
        Some(us) => us,
        None => {
            // The cold start was never improved on.
            let u = update_filters(&best.w, &gains, &inst.channels)?;
            let s = update_slacks(&best.w, &u, &gains, &inst.channels)?;
            (u, s)
        }
    };
    let ee = total_ee(&best.w, &gains, &inst.channels, &inst.power, &inst.weights, RateUnit::Nats)?;
    let sum_rate = weighted_sum_rate(&best.w, &gains, &inst.channels, &inst.weights)?;
    let l = inst.channels.num_cells;
    let mean_bs_power = (0..l).map(|j| best.w.bs_power(j)).sum::<f64>() / l as f64;
    Ok(OuterResult {
        solution: Solution {
            w: best.w,
            tilt_deg: best.tilts,
            u,
            s,
            eta: 0.5 * (eta_min + eta_max),
            ee,
        },
        iterations,
        eta_min,
        eta_max,
        eta_max_initial,
        sum_rate,
        mean_bs_power,
        stats,
        trace: rows,
        inner_trace: inner_rows,
    })
}
