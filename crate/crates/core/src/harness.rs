//! Monte-Carlo experiment driver.
//!
//! A sweep runs every configured mode on the same seeded drops for each
//! `(M, K, P_max)` point. Drops are solved in parallel and reduced in drop
//! order, so results do not depend on the number of workers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channel_set, ChannelSet, FadingParams};
use crate::dinkelbach::{outer_solve, Instance, OuterConfig, OuterResult, TiltStrategy};
use crate::error::{Error, Result};
use crate::objective::{PatternMode, PowerModel, Weights};
use crate::pattern::PatternParams;
use crate::scenario::{build_layout, drop_users, Drop, NetworkConfig};
use crate::seed::{derive_seed, STREAM_CHANNEL, STREAM_PLACEMENT};

/// Solver variant compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "3d_cluster")]
    Cluster3d,
    #[serde(rename = "3d_exhaustive")]
    Exhaustive3d,
    #[serde(rename = "2d_baseline")]
    Baseline2d,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Cluster3d, Mode::Exhaustive3d, Mode::Baseline2d];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cluster3d => "3d_cluster",
            Mode::Exhaustive3d => "3d_exhaustive",
            Mode::Baseline2d => "2d_baseline",
        }
    }

    pub fn strategy(self) -> TiltStrategy {
        match self {
            Mode::Cluster3d => TiltStrategy::Cluster,
            Mode::Exhaustive3d => TiltStrategy::Exhaustive,
            Mode::Baseline2d => TiltStrategy::Fixed,
        }
    }

    pub fn pattern_mode(self) -> PatternMode {
        match self {
            Mode::Baseline2d => PatternMode::TwoD,
            _ => PatternMode::ThreeD,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode {s:?}")))
    }
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub num_drops: usize,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Transmit budgets per BS (dBm).
    pub sweep_dbm: Vec<f64>,
    /// User counts per cell; empty means `network.users_per_cell` only.
    pub sweep_users: Vec<usize>,
    /// Antenna counts; empty means `network.antennas` only.
    pub sweep_antennas: Vec<usize>,
    pub modes: Vec<Mode>,
    pub p_c_dbm: f64,
    pub p_0_dbm: f64,
    pub xi: f64,
    /// Per-user rate weights (cell-major); uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Largest tolerated fraction of inner solves that hit the iteration cap.
    pub max_nonconverged_fraction: f64,
    pub network: NetworkConfig,
    pub fading: FadingParams,
    pub pattern: PatternParams,
    pub outer: OuterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base_seed: 20_240_901,
            num_drops: 100,
            workers: 0,
            sweep_dbm: vec![22.0, 28.0, 34.0, 40.0, 46.0, 50.0],
            sweep_users: Vec::new(),
            sweep_antennas: Vec::new(),
            modes: Mode::ALL.to_vec(),
            p_c_dbm: 30.0,
            p_0_dbm: 40.0,
            xi: 1.0,
            weights: None,
            max_nonconverged_fraction: 0.05,
            network: NetworkConfig::default(),
            fading: FadingParams::default(),
            pattern: PatternParams::default(),
            outer: OuterConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Full-size study: 2500 drops, a 2 dB grid over 22..50 dBm, `M` in {4, 8}.
    pub fn full() -> Self {
        Self {
            num_drops: 2500,
            sweep_dbm: (0..15).map(|i| 22.0 + 2.0 * i as f64).collect(),
            sweep_antennas: vec![4, 8],
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" | "default" => Ok(Self::default()),
            "full" => Ok(Self::full()),
            _ => Err(Error::Config(format!("unknown preset {name:?}"))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn users_values(&self) -> Vec<usize> {
        if self.sweep_users.is_empty() {
            vec![self.network.users_per_cell]
        } else {
            self.sweep_users.clone()
        }
    }

    pub fn antenna_values(&self) -> Vec<usize> {
        if self.sweep_antennas.is_empty() {
            vec![self.network.antennas]
        } else {
            self.sweep_antennas.clone()
        }
    }

    /// Network of one sweep point.
    pub fn network_for(&self, users_per_cell: usize, antennas: usize) -> NetworkConfig {
        NetworkConfig {
            users_per_cell,
            antennas,
            ..self.network.clone()
        }
    }

    pub fn power_model(&self, p_max_dbm: f64) -> PowerModel {
        PowerModel::from_dbm(p_max_dbm, self.p_c_dbm, self.p_0_dbm, self.xi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_drops == 0 {
            return Err(Error::Config("num_drops must be positive".into()));
        }
        if self.sweep_dbm.is_empty() || self.sweep_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("sweep_dbm must be a non-empty list of finite values".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return Err(Error::Config(format!("mode {} listed twice", m.as_str())));
            }
        }
        if !(0.0..=1.0).contains(&self.max_nonconverged_fraction) {
            return Err(Error::Config("max_nonconverged_fraction must lie in [0, 1]".into()));
        }
        self.fading.validate()?;
        self.pattern.validate()?;
        self.outer.validate()?;
        for m in self.antenna_values() {
            for k in self.users_values() {
                let net = self.network_for(k, m);
                net.validate()?;
                for &p in &self.sweep_dbm {
                    self.power_model(p).validate(m, net.num_cells)?;
                }
                if let Some(b) = &self.weights {
                    Weights { b: b.clone() }.validate(net.num_cells * k)?;
                }
            }
        }
        Ok(())
    }

    fn weights_for(&self, net: &NetworkConfig) -> Weights {
        match &self.weights {
            Some(b) => Weights { b: b.clone() },
            None => Weights::uniform(net.num_cells, net.users_per_cell),
        }
    }
}

/// User placement and channels shared by every mode and budget of one drop.
#[derive(Debug, Clone)]
pub struct DropContext {
    pub drop_index: usize,
    pub drop: Drop,
    pub channels: ChannelSet,
    pub boresights_deg: Vec<f64>,
}

pub fn drop_context(cfg: &ExperimentConfig, net: &NetworkConfig, drop_index: usize) -> Result<DropContext> {
    let layout = build_layout(net)?;
    let idx = drop_index as u64;
    let drop = drop_users(net, &layout, derive_seed(cfg.base_seed, idx, STREAM_PLACEMENT));
    let channels = build_channel_set(&drop, net, &cfg.fading, derive_seed(cfg.base_seed, idx, STREAM_CHANNEL))?;
    Ok(DropContext {
        drop_index,
        drop,
        channels,
        boresights_deg: layout.boresights_deg,
    })
}

pub fn instance(cfg: &ExperimentConfig, net: &NetworkConfig, ctx: &DropContext, p_max_dbm: f64, mode: Mode) -> Instance {
    Instance {
        drop: ctx.drop.clone(),
        boresights_deg: ctx.boresights_deg.clone(),
        pattern: cfg.pattern,
        channels: ctx.channels.clone(),
        power: cfg.power_model(p_max_dbm),
        weights: cfg.weights_for(net),
        pattern_mode: mode.pattern_mode(),
    }
}

/// Conventional array: no elevation term, tilts never searched.
pub fn solve_2d_baseline(inst: &Instance, cfg: &OuterConfig) -> Result<OuterResult> {
    let inst = Instance {
        pattern_mode: PatternMode::TwoD,
        ..inst.clone()
    };
    outer_solve(&inst, cfg, TiltStrategy::Fixed, false)
}

pub fn solve_mode(inst: &Instance, cfg: &OuterConfig, mode: Mode, trace: bool) -> Result<OuterResult> {
    match mode {
        Mode::Baseline2d if !trace => solve_2d_baseline(inst, cfg),
        _ => outer_solve(inst, cfg, mode.strategy(), trace),
    }
}

/// Summary of one mode on one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOutcome {
    pub ee: f64,
    pub sum_rate_nats: f64,
    pub mean_bs_power: f64,
    pub max_bs_power: f64,
    pub outer_iters: usize,
    pub tilt_evaluations: usize,
    pub inner_solves: usize,
    pub inner_nonconverged: usize,
    pub tilts_deg: Option<Vec<f64>>,
}

impl ModeOutcome {
    fn from_result(r: &OuterResult) -> Self {
        Self {
            ee: r.solution.ee,
            sum_rate_nats: r.sum_rate,
            mean_bs_power: r.mean_bs_power,
            max_bs_power: (0..r.solution.w.num_cells).map(|j| r.solution.w.bs_power(j)).fold(0.0, f64::max),
            outer_iters: r.iterations,
            tilt_evaluations: r.stats.tilt_evaluations,
            inner_solves: r.stats.inner_solves,
            inner_nonconverged: r.stats.inner_nonconverged,
            tilts_deg: r.solution.tilt_deg.clone(),
        }
    }
}

/// Every mode's outcome on one drop; a failed solve keeps its message.
#[derive(Debug, Clone, PartialEq)]
pub struct DropRecord {
    pub drop_index: usize,
    pub outcomes: Vec<(Mode, std::result::Result<ModeOutcome, String>)>,
}

impl DropRecord {
    pub fn get(&self, mode: Mode) -> Option<&ModeOutcome> {
        self.outcomes
            .iter()
            .find(|(m, _)| *m == mode)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

pub fn run_drop(cfg: &ExperimentConfig, net: &NetworkConfig, drop_index: usize, p_max_dbm: f64) -> Result<DropRecord> {
    let ctx = drop_context(cfg, net, drop_index)?;
    run_on_context(cfg, net, &ctx, p_max_dbm)
}

pub fn run_on_context(cfg: &ExperimentConfig, net: &NetworkConfig, ctx: &DropContext, p_max_dbm: f64) -> Result<DropRecord> {
    let outcomes = cfg
        .modes
        .iter()
        .map(|&mode| {
            let inst = instance(cfg, net, ctx, p_max_dbm, mode);
            let r = solve_mode(&inst, &cfg.outer, mode, false)
                .map(|r| ModeOutcome::from_result(&r))
                .map_err(|e| e.to_string());
            (mode, r)
        })
        .collect();
    Ok(DropRecord {
        drop_index: ctx.drop_index,
        outcomes,
    })
}

/// Sample mean and standard error (`sd / sqrt(n)`, unbiased variance).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One CSV row: a mode averaged over the drops of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_max_dbm: f64,
    pub mode: Mode,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub num_cells: usize,
    pub mean_ee: f64,
    pub stderr_ee: f64,
    pub mean_sumrate_nats: f64,
    pub mean_power_used: f64,
    pub mean_outer_iters: f64,
    /// Drops whose solve succeeded.
    pub drops: usize,
    pub failed: usize,
    pub mean_tilt_evaluations: f64,
    pub inner_solves: usize,
    pub inner_nonconverged: usize,
}

impl SweepRow {
    pub const HEADER: &'static str =
        "p_max_dbm,mode,K,M,L,mean_ee,stderr_ee,mean_sumrate_nats,mean_power_used,mean_outer_iters,drops";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.p_max_dbm,
            self.mode.as_str(),
            self.users_per_cell,
            self.antennas,
            self.num_cells,
            self.mean_ee,
            self.stderr_ee,
            self.mean_sumrate_nats,
            self.mean_power_used,
            self.mean_outer_iters,
            self.drops
        )
    }
}

/// EE gain of the 3D cluster scheme over the 2D baseline at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub p_max_dbm: f64,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub num_cells: usize,
    /// `100 (mean EE_3d - mean EE_2d) / mean EE_2d`.
    pub gain_pct: f64,
    /// Mean and standard error of the per-drop difference `EE_3d - EE_2d`.
    pub mean_diff: f64,
    pub stderr_diff: f64,
    pub drops: usize,
}

impl GainRow {
    pub const HEADER: &'static str = "p_max_dbm,K,M,L,gain_pct,mean_diff,stderr_diff,drops";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.p_max_dbm,
            self.users_per_cell,
            self.antennas,
            self.num_cells,
            self.gain_pct,
            self.mean_diff,
            self.stderr_diff,
            self.drops
        )
    }
}

pub fn summarize(p_max_dbm: f64, net: &NetworkConfig, mode: Mode, records: &[DropRecord]) -> SweepRow {
    let ok: Vec<&ModeOutcome> = records.iter().filter_map(|r| r.get(mode)).collect();
    let col = |f: &dyn Fn(&ModeOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<_>>();
    let (mean_ee, stderr_ee) = mean_stderr(&col(&|o| o.ee));
    let mean = |v: Vec<f64>| mean_stderr(&v).0;
    SweepRow {
        p_max_dbm,
        mode,
        users_per_cell: net.users_per_cell,
        antennas: net.antennas,
        num_cells: net.num_cells,
        mean_ee,
        stderr_ee,
        mean_sumrate_nats: mean(col(&|o| o.sum_rate_nats)),
        mean_power_used: mean(col(&|o| o.mean_bs_power)),
        mean_outer_iters: mean(col(&|o| o.outer_iters as f64)),
        drops: ok.len(),
        failed: records.len() - ok.len(),
        mean_tilt_evaluations: mean(col(&|o| o.tilt_evaluations as f64)),
        inner_solves: ok.iter().map(|o| o.inner_solves).sum(),
        inner_nonconverged: ok.iter().map(|o| o.inner_nonconverged).sum(),
    }
}

/// Per-drop pairs `(a, b)` for drops where both modes succeeded.
pub fn paired(records: &[DropRecord], a: Mode, b: Mode) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| Some((r.get(a)?.ee, r.get(b)?.ee)))
        .collect()
}

pub fn gain_row(p_max_dbm: f64, net: &NetworkConfig, records: &[DropRecord]) -> Option<GainRow> {
    let pairs = paired(records, Mode::Cluster3d, Mode::Baseline2d);
    if pairs.is_empty() {
        return None;
    }
    let m3 = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let (mean_diff, stderr_diff) = mean_stderr(&diffs);
    Some(GainRow {
        p_max_dbm,
        users_per_cell: net.users_per_cell,
        antennas: net.antennas,
        num_cells: net.num_cells,
        gain_pct: 100.0 * (m3 - m2) / m2,
        mean_diff,
        stderr_diff,
        drops: pairs.len(),
    })
}

/// All modes at one `(M, K, P_max)` point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub p_max_dbm: f64,
    pub network: NetworkConfig,
    pub rows: Vec<SweepRow>,
    pub gain: Option<GainRow>,
    pub records: Vec<DropRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub inner_solves: usize,
    pub inner_nonconverged: usize,
    pub failed_solves: usize,
}

impl Diagnostics {
    pub fn nonconverged_fraction(&self) -> f64 {
        if self.inner_solves == 0 {
            0.0
        } else {
            self.inner_nonconverged as f64 / self.inner_solves as f64
        }
    }

    /// True when failures or non-converged inner solves exceed the threshold.
    pub fn exceeds(&self, max_nonconverged_fraction: f64) -> bool {
        self.failed_solves > 0 || self.nonconverged_fraction() > max_nonconverged_fraction
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub diagnostics: Diagnostics,
    pub wall_time_s: f64,
}

impl SweepResult {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.points.iter().flat_map(|p| p.rows.iter())
    }

    pub fn row(&self, p_max_dbm: f64, mode: Mode, users_per_cell: usize) -> Option<&SweepRow> {
        self.rows()
            .find(|r| r.p_max_dbm == p_max_dbm && r.mode == mode && r.users_per_cell == users_per_cell)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs the sweep, handing each finished point to `on_point` before starting the next.
pub fn run_sweep(cfg: &ExperimentConfig, mut on_point: impl FnMut(&SweepPoint) -> Result<()>) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = pool(cfg.workers)?;
    let mut points = Vec::new();
    let mut diag = Diagnostics::default();
    for m in cfg.antenna_values() {
        for k in cfg.users_values() {
            let net = cfg.network_for(k, m);
            let contexts: Vec<DropContext> = pool.install(|| {
                (0..cfg.num_drops)
                    .into_par_iter()
                    .map(|d| drop_context(cfg, &net, d))
                    .collect::<Result<_>>()
            })?;
            for &p in &cfg.sweep_dbm {
                let records: Vec<DropRecord> = pool.install(|| {
                    contexts
                        .par_iter()
                        .map(|ctx| run_on_context(cfg, &net, ctx, p))
                        .collect::<Result<_>>()
                })?;
                let rows: Vec<SweepRow> = cfg.modes.iter().map(|&mode| summarize(p, &net, mode, &records)).collect();
                for r in &rows {
                    diag.inner_solves += r.inner_solves;
                    diag.inner_nonconverged += r.inner_nonconverged;
                    diag.failed_solves += r.failed;
                }
                let point = SweepPoint {
                    p_max_dbm: p,
                    gain: gain_row(p, &net, &records),
                    network: net.clone(),
                    rows,
                    records,
                };
                on_point(&point)?;
                points.push(point);
            }
        }
    }
    Ok(SweepResult {
        points,
        diagnostics: diag,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Appends rows to a CSV stream, writing the header first and flushing after every row.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, header: &str) -> Result<Self> {
        writeln!(out, "{header}").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        Ok(Self { out })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(io_err)?;
        self.out.flush().map_err(io_err)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("write failed: {e}"))
}

/// Traced solve of one mode on one drop, for inspection.
pub fn trace_drop(
    cfg: &ExperimentConfig,
    net: &NetworkConfig,
    drop_index: usize,
    p_max_dbm: f64,
    mode: Mode,
) -> Result<(DropContext, OuterResult)> {
    let ctx = drop_context(cfg, net, drop_index)?;
    let inst = instance(cfg, net, &ctx, p_max_dbm, mode);
    let r = solve_mode(&inst, &cfg.outer, mode, true)?;
    Ok((ctx, r))
}

/// Human-readable report of [`trace_drop`].
pub fn render_trace(ctx: &DropContext, r: &OuterResult, mode: Mode, p_max_dbm: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode {} at {p_max_dbm} dBm, drop {}", mode.as_str(), ctx.drop_index);
    s.push_str(&ctx.drop.to_record());
    let _ = writeln!(s, "# outer");
    let _ = writeln!(s, "{}", crate::dinkelbach::OuterTraceRow::HEADER);
    for row in &r.trace {
        let _ = writeln!(s, "{}", row.to_line());
    }
    let _ = writeln!(s, "# inner");
    let _ = writeln!(s, "{}", crate::wmmse::InnerTraceRow::HEADER);
    for row in &r.inner_trace {
        let _ = writeln!(s, "{}", row.to_line());
    }
    let _ = writeln!(s, "# result");
    let _ = writeln!(s, "ee={}", r.solution.ee);
    let _ = writeln!(s, "eta={}", r.solution.eta);
    let _ = writeln!(s, "sum_rate_nats={}", r.sum_rate);
    let _ = writeln!(s, "mean_bs_power={}", r.mean_bs_power);
    if let Some(t) = &r.solution.tilt_deg {
        let t: Vec<String> = t.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "tilts_deg={}", t.join(";"));
    }
    let _ = writeln!(
        s,
        "outer_iters={} inner_solves={} inner_sweeps={} tilt_evaluations={}",
        r.iterations, r.stats.inner_solves, r.stats.inner_sweeps, r.stats.tilt_evaluations
    );
    s
}

/// Outcome of one built-in consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick consistency checks on a few seeded drops of `cfg`'s network.
pub fn self_check(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    use crate::objective::{g_value, h_value};
    use crate::wmmse::{inner_solve, update_filters, update_slacks, InnerProblem};

    cfg.validate()?;
    let net = cfg.network.clone();
    let p = *cfg.sweep_dbm.last().unwrap_or(&46.0);
    let mut checks = Vec::new();

    let mut worst_gap: f64 = 0.0;
    let mut descents = 0;
    let mut worst_power: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    let mut evals = (0usize, 0usize);
    for d in 0..3 {
        let ctx = drop_context(cfg, &net, d)?;
        let inst = instance(cfg, &net, &ctx, p, Mode::Cluster3d);
        let tilts = inst.initial_tilts();
        let gains = inst.gains(tilts.as_deref())?;
        let w = crate::objective::Beamformers::matched(&inst.channels, inst.power.p_max);
        let eta = 0.5 * inst.eta_max()?;
        let u = update_filters(&w, &gains, &inst.channels)?;
        let s = update_slacks(&w, &u, &gains, &inst.channels)?;
        let h = h_value(&w, &u, &s, &gains, &inst.channels, eta, &inst.power, &inst.weights)?;
        let g = g_value(&w, &gains, &inst.channels, eta, &inst.power, &inst.weights)?;
        worst_gap = worst_gap.max((h - g).abs() / (1.0 + g.abs()));

        let prob = InnerProblem {
            ch: &inst.channels,
            gains: &gains,
            eta,
            pm: &inst.power,
            weights: &inst.weights,
        };
        let opts = crate::wmmse::InnerOptions {
            record_blocks: true,
            ..cfg.outer.inner_options()
        };
        match inner_solve(&prob, w, &opts, false) {
            Ok(r) => {
                for j in 0..net.num_cells {
                    worst_power = worst_power.max(r.state.w.bs_power(j) / inst.power.p_max - 1.0);
                }
            }
            Err(Error::AscentViolation { .. }) => descents += 1,
            Err(e) => return Err(e),
        }

        let rc = outer_solve(&inst, &cfg.outer, TiltStrategy::Cluster, false)?;
        worst_eta = worst_eta.max((rc.solution.ee - rc.solution.eta).abs());
        let re = outer_solve(&inst, &cfg.outer, TiltStrategy::Exhaustive, false)?;
        evals.0 += rc.stats.tilt_evaluations;
        evals.1 += re.stats.tilt_evaluations;
    }
    checks.push(Check {
        name: "surrogate equals objective at optimal filters and slacks",
        passed: worst_gap <= 1e-9,
        detail: format!("max relative gap {worst_gap:.3e}"),
    });
    checks.push(Check {
        name: "inner loop ascends block by block",
        passed: descents == 0,
        detail: format!("{descents} violations"),
    });
    checks.push(Check {
        name: "per-BS power within budget",
        passed: worst_power <= 1e-9,
        detail: format!("max relative excess {worst_power:.3e}"),
    });
    checks.push(Check {
        name: "bisection returns EE within 2 epsilon of eta",
        passed: worst_eta <= 2.0 * cfg.outer.epsilon,
        detail: format!("max |EE - eta| {worst_eta:.3e}"),
    });
    checks.push(Check {
        name: "cluster scan evaluates fewer tilts than exhaustive",
        passed: evals.0 < evals.1,
        detail: format!("{} vs {}", evals.0, evals.1),
    });
    Ok(checks)
}
