//! SINR, rates, energy efficiency and the surrogate objectives used by the
//! fractional-programming and WMMSE layers.
//!
//! Every received *power* term carries the linear pattern gain `alpha`; only the
//! amplitude cross terms of the MSE carry `sqrt(alpha)`. Rates are in nats.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::pattern::{db_to_lin, PatternParams};
use crate::scenario::Drop;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

/// Power budget and consumption model, in watts relative to unit noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub p_max: f64,
    pub p_c: f64,
    pub p_0: f64,
    pub xi: f64,
}

impl PowerModel {
    pub fn from_dbm(p_max_dbm: f64, p_c_dbm: f64, p_0_dbm: f64, xi: f64) -> Self {
        Self {
            p_max: dbm_to_watts(p_max_dbm),
            p_c: dbm_to_watts(p_c_dbm),
            p_0: dbm_to_watts(p_0_dbm),
            xi,
        }
    }

    pub fn validate(&self, antennas: usize, cells: usize) -> Result<()> {
        if !(self.p_max > 0.0 && self.p_c >= 0.0 && self.p_0 >= 0.0 && self.xi >= 0.0) {
            return Err(Error::Config(format!("invalid power model {self:?}")));
        }
        if !(self.static_power(antennas, cells) > 0.0) {
            return Err(Error::Config("static power M L P_c + L P_0 must be positive".into()));
        }
        Ok(())
    }

    /// `M L P_c + L P_0`, the floor of the consumed power.
    pub fn static_power(&self, antennas: usize, cells: usize) -> f64 {
        (antennas * cells) as f64 * self.p_c + cells as f64 * self.p_0
    }
}

/// Per-user priority weights `b_jm`, indexed `j * K + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub b: Vec<f64>,
}

impl Weights {
    pub fn uniform(num_cells: usize, users_per_cell: usize) -> Self {
        Self {
            b: vec![1.0; num_cells * users_per_cell],
        }
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if self.b.len() != users {
            return Err(Error::Dimension(format!(
                "{} weights for {users} users",
                self.b.len()
            )));
        }
        if self.b.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::Config("weights must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            b: self.b.iter().map(|b| b * c).collect(),
        }
    }
}

/// Beamforming vectors `w_jm` for every user, flattened `[(j * K + m) * M + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    pub num_cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub data: Vec<Complex64>,
}

impl Beamformers {
    pub fn zeros(num_cells: usize, users_per_cell: usize, antennas: usize) -> Self {
        Self {
            num_cells,
            users_per_cell,
            antennas,
            data: vec![Complex64::new(0.0, 0.0); num_cells * users_per_cell * antennas],
        }
    }

    /// Matched beamformers `g_jjm / ||g_jjm|| * sqrt(P / K)`: every BS at full power.
    pub fn matched(ch: &ChannelSet, p_max: f64) -> Self {
        let mut w = Self::zeros(ch.num_cells, ch.users_per_cell, ch.antennas);
        let amp = (p_max / ch.users_per_cell as f64).sqrt();
        for j in 0..ch.num_cells {
            for m in 0..ch.users_per_cell {
                let g = ch.g(j, j, m);
                let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let out = w.w_mut(j, m);
                if norm > 0.0 {
                    for (o, z) in out.iter_mut().zip(g) {
                        *o = z * (amp / norm);
                    }
                } else {
                    out[0] = Complex64::new(amp, 0.0);
                }
            }
        }
        w
    }

    #[inline]
    pub fn w(&self, j: usize, m: usize) -> &[Complex64] {
        let k = (j * self.users_per_cell + m) * self.antennas;
        &self.data[k..k + self.antennas]
    }

    #[inline]
    pub fn w_mut(&mut self, j: usize, m: usize) -> &mut [Complex64] {
        let k = (j * self.users_per_cell + m) * self.antennas;
        &mut self.data[k..k + self.antennas]
    }

    /// `sum_m ||w_jm||^2`.
    pub fn bs_power(&self, j: usize) -> f64 {
        let k = j * self.users_per_cell * self.antennas;
        self.data[k..k + self.users_per_cell * self.antennas]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn user_power(&self, j: usize, m: usize) -> f64 {
        self.w(j, m).iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Whether the vertical pattern term is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternMode {
    ThreeD,
    /// Elevation term removed; there is no tilt variable.
    TwoD,
}

/// Linear pattern gains `alpha_ijm` of BS `i` toward user `m` of cell `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub num_cells: usize,
    pub users_per_cell: usize,
    pub mode: PatternMode,
    pattern: PatternParams,
    /// `G_max - azimuth loss` (dB) per link.
    base_db: Vec<f64>,
    elevation_deg: Vec<f64>,
    tilts: Vec<f64>,
    alpha: Vec<f64>,
}

impl LinkGains {
    /// Gains of a 3D array with the given per-BS tilts.
    pub fn three_d(
        drop: &Drop,
        boresights_deg: &[f64],
        pattern: &PatternParams,
        tilts_deg: &[f64],
    ) -> Result<Self> {
        let mut g = Self::base(drop, boresights_deg, pattern, PatternMode::ThreeD)?;
        if tilts_deg.len() != drop.num_cells {
            return Err(Error::Dimension(format!(
                "{} tilts for {} cells",
                tilts_deg.len(),
                drop.num_cells
            )));
        }
        for (i, &t) in tilts_deg.iter().enumerate() {
            g.set_tilt(i, t)?;
        }
        Ok(g)
    }

    /// Gains of a conventional 2D array (azimuth pattern and peak gain only).
    pub fn two_d(drop: &Drop, boresights_deg: &[f64], pattern: &PatternParams) -> Result<Self> {
        let mut g = Self::base(drop, boresights_deg, pattern, PatternMode::TwoD)?;
        g.alpha = g.base_db.iter().map(|&d| db_to_lin(d)).collect();
        Ok(g)
    }

    fn base(
        drop: &Drop,
        boresights_deg: &[f64],
        pattern: &PatternParams,
        mode: PatternMode,
    ) -> Result<Self> {
        pattern.validate()?;
        let (l, k) = (drop.num_cells, drop.users_per_cell);
        if boresights_deg.len() != l {
            return Err(Error::Dimension(format!("{} boresights for {l} cells", boresights_deg.len())));
        }
        let mut base_db = vec![0.0; l * l * k];
        for i in 0..l {
            for j in 0..l {
                for m in 0..k {
                    let idx = drop.link(i, j, m);
                    let phi = drop.azimuth_aoa_deg[idx];
                    if !phi.is_finite() || !boresights_deg[i].is_finite() {
                        return Err(Error::Domain("non-finite azimuth".into()));
                    }
                    base_db[idx] = pattern.g_max_db - pattern.azimuth_loss_db(boresights_deg[i], phi);
                }
            }
        }
        Ok(Self {
            num_cells: l,
            users_per_cell: k,
            mode,
            pattern: *pattern,
            base_db,
            elevation_deg: drop.elevation_aoa_deg.clone(),
            tilts: vec![f64::NAN; l],
            alpha: vec![0.0; l * l * k],
        })
    }

    /// Explicit gains, for tests and hand-built instances. Indexed like [`Drop::link`].
    pub fn from_alpha(num_cells: usize, users_per_cell: usize, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != num_cells * num_cells * users_per_cell {
            return Err(Error::Dimension("alpha length".into()));
        }
        Ok(Self {
            num_cells,
            users_per_cell,
            mode: PatternMode::TwoD,
            pattern: PatternParams::normalized(),
            base_db: alpha.iter().map(|a| 10.0 * a.log10()).collect(),
            elevation_deg: vec![0.0; alpha.len()],
            tilts: vec![f64::NAN; num_cells],
            alpha,
        })
    }

    /// Re-points BS `i` to `tilt_deg`, updating every link it transmits on.
    pub fn set_tilt(&mut self, i: usize, tilt_deg: f64) -> Result<()> {
        if self.mode != PatternMode::ThreeD {
            return Err(Error::Config("2D gains have no tilt".into()));
        }
        if !tilt_deg.is_finite() || !(0.0..=90.0).contains(&tilt_deg) {
            return Err(Error::Domain(format!("tilt {tilt_deg} outside [0, 90]")));
        }
        let (l, k) = (self.num_cells, self.users_per_cell);
        let start = i * l * k;
        for idx in start..start + l * k {
            let loss = self.pattern.elevation_loss_db(tilt_deg, self.elevation_deg[idx]);
            self.alpha[idx] = db_to_lin(self.base_db[idx] - loss);
        }
        self.tilts[i] = tilt_deg;
        Ok(())
    }

    /// Current tilts, `None` in 2D mode.
    pub fn tilts(&self) -> Option<&[f64]> {
        (self.mode == PatternMode::ThreeD).then_some(&self.tilts[..])
    }

    #[inline]
    pub fn alpha(&self, i: usize, j: usize, m: usize) -> f64 {
        self.alpha[(i * self.num_cells + j) * self.users_per_cell + m]
    }

    pub fn peak_gain_lin(&self) -> f64 {
        self.alpha
            .iter()
            .cloned()
            .fold(db_to_lin(self.pattern.g_max_db), f64::max)
    }
}

#[inline]
pub(crate) fn inner(g: &[Complex64], w: &[Complex64]) -> Complex64 {
    g.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

fn check_dims(w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<()> {
    if w.num_cells != ch.num_cells
        || w.users_per_cell != ch.users_per_cell
        || w.antennas != ch.antennas
        || gains.num_cells != ch.num_cells
        || gains.users_per_cell != ch.users_per_cell
    {
        return Err(Error::Dimension(format!(
            "beamformers L={} K={} M={}, gains L={} K={}, channels L={} K={} M={}",
            w.num_cells,
            w.users_per_cell,
            w.antennas,
            gains.num_cells,
            gains.users_per_cell,
            ch.num_cells,
            ch.users_per_cell,
            ch.antennas
        )));
    }
    Ok(())
}

/// Received quantities of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLink {
    /// `g_jjm^H w_jm` (no pattern gain).
    pub signal_amp: Complex64,
    /// `alpha_jjm`.
    pub alpha_serving: f64,
    /// `sum_{(i,n) != (j,m)} alpha_ijm |g_ijm^H w_in|^2`.
    pub interference: f64,
}

impl UserLink {
    pub fn signal_power(&self) -> f64 {
        self.alpha_serving * self.signal_amp.norm_sqr()
    }

    pub fn sinr(&self) -> f64 {
        self.signal_power() / (self.interference + 1.0)
    }

    /// Total received power plus noise.
    pub fn total(&self) -> f64 {
        self.signal_power() + self.interference + 1.0
    }
}

fn user_link_unchecked(j: usize, m: usize, w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> UserLink {
    let mut interference = 0.0;
    let mut signal_amp = Complex64::new(0.0, 0.0);
    for i in 0..ch.num_cells {
        let g = ch.g(i, j, m);
        let a = gains.alpha(i, j, m);
        for n in 0..ch.users_per_cell {
            let c = inner(g, w.w(i, n));
            if i == j && n == m {
                signal_amp = c;
            } else {
                interference += a * c.norm_sqr();
            }
        }
    }
    UserLink {
        signal_amp,
        alpha_serving: gains.alpha(j, j, m),
        interference,
    }
}

pub fn user_link(j: usize, m: usize, w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<UserLink> {
    check_dims(w, gains, ch)?;
    if j >= ch.num_cells || m >= ch.users_per_cell {
        return Err(Error::Dimension(format!("user ({j}, {m}) out of range")));
    }
    Ok(user_link_unchecked(j, m, w, gains, ch))
}

/// Received quantities of every user, indexed `j * K + m`.
pub fn all_links(w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<Vec<UserLink>> {
    check_dims(w, gains, ch)?;
    let mut out = Vec::with_capacity(ch.num_cells * ch.users_per_cell);
    for j in 0..ch.num_cells {
        for m in 0..ch.users_per_cell {
            out.push(user_link_unchecked(j, m, w, gains, ch));
        }
    }
    Ok(out)
}

pub fn sinr(j: usize, m: usize, w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<f64> {
    user_link(j, m, w, gains, ch).map(|u| u.sinr())
}

/// `ln(1 + SINR)`.
pub fn user_rate_nats(j: usize, m: usize, w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<f64> {
    sinr(j, m, w, gains, ch).map(f64::ln_1p)
}

/// Weighted sum rate `sum b_jm R_jm` in nats.
pub fn weighted_sum_rate(w: &Beamformers, gains: &LinkGains, ch: &ChannelSet, weights: &Weights) -> Result<f64> {
    let links = all_links(w, gains, ch)?;
    weights.validate(links.len())?;
    Ok(links
        .iter()
        .zip(&weights.b)
        .map(|(u, b)| b * u.sinr().ln_1p())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

/// Consumed power `xi sum ||w||^2 + M L P_c + L P_0`.
pub fn consumed_power(w: &Beamformers, pm: &PowerModel) -> f64 {
    pm.xi * w.total_power() + pm.static_power(w.antennas, w.num_cells)
}

/// Network energy efficiency: weighted sum rate over consumed power.
pub fn total_ee(
    w: &Beamformers,
    gains: &LinkGains,
    ch: &ChannelSet,
    pm: &PowerModel,
    weights: &Weights,
    unit: RateUnit,
) -> Result<f64> {
    let rate = weighted_sum_rate(w, gains, ch, weights)?;
    let ee = rate / consumed_power(w, pm);
    Ok(match unit {
        RateUnit::Nats => ee,
        RateUnit::Bits => ee / std::f64::consts::LN_2,
    })
}

/// Interference-free full-power rate bound (bits):
/// `sum_jm b_jm log2(1 + P * peak_gain * ||g_jjm||^2)`.
///
/// With a normalized pattern (`peak_gain = 1`) and unit weights this is
/// `sum log2(1 + P ||g_jjm||^2)`. The pattern's peak gain must be included for
/// the bound to hold when it exceeds 0 dB.
pub fn r_max(ch: &ChannelSet, p_max: f64, peak_gain_lin: f64, weights: &Weights) -> Result<f64> {
    weights.validate(ch.num_cells * ch.users_per_cell)?;
    let mut total = 0.0;
    for j in 0..ch.num_cells {
        for m in 0..ch.users_per_cell {
            let norm2: f64 = ch.g(j, j, m).iter().map(|z| z.norm_sqr()).sum();
            total += weights.b[j * ch.users_per_cell + m] * (p_max * peak_gain_lin * norm2).ln_1p()
                / std::f64::consts::LN_2;
        }
    }
    Ok(total)
}

/// `G = sum b_jm R_jm - eta xi sum ||w_jm||^2`.
pub fn g_value(
    w: &Beamformers,
    gains: &LinkGains,
    ch: &ChannelSet,
    eta: f64,
    pm: &PowerModel,
    weights: &Weights,
) -> Result<f64> {
    Ok(weighted_sum_rate(w, gains, ch, weights)? - eta * pm.xi * w.total_power())
}

// Same value as |u|^2 T - 2 Re(u* a) + 1 with T = total(), written as
// |u T - a|^2 / T + (interference + 1) / T so that high-SINR users keep their
// relative accuracy.
fn mse_from_link(u: Complex64, link: &UserLink) -> f64 {
    let t = link.total();
    let a = link.signal_amp * link.alpha_serving.sqrt();
    ((u * t - a).norm_sqr() + link.interference + 1.0) / t
}

/// MSE of user `(j, m)` with receive filter `u`:
/// `|u|^2 (sum alpha |g^H w|^2 + 1) - 2 Re(u* g_jjm^H w_jm sqrt(alpha_jjm)) + 1`.
pub fn mse(
    j: usize,
    m: usize,
    w: &Beamformers,
    u: Complex64,
    gains: &LinkGains,
    ch: &ChannelSet,
) -> Result<f64> {
    user_link(j, m, w, gains, ch).map(|l| mse_from_link(u, &l))
}

/// MSE of every user for filters `u` (indexed `j * K + m`).
pub fn all_mse(w: &Beamformers, u: &[Complex64], gains: &LinkGains, ch: &ChannelSet) -> Result<Vec<f64>> {
    let links = all_links(w, gains, ch)?;
    if u.len() != links.len() {
        return Err(Error::Dimension(format!("{} filters for {} users", u.len(), links.len())));
    }
    Ok(links.iter().zip(u).map(|(l, &f)| mse_from_link(f, l)).collect())
}

/// Reformulated objective
/// `H = sum b (-e s + ln s) + sum (b - eta xi ||w||^2)`.
#[allow(clippy::too_many_arguments)]
pub fn h_value(
    w: &Beamformers,
    u: &[Complex64],
    s: &[f64],
    gains: &LinkGains,
    ch: &ChannelSet,
    eta: f64,
    pm: &PowerModel,
    weights: &Weights,
) -> Result<f64> {
    let e = all_mse(w, u, gains, ch)?;
    if s.len() != e.len() {
        return Err(Error::Dimension(format!("{} slacks for {} users", s.len(), e.len())));
    }
    weights.validate(e.len())?;
    if let Some(bad) = s.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("slack must be positive, got {bad}")));
    }
    let mut h = 0.0;
    for idx in 0..e.len() {
        let b = weights.b[idx];
        h += b * (-e[idx] * s[idx] + s[idx].ln()) + b;
    }
    Ok(h - eta * pm.xi * w.total_power())
}

/// A complete operating point of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: Beamformers,
    /// Per-BS tilt (degrees); `None` for the 2D baseline.
    pub tilt_deg: Option<Vec<f64>>,
    pub u: Vec<Complex64>,
    pub s: Vec<f64>,
    pub eta: f64,
    pub ee: f64,
}
