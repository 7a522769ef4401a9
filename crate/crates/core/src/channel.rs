//! Large-scale fading (pathloss plus log-normal shadowing) and i.i.d. Rayleigh
//! small-scale channel vectors.
//!
//! Channel gains are expressed relative to a unit noise power, so transmit
//! powers in watts multiply them directly into SNRs.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Drop, NetworkConfig};
use crate::seed::{derive_seed, rng_from_seed, STREAM_CHANNEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams {
    pub pathloss_exponent: f64,
    pub shadow_sigma_db: f64,
    pub reference_distance_m: f64,
    /// Loss at the reference distance (dB). Negative values act as a gain and
    /// fold the noise normalization into the pathloss.
    pub reference_loss_db: f64,
    /// Noise variance. Fixed at 1.
    #[serde(default = "unit_noise")]
    pub noise_power: f64,
}

fn unit_noise() -> f64 {
    1.0
}

/// Reference loss (dB, at 1 m) that gives a user at `edge_distance_m` a median
/// per-antenna SNR of `target_snr_db` at transmit power `p_dbm` and peak antenna gain.
pub fn calibrated_reference_loss_db(
    edge_distance_m: f64,
    p_dbm: f64,
    g_max_db: f64,
    target_snr_db: f64,
    exponent: f64,
) -> f64 {
    (p_dbm - 30.0) + g_max_db - target_snr_db - 10.0 * exponent * edge_distance_m.log10()
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            pathloss_exponent: 3.8,
            shadow_sigma_db: 8.0,
            reference_distance_m: 1.0,
            reference_loss_db: calibrated_reference_loss_db(500.0, 46.0, 18.0, 10.0, 3.8),
            noise_power: 1.0,
        }
    }
}

impl FadingParams {
    /// `beta = z / d^v` with `d` in meters and no extra calibration.
    pub fn literal() -> Self {
        Self {
            reference_loss_db: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 2.0) {
            return Err(Error::Config("pathloss exponent must exceed 2".into()));
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return Err(Error::Config("shadowing std-dev must be non-negative".into()));
        }
        if !(self.reference_distance_m > 0.0) {
            return Err(Error::Config("reference distance must be positive".into()));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(Error::Config("reference loss must be finite".into()));
        }
        if self.noise_power != 1.0 {
            return Err(Error::Config("noise power is normalized to 1".into()));
        }
        Ok(())
    }

    /// Large-scale gain without shadowing.
    pub fn median_gain(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) {
            return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
        }
        Ok(10f64.powf(-self.reference_loss_db / 10.0)
            * (self.reference_distance_m / distance_m).powf(self.pathloss_exponent))
    }
}

/// Draws `beta = 10^((x - L_ref)/10) (d_ref/d)^v` with `x ~ N(0, sigma^2)` in dB.
pub fn large_scale_gain<R: Rng + ?Sized>(
    params: &FadingParams,
    distance_m: f64,
    rng: &mut R,
) -> Result<f64> {
    let median = params.median_gain(distance_m)?;
    let shadow_db = if params.shadow_sigma_db > 0.0 {
        Normal::new(0.0, params.shadow_sigma_db)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    Ok(median * 10f64.powf(shadow_db / 10.0))
}

/// `M` i.i.d. `CN(0, beta)` entries.
pub fn draw_channel_vector<R: Rng + ?Sized>(beta: f64, m: usize, rng: &mut R) -> Vec<Complex64> {
    let sd = (beta / 2.0).sqrt();
    (0..m)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sd * re, sd * im)
        })
        .collect()
}

/// Channel vectors `g_ijm` and large-scale gains `beta_ijm` for every link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub num_cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    /// Flattened `[link][antenna]`, link index as in [`Drop::link`].
    pub g: Vec<Complex64>,
    pub beta: Vec<f64>,
}

impl ChannelSet {
    #[inline]
    pub fn link(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.num_cells + j) * self.users_per_cell + m
    }

    /// Channel from BS `i` to user `m` of cell `j`.
    #[inline]
    pub fn g(&self, i: usize, j: usize, m: usize) -> &[Complex64] {
        let k = self.link(i, j, m) * self.antennas;
        &self.g[k..k + self.antennas]
    }

    #[inline]
    pub fn beta(&self, i: usize, j: usize, m: usize) -> f64 {
        self.beta[self.link(i, j, m)]
    }

    /// Builds a channel set from explicit vectors (`beta` set to the per-entry mean power).
    pub fn from_vectors(
        num_cells: usize,
        users_per_cell: usize,
        antennas: usize,
        g: Vec<Complex64>,
    ) -> Result<Self> {
        let links = num_cells * num_cells * users_per_cell;
        if g.len() != links * antennas {
            return Err(Error::Dimension(format!(
                "expected {} channel entries, got {}",
                links * antennas,
                g.len()
            )));
        }
        let beta = g
            .chunks(antennas)
            .map(|c| (c.iter().map(|z| z.norm_sqr()).sum::<f64>() / antennas as f64).max(f64::MIN_POSITIVE))
            .collect();
        Ok(Self {
            num_cells,
            users_per_cell,
            antennas,
            g,
            beta,
        })
    }

    /// Text dump:
    ///
    /// ```text
    /// # channels L=<L> K=<K> M=<M>
    /// <i> <j> <m> <beta> <re_0> <im_0> ... <re_M-1> <im_M-1>
    /// ```
    ///
    /// Rows ordered by `i`, `j`, `m`; floats use the shortest round-trip representation.
    pub fn to_record(&self) -> String {
        let mut out = format!(
            "# channels L={} K={} M={}\n",
            self.num_cells, self.users_per_cell, self.antennas
        );
        for i in 0..self.num_cells {
            for j in 0..self.num_cells {
                for m in 0..self.users_per_cell {
                    let _ = write!(out, "{i} {j} {m} {}", self.beta(i, j, m));
                    for z in self.g(i, j, m) {
                        let _ = write!(out, " {} {}", z.re, z.im);
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty record".into()))?;
        let dims: Vec<usize> = header
            .trim_start_matches("# channels")
            .split_whitespace()
            .map(|kv| {
                kv.split_once('=')
                    .and_then(|(_, v)| v.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad header field {kv:?}")))
            })
            .collect::<Result<_>>()?;
        let [l, k, m] = dims[..] else {
            return Err(Error::Parse(format!("bad header {header:?}")));
        };
        let links = l * l * k;
        let mut g = vec![Complex64::new(0.0, 0.0); links * m];
        let mut beta = vec![0.0; links];
        let mut seen = 0;
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 + 2 * m {
                return Err(Error::Parse(format!("expected {} fields: {line:?}", 4 + 2 * m)));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
            let (i, j, u) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
            if i >= l || j >= l || u >= k {
                return Err(Error::Parse(format!("link index out of range: {line:?}")));
            }
            let link = (i * l + j) * k + u;
            beta[link] = num(f[3])?;
            for a in 0..m {
                g[link * m + a] = Complex64::new(num(f[4 + 2 * a])?, num(f[5 + 2 * a])?);
            }
            seen += 1;
        }
        if seen != links {
            return Err(Error::Parse(format!("expected {links} rows, got {seen}")));
        }
        Ok(Self {
            num_cells: l,
            users_per_cell: k,
            antennas: m,
            g,
            beta,
        })
    }
}

/// Draws every link's large-scale gain (from the drop's ground distance) and
/// small-scale vector. Link `(i, j, m)` uses its own stream keyed by
/// `(seed, i << 40 | j << 20 | m)`, so a user's channels do not depend on `K`.
pub fn build_channel_set(
    drop: &Drop,
    cfg: &NetworkConfig,
    params: &FadingParams,
    seed: u64,
) -> Result<ChannelSet> {
    if drop.num_cells != cfg.num_cells || drop.users_per_cell != cfg.users_per_cell {
        return Err(Error::Dimension("drop does not match network config".into()));
    }
    let (l, k, m) = (cfg.num_cells, cfg.users_per_cell, cfg.antennas);
    let links = cfg.num_links();
    let mut beta = Vec::with_capacity(links);
    let mut g = Vec::with_capacity(links * m);
    for i in 0..l {
        for j in 0..l {
            for u in 0..k {
                let key = (i as u64) << 40 | (j as u64) << 20 | u as u64;
                let mut rng = rng_from_seed(derive_seed(seed, key, STREAM_CHANNEL));
                let b = large_scale_gain(params, drop.distance_m[drop.link(i, j, u)], &mut rng)?;
                beta.push(b);
                g.extend(draw_channel_vector(b, m, &mut rng));
            }
        }
    }
    Ok(ChannelSet {
        num_cells: cfg.num_cells,
        users_per_cell: cfg.users_per_cell,
        antennas: m,
        g,
        beta,
    })
}
