//! Parametric 3D sector-antenna gain.
//!
//! The gain toward a user is the peak gain minus a clamped parabolic loss in
//! azimuth and a clamped parabolic loss in elevation:
//!
//! ```text
//! G(dB) = G_max - min(12 (dphi / phi_3dB)^2, SLL_az) - min(12 ((tilt - theta_u) / theta_3dB)^2, SLL_el)
//! ```
//!
//! All angles are in degrees. Elevation angles (tilt and user AoA) are measured
//! downward from the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the sector-antenna pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternParams {
    /// Peak element gain (dB).
    pub g_max_db: f64,
    /// Vertical half-power beamwidth (degrees).
    pub theta_3db_deg: f64,
    /// Horizontal half-power beamwidth (degrees).
    pub phi_3db_deg: f64,
    /// Vertical side-lobe floor, a positive loss (dB).
    pub sll_el_db: f64,
    /// Horizontal side-lobe floor, a positive loss (dB).
    pub sll_az_db: f64,
}

impl Default for PatternParams {
    fn default() -> Self {
        Self {
            g_max_db: 18.0,
            theta_3db_deg: 6.0,
            phi_3db_deg: 65.0,
            sll_el_db: 20.0,
            sll_az_db: 25.0,
        }
    }
}

impl PatternParams {
    /// Default beamwidths and side lobes with the peak gain normalized to 0 dB.
    pub fn normalized() -> Self {
        Self {
            g_max_db: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.g_max_db,
            self.theta_3db_deg,
            self.phi_3db_deg,
            self.sll_el_db,
            self.sll_az_db,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("pattern parameters must be finite".into()));
        }
        if self.theta_3db_deg <= 0.0 || self.phi_3db_deg <= 0.0 {
            return Err(Error::Config("half-power beamwidths must be positive".into()));
        }
        if self.sll_el_db <= 0.0 || self.sll_az_db <= 0.0 {
            return Err(Error::Config("side-lobe levels must be positive losses".into()));
        }
        Ok(())
    }

    /// Horizontal loss (dB) for an azimuth offset, clamped at the side-lobe floor.
    pub fn azimuth_loss_db(&self, boresight_deg: f64, phi_user_deg: f64) -> f64 {
        let d = wrap_deg(boresight_deg - phi_user_deg);
        (12.0 * (d / self.phi_3db_deg).powi(2)).min(self.sll_az_db)
    }

    /// Vertical loss (dB) for a tilt/AoA offset, clamped at the side-lobe floor.
    pub fn elevation_loss_db(&self, tilt_deg: f64, theta_user_deg: f64) -> f64 {
        let d = tilt_deg - theta_user_deg;
        (12.0 * (d / self.theta_3db_deg).powi(2)).min(self.sll_el_db)
    }
}

/// Wraps an angle difference into (-180, 180].
pub fn wrap_deg(x: f64) -> f64 {
    let mut r = x % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite angle in {values:?}")))
    }
}

/// Full 3D gain (dB) of a BS with the given tilt and boresight toward a user.
pub fn gain_db(
    p: &PatternParams,
    tilt_deg: f64,
    theta_user_deg: f64,
    boresight_deg: f64,
    phi_user_deg: f64,
) -> Result<f64> {
    check_finite(&[tilt_deg, theta_user_deg, boresight_deg, phi_user_deg])?;
    if !(0.0..=90.0).contains(&tilt_deg) {
        return Err(Error::Domain(format!("tilt {tilt_deg} outside [0, 90]")));
    }
    Ok(p.g_max_db
        - p.azimuth_loss_db(boresight_deg, phi_user_deg)
        - p.elevation_loss_db(tilt_deg, theta_user_deg))
}

/// Linear power ratio of [`gain_db`].
pub fn gain_lin(
    p: &PatternParams,
    tilt_deg: f64,
    theta_user_deg: f64,
    boresight_deg: f64,
    phi_user_deg: f64,
) -> Result<f64> {
    gain_db(p, tilt_deg, theta_user_deg, boresight_deg, phi_user_deg).map(db_to_lin)
}

/// Gain (dB) with the elevation term removed, as seen by a conventional 2D array.
pub fn gain_db_2d(p: &PatternParams, boresight_deg: f64, phi_user_deg: f64) -> Result<f64> {
    check_finite(&[boresight_deg, phi_user_deg])?;
    Ok(p.g_max_db - p.azimuth_loss_db(boresight_deg, phi_user_deg))
}

pub fn gain_lin_2d(p: &PatternParams, boresight_deg: f64, phi_user_deg: f64) -> Result<f64> {
    gain_db_2d(p, boresight_deg, phi_user_deg).map(db_to_lin)
}

/// Half-width of the interval around a user's AoA in which the linear
/// main-lobe gain `10^(-1.2 (t - theta_u)^2 / theta_3dB^2)` is concave in the tilt.
pub fn concavity_halfwidth_deg(p: &PatternParams) -> f64 {
    p.theta_3db_deg / (2.4 * std::f64::consts::LN_10).sqrt()
}

/// Default AoA clustering threshold: twice the concavity half-width.
pub fn clustering_threshold_deg(p: &PatternParams) -> f64 {
    2.0 * concavity_halfwidth_deg(p)
}
