//! Cell layout, random user drops and per-link angles of arrival.
//!
//! Cells are pointy-top hexagons of circumradius `cell_radius_m` with the BS at
//! the center. Adjacent sites sit `sqrt(3) R` apart. Azimuths are measured
//! counter-clockwise from the +x axis, elevations downward from the horizon.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, STREAM_PLACEMENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub num_cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub cell_radius_m: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub min_user_distance_m: f64,
    /// Per-BS boresight azimuths (degrees). `None` selects the layout default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresights_deg: Option<Vec<f64>>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_cells: 3,
            users_per_cell: 2,
            antennas: 4,
            cell_radius_m: 500.0,
            bs_height_m: 32.0,
            ue_height_m: 1.5,
            min_user_distance_m: 35.0,
            boresights_deg: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 || self.users_per_cell == 0 || self.antennas == 0 {
            return Err(Error::Config("L, K and M must all be at least 1".into()));
        }
        if !(self.ue_height_m >= 0.0 && self.bs_height_m > self.ue_height_m) {
            return Err(Error::Config("need bs_height_m > ue_height_m >= 0".into()));
        }
        if !(self.min_user_distance_m > 0.0 && self.min_user_distance_m < self.cell_radius_m) {
            return Err(Error::Config(
                "need 0 < min_user_distance_m < cell_radius_m".into(),
            ));
        }
        if let Some(b) = &self.boresights_deg {
            if b.len() != self.num_cells {
                return Err(Error::Config(format!(
                    "{} boresights given for {} cells",
                    b.len(),
                    self.num_cells
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("boresights must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of (BS, cell, user) links.
    pub fn num_links(&self) -> usize {
        self.num_cells * self.num_cells * self.users_per_cell
    }
}

/// BS sites and boresights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sites: Vec<[f64; 2]>,
    pub boresights_deg: Vec<f64>,
}

/// Places the BS sites.
///
/// * `L = 1`: one site at the origin.
/// * `L = 3`: three mutually adjacent cells meeting at the origin (equilateral triangle).
/// * other `L <= 7`: a center cell plus the first `L - 1` cells of its first ring.
///
/// The default boresight of each BS points away from the centroid of all
/// sites (the origin), toward the outer part of its own cell; a lone BS points along +x.
pub fn build_layout(cfg: &NetworkConfig) -> Result<Layout> {
    cfg.validate()?;
    let r = cfg.cell_radius_m;
    let l = cfg.num_cells;
    let spacing = 3f64.sqrt() * r;
    let sites: Vec<[f64; 2]> = match l {
        1 => vec![[0.0, 0.0]],
        3 => [90.0f64, 210.0, 330.0]
            .iter()
            .map(|a| {
                let a = a.to_radians();
                [r * a.cos(), r * a.sin()]
            })
            .collect(),
        2..=7 => std::iter::once([0.0, 0.0])
            .chain((0..l - 1).map(|k| {
                let a = (60.0 * k as f64).to_radians();
                [spacing * a.cos(), spacing * a.sin()]
            }))
            .collect(),
        _ => {
            return Err(Error::Config(format!(
                "unsupported cell count {l}; layouts exist for 1..=7"
            )))
        }
    };
    let boresights_deg = match &cfg.boresights_deg {
        Some(b) => b.clone(),
        None => {
            let cx = sites.iter().map(|s| s[0]).sum::<f64>() / l as f64;
            let cy = sites.iter().map(|s| s[1]).sum::<f64>() / l as f64;
            sites
                .iter()
                .map(|s| {
                    let (dx, dy) = (s[0] - cx, s[1] - cy);
                    if dx.hypot(dy) < 1e-9 {
                        0.0
                    } else {
                        dy.atan2(dx).to_degrees()
                    }
                })
                .collect()
        }
    };
    Ok(Layout {
        sites,
        boresights_deg,
    })
}

/// True when `(x, y)` (relative to the hexagon center) lies inside a pointy-top
/// hexagon of circumradius `r`.
pub fn in_hexagon(x: f64, y: f64, r: f64) -> bool {
    let inradius = r * 3f64.sqrt() / 2.0;
    [0.0f64, 60.0, 120.0].iter().all(|a| {
        let a = a.to_radians();
        (x * a.cos() + y * a.sin()).abs() <= inradius
    })
}

/// Elevation angle of arrival (degrees, downward from the horizon).
pub fn elevation_aoa(bs_height_m: f64, ue_height_m: f64, ground_distance_m: f64) -> Result<f64> {
    if !(ground_distance_m > 0.0) {
        return Err(Error::Domain(format!(
            "ground distance must be positive, got {ground_distance_m}"
        )));
    }
    if !(bs_height_m > ue_height_m) {
        return Err(Error::Domain("BS must be above the UE".into()));
    }
    Ok(((bs_height_m - ue_height_m) / ground_distance_m)
        .atan()
        .to_degrees())
}

/// One random placement of all users with the angles every BS sees them at.
///
/// Per-link arrays are flattened with [`Drop::link`]: `(i * L + j) * K + m` for
/// BS `i`, cell `j`, user `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub num_cells: usize,
    pub users_per_cell: usize,
    /// `(j * K + m)` -> planar position (m).
    pub user_xy: Vec<[f64; 2]>,
    pub elevation_aoa_deg: Vec<f64>,
    pub azimuth_aoa_deg: Vec<f64>,
    pub distance_m: Vec<f64>,
}

impl Drop {
    #[inline]
    pub fn link(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.num_cells + j) * self.users_per_cell + m
    }

    /// Serving-link elevation AoAs of the users of cell `j`.
    pub fn serving_aoas(&self, j: usize) -> Vec<f64> {
        (0..self.users_per_cell)
            .map(|m| self.elevation_aoa_deg[self.link(j, j, m)])
            .collect()
    }

    /// Text dump, one line per link after a header:
    ///
    /// ```text
    /// # drop L=<L> K=<K>
    /// # i j m x_m y_m distance_m elevation_deg azimuth_deg
    /// <i> <j> <m> <x> <y> <distance> <elevation> <azimuth>
    /// ```
    ///
    /// Rows are ordered by `i`, then `j`, then `m`.
    pub fn to_record(&self) -> String {
        let mut out = format!("# drop L={} K={}\n", self.num_cells, self.users_per_cell);
        out.push_str("# i j m x_m y_m distance_m elevation_deg azimuth_deg\n");
        for i in 0..self.num_cells {
            for j in 0..self.num_cells {
                for m in 0..self.users_per_cell {
                    let k = self.link(i, j, m);
                    let xy = self.user_xy[j * self.users_per_cell + m];
                    let _ = writeln!(
                        out,
                        "{i} {j} {m} {:.6} {:.6} {:.6} {:.9} {:.9}",
                        xy[0],
                        xy[1],
                        self.distance_m[k],
                        self.elevation_aoa_deg[k],
                        self.azimuth_aoa_deg[k]
                    );
                }
            }
        }
        out
    }
}

/// Draws `K` users per cell uniformly over each hexagon minus a disc of radius
/// `min_user_distance_m` around the serving BS (rejection sampling from the
/// bounding square), then computes every link's angles.
///
/// Each cell draws from its own stream keyed by `(seed, j)`, so the first `K`
/// users of a cell are the same for any larger `K`.
pub fn drop_users(cfg: &NetworkConfig, layout: &Layout, seed: u64) -> Drop {
    let l = cfg.num_cells;
    let k = cfg.users_per_cell;
    let r = cfg.cell_radius_m;
    let r_min = cfg.min_user_distance_m;
    let mut user_xy = Vec::with_capacity(l * k);
    for (j, site) in layout.sites.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, j as u64, STREAM_PLACEMENT));
        for _ in 0..k {
            let (x, y) = loop {
                let x = rng.random_range(-r..=r);
                let y = rng.random_range(-r..=r);
                let d = x.hypot(y);
                if d >= r_min && in_hexagon(x, y, r) {
                    break (x, y);
                }
            };
            user_xy.push([site[0] + x, site[1] + y]);
        }
    }

    let n = l * l * k;
    let mut elevation_aoa_deg = vec![0.0; n];
    let mut azimuth_aoa_deg = vec![0.0; n];
    let mut distance_m = vec![0.0; n];
    let dh = cfg.bs_height_m - cfg.ue_height_m;
    for (i, site) in layout.sites.iter().enumerate() {
        for j in 0..l {
            for m in 0..k {
                let idx = (i * l + j) * k + m;
                let p = user_xy[j * k + m];
                let (dx, dy) = (p[0] - site[0], p[1] - site[1]);
                let d = dx.hypot(dy);
                distance_m[idx] = d;
                elevation_aoa_deg[idx] = (dh / d).atan().to_degrees();
                azimuth_aoa_deg[idx] = dy.atan2(dx).to_degrees();
            }
        }
    }
    Drop {
        num_cells: l,
        users_per_cell: k,
        user_xy,
        elevation_aoa_deg,
        azimuth_aoa_deg,
        distance_m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l: usize, k: usize) -> NetworkConfig {
        NetworkConfig {
            num_cells: l,
            users_per_cell: k,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn single_site_at_origin() {
        let lay = build_layout(&cfg(1, 1)).unwrap();
        assert_eq!(lay.sites, vec![[0.0, 0.0]]);
    }

    #[test]
    fn triangle_is_equilateral() {
        let lay = build_layout(&cfg(3, 2)).unwrap();
        let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
        let s = &lay.sites;
        let (d01, d12, d20) = (d(s[0], s[1]), d(s[1], s[2]), d(s[2], s[0]));
        let expected = 2.0 * 500.0 * 30f64.to_radians().cos();
        assert!((d01 - expected).abs() < 1e-9);
        assert!((d01 - d12).abs() < 1e-9 && (d12 - d20).abs() < 1e-9);
        assert!((d01 - 866.025_403_78).abs() < 1e-6);
    }

    #[test]
    fn boresight_override_passthrough() {
        let mut c = cfg(3, 2);
        c.boresights_deg = Some(vec![0.0, 120.0, 240.0]);
        assert_eq!(build_layout(&c).unwrap().boresights_deg, vec![0.0, 120.0, 240.0]);
    }

    #[test]
    fn unsupported_cell_count() {
        assert!(matches!(build_layout(&cfg(8, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn triangle_cells_share_a_vertex_and_do_not_overlap() {
        let c = cfg(3, 1);
        let lay = build_layout(&c).unwrap();
        for s in &lay.sites {
            assert!(in_hexagon(-s[0], -s[1], c.cell_radius_m + 1e-9));
        }
        // Midpoint between two sites lies on the shared edge.
        let (a, b) = (lay.sites[0], lay.sites[1]);
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        assert!(in_hexagon(mid[0] - a[0], mid[1] - a[1], 500.0 + 1e-6));
        assert!(!in_hexagon(mid[0] - a[0] + 1e-3 * (b[0] - a[0]), mid[1] - a[1] + 1e-3 * (b[1] - a[1]), 500.0));
    }

    #[test]
    fn elevation_examples() {
        assert!((elevation_aoa(32.0, 1.5, 30.5).unwrap() - 45.0).abs() < 1e-12);
        assert!((elevation_aoa(32.0, 1.5, 500.0).unwrap() - 3.491_1).abs() < 1e-3);
        assert!(elevation_aoa(32.0, 1.5, 1e12).unwrap() < 1e-8);
        assert!(elevation_aoa(32.0, 1.5, 0.0).is_err());
        assert!(elevation_aoa(32.0, 1.5, -1.0).is_err());
        assert!(elevation_aoa(1.0, 1.5, 10.0).is_err());
    }

    #[test]
    fn drops_are_deterministic() {
        let c = cfg(3, 4);
        let lay = build_layout(&c).unwrap();
        assert_eq!(drop_users(&c, &lay, 42), drop_users(&c, &lay, 42));
        assert_ne!(drop_users(&c, &lay, 42), drop_users(&c, &lay, 43));
    }

    #[test]
    fn exclusion_radius_respected() {
        let c = cfg(1, 1);
        let lay = build_layout(&c).unwrap();
        for seed in 0..10_000u64 {
            let d = drop_users(&c, &lay, seed);
            assert!(d.distance_m[0] >= 35.0);
            let e = d.elevation_aoa_deg[0];
            assert!(e > 0.0 && e < 90.0);
        }
    }

    #[test]
    fn record_has_one_row_per_link() {
        let c = cfg(3, 2);
        let lay = build_layout(&c).unwrap();
        let d = drop_users(&c, &lay, 7);
        let rec = d.to_record();
        assert_eq!(rec.lines().count(), 2 + 18);
        assert!(rec.starts_with("# drop L=3 K=2\n"));
    }

    #[test]
    fn more_users_extend_the_same_placement() {
        let small = cfg(3, 2);
        let big = cfg(3, 4);
        let lay = build_layout(&small).unwrap();
        let a = drop_users(&small, &lay, 9);
        let b = drop_users(&big, &lay, 9);
        for j in 0..3 {
            for m in 0..2 {
                assert_eq!(a.user_xy[j * 2 + m], b.user_xy[j * 4 + m]);
            }
        }
    }
}
