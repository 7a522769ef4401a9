//! Tilt search: AoA clustering, chosen-user selection and grid scans.
//!
//! The surrogate objective is, per BS, a weighted sum of shifted copies of the
//! vertical pattern. Each copy is concave only within one concavity half-width
//! of its user's AoA, so maxima sit near user AoAs. Users whose sorted AoAs
//! are closer than the clustering threshold are chained into one cluster, and
//! only the cluster holding the best single-AoA tilt is scanned finely.

use crate::error::{Error, Result};

/// Lowest and highest tilt considered (degrees), inside the open range (0, 90).
pub const TILT_MIN_DEG: f64 = 0.01;
pub const TILT_MAX_DEG: f64 = 89.99;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// User indices (within one cell), ordered by ascending AoA.
    pub member_indices: Vec<usize>,
    pub span_min_deg: f64,
    pub span_max_deg: f64,
}

impl Cluster {
    pub fn contains(&self, user: usize) -> bool {
        self.member_indices.contains(&user)
    }
}

/// Sorts AoAs and chains consecutive users whose gap is below `threshold_deg`.
pub fn cluster_users(aoas_deg: &[f64], threshold_deg: f64) -> Result<Vec<Cluster>> {
    if aoas_deg.is_empty() {
        return Err(Error::Domain("cannot cluster an empty user set".into()));
    }
    if !(threshold_deg > 0.0) {
        return Err(Error::Domain(format!("clustering threshold must be positive, got {threshold_deg}")));
    }
    if aoas_deg.iter().any(|a| !a.is_finite()) {
        return Err(Error::Domain("non-finite AoA".into()));
    }
    let mut order: Vec<usize> = (0..aoas_deg.len()).collect();
    order.sort_by(|&a, &b| aoas_deg[a].total_cmp(&aoas_deg[b]).then(a.cmp(&b)));

    let mut clusters: Vec<Cluster> = Vec::new();
    for idx in order {
        let aoa = aoas_deg[idx];
        match clusters.last_mut() {
            Some(c) if aoa - c.span_max_deg < threshold_deg => {
                c.member_indices.push(idx);
                c.span_max_deg = aoa;
            }
            _ => clusters.push(Cluster {
                member_indices: vec![idx],
                span_min_deg: aoa,
                span_max_deg: aoa,
            }),
        }
    }
    Ok(clusters)
}

/// Index of the user whose AoA, used as the tilt, maximizes `eval`. Ties go to
/// the smallest index. Returns `(index, value)`.
pub fn chosen_user(aoas_deg: &[f64], mut eval: impl FnMut(f64) -> f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, &a) in aoas_deg.iter().enumerate() {
        let v = eval(a.clamp(TILT_MIN_DEG, TILT_MAX_DEG));
        if v > best.1 {
            best = (idx, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    pub tilt_deg: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Grid `lo, lo + step, ...` below `hi`, plus `hi` itself.
pub fn scan_grid(lo_deg: f64, hi_deg: f64, step_deg: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let t = lo_deg + k as f64 * step_deg;
        if t >= hi_deg - 1e-9 * step_deg {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(hi_deg);
    grid
}

/// Full-grid argmax over `[lo_deg, hi_deg]`; the first maximum wins ties.
pub fn exhaustive_tilt_scan(
    lo_deg: f64,
    hi_deg: f64,
    step_deg: f64,
    mut eval: impl FnMut(f64) -> f64,
) -> Result<ScanResult> {
    if !(step_deg > 0.0) || !(lo_deg <= hi_deg) {
        return Err(Error::Domain(format!(
            "bad scan range [{lo_deg}, {hi_deg}] step {step_deg}"
        )));
    }
    let grid = scan_grid(lo_deg, hi_deg, step_deg);
    let mut best = ScanResult {
        tilt_deg: grid[0],
        value: f64::NEG_INFINITY,
        evaluations: grid.len(),
    };
    for t in grid {
        let v = eval(t);
        if v > best.value {
            best.tilt_deg = t;
            best.value = v;
        }
    }
    Ok(best)
}

/// Tilt interval scanned for a cluster: its span widened by `halfwidth_deg`
/// on both sides, clipped to the feasible range.
pub fn cluster_interval(cluster: &Cluster, halfwidth_deg: f64) -> (f64, f64) {
    let lo = (cluster.span_min_deg - halfwidth_deg).max(TILT_MIN_DEG);
    let hi = (cluster.span_max_deg + halfwidth_deg).min(TILT_MAX_DEG);
    (lo.min(hi), hi)
}

/// Scans a cluster's widened span on a `step_deg` grid.
pub fn greedy_tilt_scan(
    cluster: &Cluster,
    halfwidth_deg: f64,
    step_deg: f64,
    eval: impl FnMut(f64) -> f64,
) -> Result<ScanResult> {
    let (lo, hi) = cluster_interval(cluster, halfwidth_deg);
    exhaustive_tilt_scan(lo, hi, step_deg, eval)
}

/// Scan over the whole feasible tilt range.
pub fn full_range_scan(step_deg: f64, eval: impl FnMut(f64) -> f64) -> Result<ScanResult> {
    exhaustive_tilt_scan(TILT_MIN_DEG, TILT_MAX_DEG, step_deg, eval)
}

/// Every tilt the cluster search could try for these users (each AoA and every
/// cluster's grid) merged into the full-range grid, sorted and deduplicated.
pub fn oracle_candidates(
    aoas_deg: &[f64],
    threshold_deg: f64,
    halfwidth_deg: f64,
    step_deg: f64,
) -> Result<Vec<f64>> {
    if !(step_deg > 0.0) {
        return Err(Error::Domain(format!("bad scan step {step_deg}")));
    }
    let mut grid = scan_grid(TILT_MIN_DEG, TILT_MAX_DEG, step_deg);
    grid.extend(aoas_deg.iter().map(|a| a.clamp(TILT_MIN_DEG, TILT_MAX_DEG)));
    for c in cluster_users(aoas_deg, threshold_deg)? {
        let (lo, hi) = cluster_interval(&c, halfwidth_deg);
        grid.extend(scan_grid(lo, hi, step_deg));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Argmax over an explicit candidate list; the first maximum wins ties.
pub fn scan_candidates(candidates: &[f64], mut eval: impl FnMut(f64) -> f64) -> Result<ScanResult> {
    let Some(&first) = candidates.first() else {
        return Err(Error::Domain("empty candidate list".into()));
    };
    let mut best = ScanResult {
        tilt_deg: first,
        value: f64::NEG_INFINITY,
        evaluations: candidates.len(),
    };
    for &t in candidates {
        let v = eval(t);
        if v > best.value {
            best.tilt_deg = t;
            best.value = v;
        }
    }
    Ok(best)
}
