//! Inner-layer solver: weighted-MMSE block coordinate ascent at fixed tilts.
//!
//! One sweep updates the receive filters, then the slacks (both closed form),
//! then each BS's beamformers through the regularized linear system
//!
//! ```text
//! (A_j + lambda_j I) w_jm = b_jm s_jm u_jm sqrt(alpha_jjm) g_jjm
//! A_j = sum_(i,n) b_in s_in |u_in|^2 alpha_jin g_jin g_jin^H + eta xi I
//! ```
//!
//! where `lambda_j >= 0` is the power-constraint multiplier found by bisection.
//! Every block is an exact maximizer of `H` in its variables, so `H` and `G`
//! never decrease.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::objective::{all_links, all_mse, g_value, h_value, Beamformers, LinkGains, PowerModel, Weights};

/// Regularization added when `eta xi = 0` and the multiplier is zero.
pub const TIE_BREAK_REG: f64 = 1e-12;

/// MMSE receive filters `u_jm = sqrt(alpha_jjm) g_jjm^H w_jm / (sum alpha |g^H w|^2 + 1)`.
pub fn update_filters(w: &Beamformers, gains: &LinkGains, ch: &ChannelSet) -> Result<Vec<Complex64>> {
    Ok(all_links(w, gains, ch)?
        .iter()
        .map(|l| l.signal_amp * (l.alpha_serving.sqrt() / l.total()))
        .collect())
}

/// Slacks `s_jm = 1 / mse_jm`.
pub fn update_slacks(w: &Beamformers, u: &[Complex64], gains: &LinkGains, ch: &ChannelSet) -> Result<Vec<f64>> {
    Ok(all_mse(w, u, gains, ch)?.into_iter().map(|e| 1.0 / e).collect())
}

/// Multiplier search on a strictly decreasing per-BS power curve.
///
/// Returns 0 if `power(0) <= p_max`. Otherwise brackets the root by doubling
/// `lambda_hi` from 1 and bisects until `power(lambda)` lies in
/// `[p_max (1 - tol), p_max]` or the bracket is narrower than `1e-12` (relative).
/// The returned multiplier is always feasible.
pub fn lambda_search(mut power: impl FnMut(f64) -> f64, p_max: f64, tol: f64) -> f64 {
    if power(0.0) <= p_max {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while power(hi) >= p_max {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        let p = power(mid);
        if p <= p_max && p >= p_max * (1.0 - tol) {
            return mid;
        }
        if p > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Beamformers of one BS together with the multiplier that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BsBeamformers {
    /// `K` vectors of length `M`, flattened.
    pub w: Vec<Complex64>,
    pub lambda: f64,
    pub power: f64,
}

/// Hermitian system matrix `A_j` (without the multiplier) and right-hand sides.
fn assemble_bs(
    j: usize,
    u: &[Complex64],
    s: &[f64],
    gains: &LinkGains,
    ch: &ChannelSet,
    eta: f64,
    pm: &PowerModel,
    weights: &Weights,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let (l, k, m) = (ch.num_cells, ch.users_per_cell, ch.antennas);
    let mut a = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..l {
        for n in 0..k {
            let idx = i * k + n;
            let c = weights.b[idx] * s[idx] * u[idx].norm_sqr() * gains.alpha(j, i, n);
            if c == 0.0 {
                continue;
            }
            let g = ch.g(j, i, n);
            for r in 0..m {
                let gr = g[r] * c;
                for q in 0..m {
                    a[(r, q)] += gr * g[q].conj();
                }
            }
        }
    }
    let reg = eta * pm.xi;
    for r in 0..m {
        a[(r, r)] += Complex64::new(reg, 0.0);
    }
    let mut rhs = DMatrix::<Complex64>::zeros(m, k);
    for n in 0..k {
        let idx = j * k + n;
        let c = u[idx] * (weights.b[idx] * s[idx] * gains.alpha(j, j, n).sqrt());
        let g = ch.g(j, j, n);
        for r in 0..m {
            rhs[(r, n)] = g[r] * c;
        }
    }
    (a, rhs)
}

/// `A` in its eigenbasis: `A = V diag(d) V^H` and `z = V^H R`, so that
/// `(A + mu I)^-1 R = V diag(1 / (d + mu)) z`.
struct Spectral {
    v: DMatrix<Complex64>,
    d: Vec<f64>,
    z: DMatrix<Complex64>,
    /// Squared norm of each row of `z`.
    z2: Vec<f64>,
}

impl Spectral {
    fn new(a: DMatrix<Complex64>, rhs: &DMatrix<Complex64>) -> Self {
        let eig = a.symmetric_eigen();
        let z = eig.eigenvectors.adjoint() * rhs;
        let z2 = z.row_iter().map(|r| r.iter().map(|c| c.norm_sqr()).sum()).collect();
        let d = eig.eigenvalues.iter().map(|x| x.max(0.0)).collect();
        Self { v: eig.eigenvectors, d, z, z2 }
    }

    fn power(&self, mu: f64) -> f64 {
        self.d.iter().zip(&self.z2).map(|(d, z2)| z2 / (d + mu).powi(2)).sum()
    }

    fn solve(&self, mu: f64) -> DMatrix<Complex64> {
        let mut scaled = self.z.clone();
        for (i, d) in self.d.iter().enumerate() {
            let f = 1.0 / (d + mu);
            scaled.row_mut(i).iter_mut().for_each(|c| *c *= f);
        }
        &self.v * scaled
    }
}

fn frob2(x: &DMatrix<Complex64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves BS `j`'s beamformers for fixed filters and slacks.
#[allow(clippy::too_many_arguments)]
pub fn solve_beamformers_bs(
    j: usize,
    u: &[Complex64],
    s: &[f64],
    gains: &LinkGains,
    ch: &ChannelSet,
    eta: f64,
    pm: &PowerModel,
    weights: &Weights,
    lambda_tol: f64,
) -> Result<BsBeamformers> {
    let users = ch.num_cells * ch.users_per_cell;
    if u.len() != users || s.len() != users {
        return Err(Error::Dimension("filters/slacks length".into()));
    }
    if j >= ch.num_cells {
        return Err(Error::Dimension(format!("BS {j} out of range")));
    }
    if let Some(bad) = s.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("slack must be positive, got {bad}")));
    }
    weights.validate(users)?;
    let (a, rhs) = assemble_bs(j, u, s, gains, ch, eta, pm, weights);
    let base = if eta * pm.xi > 0.0 { 0.0 } else { TIE_BREAK_REG };
    let sp = Spectral::new(a, &rhs);
    let lambda = lambda_search(|lam| sp.power(base + lam), pm.p_max, lambda_tol);
    let x = sp.solve(base + lambda);
    let mut power = frob2(&x);
    let mut w: Vec<Complex64> = (0..ch.users_per_cell)
        .flat_map(|n| x.column(n).iter().copied().collect::<Vec<_>>())
        .collect();
    if power > pm.p_max {
        let scale = (pm.p_max / power).sqrt();
        w.iter_mut().for_each(|z| *z *= scale);
        power = w.iter().map(|z| z.norm_sqr()).sum();
    }
    Ok(BsBeamformers { w, lambda, power })
}

/// Per-BS Lagrangian at fixed filters and slacks:
/// `sum_m [-w^H A_j w + 2 Re(r_m^H w)] - lambda (sum_m ||w_jm||^2 - P)`.
#[allow(clippy::too_many_arguments)]
pub fn bs_lagrangian(
    j: usize,
    w_bs: &[Complex64],
    lambda: f64,
    u: &[Complex64],
    s: &[f64],
    gains: &LinkGains,
    ch: &ChannelSet,
    eta: f64,
    pm: &PowerModel,
    weights: &Weights,
) -> f64 {
    let (a, rhs) = assemble_bs(j, u, s, gains, ch, eta, pm, weights);
    let m = ch.antennas;
    let mut total = 0.0;
    let mut power = 0.0;
    for n in 0..ch.users_per_cell {
        let x = DVector::from_column_slice(&w_bs[n * m..(n + 1) * m]);
        let quad = (x.adjoint() * &a * &x)[(0, 0)].re;
        let lin: Complex64 = rhs.column(n).iter().zip(x.iter()).map(|(r, w)| r.conj() * w).sum();
        total += -quad + 2.0 * lin.re;
        power += x.norm_squared();
    }
    total - lambda * (power - pm.p_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Stop when successive `G` values differ by less than this.
    pub delta: f64,
    pub max_iters: usize,
    /// Relative power tolerance of the multiplier search.
    pub lambda_tol: f64,
    /// Relative slack allowed before a decrease counts as an ascent violation.
    pub ascent_tol: f64,
    /// Record `H` after every block update (filters, slacks, each BS).
    pub record_blocks: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            max_iters: 200,
            lambda_tol: 1e-12,
            ascent_tol: 1e-9,
            record_blocks: false,
        }
    }
}

/// Iterate of the inner solver. `u` and `s` are optimal for `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub w: Beamformers,
    pub u: Vec<Complex64>,
    pub s: Vec<f64>,
    pub g_current: f64,
    pub iter: usize,
    /// Multiplier of each BS in the last beamformer update.
    pub lambdas: Vec<f64>,
    /// `H` after each block of the last sweep, when recorded.
    pub block_h: Vec<f64>,
}

/// Shared read-only inputs of the inner solver.
#[derive(Debug, Clone, Copy)]
pub struct InnerProblem<'a> {
    pub ch: &'a ChannelSet,
    pub gains: &'a LinkGains,
    pub eta: f64,
    pub pm: &'a PowerModel,
    pub weights: &'a Weights,
}

impl InnerProblem<'_> {
    pub fn g(&self, w: &Beamformers) -> Result<f64> {
        g_value(w, self.gains, self.ch, self.eta, self.pm, self.weights)
    }

    pub fn h(&self, w: &Beamformers, u: &[Complex64], s: &[f64]) -> Result<f64> {
        h_value(w, u, s, self.gains, self.ch, self.eta, self.pm, self.weights)
    }

    /// State at `w` with optimal filters and slacks.
    pub fn state(&self, w: Beamformers) -> Result<InnerState> {
        let u = update_filters(&w, self.gains, self.ch)?;
        let s = update_slacks(&w, &u, self.gains, self.ch)?;
        let g_current = self.g(&w)?;
        Ok(InnerState {
            lambdas: vec![0.0; w.num_cells],
            w,
            u,
            s,
            g_current,
            iter: 0,
            block_h: Vec::new(),
        })
    }

    /// Replaces BS `j`'s beamformers by the closed-form solve at `(u, s)`.
    pub fn solve_bs(&self, j: usize, u: &[Complex64], s: &[f64], w: &mut Beamformers, lambda_tol: f64) -> Result<f64> {
        let sol = solve_beamformers_bs(j, u, s, self.gains, self.ch, self.eta, self.pm, self.weights, lambda_tol)?;
        let m = self.ch.antennas;
        for n in 0..self.ch.users_per_cell {
            w.w_mut(j, n).copy_from_slice(&sol.w[n * m..(n + 1) * m]);
        }
        Ok(sol.lambda)
    }
}

fn check_ascent(iter: usize, before: f64, after: f64, tol: f64) -> Result<()> {
    if after < before - tol * (1.0 + before.abs()) {
        return Err(Error::AscentViolation { iter, before, after });
    }
    Ok(())
}

/// One sweep: filters, slacks, then every BS's beamformers.
pub fn inner_iterate(state: &InnerState, prob: &InnerProblem, opts: &InnerOptions) -> Result<InnerState> {
    let iter = state.iter + 1;
    let mut block_h = Vec::new();
    let mut last_h = if opts.record_blocks {
        let h = prob.h(&state.w, &state.u, &state.s)?;
        block_h.push(h);
        h
    } else {
        0.0
    };
    let mut record = |h: f64, block_h: &mut Vec<f64>| -> Result<()> {
        check_ascent(iter, last_h, h, opts.ascent_tol)?;
        last_h = h;
        block_h.push(h);
        Ok(())
    };

    let u = update_filters(&state.w, prob.gains, prob.ch)?;
    if opts.record_blocks {
        record(prob.h(&state.w, &u, &state.s)?, &mut block_h)?;
    }
    let s = update_slacks(&state.w, &u, prob.gains, prob.ch)?;
    if opts.record_blocks {
        record(prob.h(&state.w, &u, &s)?, &mut block_h)?;
    }
    let mut w = state.w.clone();
    let mut lambdas = vec![0.0; prob.ch.num_cells];
    for (j, lam) in lambdas.iter_mut().enumerate() {
        *lam = prob.solve_bs(j, &u, &s, &mut w, opts.lambda_tol)?;
        if opts.record_blocks {
            record(prob.h(&w, &u, &s)?, &mut block_h)?;
        }
    }
    let mut next = prob.state(w)?;
    check_ascent(iter, state.g_current, next.g_current, opts.ascent_tol)?;
    next.iter = iter;
    next.lambdas = lambdas;
    next.block_h = block_h;
    Ok(next)
}

/// One row of the per-sweep diagnostics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerTraceRow {
    pub iter: usize,
    pub g_value: f64,
    pub bs_power: Vec<f64>,
}

impl InnerTraceRow {
    pub const HEADER: &'static str = "iter,g_value,bs_power";

    /// `iter,g_value,p_0;p_1;...;p_{L-1}`
    pub fn to_line(&self) -> String {
        let mut s = format!("{},{}", self.iter, self.g_value);
        for (i, p) in self.bs_power.iter().enumerate() {
            let _ = write!(s, "{}{p}", if i == 0 { ',' } else { ';' });
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub state: InnerState,
    pub converged: bool,
    pub trace: Vec<InnerTraceRow>,
}

fn trace_row(state: &InnerState) -> InnerTraceRow {
    InnerTraceRow {
        iter: state.iter,
        g_value: state.g_current,
        bs_power: (0..state.w.num_cells).map(|j| state.w.bs_power(j)).collect(),
    }
}

/// Sweeps until `|G_n - G_{n-1}| < delta` or `max_iters`. Returns the best
/// iterate; `converged` is false when the iteration cap was hit.
pub fn inner_solve(prob: &InnerProblem, init_w: Beamformers, opts: &InnerOptions, trace: bool) -> Result<InnerResult> {
    if !(opts.delta > 0.0) {
        return Err(Error::Config("inner tolerance must be positive".into()));
    }
    for j in 0..init_w.num_cells {
        if init_w.bs_power(j) > prob.pm.p_max * (1.0 + 1e-9) {
            return Err(Error::Domain(format!("initial beamformers of BS {j} exceed the power budget")));
        }
    }
    let mut state = prob.state(init_w)?;
    let mut rows = Vec::new();
    if trace {
        rows.push(trace_row(&state));
    }
    let mut converged = false;
    while state.iter < opts.max_iters {
        let next = inner_iterate(&state, prob, opts)?;
        let change = (next.g_current - state.g_current).abs();
        state = next;
        if trace {
            rows.push(trace_row(&state));
        }
        if change < opts.delta {
            converged = true;
            break;
        }
    }
    Ok(InnerResult {
        state,
        converged,
        trace: rows,
    })
}
