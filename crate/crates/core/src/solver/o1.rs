//! Exact global minimization of the one-sided subproblem.
//!
//! `xi` is neither convex nor quasi-convex on `[w0, inf)`, but its derivative
//! changes monotonicity at a handful of known points. Between those points
//! either `xi'` or `sigma(w) = w xi'(w)` is increasing, so each piece has at
//! most one local minimum that bisection finds. The global minimum is the best
//! of those local minima and the two special points `w0` and `w_hat`.

use serde::Serialize;

use super::find_min::{bracket_eps, find_min};
use super::objective::O1Objective;
use super::SolverConfig;
use crate::error::{Error, Result};

/// Smallest admissible lower bound `w0 = b1 - a1`.
pub const MIN_OMEGA0: f64 = 1e-9;

/// Which of the three structural regimes the instance falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum O1Branch {
    /// `w0 < w_p` and `w_hat <= w_p`: `xi'` is increasing between `max(w0, w_hat)` and `w_p`.
    Increasing,
    /// `max(w0, w_p) < w_hat`: piecewise search over the candidate intervals.
    Piecewise,
    /// Otherwise `xi` increases on the whole feasible set and `w0` is optimal.
    Boundary,
}

/// Where the returned minimizer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Candidate {
    Omega0,
    OmegaHat,
    /// Bisection in the `Increasing` regime.
    Interior,
    J1,
    J2,
    J3,
    J4,
    J5,
}

/// Closed search intervals of the `Piecewise` regime; `None` when empty.
///
/// `xi'` is increasing on `j1` and `j2`, `sigma` on `j3`, `j4` and `j5`.
/// `j3` is only used when `w_hat <= 4 sqrt(2)`, `j4`/`j5` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CandidateIntervals {
    pub j1: Option<(f64, f64)>,
    pub j2: Option<(f64, f64)>,
    pub j3: Option<(f64, f64)>,
    pub j4: Option<(f64, f64)>,
    pub j5: Option<(f64, f64)>,
}

fn interval(lo: f64, hi: f64) -> Option<(f64, f64)> {
    (lo <= hi).then_some((lo, hi))
}

/// Roots of `2 w^2 - w_hat w + 4`, where `sigma'` changes sign in the
/// quadratic-quadratic region. Only real for `w_hat >= 4 sqrt(2)`.
pub fn nu_roots(omega_hat: f64) -> Option<(f64, f64)> {
    if !(omega_hat >= OMEGA_HAT_SPLIT) {
        return None;
    }
    let s = (1.0 - 32.0 / (omega_hat * omega_hat)).max(0.0).sqrt();
    Some((omega_hat / 4.0 * (1.0 - s), omega_hat / 4.0 * (1.0 + s)))
}

/// Threshold on `w_hat` separating the single-interval from the split search.
pub const OMEGA_HAT_SPLIT: f64 = 4.0 * std::f64::consts::SQRT_2;

/// Candidate intervals for `max(w0, w_p) < w_hat`, capped at `cap`.
pub fn candidate_intervals(
    omega0: f64,
    omega_p: f64,
    omega_hat: f64,
    beta: f64,
    cap: f64,
) -> CandidateIntervals {
    let e_beta = beta.exp();
    let e_min = beta.min(1.0).exp();
    let e = std::f64::consts::E;
    let up = |v: f64| v.min(cap);

    let j1 = interval(omega0.max(omega_p), up((e_min * omega_p).min(omega_hat)));
    let j2 = interval(
        omega0
            .max(2.0 * beta.sqrt())
            .max(omega_hat - 2.0 * beta)
            .max(e_beta * omega_p),
        up(omega_hat),
    );
    let quad_lo = omega0.max(omega_hat - 2.0 * beta).max(e * omega_p);
    let quad_hi = up((e_beta * omega_p).min(omega_hat));
    let mut out = CandidateIntervals {
        j1,
        j2,
        ..Default::default()
    };
    if omega_hat <= OMEGA_HAT_SPLIT {
        out.j3 = interval(quad_lo, quad_hi);
    } else {
        let (nu1, nu2) = nu_roots(omega_hat).expect("real roots above the split threshold");
        out.j4 = interval(quad_lo, quad_hi.min(nu1));
        out.j5 = interval(quad_lo.max(nu2), quad_hi);
    }
    out
}

/// Result of [`solve_o1_traced`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O1Outcome {
    pub omega: f64,
    pub objective: f64,
    pub branch: O1Branch,
    pub winner: Candidate,
}

/// Minimizes `xi` over `w >= b1 - a1`; see [`solve_o1_traced`].
pub fn solve_o1(omega_p: f64, omega_hat: f64, a1: f64, b1: f64, cfg: &SolverConfig) -> Result<f64> {
    solve_o1_traced(omega_p, omega_hat, a1, b1, cfg).map(|o| o.omega)
}

/// Minimizes `xi(w) = huber((w - w_hat)/2) + huber(ln w - ln w_p)` subject to
/// `w >= w0 = b1 - a1`, and reports which branch and candidate produced the
/// minimizer.
pub fn solve_o1_traced(
    omega_p: f64,
    omega_hat: f64,
    a1: f64,
    b1: f64,
    cfg: &SolverConfig,
) -> Result<O1Outcome> {
    let omega0 = b1 - a1;
    if !(omega0 > MIN_OMEGA0) || !omega0.is_finite() {
        return Err(Error::invalid(format!(
            "degenerate lower bound w0 = b1 - a1 = {omega0}"
        )));
    }
    if omega0 > cfg.omega_cap {
        return Err(Error::invalid(format!(
            "w0 = {omega0} exceeds the search cap {}",
            cfg.omega_cap
        )));
    }
    let f = O1Objective::new(omega_p, omega_hat, cfg.beta)?;
    Ok(minimize(&f, omega0, cfg))
}

pub(crate) fn minimize(f: &O1Objective, omega0: f64, cfg: &SolverConfig) -> O1Outcome {
    let (wp, wh) = (f.omega_p, f.omega_hat);
    let deriv = |w: f64| f.derivative(w);
    let sigma = |w: f64| f.sigma(w);
    let search = |lo: f64, hi: f64, phi: &dyn Fn(f64) -> f64| {
        find_min(lo, hi, phi, bracket_eps(cfg.eps, lo, hi))
    };

    let mut best = (omega0, f.value(omega0), Candidate::Omega0);
    let mut offer = |w: Option<f64>, tag: Candidate| {
        if let Some(w) = w {
            let v = f.value(w);
            if v < best.1 {
                best = (w, v, tag);
            }
        }
    };

    let branch = if omega0 < wp && wh <= wp {
        offer(search(omega0.max(wh), wp, &deriv), Candidate::Interior);
        O1Branch::Increasing
    } else if omega0.max(wp) < wh {
        let iv = candidate_intervals(omega0, wp, wh, cfg.beta.get(), cfg.omega_cap);
        offer(Some(wh.min(cfg.omega_cap)), Candidate::OmegaHat);
        offer(iv.j1.and_then(|(l, h)| search(l, h, &deriv)), Candidate::J1);
        offer(iv.j2.and_then(|(l, h)| search(l, h, &deriv)), Candidate::J2);
        offer(iv.j3.and_then(|(l, h)| search(l, h, &sigma)), Candidate::J3);
        offer(iv.j4.and_then(|(l, h)| search(l, h, &sigma)), Candidate::J4);
        offer(iv.j5.and_then(|(l, h)| search(l, h, &sigma)), Candidate::J5);
        O1Branch::Piecewise
    } else {
        O1Branch::Boundary
    };

    O1Outcome {
        omega: best.0,
        objective: best.1,
        branch,
        winner: best.2,
    }
}
