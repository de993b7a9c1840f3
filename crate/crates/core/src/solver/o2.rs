//! The two-sided subproblem: both box edges may move outwards.
//!
//! ```text
//! min  huber(d - d_p) + huber(ln w - ln w_p)
//! s.t. d - w/2 <= a2,   d + w/2 >= b2
//! ```
//!
//! The only interior stationary point is the prediction itself, so either the
//! prediction is feasible or the optimum sits on one of the two constraint
//! lines, each of which is a one-sided problem.

use serde::Serialize;

use super::o1::{minimize, O1Outcome, MIN_OMEGA0};
use super::objective::O1Objective;
use super::SolverConfig;
use crate::error::{Error, Result};

/// Which constraint, if any, is active at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum O2Side {
    /// The prediction satisfies both constraints.
    Unconstrained,
    /// `d - w/2 = a2`.
    Lower,
    /// `d + w/2 = b2`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct O2Outcome {
    pub delta: f64,
    pub omega: f64,
    pub objective: f64,
    pub side: O2Side,
    /// The one-sided solve that produced the winning side.
    pub o1: Option<O1Outcome>,
}

pub fn solve_o2(
    delta_p: f64,
    omega_p: f64,
    a2: f64,
    b2: f64,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    solve_o2_traced(delta_p, omega_p, a2, b2, cfg).map(|o| (o.delta, o.omega))
}

pub fn solve_o2_traced(
    delta_p: f64,
    omega_p: f64,
    a2: f64,
    b2: f64,
    cfg: &SolverConfig,
) -> Result<O2Outcome> {
    let omega0 = b2 - a2;
    if !(omega0 > MIN_OMEGA0) || !omega0.is_finite() || !delta_p.is_finite() {
        return Err(Error::invalid(format!(
            "two-sided problem needs b2 > a2, got a2={a2} b2={b2}"
        )));
    }
    if omega0 > cfg.omega_cap {
        return Err(Error::invalid(format!("b2 - a2 = {omega0} exceeds the search cap")));
    }
    let hat_lower = 2.0 * (delta_p - a2);
    let hat_upper = 2.0 * (b2 - delta_p);
    if omega_p >= hat_lower.max(hat_upper) {
        O1Objective::new(omega_p, hat_lower, cfg.beta)?;
        return Ok(O2Outcome {
            delta: delta_p,
            omega: omega_p,
            objective: 0.0,
            side: O2Side::Unconstrained,
            o1: None,
        });
    }

    // Each candidate is scored under its own subproblem objective; both equal
    // the two-sided objective on their constraint line.
    let lower = minimize(&O1Objective::new(omega_p, hat_lower, cfg.beta)?, omega0, cfg);
    let upper = minimize(&O1Objective::new(omega_p, hat_upper, cfg.beta)?, omega0, cfg);
    Ok(if lower.objective <= upper.objective {
        O2Outcome {
            delta: a2 + lower.omega / 2.0,
            omega: lower.omega,
            objective: lower.objective,
            side: O2Side::Lower,
            o1: Some(lower),
        }
    } else {
        O2Outcome {
            delta: b2 - upper.omega / 2.0,
            omega: upper.omega,
            objective: upper.objective,
            side: O2Side::Upper,
            o1: Some(upper),
        }
    })
}
