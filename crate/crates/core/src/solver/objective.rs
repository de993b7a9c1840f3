//! The one-sided subproblem objective and its monotone surrogates.
//!
//! With one box edge pinned, the per-axis problem reduces to choosing the box
//! size `w >= w0` that minimizes
//!
//! ```text
//! xi(w) = huber((w - w_hat) / 2) + huber(ln w - ln w_p)
//! ```
//!
//! where `w_hat` is the size that would put the free edge exactly under the
//! prediction's center constraint and `w_p` the predicted size.

use crate::error::{Error, Result};
use crate::loss::{huber, huber_prime, HuberParam};

/// Smallest size fed to a logarithm.
pub(crate) const OMEGA_FLOOR: f64 = 1e-12;

/// `xi` and its derivatives for fixed `(w_p, w_hat, beta)`.
#[derive(Debug, Clone, Copy)]
pub struct O1Objective {
    pub omega_p: f64,
    pub omega_hat: f64,
    pub beta: HuberParam,
    ln_omega_p: f64,
}

impl O1Objective {
    pub fn new(omega_p: f64, omega_hat: f64, beta: HuberParam) -> Result<Self> {
        if !(omega_p > 0.0 && omega_p.is_finite()) {
            return Err(Error::invalid(format!("omega_p must be positive, got {omega_p}")));
        }
        if !omega_hat.is_finite() {
            return Err(Error::invalid(format!("omega_hat must be finite, got {omega_hat}")));
        }
        Ok(O1Objective {
            omega_p,
            omega_hat,
            beta,
            ln_omega_p: omega_p.ln(),
        })
    }

    #[inline]
    pub fn value(&self, omega: f64) -> f64 {
        let w = omega.max(OMEGA_FLOOR);
        huber(0.5 * (w - self.omega_hat), self.beta) + huber(w.ln() - self.ln_omega_p, self.beta)
    }

    #[inline]
    pub fn derivative(&self, omega: f64) -> f64 {
        let w = omega.max(OMEGA_FLOOR);
        0.5 * huber_prime(0.5 * (w - self.omega_hat), self.beta) + self.eta(w)
    }

    /// Second term of the derivative, `huber'(ln w - ln w_p) / w`.
    #[inline]
    pub fn eta(&self, omega: f64) -> f64 {
        let w = omega.max(OMEGA_FLOOR);
        huber_prime(w.ln() - self.ln_omega_p, self.beta) / w
    }

    /// `w * xi'(w)`: same sign as the derivative, increasing where the
    /// derivative itself is not.
    #[inline]
    pub fn sigma(&self, omega: f64) -> f64 {
        omega * self.derivative(omega)
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("omega must be positive, got {omega}")))
    }
}

pub fn xi(omega: f64, omega_p: f64, omega_hat: f64, beta: HuberParam) -> Result<f64> {
    check_omega(omega)?;
    Ok(O1Objective::new(omega_p, omega_hat, beta)?.value(omega))
}

pub fn xi_prime(omega: f64, omega_p: f64, omega_hat: f64, beta: HuberParam) -> Result<f64> {
    check_omega(omega)?;
    Ok(O1Objective::new(omega_p, omega_hat, beta)?.derivative(omega))
}

pub fn eta(omega: f64, omega_p: f64, beta: HuberParam) -> Result<f64> {
    check_omega(omega)?;
    Ok(O1Objective::new(omega_p, 0.0, beta)?.eta(omega))
}

pub fn sigma_fn(omega: f64, omega_p: f64, omega_hat: f64, beta: HuberParam) -> Result<f64> {
    check_omega(omega)?;
    Ok(O1Objective::new(omega_p, omega_hat, beta)?.sigma(omega))
}
