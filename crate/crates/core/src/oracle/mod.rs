//! Brute-force reference minimizers.
//!
//! Nothing here uses the structure the analytic solver relies on. Sizes are
//! searched on a dense log-spaced grid that is then refined around the best
//! point; the position of a box with two free sides is optimized exactly for
//! each size (the objective is convex in the center once the size is fixed).
//! The oracle is slow on purpose and only used to certify the solver.

pub mod fuzz;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{crop_box, open_sides, BBox, CropRect, Delta};
use crate::instance::InstanceRecord;
use crate::loss::{huber, HuberParam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Points of the initial log-spaced grid.
    pub grid_points: usize,
    /// Refinement passes; each shrinks the bracket about 100x.
    pub refine_passes: usize,
    /// The grid spans `[w0, omega_span * max(w0, w_hat, w_p, 1)]`.
    pub omega_span: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_points: 10_000,
            refine_passes: 3,
            omega_span: 16.0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 100 {
            return Err(Error::invalid(format!(
                "oracle needs at least 100 grid points, got {}",
                self.grid_points
            )));
        }
        if !(self.omega_span > 1.0) {
            return Err(Error::invalid("omega_span must exceed 1"));
        }
        Ok(())
    }
}

const REFINE_POINTS: usize = 201;

/// Minimizes `f` over `[lo, hi]` (`0 < lo <= hi`) on a log-spaced grid with
/// local refinement. Returns the best point and value.
pub fn grid_minimize<F: Fn(f64) -> f64>(lo: f64, hi: f64, f: F, cfg: &OracleConfig) -> (f64, f64) {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let point = |a: f64, b: f64, i: usize, n: usize| -> f64 {
        if i == 0 {
            a.exp()
        } else {
            (a + (b - a) * i as f64 / (n - 1) as f64).exp()
        }
    };

    let mut best_i = 0;
    let mut best = (lo, f(lo));
    for i in 1..cfg.grid_points {
        let w = if i == cfg.grid_points - 1 { hi } else { point(llo, lhi, i, cfg.grid_points) };
        let v = f(w);
        if v < best.1 {
            best = (w, v);
            best_i = i;
        }
    }

    let mut cell = (lhi - llo) / (cfg.grid_points - 1) as f64;
    let mut center = if best_i == 0 { llo } else { best.0.ln() };
    for _ in 0..cfg.refine_passes {
        let a = (center - cell).max(llo);
        let b = (center + cell).min(lhi);
        if !(a < b) {
            break;
        }
        for i in 0..REFINE_POINTS {
            let w = if i == REFINE_POINTS - 1 { b.exp() } else { point(a, b, i, REFINE_POINTS) };
            let w = w.clamp(lo, hi);
            let v = f(w);
            if v < best.1 {
                best = (w, v);
            }
        }
        center = best.0.ln();
        cell = (b - a) / (REFINE_POINTS - 1) as f64;
    }
    best
}

fn size_loss(w: f64, omega_p: f64, beta: HuberParam) -> f64 {
    huber(w.ln() - omega_p.ln(), beta)
}

/// Reference minimizer of the one-sided problem: returns `(w, objective)`.
pub fn oracle_o1(
    omega_p: f64,
    omega_hat: f64,
    a1: f64,
    b1: f64,
    beta: HuberParam,
    cfg: &OracleConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let w0 = b1 - a1;
    if !(w0 > 0.0 && omega_p > 0.0 && omega_hat.is_finite()) {
        return Err(Error::invalid(format!(
            "oracle needs b1 > a1 and omega_p > 0 (a1={a1}, b1={b1}, omega_p={omega_p})"
        )));
    }
    let hi = cfg.omega_span * w0.max(omega_hat).max(omega_p).max(1.0);
    Ok(grid_minimize(
        w0,
        hi,
        |w| huber(0.5 * (w - omega_hat), beta) + size_loss(w, omega_p, beta),
        cfg,
    ))
}

/// Reference minimizer of the two-sided problem: returns `(d, w, objective)`.
pub fn oracle_o2(
    delta_p: f64,
    omega_p: f64,
    a2: f64,
    b2: f64,
    beta: HuberParam,
    cfg: &OracleConfig,
) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let w0 = b2 - a2;
    if !(w0 > 0.0 && omega_p > 0.0 && delta_p.is_finite()) {
        return Err(Error::invalid(format!(
            "oracle needs b2 > a2 and omega_p > 0 (a2={a2}, b2={b2}, omega_p={omega_p})"
        )));
    }
    // For a fixed size the feasible centers form [b2 - w/2, a2 + w/2].
    // Written as max/min: at w = w0 the two bounds may cross by a rounding error.
    let best_center = |w: f64| delta_p.max(b2 - 0.5 * w).min(a2 + 0.5 * w);
    let reach = 2.0 * (delta_p - a2).abs().max((b2 - delta_p).abs());
    let hi = cfg.omega_span * w0.max(omega_p).max(reach).max(1.0);
    let (w, v) = grid_minimize(
        w0,
        hi,
        |w| huber(best_center(w) - delta_p, beta) + size_loss(w, omega_p, beta),
        cfg,
    );
    Ok((best_center(w), w, v))
}

/// Reference minimum for one axis, set up directly from pixel geometry:
/// `lo`/`hi` are the cropped box edges and `open` says which of them may
/// move outwards.
#[allow(clippy::too_many_arguments)]
pub fn oracle_dimension(
    lo: f64,
    hi: f64,
    open: [bool; 2],
    anchor_center: f64,
    anchor_size: f64,
    pred_delta: f64,
    pred_omega: f64,
    beta: HuberParam,
    cfg: &OracleConfig,
) -> (f64, f64, f64) {
    let objective = |center: f64, size: f64| {
        huber((center - anchor_center) / anchor_size - pred_delta, beta)
            + size_loss(size / anchor_size, pred_omega, beta)
    };
    let pred_center = anchor_center + pred_delta * anchor_size;
    let w0 = (hi - lo) / anchor_size;
    let span = |reach: f64| cfg.omega_span * w0.max(pred_omega).max(reach.abs()).max(1.0);
    let (center, size) = match open {
        [false, false] => ((lo + hi) / 2.0, hi - lo),
        [false, true] => {
            let reach = 2.0 * (pred_center - lo) / anchor_size;
            let (w, _) = grid_minimize(w0, span(reach), |w| {
                let s = w * anchor_size;
                objective(lo + 0.5 * s, s)
            }, cfg);
            let s = w * anchor_size;
            (lo + 0.5 * s, s)
        }
        [true, false] => {
            let reach = 2.0 * (hi - pred_center) / anchor_size;
            let (w, _) = grid_minimize(w0, span(reach), |w| {
                let s = w * anchor_size;
                objective(hi - 0.5 * s, s)
            }, cfg);
            let s = w * anchor_size;
            (hi - 0.5 * s, s)
        }
        [true, true] => {
            let reach = 2.0 * (pred_center - lo).abs().max((hi - pred_center).abs()) / anchor_size;
            let place = |s: f64| pred_center.max(hi - 0.5 * s).min(lo + 0.5 * s);
            let (w, _) = grid_minimize(w0, span(reach), |w| {
                let s = w * anchor_size;
                objective(place(s), s)
            }, cfg);
            let s = w * anchor_size;
            (place(s), s)
        }
    };
    (
        (center - anchor_center) / anchor_size,
        size / anchor_size,
        objective(center, size),
    )
}

/// Reference minimum of the full crop-aware problem for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSolution {
    pub target: Delta,
    pub objective: f64,
    pub per_dim: [f64; 2],
}

pub fn oracle_cabb(
    pred: &Delta,
    gt: &BBox,
    anchor: &BBox,
    crop: &CropRect,
    beta: HuberParam,
    cfg: &OracleConfig,
) -> Result<OracleSolution> {
    cfg.validate()?;
    let cropped =
        crop_box(gt, crop).ok_or_else(|| Error::invalid("ground truth does not overlap the crop"))?;
    let open = open_sides(gt, crop);
    let (ca, da) = (anchor.center(), anchor.dims());
    let mut delta = [0.0; 2];
    let mut omega = [1.0; 2];
    let mut per_dim = [0.0; 2];
    for k in 0..2 {
        let (d, w, v) = oracle_dimension(
            cropped.lo(k),
            cropped.hi(k),
            open[k],
            ca[k],
            da[k],
            pred.delta[k],
            pred.omega[k],
            beta,
            cfg,
        );
        delta[k] = d;
        omega[k] = w;
        per_dim[k] = v;
    }
    Ok(OracleSolution {
        target: Delta::new(delta, omega)?,
        objective: per_dim[0] + per_dim[1],
        per_dim,
    })
}

pub fn oracle_instance(rec: &InstanceRecord, cfg: &OracleConfig) -> Result<OracleSolution> {
    oracle_cabb(&rec.pred, rec.gt(), rec.anchor(), &rec.crop, rec.beta, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta1() -> HuberParam {
        HuberParam::new(1.0).unwrap()
    }

    #[test]
    fn boundary_optimum() {
        let (w, _) = oracle_o1(0.5, 0.6, 0.0, 1.0, beta1(), &OracleConfig::default()).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_zero_is_found() {
        let (w, v) = oracle_o1(2.0, 2.0, 0.0, 1.0, beta1(), &OracleConfig::default()).unwrap();
        assert!((w - 2.0).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn feasible_two_sided_prediction() {
        let (d, w, v) = oracle_o2(0.0, 3.0, -1.0, 1.0, beta1(), &OracleConfig::default()).unwrap();
        assert_eq!(d, 0.0);
        assert!((w - 3.0).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = OracleConfig::default();
        assert!(oracle_o1(1.0, 1.0, 1.0, 0.0, beta1(), &cfg).is_err());
        assert!(oracle_o2(0.0, 1.0, 1.0, 1.0, beta1(), &cfg).is_err());
        let small = OracleConfig {
            grid_points: 10,
            ..cfg
        };
        assert!(oracle_o1(1.0, 1.0, 0.0, 1.0, beta1(), &small).is_err());
    }

    #[test]
    fn refinement_never_worsens() {
        let f = |w: f64| (w.ln() - 0.3).powi(2) + 0.01 * (w - 3.0).abs();
        let mut prev = f64::INFINITY;
        for passes in 0..4 {
            let cfg = OracleConfig {
                grid_points: 100,
                refine_passes: passes,
                ..Default::default()
            };
            let (_, v) = grid_minimize(0.1, 50.0, f, &cfg);
            assert!(v <= prev);
            prev = v;
        }
    }
}
