//! Evaluation of the crop-aware loss and its gradient.
//!
//! The minimization over crop-consistent boxes separates per axis. Each axis
//! falls in one of four cases depending on which sides of the cropped box lie
//! on the crop border:
//!
//! | case        | lower side | upper side | subproblem              |
//! |-------------|------------|------------|-------------------------|
//! | `Singleton` | fixed      | fixed      | none, target is the box |
//! | `RightOpen` | fixed      | free       | one-sided ([`solve_o1`])|
//! | `LeftOpen`  | free       | fixed      | one-sided ([`solve_o1`])|
//! | `BothOpen`  | free       | free       | two-sided ([`solve_o2`])|
//!
//! The gradient with respect to the prediction is the gradient of the plain
//! regression loss with the minimizer held constant.

mod find_min;
mod o1;
mod o2;
mod objective;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use find_min::find_min;
pub use o1::{
    candidate_intervals, nu_roots, solve_o1, solve_o1_traced, Candidate, CandidateIntervals,
    O1Branch, O1Outcome, MIN_OMEGA0, OMEGA_HAT_SPLIT,
};
pub use o2::{solve_o2, solve_o2_traced, O2Outcome, O2Side};
pub use objective::{eta, sigma_fn, xi, xi_prime, O1Objective};

use crate::error::{Error, Result};
use crate::geometry::{crop_box, encode, open_sides, open_sides_in_image, BBox, CropRect, Delta, Vec2};
use crate::instance::InstanceRecord;
use crate::loss::{l_bb, l_bb_grad, HuberParam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: HuberParam,
    /// Relative bisection tolerance; the absolute bracket width for `[lo, hi]`
    /// is `eps * max(1, |lo| + |hi|)`.
    pub eps: f64,
    /// Upper bound on any candidate size, in anchor units.
    pub omega_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta: HuberParam::default(),
            eps: 1e-10,
            omega_cap: 1e12,
        }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: f64) -> Result<Self> {
        Ok(SolverConfig {
            beta: HuberParam::new(beta)?,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.omega_cap > 1.0) {
            return Err(Error::invalid(format!(
                "omega_cap must exceed 1, got {}",
                self.omega_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseKind {
    Singleton,
    LeftOpen,
    RightOpen,
    BothOpen,
}

impl CaseKind {
    pub fn from_sides(lower_open: bool, upper_open: bool) -> Self {
        match (lower_open, upper_open) {
            (false, false) => CaseKind::Singleton,
            (true, false) => CaseKind::LeftOpen,
            (false, true) => CaseKind::RightOpen,
            (true, true) => CaseKind::BothOpen,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Singleton => "singleton",
            CaseKind::LeftOpen => "left-open",
            CaseKind::RightOpen => "right-open",
            CaseKind::BothOpen => "both-open",
        }
    }
}

/// Feasible set of one axis, in anchor units.
///
/// For the one-sided cases `a`/`b` are the pinned and bounding edges with
/// `w0 = b - a`; for `BothOpen` they are the crop borders. `delta_g`/`omega_g`
/// encode the cropped ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimCase {
    pub kind: CaseKind,
    pub a: f64,
    pub b: f64,
    pub delta_g: f64,
    pub omega_g: f64,
}

impl DimCase {
    /// Builds the case from the cropped target encoding and crop/anchor
    /// geometry, with the anchor center given in crop coordinates.
    pub fn new(
        kind: CaseKind,
        delta_g: f64,
        omega_g: f64,
        crop_extent: f64,
        anchor_center: f64,
        anchor_size: f64,
    ) -> Self {
        let crop_lo = -anchor_center / anchor_size;
        let crop_hi = (crop_extent - anchor_center) / anchor_size;
        let (a, b) = match kind {
            CaseKind::Singleton => (delta_g - omega_g / 2.0, delta_g + omega_g / 2.0),
            CaseKind::RightOpen => (delta_g - omega_g / 2.0, crop_hi),
            CaseKind::LeftOpen => (crop_lo, delta_g + omega_g / 2.0),
            CaseKind::BothOpen => (crop_lo, crop_hi),
        };
        DimCase {
            kind,
            a,
            b,
            delta_g,
            omega_g,
        }
    }

    pub fn omega0(&self) -> f64 {
        self.b - self.a
    }
}

/// Classifies one axis of a cropped box given in crop coordinates.
pub fn classify_dimension(
    center_g: f64,
    size_g: f64,
    crop_extent: f64,
    anchor_center: f64,
    anchor_size: f64,
) -> Result<DimCase> {
    if !(size_g > 0.0 && crop_extent > 0.0 && anchor_size > 0.0) {
        return Err(Error::invalid(format!(
            "sizes must be positive: box {size_g}, crop {crop_extent}, anchor {anchor_size}"
        )));
    }
    let tol = 1e-9 * crop_extent.max(1.0);
    if center_g - size_g / 2.0 < -tol || center_g + size_g / 2.0 > crop_extent + tol {
        return Err(Error::invalid(format!(
            "cropped box [{}, {}] lies outside the crop [0, {crop_extent}]",
            center_g - size_g / 2.0,
            center_g + size_g / 2.0
        )));
    }
    let kind = CaseKind::from_sides(center_g <= size_g / 2.0, center_g >= crop_extent - size_g / 2.0);
    Ok(DimCase::new(
        kind,
        (center_g - anchor_center) / anchor_size,
        size_g / anchor_size,
        crop_extent,
        anchor_center,
        anchor_size,
    ))
}

/// Which code path produced an axis' minimizer. Equal traces at nearby
/// predictions mean the minimizer moves smoothly between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DimTrace {
    pub kind: CaseKind,
    pub side: Option<O2Side>,
    pub branch: Option<O1Branch>,
    pub winner: Option<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimSolution {
    pub delta: f64,
    pub omega: f64,
    pub trace: DimTrace,
}

/// Minimizes one axis' regression loss over its feasible set.
pub fn solve_dimension(
    case: &DimCase,
    delta_p: f64,
    omega_p: f64,
    cfg: &SolverConfig,
) -> Result<DimSolution> {
    let mut trace = DimTrace {
        kind: case.kind,
        side: None,
        branch: None,
        winner: None,
    };
    let record = |trace: &mut DimTrace, o: &O1Outcome| {
        trace.branch = Some(o.branch);
        trace.winner = Some(o.winner);
    };
    let (delta, omega) = match case.kind {
        CaseKind::Singleton => (case.delta_g, case.omega_g),
        CaseKind::RightOpen => {
            let o = solve_o1_traced(omega_p, 2.0 * (delta_p - case.a), case.a, case.b, cfg)?;
            record(&mut trace, &o);
            (case.a + o.omega / 2.0, o.omega)
        }
        CaseKind::LeftOpen => {
            let o = solve_o1_traced(omega_p, 2.0 * (case.b - delta_p), case.a, case.b, cfg)?;
            record(&mut trace, &o);
            (case.b - o.omega / 2.0, o.omega)
        }
        CaseKind::BothOpen => {
            let o = solve_o2_traced(delta_p, omega_p, case.a, case.b, cfg)?;
            trace.side = Some(o.side);
            if let Some(inner) = &o.o1 {
                record(&mut trace, inner);
            }
            (o.delta, o.omega)
        }
    };
    Ok(DimSolution { delta, omega, trace })
}

/// Crop-aware loss at one prediction, with the minimizing target and gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CabbSolution {
    /// Closest crop-consistent target, in anchor units.
    pub delta_star: Delta,
    pub loss: f64,
    pub per_dim_case: [CaseKind; 2],
    pub grad_delta: Vec2,
    pub grad_omega: Vec2,
    pub trace: [DimTrace; 2],
    pub cases: [DimCase; 2],
}

/// Evaluates the crop-aware loss of prediction `p` for ground truth `g`
/// (original, uncropped), anchor and crop, all in the same pixel frame.
pub fn cabb_loss(
    p: &Delta,
    g: &BBox,
    anchor: &BBox,
    crop: &CropRect,
    cfg: &SolverConfig,
) -> Result<CabbSolution> {
    solve_with_sides(p, g, anchor, crop, open_sides(g, crop), cfg)
}

/// [`cabb_loss`] for a crop inside an image of known extent: sides that end
/// exactly on the crop border without reaching the image border are kept
/// fixed.
pub fn cabb_loss_in_image(
    p: &Delta,
    g: &BBox,
    anchor: &BBox,
    crop: &CropRect,
    image: &CropRect,
    cfg: &SolverConfig,
) -> Result<CabbSolution> {
    solve_with_sides(p, g, anchor, crop, open_sides_in_image(g, crop, image), cfg)
}

fn solve_with_sides(
    p: &Delta,
    g: &BBox,
    anchor: &BBox,
    crop: &CropRect,
    open: [[bool; 2]; 2],
    cfg: &SolverConfig,
) -> Result<CabbSolution> {
    cfg.validate()?;
    p.validate()?;
    let cropped = crop_box(g, crop)
        .ok_or_else(|| Error::invalid("ground truth does not overlap the crop"))?;
    let target = encode(&cropped, anchor)?;
    let (ca, da) = (anchor.center(), anchor.dims());

    let mut cases = [DimCase::new(CaseKind::Singleton, 0.0, 1.0, 1.0, 0.0, 1.0); 2];
    let mut solved = [None; 2];
    for k in 0..2 {
        let case = DimCase::new(
            CaseKind::from_sides(open[k][0], open[k][1]),
            target.delta[k],
            target.omega[k],
            crop.extent[k],
            ca[k] - crop.origin[k],
            da[k],
        );
        solved[k] = Some(solve_dimension(&case, p.delta[k], p.omega[k], cfg)?);
        cases[k] = case;
    }
    let [sx, sy] = solved.map(|s| s.expect("both axes solved"));
    let delta_star = Delta::new([sx.delta, sy.delta], [sx.omega, sy.omega])?;
    let loss = l_bb(p, &delta_star, cfg.beta)?;
    let (grad_delta, grad_omega) = l_bb_grad(p, &delta_star, cfg.beta)?;
    Ok(CabbSolution {
        delta_star,
        loss,
        per_dim_case: [cases[0].kind, cases[1].kind],
        grad_delta,
        grad_omega,
        trace: [sx.trace, sy.trace],
        cases,
    })
}

/// Solves a batch of instances in parallel; results keep the input order.
///
/// Each record's own `beta` overrides `cfg.beta`.
pub fn cabb_loss_batch(records: &[InstanceRecord], cfg: &SolverConfig) -> Vec<Result<CabbSolution>> {
    records.par_iter().map(|r| r.solve(cfg)).collect()
}
