//! Randomized certification of the solver: oracle equivalence, feasibility,
//! the lower bound against the cropped target, gradient checks and spot
//! checks of the monotonicity facts the solver relies on.
//!
//! Every instance is drawn from its own ChaCha stream (`seed`, index), so a
//! run is reproducible and any single instance can be regenerated alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::{oracle_instance, OracleConfig};
use crate::error::{Error, Result};
use crate::geometry::{crop_box, decode, encode, in_rho, sample_rho_member, Delta};
use crate::instance::InstanceRecord;
use crate::loss::HuberParam;
use crate::solver::{
    candidate_intervals, xi_prime, sigma_fn, CabbSolution, CaseKind, DimCase, SolverConfig,
};

pub const ALL_KINDS: [CaseKind; 4] = [
    CaseKind::Singleton,
    CaseKind::LeftOpen,
    CaseKind::RightOpen,
    CaseKind::BothOpen,
];

/// Pixel coordinates are snapped to this grid so corner and center forms
/// convert exactly and touching sides stay touching.
const SNAP: f64 = 1.0 / 256.0;

fn snap(x: f64) -> f64 {
    (x / SNAP).round() * SNAP
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Random stream for draw `index` of a run seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One axis of a random instance: crop extent, original box edges and anchor.
struct Axis {
    extent: f64,
    lo: f64,
    hi: f64,
    anchor_center: f64,
    anchor_size: f64,
}

fn random_axis<R: Rng + ?Sized>(kind: CaseKind, rng: &mut R) -> Axis {
    let extent = snap(log_uniform(rng, 64.0, 2048.0));
    // Visible part of the box: at least 1/64 of the crop.
    let min_w = extent / 64.0;
    let width = snap(log_uniform(rng, min_w, extent));
    let start = snap(rng.random_range(0.0..=(extent - width)));
    let (mut lo, mut hi) = (start, start + width);
    let extension = |rng: &mut R| {
        if rng.random_bool(0.1) {
            0.0
        } else {
            snap(log_uniform(rng, 1e-3, 3.0) * extent)
        }
    };
    match kind {
        CaseKind::Singleton => {
            // Keep both sides strictly inside.
            let margin = SNAP.max(extent * 1e-3);
            lo = lo.max(margin);
            hi = hi.min(extent - margin);
            if hi - lo < margin {
                lo = snap(extent * 0.25);
                hi = snap(extent * 0.75);
            }
        }
        CaseKind::RightOpen => {
            lo = lo.min(extent - min_w).max(SNAP);
            hi = extent + extension(rng);
        }
        CaseKind::LeftOpen => {
            hi = hi.max(min_w).min(extent - SNAP);
            lo = -extension(rng);
        }
        CaseKind::BothOpen => {
            lo = -extension(rng);
            hi = extent + extension(rng);
        }
    }
    let visible = hi.min(extent) - lo.max(0.0);
    let omega_g = log_uniform(rng, 0.1, 10.0);
    let anchor_size = snap(visible / omega_g).max(SNAP);
    let offset = Normal::new(0.0, 0.5).expect("valid normal").sample(rng);
    let anchor_center = snap((lo.max(0.0) + hi.min(extent)) / 2.0 + offset * anchor_size);
    Axis {
        extent,
        lo,
        hi,
        anchor_center,
        anchor_size,
    }
}

/// A prediction near, far from, or extending beyond the cropped target.
fn random_prediction<R: Rng + ?Sized>(target: &Delta, rng: &mut R) -> Delta {
    let normal = |s: f64| Normal::new(0.0, s).expect("valid normal");
    let mut delta = [0.0; 2];
    let mut omega = [1.0; 2];
    for k in 0..2 {
        let (dg, wg) = (target.delta[k], target.omega[k]);
        let (d, w) = match rng.random_range(0..10) {
            0..4 => (dg + normal(0.3).sample(rng), wg * normal(0.5).sample(rng).exp()),
            4..7 => (rng.random_range(dg - 5.0..dg + 5.0), log_uniform(rng, 1e-2, 1e2)),
            _ => {
                let w = wg * log_uniform(rng, 1.0, 50.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (dg + sign * (w - wg) / 2.0 + normal(0.1 * w).sample(rng), w)
            }
        };
        delta[k] = d;
        omega[k] = w.clamp(1e-2, 1e2);
    }
    Delta::new(delta, omega).expect("positive sizes")
}

/// Builds a random instance whose axes fall in the requested cases.
pub fn random_instance<R: Rng + ?Sized>(
    kinds: [CaseKind; 2],
    beta: HuberParam,
    rng: &mut R,
) -> InstanceRecord {
    let x = random_axis(kinds[0], rng);
    let y = random_axis(kinds[1], rng);
    let gt = [
        (x.lo + x.hi) / 2.0,
        (y.lo + y.hi) / 2.0,
        x.hi - x.lo,
        y.hi - y.lo,
    ];
    let anchor = [x.anchor_center, y.anchor_center, x.anchor_size, y.anchor_size];
    let unit = Delta::new([0.0; 2], [1.0; 2]).expect("unit delta");
    let rec = InstanceRecord::new(gt, anchor, [x.extent, y.extent], unit, beta)
        .expect("generated instance is valid");
    let cropped = crop_box(rec.gt(), &rec.crop).expect("box overlaps its crop");
    let target = encode(&cropped, rec.anchor()).expect("anchor has positive size");
    rec.with_pred(random_prediction(&target, rng))
}

/// Case pair and `beta` of instance `index`: the 16 case pairs cycle fastest,
/// then the betas.
pub fn stratum(index: usize, betas: &[f64]) -> ([CaseKind; 2], f64) {
    let pair = index % 16;
    let kinds = [ALL_KINDS[pair / 4], ALL_KINDS[pair % 4]];
    (kinds, betas[(index / 16) % betas.len()])
}

pub fn stratified_instance(seed: u64, index: usize, betas: &[f64]) -> Result<InstanceRecord> {
    let (kinds, beta) = stratum(index, betas);
    Ok(random_instance(kinds, HuberParam::new(beta)?, &mut stream(seed, index as u64)))
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzConfig {
    pub n: usize,
    pub seed: u64,
    pub betas: Vec<f64>,
    /// Allowed excess of the solver objective over the oracle objective.
    pub tolerance: f64,
    /// Allowed constraint violation of the minimizer, in anchor units.
    pub feasibility_tolerance: f64,
    /// Allowed excess over the loss against the cropped target.
    pub lower_bound_tolerance: f64,
    pub oracle: OracleConfig,
    pub solver: SolverConfig,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            n: 10_000,
            seed: 0,
            betas: vec![1.0 / 9.0, 1.0],
            tolerance: 1e-6,
            feasibility_tolerance: 1e-7,
            lower_bound_tolerance: 1e-12,
            oracle: OracleConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("need at least one instance"));
        }
        if self.betas.is_empty() {
            return Err(Error::invalid("need at least one beta"));
        }
        for &b in &self.betas {
            HuberParam::new(b)?;
        }
        self.oracle.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// The solver objective exceeds the oracle's by more than the tolerance.
    OracleGap,
    /// The minimizer leaves the feasible set.
    Infeasible,
    /// The loss exceeds the loss against the cropped target.
    LowerBound,
    /// A fully fixed instance does not reproduce the plain loss exactly.
    SingletonMismatch,
    /// The solver or oracle returned an error.
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub detail: String,
    /// Replayable one-line instance.
    pub instance: String,
}

/// Measurements for one instance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InstanceCheck {
    pub kinds: [CaseKind; 2],
    pub solver: f64,
    pub oracle: f64,
    pub cropped_l_bb: f64,
    /// Largest constraint residual of the minimizer, in anchor units.
    pub infeasibility: f64,
}

impl InstanceCheck {
    pub fn gap(&self) -> f64 {
        self.solver - self.oracle
    }
}

/// Constraint residual of one axis of the minimizer.
pub fn residual(case: &DimCase, delta: f64, omega: f64) -> f64 {
    let (lo, hi) = (delta - omega / 2.0, delta + omega / 2.0);
    match case.kind {
        CaseKind::Singleton => (delta - case.delta_g).abs().max((omega - case.omega_g).abs()),
        CaseKind::RightOpen => (lo - case.a).abs().max(case.b - hi).max(0.0),
        CaseKind::LeftOpen => (hi - case.b).abs().max(lo - case.a).max(0.0),
        CaseKind::BothOpen => (lo - case.a).max(case.b - hi).max(0.0),
    }
}

fn infeasibility(sol: &CabbSolution) -> f64 {
    (0..2)
        .map(|k| residual(&sol.cases[k], sol.delta_star.delta[k], sol.delta_star.omega[k]))
        .fold(0.0, f64::max)
}

pub fn check_instance(
    rec: &InstanceRecord,
    solver: &SolverConfig,
    oracle: &OracleConfig,
) -> Result<InstanceCheck> {
    let sol = rec.solve(solver)?;
    let reference = oracle_instance(rec, oracle)?;
    let mut infeasible = infeasibility(&sol);
    // Independent check in pixel space: the decoded minimizer must crop to
    // the cropped ground truth.
    let decoded = decode(rec.anchor(), &sol.delta_star)?;
    let scale = rec.anchor().dims()[0].max(rec.anchor().dims()[1]);
    if !in_rho(&decoded, rec.gt(), &rec.crop, 1e-7 * scale) {
        infeasible = infeasible.max(f64::INFINITY);
    }
    Ok(InstanceCheck {
        kinds: sol.per_dim_case,
        solver: sol.loss,
        oracle: reference.objective,
        cropped_l_bb: rec.cropped_l_bb()?,
        infeasibility: infeasible,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzReport {
    pub n: usize,
    pub seed: u64,
    /// Instances per x-axis case (index as in [`ALL_KINDS`]).
    pub per_kind_x: [usize; 4],
    pub per_kind_y: [usize; 4],
    /// Largest `solver - oracle` objective difference.
    pub worst_gap: f64,
    pub worst_gap_instance: Option<String>,
    pub worst_infeasibility: f64,
    /// Largest `loss - cropped loss`; never positive for a correct solver.
    pub worst_lower_bound_excess: f64,
    pub singleton_instances: usize,
    pub violations: Vec<Violation>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

fn kind_index(kind: CaseKind) -> usize {
    ALL_KINDS.iter().position(|&k| k == kind).expect("known kind")
}

/// Runs the certification suite. Instances are checked in parallel; the
/// report does not depend on the number of workers.
pub fn certify(cfg: &FuzzConfig) -> Result<FuzzReport> {
    cfg.validate()?;
    let results: Vec<(InstanceRecord, Result<InstanceCheck>)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let rec = stratified_instance(cfg.seed, i, &cfg.betas).expect("betas validated");
            let check = check_instance(&rec, &cfg.solver, &cfg.oracle);
            (rec, check)
        })
        .collect();

    let mut report = FuzzReport {
        n: cfg.n,
        seed: cfg.seed,
        per_kind_x: [0; 4],
        per_kind_y: [0; 4],
        worst_gap: f64::NEG_INFINITY,
        worst_gap_instance: None,
        worst_infeasibility: 0.0,
        worst_lower_bound_excess: f64::NEG_INFINITY,
        singleton_instances: 0,
        violations: Vec::new(),
    };
    for (index, (rec, check)) in results.into_iter().enumerate() {
        let mut flag = |kind, detail: String| {
            report.violations.push(Violation {
                index,
                kind,
                detail,
                instance: rec.to_string(),
            })
        };
        let c = match check {
            Ok(c) => c,
            Err(e) => {
                flag(ViolationKind::Error, e.to_string());
                continue;
            }
        };
        report.per_kind_x[kind_index(c.kinds[0])] += 1;
        report.per_kind_y[kind_index(c.kinds[1])] += 1;
        if c.gap() > report.worst_gap {
            report.worst_gap = c.gap();
            report.worst_gap_instance = Some(rec.to_string());
        }
        report.worst_infeasibility = report.worst_infeasibility.max(c.infeasibility);
        let excess = c.solver - c.cropped_l_bb;
        report.worst_lower_bound_excess = report.worst_lower_bound_excess.max(excess);

        if c.gap() > cfg.tolerance {
            flag(
                ViolationKind::OracleGap,
                format!("solver {} oracle {} gap {:e}", c.solver, c.oracle, c.gap()),
            );
        }
        if !(c.infeasibility <= cfg.feasibility_tolerance) {
            flag(ViolationKind::Infeasible, format!("residual {:e}", c.infeasibility));
        }
        if excess > cfg.lower_bound_tolerance {
            flag(
                ViolationKind::LowerBound,
                format!("loss {} exceeds cropped loss {}", c.solver, c.cropped_l_bb),
            );
        }
        if c.kinds == [CaseKind::Singleton; 2] {
            report.singleton_instances += 1;
            if c.solver != c.cropped_l_bb {
                flag(
                    ViolationKind::SingletonMismatch,
                    format!("loss {} vs cropped loss {}", c.solver, c.cropped_l_bb),
                );
            }
        }
    }
    Ok(report)
}

/// Finite-difference check of the analytic gradient at one instance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradCheck {
    pub analytic: [f64; 4],
    pub numeric: [f64; 4],
    pub rel_error: f64,
    /// Whether every probe kept the same solver path and Huber regimes.
    pub stable: bool,
}

/// Regime of each Huber term of the loss at the minimizer: -1, 0 or 1 for
/// the left linear, quadratic and right linear piece.
fn huber_regimes(p: &Delta, t: &Delta, beta: HuberParam) -> [i8; 4] {
    let b = beta.get();
    let regime = |z: f64| {
        if z < -b {
            -1
        } else if z > b {
            1
        } else {
            0
        }
    };
    [
        regime(p.delta[0] - t.delta[0]),
        regime(p.delta[1] - t.delta[1]),
        regime(p.omega[0].ln() - t.omega[0].ln()),
        regime(p.omega[1].ln() - t.omega[1].ln()),
    ]
}

pub fn gradcheck_instance(rec: &InstanceRecord, solver: &SolverConfig, h: f64) -> Result<GradCheck> {
    let base = rec.solve(solver)?;
    let analytic = [
        base.grad_delta[0],
        base.grad_delta[1],
        base.grad_omega[0],
        base.grad_omega[1],
    ];
    let fingerprint = |sol: &CabbSolution, p: &Delta| {
        (
            sol.trace,
            huber_regimes(p, &sol.delta_star, rec.beta),
        )
    };
    let reference = fingerprint(&base, &rec.pred);
    let mut numeric = [0.0; 4];
    let mut stable = true;
    for (j, slot) in numeric.iter_mut().enumerate() {
        let probe = |sign: f64| -> Result<(f64, bool)> {
            let mut p = rec.pred;
            if j < 2 {
                p.delta[j] += sign * h;
            } else {
                p.omega[j - 2] += sign * h;
            }
            let sol = rec.with_pred(p).solve(solver)?;
            Ok((sol.loss, fingerprint(&sol, &p) == reference))
        };
        let (plus, s1) = probe(1.0)?;
        let (minus, s2) = probe(-1.0)?;
        *slot = (plus - minus) / (2.0 * h);
        stable &= s1 && s2;
    }
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6);
    let rel_error = analytic
        .iter()
        .zip(&numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale;
    Ok(GradCheck {
        analytic,
        numeric,
        rel_error,
        stable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckConfig {
    pub n: usize,
    pub seed: u64,
    pub h: f64,
    pub tolerance: f64,
    pub betas: Vec<f64>,
    pub solver: SolverConfig,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            n: 1000,
            seed: 0,
            h: 1e-5,
            tolerance: 1e-3,
            betas: vec![1.0 / 9.0, 1.0],
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckFailure {
    pub index: usize,
    pub rel_error: f64,
    pub stable: bool,
    pub instance: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n: usize,
    /// Instances within tolerance, counting every instance.
    pub passed_all: usize,
    /// Instances whose probes kept the same solver path and Huber regimes.
    pub stable: usize,
    pub passed_stable: usize,
    pub max_rel_error_all: f64,
    pub max_rel_error_stable: f64,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn pass_fraction_all(&self) -> f64 {
        self.passed_all as f64 / self.n as f64
    }

    /// Whether every stable instance is within tolerance.
    pub fn stable_ok(&self) -> bool {
        self.passed_stable == self.stable
    }
}

/// Instances for the gradient check use the fuzz generator with the stream
/// index offset by `n`, so the two suites never share an instance.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if cfg.n == 0 {
        return Err(Error::invalid("need at least one instance"));
    }
    if !(cfg.h > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::invalid("h and tolerance must be positive"));
    }
    if cfg.betas.is_empty() {
        return Err(Error::invalid("need at least one beta"));
    }
    cfg.solver.validate()?;
    let checks: Vec<(InstanceRecord, Result<GradCheck>)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let rec = stratified_instance(cfg.seed ^ 0x67726164, i, &cfg.betas)?;
            let check = gradcheck_instance(&rec, &cfg.solver, cfg.h);
            Ok((rec, check))
        })
        .collect::<Result<_>>()?;

    let mut report = GradCheckReport {
        n: cfg.n,
        passed_all: 0,
        stable: 0,
        passed_stable: 0,
        max_rel_error_all: 0.0,
        max_rel_error_stable: 0.0,
        failures: Vec::new(),
    };
    for (index, (rec, check)) in checks.into_iter().enumerate() {
        let c = check?;
        let ok = c.rel_error <= cfg.tolerance;
        report.max_rel_error_all = report.max_rel_error_all.max(c.rel_error);
        report.passed_all += ok as usize;
        if c.stable {
            report.stable += 1;
            report.passed_stable += ok as usize;
            report.max_rel_error_stable = report.max_rel_error_stable.max(c.rel_error);
        }
        if !ok {
            report.failures.push(GradCheckFailure {
                index,
                rel_error: c.rel_error,
                stable: c.stable,
                instance: rec.to_string(),
            });
        }
    }
    Ok(report)
}

/// Checks that predictions encoding crop-consistent boxes cost nothing.
/// Returns the worst loss and gradient norm over `n` instances.
pub fn feasible_prediction_check(n: usize, seed: u64, betas: &[f64]) -> Result<(f64, f64)> {
    let solver = SolverConfig::default();
    let worst = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let rec = stratified_instance(seed ^ 0x72686f, i, betas)?;
            let mut rng = stream(seed ^ 0x72686f, (n + i) as u64);
            let member = sample_rho_member(rec.gt(), &rec.crop, &mut rng)?;
            let pred = encode(&member, rec.anchor())?;
            let sol = rec.with_pred(pred).solve(&solver)?;
            let norm = sol
                .grad_delta
                .iter()
                .chain(&sol.grad_omega)
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            Ok((sol.loss, norm))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0f64, 0.0f64), |(l, g), (a, b)| (l.max(a), g.max(b)));
    Ok(worst)
}

/// Outcome of the monotonicity spot checks.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SpotCheckReport {
    pub instances: usize,
    /// Sampled points checked for the sign of the derivative.
    pub sign_points: usize,
    pub sign_violations: usize,
    /// Point pairs checked inside the candidate intervals.
    pub monotone_pairs: usize,
    pub monotone_violations: usize,
    pub nonempty_intervals: [usize; 5],
    pub examples: Vec<String>,
}

impl SpotCheckReport {
    pub fn passed(&self) -> bool {
        self.sign_violations == 0 && self.monotone_violations == 0
    }
}

/// Samples `(w_p, w_hat, beta)` and checks, on each:
///
/// * the derivative of the one-sided objective is negative below
///   `min(w_hat, w_p)` and positive above `max(w_hat, w_p)`;
/// * the derivative is strictly increasing on the intervals J1 and J2 and
///   `w * derivative` is strictly increasing on J3, J4 and J5.
pub fn spot_check(n: usize, seed: u64, pairs: usize) -> Result<SpotCheckReport> {
    let mut report = SpotCheckReport {
        instances: n,
        ..Default::default()
    };
    for i in 0..n {
        let mut rng = stream(seed ^ 0x73706f74, i as u64);
        let beta = HuberParam::new(log_uniform(&mut rng, 0.05, 2.0))?;
        let wp = log_uniform(&mut rng, 1e-2, 1e2);
        let what = log_uniform(&mut rng, 1e-2, 1e2);
        let note = |report: &mut SpotCheckReport, msg: String| {
            if report.examples.len() < 10 {
                report.examples.push(msg);
            }
        };

        let (lo, hi) = (wp.min(what), wp.max(what));
        for _ in 0..pairs {
            let w = rng.random_range(0.0..1.0) * lo;
            if w > 0.0 {
                report.sign_points += 1;
                if !(xi_prime(w, wp, what, beta)? < 0.0) {
                    report.sign_violations += 1;
                    note(&mut report, format!("xi' >= 0 at w={w} (w_p={wp}, w_hat={what}, beta={})", beta.get()));
                }
            }
            let w = hi * log_uniform(&mut rng, 1.0 + 1e-9, 100.0);
            report.sign_points += 1;
            if !(xi_prime(w, wp, what, beta)? > 0.0) {
                report.sign_violations += 1;
                note(&mut report, format!("xi' <= 0 at w={w} (w_p={wp}, w_hat={what}, beta={})", beta.get()));
            }
        }

        // Intervals as in the piecewise branch, with a random lower bound.
        if what <= wp {
            continue;
        }
        let w0 = log_uniform(&mut rng, 1e-3, what);
        let iv = candidate_intervals(w0, wp, what, beta.get(), f64::INFINITY);
        let intervals = [iv.j1, iv.j2, iv.j3, iv.j4, iv.j5];
        for (j, interval) in intervals.iter().enumerate() {
            let Some((a, b)) = *interval else { continue };
            if !(a < b) {
                continue;
            }
            report.nonempty_intervals[j] += 1;
            let phi = |w: f64| -> Result<f64> {
                if j < 2 {
                    xi_prime(w, wp, what, beta)
                } else {
                    sigma_fn(w, wp, what, beta)
                }
            };
            for _ in 0..pairs {
                let u = rng.random_range(a..b);
                let v = rng.random_range(a..b);
                let (x, y) = if u < v { (u, v) } else { (v, u) };
                if !(x < y) {
                    continue;
                }
                report.monotone_pairs += 1;
                if !(phi(x)? < phi(y)?) {
                    // Equal values within rounding are not a violation of
                    // strict growth in exact arithmetic; require a real drop.
                    let (fx, fy) = (phi(x)?, phi(y)?);
                    let noise = 1e-12 * fx.abs().max(fy.abs()).max(1.0);
                    if fx - fy > noise {
                        report.monotone_violations += 1;
                        note(
                            &mut report,
                            format!("J{} not increasing at {x} < {y} (w_p={wp}, w_hat={what}, beta={})", j + 1, beta.get()),
                        );
                    }
                }
            }
        }
    }
    Ok(report)
}
