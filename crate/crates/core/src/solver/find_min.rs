/// Minimizes an objective on `[lo, hi]` through an increasing, continuous
/// surrogate `phi` whose sign matches the objective's derivative.
///
/// Returns `lo` when `phi(lo) >= 0`, `hi` when `phi(hi) <= 0`, and otherwise
/// the midpoint of a bisection bracket around the zero of `phi` narrower than
/// `eps`. An empty interval (`lo > hi`) yields `None`.
pub fn find_min<F>(lo: f64, hi: f64, phi: F, eps: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo <= hi) {
        return None;
    }
    if phi(lo) >= 0.0 {
        return Some(lo);
    }
    if phi(hi) <= 0.0 {
        return Some(hi);
    }
    let (mut u, mut v) = (lo, hi);
    loop {
        let m = 0.5 * (u + v);
        // The second guard stops once the bracket is a single ulp wide.
        if v - u < eps || m <= u || m >= v {
            return Some(m);
        }
        if phi(m) >= 0.0 {
            v = m;
        } else {
            u = m;
        }
    }
}

/// Absolute bisection width for a bracket, from a relative tolerance.
#[inline]
pub(crate) fn bracket_eps(rel: f64, lo: f64, hi: f64) -> f64 {
    rel * (lo.abs() + hi.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let eps = 1e-9;
        let r = find_min(1.0, 3.0, |w| w - 2.0, eps).unwrap();
        assert!((r - 2.0).abs() <= eps);
    }

    #[test]
    fn endpoint_rules() {
        assert_eq!(find_min(3.0, 5.0, |w| w - 2.0, 1e-9), Some(3.0));
        assert_eq!(find_min(0.0, 1.0, |w| w - 2.0, 1e-9), Some(1.0));
        assert_eq!(find_min(2.0, 2.0, |w| w - 2.0, 1e-9), Some(2.0));
    }

    #[test]
    fn empty_interval() {
        assert_eq!(find_min(2.0, 1.0, |w| w, 1e-9), None);
        assert_eq!(find_min(f64::NAN, 1.0, |w| w, 1e-9), None);
    }

    #[test]
    fn terminates_with_zero_tolerance() {
        let r = find_min(0.0, 1.0, |w| w - 1.0 / 3.0, 0.0).unwrap();
        assert!((r - 1.0 / 3.0).abs() <= 1e-15);
    }
}
