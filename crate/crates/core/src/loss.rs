//! Huber norm and the standard per-box regression loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Delta, Vec2};

/// Huber transition point `beta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HuberParam(f64);

impl HuberParam {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(HuberParam(beta))
        } else {
            Err(Error::invalid(format!("huber beta must be positive, got {beta}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for HuberParam {
    fn default() -> Self {
        HuberParam(1.0)
    }
}

impl TryFrom<f64> for HuberParam {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HuberParam> for f64 {
    fn from(b: HuberParam) -> f64 {
        b.0
    }
}

/// Smooth-L1 norm: `z^2 / (2 beta)` inside `[-beta, beta]`, `|z| - beta/2` outside.
#[inline]
pub fn huber(z: f64, beta: HuberParam) -> f64 {
    let b = beta.0;
    let a = z.abs();
    if a <= b {
        0.5 * z * z / b
    } else {
        a - 0.5 * b
    }
}

/// Derivative of [`huber`], `clamp(z / beta, -1, 1)`.
#[inline]
pub fn huber_prime(z: f64, beta: HuberParam) -> f64 {
    (z / beta.0).clamp(-1.0, 1.0)
}

/// Contribution of one axis to [`l_bb`].
#[inline]
pub fn l_bb_axis(dp: f64, wp: f64, dg: f64, wg: f64, beta: HuberParam) -> f64 {
    huber(dp - dg, beta) + huber(wp.ln() - wg.ln(), beta)
}

/// Standard box regression loss between prediction `p` and target `g`.
///
/// Sums the Huber penalties of the center offsets and of the log size ratios
/// over both axes.
pub fn l_bb(p: &Delta, g: &Delta, beta: HuberParam) -> Result<f64> {
    p.validate()?;
    g.validate()?;
    Ok((0..2)
        .map(|k| l_bb_axis(p.delta[k], p.omega[k], g.delta[k], g.omega[k], beta))
        .sum())
}

/// Gradient of [`l_bb`] with respect to the prediction, `(d/d delta, d/d omega)`.
pub fn l_bb_grad(p: &Delta, g: &Delta, beta: HuberParam) -> Result<(Vec2, Vec2)> {
    p.validate()?;
    g.validate()?;
    let gd = [0, 1].map(|k| huber_prime(p.delta[k] - g.delta[k], beta));
    let gw = [0, 1].map(|k| huber_prime(p.omega[k].ln() - g.omega[k].ln(), beta) / p.omega[k]);
    Ok((gd, gw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(v: f64) -> HuberParam {
        HuberParam::new(v).unwrap()
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, b(1.0)), 0.0);
        assert_eq!(huber(0.5, b(1.0)), 0.125);
        assert_eq!(huber(2.0, b(1.0)), 1.5);
        // Both branches agree at the transition.
        assert_eq!(huber(1.0, b(1.0)), 0.5);
        assert!(HuberParam::new(0.0).is_err());
        assert!(HuberParam::new(f64::NAN).is_err());
    }

    #[test]
    fn huber_prime_examples() {
        assert_eq!(huber_prime(0.5, b(1.0)), 0.5);
        assert_eq!(huber_prime(3.0, b(1.0)), 1.0);
        assert_eq!(huber_prime(-3.0, b(1.0)), -1.0);
    }

    #[test]
    fn huber_prime_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let beta = b(rng.random_range(0.05..3.0));
            let z: f64 = rng.random_range(-10.0..10.0);
            if (z.abs() - beta.get()).abs() <= 1e-3 {
                continue;
            }
            let fd = (huber(z + h, beta) - huber(z - h, beta)) / (2.0 * h);
            assert!((huber_prime(z, beta) - fd).abs() <= 1e-6, "z={z} beta={beta:?}");
        }
    }

    #[test]
    fn l_bb_examples() {
        let g = Delta::new([0.1, -0.3], [1.5, 0.7]).unwrap();
        assert_eq!(l_bb(&g, &g, b(1.0)).unwrap(), 0.0);

        let g = Delta::new([0.0, 0.0], [2.0, 3.0]).unwrap();
        let p = Delta::new([0.2, 0.0], [2.0, 3.0]).unwrap();
        assert!((l_bb(&p, &g, b(1.0)).unwrap() - 0.02).abs() < 1e-15);

        let bad = Delta {
            delta: [0.0; 2],
            omega: [-1.0, 1.0],
        };
        assert!(l_bb(&bad, &g, b(1.0)).is_err());
        assert!(l_bb_grad(&g, &bad, b(1.0)).is_err());
    }

    #[test]
    fn l_bb_grad_examples() {
        let g = Delta::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(l_bb_grad(&g, &g, b(1.0)).unwrap(), ([0.0; 2], [0.0; 2]));
        let p = Delta::new([0.5, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(l_bb_grad(&p, &g, b(1.0)).unwrap(), ([0.5, 0.0], [0.0, 0.0]));
    }

    #[test]
    fn l_bb_grad_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let beta = b(rng.random_range(0.1..2.0));
            let p = Delta::new(
                [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)],
            )
            .unwrap();
            let g = Delta::new(
                [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)],
            )
            .unwrap();
            let near_kink = (0..2).any(|k| {
                ((p.delta[k] - g.delta[k]).abs() - beta.get()).abs() < 1e-3
                    || ((p.omega[k].ln() - g.omega[k].ln()).abs() - beta.get()).abs() < 1e-3
            });
            if near_kink {
                continue;
            }
            let (gd, gw) = l_bb_grad(&p, &g, beta).unwrap();
            for k in 0..2 {
                let mut hi = p;
                let mut lo = p;
                hi.delta[k] += h;
                lo.delta[k] -= h;
                let fd = (l_bb(&hi, &g, beta).unwrap() - l_bb(&lo, &g, beta).unwrap()) / (2.0 * h);
                assert!((fd - gd[k]).abs() <= 1e-5);
                let mut hi = p;
                let mut lo = p;
                hi.omega[k] += h;
                lo.omega[k] -= h;
                let fd = (l_bb(&hi, &g, beta).unwrap() - l_bb(&lo, &g, beta).unwrap()) / (2.0 * h);
                assert!((fd - gw[k]).abs() <= 1e-5);
            }
            checked += 1;
        }
    }

    fn arb_delta() -> impl Strategy<Value = Delta> {
        (-5.0..5.0f64, -5.0..5.0f64, -4.0..4.0f64, -4.0..4.0f64)
            .prop_map(|(a, b, c, d)| Delta::new([a, b], [c.exp(), d.exp()]).unwrap())
    }

    proptest! {
        #[test]
        fn huber_even_and_nonnegative(z in -1e3..1e3f64, beta in 1e-3..10.0f64) {
            let beta = b(beta);
            prop_assert!(huber(z, beta) >= 0.0);
            prop_assert_eq!(huber(z, beta), huber(-z, beta));
            prop_assert_eq!(huber_prime(z, beta), -huber_prime(-z, beta));
        }

        #[test]
        fn l_bb_symmetric_and_nonnegative(p in arb_delta(), g in arb_delta(), beta in 0.05..3.0f64) {
            let beta = b(beta);
            let fwd = l_bb(&p, &g, beta).unwrap();
            prop_assert!(fwd >= 0.0);
            prop_assert_eq!(fwd, l_bb(&g, &p, beta).unwrap());
        }
    }
}
