//! Univariate Gaussian helpers restricted to a bounded interval.

use rand::Rng;
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // one Newton step against the more accurate CDF
    let pdf = (-0.5 * z * z - LN_SQRT_2PI).exp();
    if pdf > 0.0 {
        let err = if z > 0.0 { (1.0 - p) - std_normal_sf(z) } else { std_normal_cdf(z) - p };
        z - err / pdf
    } else {
        z
    }
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// Probability of `[lo, hi]` under `N(mean, sd²)`.
pub fn interval_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if a > 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Draws from `N(mean, sd²)` restricted to `[lo, hi]` by inverting the CDF.
///
/// The draw is made on whichever side of the mean keeps the interval in the
/// lower tail, where the CDF is representable to full relative precision.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let (a, b, flip) = {
        let a = (lo - mean) / sd;
        let b = (hi - mean) / sd;
        if a > 0.0 {
            (-b, -a, true)
        } else {
            (a, b, false)
        }
    };
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    let z = if pb - pa > 0.0 {
        let u: f64 = rng.random();
        std_normal_quantile(pa + u * (pb - pa)).clamp(a, b)
    } else {
        // Interval is beyond representable tail mass: the bound nearest the
        // mean carries essentially all of it.
        b
    };
    let z = if flip { -z } else { z };
    (mean + sd * z).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn cdf_known_values() {
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(std_normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_relative_eq!(std_normal_quantile(0.975), 1.959963984540054, epsilon = 1e-10);
    }

    #[test]
    fn tail_mass_is_accurate() {
        // P(Z in [8, 9]) = sf(8) - sf(9) ~ 6.22e-16
        let m = interval_mass(0.0, 1.0, 8.0, 9.0);
        assert_relative_eq!(m, 6.220960574271785e-16 - 1.1285884059538408e-19, max_relative = 1e-8);
    }

    #[test]
    fn samples_stay_in_bounds_and_center() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut sum = 0.0;
        for _ in 0..20_000 {
            let x = sample(&mut rng, 0.0, 1.0, -1.0, 1.0);
            assert!((-1.0..=1.0).contains(&x));
            sum += x;
        }
        assert!((sum / 20_000.0).abs() < 0.02);
        for _ in 0..1000 {
            let x = sample(&mut rng, 0.0, 1.0, 10.0, 11.0);
            assert!((10.0..=11.0).contains(&x));
        }
    }
}
