//! Robust location and scale: median and interquartile range.

/// Ratio between the interquartile range and the standard deviation of a
/// Gaussian distribution.
pub const IQR_TO_SD: f64 = 1.349;

/// Quantile of already sorted data using linear interpolation between order
/// statistics (Hyndman-Fan type 7, the R/NumPy default).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile_sorted(&sorted_copy(values), 0.5)
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    let s = sorted_copy(values);
    Some(quantile_sorted(&s, 0.75)? - quantile_sorted(&s, 0.25)?)
}

/// Median and IQR-based standard deviation estimate, `(median, iqr / 1.349)`.
pub fn location_scale(values: &[f64]) -> Option<(f64, f64)> {
    let s = sorted_copy(values);
    let med = quantile_sorted(&s, 0.5)?;
    let spread = quantile_sorted(&s, 0.75)? - quantile_sorted(&s, 0.25)?;
    Some((med, spread / IQR_TO_SD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_to_five() {
        let (m, s) = location_scale(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 3.0);
        assert_relative_eq!(s, 2.0 / 1.349, epsilon = 1e-15);
        assert_relative_eq!(s, 1.4826, epsilon = 1e-4);
    }

    #[test]
    fn type7_interpolation() {
        // numpy.quantile([1, 2, 4, 8], 0.25) == 1.75
        let s = [1.0, 2.0, 4.0, 8.0];
        assert_relative_eq!(quantile_sorted(&s, 0.25).unwrap(), 1.75);
        assert_relative_eq!(quantile_sorted(&s, 0.75).unwrap(), 5.0);
        assert_eq!(median(&s), Some(3.0));
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(median(&[]), None);
        assert_eq!(location_scale(&[2.5]), Some((2.5, 0.0)));
    }
}
