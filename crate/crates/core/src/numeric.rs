//! Shared floating-point helpers: clamped exponentials, stable
//! log-sum-exp, and compensated summation.
//!
//! All mass computations in this crate go through [`exp_clamped`] so that
//! extreme potentials saturate at a finite value instead of producing
//! infinities that poison downstream arithmetic.

/// Largest exponent magnitude fed to `exp`. `exp(350)` is ~1e152, far from
/// the f64 overflow threshold but large enough to act as infinity for any
/// market this crate can represent.
pub const EXP_CLAMP: f64 = 350.0;

/// `exp(x)` with the exponent clamped to `±EXP_CLAMP`.
#[inline]
pub fn exp_clamped(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Whether `exp_clamped(x)` saturated at the clamp bound.
#[inline]
pub fn saturates(x: f64) -> bool {
    x.abs() >= EXP_CLAMP
}

/// `log(exp(a) + exp(b))` without intermediate overflow.
///
/// `-inf` inputs are handled exactly (an `-inf` term contributes nothing).
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum_i exp(x_i))` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let sum: f64 = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}

/// Neumaier compensated sum. Used where a deterministic, order-robust
/// total is needed (margin sums, conservation checks).
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_clamped_saturates_instead_of_overflowing() {
        assert!(exp_clamped(1e9).is_finite());
        assert!(exp_clamped(-1e9) > 0.0);
        assert_eq!(exp_clamped(400.0), EXP_CLAMP.exp());
        assert!(saturates(400.0));
        assert!(!saturates(10.0));
    }

    #[test]
    fn log_add_exp_matches_naive_in_safe_range() {
        let direct = (2.0_f64.exp() + 1.5_f64.exp()).ln();
        assert!((log_add_exp(2.0, 1.5) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_add_exp_handles_extremes() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert_eq!(log_add_exp(3.0, f64::NEG_INFINITY), 3.0);
        // max + log(2) when both arguments are equal and huge
        let r = log_add_exp(700.0, 700.0);
        assert!((r - (700.0 + 2.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(xs.iter().cloned()), 1.0);
    }
}
