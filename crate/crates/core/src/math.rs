//! Scalar numerics shared by the rest of the crate.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `log(sum(exp(x)))` with max subtraction. Entries equal to `-inf` are
/// ignored; an all `-inf` input returns `-inf`.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs
        .filter(|x| *x != f64::NEG_INFINITY)
        .map(|x| exp(x - max))
        .sum();
    max + ln(sum)
}

/// Logistic function.
///
/// `sigmoid(x) + sigmoid(-x) == 1.0` holds exactly: the negative branch is
/// computed as the complement of the positive one, and `1 - q` is exact for
/// `q` in `[0.5, 1]`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        1.0 - 1.0 / (1.0 + exp(x))
    }
}

/// `ln(1 + e^x)`, stable for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::INFINITY
    } else if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// `-ln(sigmoid(m))`, the logistic loss of a margin.
#[inline]
pub fn neg_log_sigmoid(margin: f64) -> f64 {
    softplus(-margin)
}

/// `sigmoid(-m)` computed without cancellation for large positive `m`; this
/// is the derivative of [`neg_log_sigmoid`] with respect to `-m`.
#[inline]
pub fn sigmoid_neg(margin: f64) -> f64 {
    let x = -margin;
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_complement_is_exact() {
        for &x in &[0.0, 1e-300, 0.3, 0.5, 1.0, 7.25, 30.0, 700.0] {
            assert_eq!(sigmoid(x) + sigmoid(-x), 1.0, "x = {x}");
        }
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for i in -200..=200 {
            let x = i as f64 * 0.1;
            let naive = (1.0 + std::primitive::f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        let v = [f64::NEG_INFINITY, 0.0, 0.0];
        assert!((log_sum_exp(v.iter().copied()) - core::f64::consts::LN_2).abs() < 1e-15);
        let v = [f64::NEG_INFINITY; 2];
        assert_eq!(log_sum_exp(v.iter().copied()), f64::NEG_INFINITY);
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(v.iter().copied()) - 1000.0 - core::f64::consts::LN_2).abs() < 1e-12);
    }
}
