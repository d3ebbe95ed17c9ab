//! Moments of `ln X` for `X ~ chi^2(2k) / 2k`, the law of a `k`-average periodogram bin.

use statrs::function::gamma::digamma;

/// Trigamma function for `x > 0`: recurrence up to 10, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // 1/x + 1/(2x^2) + sum B_2n / x^(2n+1)
    acc + 1.0 / x
        + 0.5 * x2
        + (1.0 / x)
            * x2
            * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))))
}

/// `E[ln X]`.
pub fn log_mean(k: f64) -> f64 {
    digamma(k) - k.ln()
}

/// `Var[ln X]`.
pub fn log_variance(k: f64) -> f64 {
    trigamma(k)
}
