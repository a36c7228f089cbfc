//! Scalar-generic statistics kernel: Pearson and Spearman correlation, the
//! two-tailed Student-t p-value, and five-number box summaries.
//!
//! Everything here is generic over the float type via `num-traits`; the
//! crate root pins the concrete [`crate::Scalar`] alias used by the
//! pipeline.

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("empty input")]
    EmptyInput,
}

fn c<F: Float>(x: f64) -> F {
    F::from(x).expect("constant representable in float type")
}

/// Sample Pearson product-moment correlation.
///
/// Requires at least three paired observations and nonzero variance on both
/// sides; the result is clamped into [-1, 1] against rounding spill.
pub fn pearson<F: Float>(x: &[F], y: &[F]) -> Result<F, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput(format!(
            "length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::DegenerateInput(format!("n = {n} < 3")));
    }
    let nf = c::<F>(n as f64);
    let mean_x = x.iter().fold(F::zero(), |a, &v| a + v) / nf;
    let mean_y = y.iter().fold(F::zero(), |a, &v| a + v) / nf;
    let mut sxy = F::zero();
    let mut sxx = F::zero();
    let mut syy = F::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(StatsError::DegenerateInput("zero variance".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.min(F::one()).max(-F::one()))
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman<F: Float>(x: &[F], y: &[F]) -> Result<F, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput(format!(
            "length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    pearson(&ranks(x)?, &ranks(y)?)
}

/// Average ranks (1-based); ties share the mean of their positions.
fn ranks<F: Float>(values: &[F]) -> Result<Vec<F>, StatsError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateInput("non-finite value".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![F::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let rank = c::<F>((i + j) as f64 / 2.0 + 1.0);
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    Ok(out)
}

/// Two-tailed p-value for a sample correlation `r` over `n` observations,
/// via `t = r * sqrt((n-2) / (1 - r^2))` against the Student-t distribution
/// with `n - 2` degrees of freedom.
pub fn p_value_two_tailed<F: Float>(r: F, n: usize) -> Result<F, StatsError> {
    if n < 3 {
        return Err(StatsError::DegenerateInput(format!("n = {n} < 3")));
    }
    if !r.is_finite() || r.abs() >= F::one() {
        return Err(StatsError::DegenerateInput("|r| must be < 1".into()));
    }
    let df = c::<F>((n - 2) as f64);
    // Two-tailed P(|T| >= t) = I_x(df/2, 1/2) with x = df / (df + t^2),
    // and t^2 = r^2 * df / (1 - r^2).
    let t2 = r * r * df / (F::one() - r * r);
    let x = df / (df + t2);
    let p = beta_reg(df / c(2.0), c(0.5), x).min(F::one());
    // extreme tails underflow; the probability is positive for |r| < 1
    if p <= F::zero() {
        return Ok(F::min_positive_value());
    }
    Ok(p)
}

/// Regularized incomplete beta function I_x(a, b), evaluated with the
/// Lentz continued fraction.
pub fn beta_reg<F: Float>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (F::one() - x).ln())
    .exp();
    if x < (a + F::one()) / (a + b + c(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        F::one() - front * beta_cf(b, a, F::one() - x) / b
    }
}

/// Continued-fraction kernel of the incomplete beta (modified Lentz).
fn beta_cf<F: Float>(a: F, b: F, x: F) -> F {
    let max_iter = 500;
    let eps = F::epsilon() * c(4.0);
    let tiny = F::min_positive_value() / F::epsilon();

    let qab = a + b;
    let qap = a + F::one();
    let qam = a - F::one();
    let mut cc = F::one();
    let mut d = F::one() - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = F::one() / d;
    let mut h = d;
    for m in 1..=max_iter {
        let mf = c::<F>(m as f64);
        let m2 = c::<F>(2.0 * m as f64);
        // even step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = F::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = F::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = F::one() / d;
        h = h * d * cc;
        // odd step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = F::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = F::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = F::one() / d;
        let del = d * cc;
        h = h * del;
        if (del - F::one()).abs() < eps {
            break;
        }
    }
    h
}

/// Natural log of the gamma function (Lanczos, g = 7), for positive half
/// arguments as used by the beta prefactor.
pub fn ln_gamma<F: Float>(x: F) -> F {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let half = c::<F>(0.5);
    if x < half {
        // reflection: ln Γ(x) = ln(π / sin(πx)) - ln Γ(1 - x)
        let pi = c::<F>(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut acc = c::<F>(COEFFS[0]);
    for (i, &coeff) in COEFFS.iter().enumerate().skip(1) {
        acc = acc + c::<F>(coeff) / (x + c(i as f64));
    }
    let g = c::<F>(7.5);
    let t = x + g;
    let ln_sqrt_2pi = c::<F>(0.918_938_533_204_672_7);
    ln_sqrt_2pi + (x + half) * t.ln() - t + acc.ln()
}

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats<F> {
    pub n: usize,
    pub min: F,
    pub q1: F,
    pub median: F,
    pub q3: F,
    pub max: F,
    pub lower_whisker: F,
    pub upper_whisker: F,
    /// Values outside the whiskers, ascending.
    pub outliers: Vec<F>,
}

/// Box summary of `values` with whiskers at the most extreme datapoint
/// within `whisker_k * IQR` of the quartiles.
///
/// Quartiles interpolate linearly between order statistics. A whisker
/// collapses onto its quartile when no datapoint inside the fence lies
/// beyond it, so the ordering min <= lower <= q1 <= median <= q3 <= upper
/// <= max always holds.
pub fn box_stats<F: Float>(values: &[F], whisker_k: F) -> Result<BoxStats<F>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateInput("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));

    let q1 = quantile_sorted(&sorted, c(0.25));
    let median = quantile_sorted(&sorted, c(0.5));
    let q3 = quantile_sorted(&sorted, c(0.75));
    let iqr = q3 - q1;
    let fence_lo = q1 - whisker_k * iqr;
    let fence_hi = q3 + whisker_k * iqr;

    let lower_whisker = sorted
        .iter()
        .copied()
        .find(|&v| v >= fence_lo)
        .map(|v| v.min(q1))
        .expect("q1 lies inside the lower fence");
    let upper_whisker = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= fence_hi)
        .map(|v| v.max(q3))
        .expect("q3 lies inside the upper fence");
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < lower_whisker || v > upper_whisker)
        .collect();

    Ok(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        lower_whisker,
        upper_whisker,
        outliers,
    })
}

/// Linear interpolation between closest order statistics of a sorted slice.
pub fn quantile_sorted<F: Float>(sorted: &[F], p: F) -> F {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = c::<F>((n - 1) as f64) * p;
    let lo = h.floor();
    let idx = lo.to_usize().expect("quantile index in range").min(n - 1);
    let frac = h - lo;
    if idx + 1 >= n || frac == F::zero() {
        sorted[idx]
    } else {
        sorted[idx] + frac * (sorted[idx + 1] - sorted[idx])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_perfect_positive_and_negative() {
        let x = [1.0_f64, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_degenerate_inputs() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_works_for_f32_too() {
        let x = [1.0_f32, 2.0, 3.0, 4.0];
        let y = [2.0_f32, 4.0, 6.0, 8.0];
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spearman_monotone_is_one() {
        let x = [1.0_f64, 2.0, 5.0, 9.0];
        let y = [1.0_f64, 8.0, 27.0, 1000.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let x = [1.0_f64, 2.0, 2.0, 3.0];
        let r = ranks(&x).unwrap();
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn p_value_zero_r_is_one() {
        assert_eq!(p_value_two_tailed(0.0_f64, 10).unwrap(), 1.0);
    }

    #[test]
    fn p_value_large_cohort_is_significant() {
        let p = p_value_two_tailed(0.56_f64, 930).unwrap();
        assert!(p < 0.01, "p = {p}");
        assert!(p > 0.0);
    }

    #[test]
    fn p_value_monotone_in_abs_r() {
        let mut prev = 1.0_f64;
        for i in 1..20 {
            let r = i as f64 * 0.05;
            let p = p_value_two_tailed(r, 30).unwrap();
            assert!(p <= prev, "p({r}) = {p} > {prev}");
            prev = p;
        }
    }

    #[test]
    fn p_value_symmetric_in_sign() {
        let a = p_value_two_tailed(0.4_f64, 25).unwrap();
        let b = p_value_two_tailed(-0.4_f64, 25).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn p_value_rejects_degenerate() {
        assert!(p_value_two_tailed(0.5_f64, 2).is_err());
        assert!(p_value_two_tailed(1.0_f64, 10).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        // Γ(1) = Γ(2) = 1, Γ(5) = 24, Γ(1/2) = sqrt(π)
        assert!(ln_gamma(1.0_f64).abs() < 1e-12);
        assert!(ln_gamma(2.0_f64).abs() < 1e-12);
        assert!((ln_gamma(5.0_f64) - 24.0_f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5_f64) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn box_constant_data_is_degenerate_box() {
        let s = box_stats(&[0.7_f64; 5], 1.5).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (0.7, 0.7, 0.7, 0.7, 0.7));
        assert_eq!(s.lower_whisker, 0.7);
        assert_eq!(s.upper_whisker, 0.7);
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn box_one_through_nine() {
        let values: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = box_stats(&values, 1.5).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (3.0, 5.0, 7.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn box_zero_iqr_flags_outlier() {
        let s = box_stats(&[0.0_f64, 0.0, 0.0, 0.0, 10.0], 1.5).unwrap();
        assert_eq!(s.outliers, vec![10.0]);
        assert_eq!(s.upper_whisker, 0.0);
        assert_eq!(s.max, 10.0);
    }

    #[test]
    fn box_whisker_collapses_inside_gap() {
        // No datapoint sits between the lower fence and q1.
        let s = box_stats(&[0.0_f64, 10.0, 11.0, 12.0], 1.5).unwrap();
        assert_eq!(s.q1, 7.5);
        assert_eq!(s.lower_whisker, 7.5);
        assert_eq!(s.outliers, vec![0.0]);
        assert!(s.min <= s.lower_whisker && s.lower_whisker <= s.q1);
    }

    #[test]
    fn box_rejects_empty_and_nan() {
        assert_eq!(box_stats::<f64>(&[], 1.5), Err(StatsError::EmptyInput));
        assert!(box_stats(&[1.0, f64::NAN], 1.5).is_err());
    }
}
