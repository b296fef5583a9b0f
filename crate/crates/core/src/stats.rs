//! Paired t-test, Pearson and Spearman correlation.
//!
//! The Student-t tail is computed through the regularized incomplete beta
//! function, evaluated as a continued fraction (modified Lentz).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative convergence threshold of the incomplete-beta continued fraction.
pub const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 500;
const CF_TINY: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("samples have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("correlation is undefined for a constant sample")]
    Constant,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Result of a paired two-sided t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// Infinite when the differences are constant and non-zero.
    #[serde(with = "extended_float")]
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
    pub n: usize,
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x.is_nan() || a <= 0.0 || b <= 0.0 {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // the fraction converges fast for x < (a + 1) / (a + b + 2)
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `P(|T| > |t|)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Two-sided paired t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTestResult, StatsError> {
    check_pair(x, y)?;
    let n = x.len();
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        (t, student_t_two_sided(t, df as f64))
    };
    Ok(TTestResult {
        t,
        df,
        p_two_sided: p,
        n,
    })
}

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation (Pearson on average ranks).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    pearson_r(&average_ranks(x), &average_ranks(y))
}

/// Serializes non-finite floats as the strings `"Infinity"`, `"-Infinity"` and `"NaN"`.
pub(crate) mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if *x > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_str("-Infinity")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(a, 1) = x^a and I_x(1, b) = 1 - (1 - x)^b
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            assert!((regularized_incomplete_beta(x, 3.0, 1.0) - x.powi(3)).abs() < 1e-12);
            assert!((regularized_incomplete_beta(x, 1.0, 2.5) - (1.0 - (1.0 - x).powf(2.5))).abs() < 1e-12);
        }
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 2.0), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 2.0), 1.0);
    }

    #[test]
    fn cauchy_tail() {
        // df = 1 is the Cauchy distribution: sf(t) = 1/2 - atan(t)/pi
        for &t in &[-3.0, -0.5, 0.0, 0.7, 2.0, 25.0] {
            let expected = 0.5 - f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_sf(t, 1.0) - expected).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn paired_t_closed_form_df2() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.df, 2);
        assert!((r.t + 12f64.sqrt()).abs() < 1e-12);
        // df = 2: CDF(t) = 1/2 + t / (2 sqrt(t^2 + 2))
        let cdf = 0.5 + r.t / (2.0 * (r.t * r.t + 2.0).sqrt());
        assert!((r.p_two_sided - 2.0 * cdf).abs() < 1e-12);
        assert!((r.p_two_sided - 0.0742).abs() < 1e-3);
    }

    #[test]
    fn paired_t_degenerate_and_antisymmetric() {
        let x = [0.3, 0.9, 0.1, 0.4];
        let same = paired_t_test(&x, &x).unwrap();
        assert_eq!((same.t, same.p_two_sided), (0.0, 1.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let shift = paired_t_test(&[0.5, 1.0, 0.25, 4.0], &[1.5, 2.0, 1.25, 5.0]).unwrap();
        assert!(shift.t.is_infinite() && shift.t < 0.0);
        assert_eq!(shift.p_two_sided, 0.0);
        let y = [0.5, 0.2, 0.2, 0.8];
        let a = paired_t_test(&x, &y).unwrap();
        let b = paired_t_test(&y, &x).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.p_two_sided, b.p_two_sided);
        assert!(paired_t_test(&x, &shifted[..3]).is_err());
        assert_eq!(paired_t_test(&[1.0], &[2.0]), Err(StatsError::TooFew(1)));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &lin).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(StatsError::Constant));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
        assert!((spearman_rho(&[1.0, 5.0, 9.0, 10.0], &[0.1, 0.2, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
        assert_eq!(spearman_rho(&[2.0, 2.0], &[1.0, 3.0]), Err(StatsError::Constant));
    }

    #[test]
    fn infinite_t_round_trips_through_json() {
        let r = TTestResult {
            t: f64::NEG_INFINITY,
            df: 3,
            p_two_sided: 0.0,
            n: 4,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"-Infinity\""));
        assert_eq!(serde_json::from_str::<TTestResult>(&text).unwrap(), r);
    }
}
