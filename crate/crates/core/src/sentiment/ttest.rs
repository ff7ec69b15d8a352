//! Paired t-test with Student-t p-values from the regularized incomplete beta function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub n: usize,
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value_two_sided: f64,
    pub mean_difference: f64,
    pub sample_stddev: f64,
    pub mu0: f64,
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, 9 terms; ~1e-15 relative).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for I_x(a, b), modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// One-sample t-test on paired differences against `mu0`.
///
/// Zero spread with a mean equal to `mu0` yields t = 0, p = 1; zero spread with
/// any other mean is rejected since t is unbounded.
pub fn paired_ttest(differences: &[f64], mu0: f64) -> Result<TTestResult> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::DegenerateSample(n));
    }
    let mean = differences.iter().sum::<f64>() / n as f64;
    let all_equal = differences.iter().all(|&d| d == differences[0]);
    let sd = if all_equal {
        0.0
    } else {
        (differences.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let df = n - 1;
    let (t, p) = if sd == 0.0 {
        let mean = if all_equal { differences[0] } else { mean };
        if mean != mu0 {
            return Err(Error::ZeroVariance { mean, mu0 });
        }
        (0.0, 1.0)
    } else {
        let t = (mean - mu0) / (sd / (n as f64).sqrt());
        (t, student_t_two_sided_p(t, df as f64))
    };
    Ok(TTestResult {
        n,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value_two_sided: p,
        mean_difference: mean,
        sample_stddev: sd,
        mu0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: 2 * integral_{|t|}^{inf} of the t density via Simpson's
    /// rule after the substitution u = atan(x / sqrt(df)).
    fn t_tail_quadrature(t: f64, df: f64) -> f64 {
        let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
        // x = sqrt(df) tan u, dx = sqrt(df) sec^2 u du; density (1 + tan^2 u)^(-(df+1)/2) = cos^(df+1) u
        let f = |u: f64| c * df.sqrt() * u.cos().powf(df - 1.0);
        let lo = (t.abs() / df.sqrt()).atan();
        let hi = std::f64::consts::FRAC_PI_2;
        let steps = 20_000;
        let h = (hi - lo) / steps as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + k as f64 * h);
        }
        2.0 * s * h / 3.0
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1 - x)^b
        assert!((regularized_incomplete_beta(1.0 / 7.0, 1.0, 0.5) - (1.0 - (6.0f64 / 7.0).sqrt())).abs() < 1e-13);
        // I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(0.3, 2.5, 1.0) - 0.3f64.powf(2.5)).abs() < 1e-13);
        // symmetry
        let v = regularized_incomplete_beta(0.4, 3.0, 5.0) + regularized_incomplete_beta(0.6, 5.0, 3.0);
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn p_values_match_quadrature() {
        for &df in &[1.0, 2.0, 3.0, 5.0, 10.0, 30.0] {
            for &t in &[0.0, 0.3, 1.0, 2.228, 3.4641, 6.0] {
                let p = student_t_two_sided_p(t, df);
                let q = t_tail_quadrature(t, df);
                assert!((p - q).abs() < 1e-6, "df={df} t={t}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn reference_table_values() {
        assert!((student_t_two_sided_p(3.4641, 2.0) - 0.0742).abs() < 1e-3);
        assert!((student_t_two_sided_p(2.228, 10.0) - 0.050).abs() < 1e-3);
    }

    #[test]
    fn worked_example() {
        let r = paired_ttest(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(r.degrees_of_freedom, 2);
        assert!((r.mean_difference - 2.0).abs() < 1e-15);
        assert!((r.sample_stddev - 1.0).abs() < 1e-15);
        assert!((r.t_statistic - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((r.p_value_two_sided - 0.0742).abs() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        let r = paired_ttest(&[0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!((r.t_statistic, r.p_value_two_sided), (0.0, 1.0));
        assert!(matches!(paired_ttest(&[5.0, 5.0], 0.0), Err(Error::ZeroVariance { .. })));
        assert!(matches!(paired_ttest(&[1.0], 0.0), Err(Error::DegenerateSample(1))));
    }

    proptest! {
        #[test]
        fn negation_symmetry(d in proptest::collection::vec(-5.0f64..5.0, 3..20)) {
            prop_assume!(d.iter().any(|&x| x != d[0]));
            let a = paired_ttest(&d, 0.0).unwrap();
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            let b = paired_ttest(&neg, 0.0).unwrap();
            prop_assert!((a.t_statistic + b.t_statistic).abs() < 1e-9 * (1.0 + a.t_statistic.abs()));
            prop_assert!((a.p_value_two_sided - b.p_value_two_sided).abs() < 1e-12);
        }

        #[test]
        fn scale_invariance(d in proptest::collection::vec(-5.0f64..5.0, 3..20), c in 0.01f64..100.0) {
            prop_assume!(d.iter().any(|&x| x != d[0]));
            let a = paired_ttest(&d, 0.0).unwrap();
            let scaled: Vec<f64> = d.iter().map(|x| c * x).collect();
            let b = paired_ttest(&scaled, 0.0).unwrap();
            prop_assert!((a.t_statistic - b.t_statistic).abs() < 1e-8 * (1.0 + a.t_statistic.abs()));
        }

        #[test]
        fn p_monotone_in_abs_t(t1 in 0.0f64..20.0, dt in 0.001f64..5.0, df in 1usize..60) {
            let p1 = student_t_two_sided_p(t1, df as f64);
            let p2 = student_t_two_sided_p(t1 + dt, df as f64);
            prop_assert!(p2 <= p1 + 1e-15);
            prop_assert!((0.0..=1.0).contains(&p1));
        }
    }
}
