//! The type-I extreme-value limit law of the coherence statistic and the
//! independence test built on it.
//!
//! For an n × p matrix with n/p → γ ∈ (0, ∞), the transformed statistic
//! `n·L² − 4·log n + log log n` converges in distribution to
//! `F_γ(t) = exp(−e^{−t/2} / (γ²·√(8π)))`. Large `L` contradicts the null
//! hypothesis that the population correlation matrix is the identity, so the
//! test rejects on the upper tail. Logarithms are natural throughout.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::{self, MaxEntryResult};
use crate::matrix::DataMatrix;

/// Outcome of the independence test on one matrix.
///
/// Serialized field names are part of the CLI contract.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TestReport {
    pub n: usize,
    pub p: usize,
    /// Plug-in estimate n/p of the limiting ratio γ.
    pub gamma_hat: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// `n·L² − 4·log n + log log n`.
    pub t_stat: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
    /// 1-based column pair achieving `L`.
    pub argmax_pair: (usize, usize),
}

/// `n·L² − 4·ln n + ln ln n`. Defined for n ≥ 2 (the inner log may be
/// negative there; ln ln 2 ≈ −0.3665).
pub fn jiang_transform(l: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("transform needs n ≥ 2, got {n}")));
    }
    let nf = n as f64;
    Ok(nf * l * l - 4.0 * nf.ln() + nf.ln().ln())
}

/// Limit CDF `F_γ(t) = exp(−e^{−t/2} / (γ²·√(8π)))`.
pub fn limit_cdf(t: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((-(-t / 2.0).exp() / (gamma * gamma * (8.0 * PI).sqrt())).exp())
}

/// Closed-form inverse of [`limit_cdf`]: `t = −2·ln(−γ²·√(8π)·ln q)`.
pub fn limit_quantile(q: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {q}")));
    }
    Ok(-2.0 * (-gamma * gamma * (8.0 * PI).sqrt() * q.ln()).ln())
}

/// Upper-tail p-value `1 − F_γ(n·L² − 4·ln n + ln ln n)`.
pub fn p_value(l: f64, n: usize, gamma: f64) -> Result<f64> {
    Ok(1.0 - limit_cdf(jiang_transform(l, n)?, gamma)?)
}

/// Run the coherence test on a matrix at the given significance level.
/// γ is estimated as n/p; rejects when the p-value falls below `level`.
pub fn run_test(x: &DataMatrix, level: f64) -> Result<TestReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0,1), got {level}")));
    }
    let best: MaxEntryResult = kernel::corr_offdiag_max(x, false)?;
    let (n, p) = (x.n(), x.p());
    let gamma_hat = n as f64 / p as f64;
    let t_stat = jiang_transform(best.value, n)?;
    let pv = 1.0 - limit_cdf(t_stat, gamma_hat)?;
    Ok(TestReport {
        n,
        p,
        gamma_hat,
        l: best.value,
        t_stat,
        p_value: pv,
        level,
        reject: pv < level,
        argmax_pair: (best.i, best.j),
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DistributionSpec;
    use crate::sim;
    use approx::assert_relative_eq;

    #[test]
    fn transform_matches_direct_formula() {
        // Direct scalar recomputations of the formula.
        let cases = [
            (0.0, 3usize, -4.0 * 3f64.ln() + 3f64.ln().ln()),
            (1.0, 3usize, 3.0 - 4.0 * 3f64.ln() + 3f64.ln().ln()),
            (0.0, 2usize, -4.0 * 2f64.ln() + 2f64.ln().ln()),
        ];
        for (l, n, expect) in cases {
            assert_relative_eq!(
                jiang_transform(l, n).unwrap(),
                expect,
                max_relative = 1e-15
            );
        }
        // Spot values of the same arithmetic.
        assert_relative_eq!(jiang_transform(0.0, 3).unwrap(), -4.30040, max_relative = 1e-5);
        assert_relative_eq!(jiang_transform(0.0, 2).unwrap(), -3.13910, max_relative = 1e-5);
        assert!(matches!(jiang_transform(0.5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_analytic_point_and_limits() {
        // At t = −ln(8π) with γ=1 the exponent is exactly −1.
        let t = -(8.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(
            limit_cdf(t, 1.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert!(limit_cdf(100.0, 1.0).unwrap() > 1.0 - 1e-15);
        assert!(limit_cdf(-200.0, 1.0).unwrap() < 1e-12);
        assert!(limit_cdf(0.0, 1.0).unwrap() < limit_cdf(1.0, 1.0).unwrap());
        assert!(matches!(limit_cdf(0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_is_monotone_with_unit_range() {
        for &gamma in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            let mut prev = 0.0;
            for k in 0..=10_000 {
                let t = -200.0 + 400.0 * k as f64 / 10_000.0;
                let f = limit_cdf(t, gamma).unwrap();
                assert!((0.0..=1.0).contains(&f));
                assert!(f >= prev, "not monotone at t={t}, γ={gamma}");
                prev = f;
            }
            assert!(limit_cdf(-200.0, gamma).unwrap() <= 1e-12);
            assert!(limit_cdf(200.0, gamma).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        assert_relative_eq!(
            limit_quantile((-1.0f64).exp(), 1.0).unwrap(),
            -(8.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-12
        );
        for &gamma in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            for &q in &[1e-6, 0.01, 0.3, 0.5, 0.95, 1.0 - 1e-6] {
                let t = limit_quantile(q, gamma).unwrap();
                assert!((limit_cdf(t, gamma).unwrap() - q).abs() <= 1e-12);
            }
        }
        assert!(limit_quantile(0.9999999, 1.0).unwrap() > limit_quantile(0.5, 1.0).unwrap());
        assert!(matches!(limit_quantile(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(limit_quantile(1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_scaling_relation() {
        // F_γ(t) = F_1(t + 4 ln γ), since γ² e^{−t/2} factorizes.
        for &gamma in &[0.25, 0.5, 2.0, 4.0] {
            for k in 0..200 {
                let t = -30.0 + 60.0 * k as f64 / 200.0;
                let lhs = limit_cdf(t, gamma).unwrap();
                let rhs = limit_cdf(t + 4.0 * gamma.ln(), 1.0).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn p_value_extremes_and_inverse_property() {
        assert!(p_value(0.0, 100_000, 1.0).unwrap() > 1.0 - 1e-6);
        assert!(p_value(1.0, 10_000, 1.0).unwrap() < 1e-12);
        // t_stat at the 0.95 quantile gives p-value 0.05.
        let gamma = 1.7;
        let t95 = limit_quantile(0.95, gamma).unwrap();
        let n = 5000usize;
        let l = ((t95 + 4.0 * (n as f64).ln() - (n as f64).ln().ln()) / n as f64).sqrt();
        assert!((p_value(l, n, gamma).unwrap() - 0.05).abs() <= 1e-12);
    }

    #[test]
    fn run_test_detects_duplicate_columns() {
        let dist = DistributionSpec::normal(0.0, 1.0).unwrap();
        let base = sim::sample_matrix(&dist, 500, 4, 5);
        let rows: Vec<Vec<f64>> = (0..base.n())
            .map(|k| {
                let r = base.row(k);
                vec![r[0], r[1], r[2], r[0]]
            })
            .collect();
        let x = DataMatrix::from_rows(rows).unwrap();
        let report = run_test(&x, 0.05).unwrap();
        assert_eq!(report.l, 1.0);
        assert!(report.p_value < 1e-12);
        assert!(report.reject);
        assert_eq!(report.argmax_pair, (1, 4));
        assert!(matches!(run_test(&x, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn run_test_invariant_under_column_affine_maps() {
        let dist = DistributionSpec::normal(0.0, 1.0).unwrap();
        let x = sim::sample_matrix(&dist, 120, 60, 42);
        let r1 = run_test(&x, 0.05).unwrap();
        let rows: Vec<Vec<f64>> = (0..x.n())
            .map(|k| {
                x.row(k)
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| (1.0 + c as f64 * 0.05) * v - 3.0 * c as f64)
                    .collect()
            })
            .collect();
        let r2 = run_test(&DataMatrix::from_rows(rows).unwrap(), 0.05).unwrap();
        assert_relative_eq!(r1.l, r2.l, max_relative = 1e-10);
        assert_eq!(r1.argmax_pair, r2.argmax_pair);
        assert_relative_eq!(r1.t_stat, r2.t_stat, max_relative = 1e-8);
        assert_eq!(r1.reject, r2.reject);
    }

    #[test]
    fn report_serializes_with_contract_field_names() {
        let report = TestReport {
            n: 10,
            p: 5,
            gamma_hat: 2.0,
            l: 0.5,
            t_stat: -1.0,
            p_value: 0.4,
            level: 0.05,
            reject: false,
            argmax_pair: (1, 3),
        };
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "n", "p", "gamma_hat", "L", "t_stat", "p_value", "level", "reject", "argmax_pair",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
