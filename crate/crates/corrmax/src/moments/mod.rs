//! Moment and series diagnostics for the strong-law hypotheses.
//!
//! For an analytic law of the entries, these routines classify whether the
//! moment conditions behind the SLLN (power normalization n^α) and the law of
//! the logarithm (√(n log n) normalization) hold:
//!
//! - SLLN(α): sufficient if E|X|^{3/α} < ∞, necessary that E|X|^{2/α} < ∞;
//! - LL: sufficient if E|X|⁶ < ∞, necessary that E|X|^β < ∞ for every β < 6
//!   (probed at β = 5.5).
//!
//! Finiteness is decided by tail-index rules, never by overflow; magnitudes
//! are evaluated by adaptive quadrature against the density of |X|. The
//! series conditions themselves are infinite sums, so [`series_partial_sums`]
//! is explicitly a diagnostic, not a decision procedure.

mod quad;

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::sim::rng;

/// Exponent used to probe the LL necessary condition (any fixed β < 6
/// works; 5.5 is far enough from 6 to be robust to quadrature error).
pub const LL_NECESSITY_PROBE_BETA: f64 = 5.5;

/// Relative tolerance for moment quadrature.
pub const MOMENT_REL_TOL: f64 = 1e-8;

/// Relative tolerance contract for the order-statistic tail quadrature.
/// Internally the integrator is run tighter so that monotonicity checks at
/// 1e-9 hold.
pub const TAIL_REL_TOL: f64 = 1e-6;
const TAIL_INTERNAL_TOL: f64 = 1e-9;

/// A named univariate law for the i.i.d. entries.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Normal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    Rademacher,
    StudentT { nu: f64 },
    Pareto { x_m: f64, tail_index: f64 },
    PointMass { c: f64 },
}

/// The value of an absolute moment: a number, or symbolically infinite by
/// the tail-index rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentValue {
    Finite(f64),
    Infinite,
}

impl MomentValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, MomentValue::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MomentValue::Finite(v) => Some(*v),
            MomentValue::Infinite => None,
        }
    }
}

/// Which condition a verdict is about.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Slln { alpha: f64 },
    Ll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HoldsSufficient,
    FailsNecessary,
    Indeterminate,
}

/// The moments inspected for a verdict.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VerdictEvidence {
    pub sufficient_order: f64,
    pub sufficient_moment: MomentValue,
    pub necessary_order: f64,
    pub necessary_moment: MomentValue,
}

/// Classification of a moment condition for a law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConditionVerdict {
    pub condition: ConditionId,
    pub verdict: Verdict,
    pub evidence: VerdictEvidence,
}

/// Monte Carlo estimates of the two product-moment functionals bracketing
/// the LL series condition: `E[(X₁X₂)⁶ / log(e+|X₁X₂|)³]` (f27, stronger)
/// and `E[(X₁X₂)⁴ / log(e+|X₁X₂|)²]` (f28, weaker). Finite-sample estimates
/// only; divergence shows up as seed-to-seed instability, which is reported,
/// not decided.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LlFunctionals {
    pub f27: f64,
    pub f28: f64,
    pub se27: f64,
    pub se28: f64,
    pub n_mc: usize,
    pub seed: u64,
}

/// One partial sum of a series diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeriesPoint {
    pub n: usize,
    pub partial_sum: f64,
}

/// Threshold family for [`series_partial_sums`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesMode {
    /// Thresholds n^α (the SLLN series).
    Slln { alpha: f64 },
    /// Thresholds √(n·ln n) (the LL series).
    Ll,
}

impl DistributionSpec {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::Domain(format!("normal needs σ > 0, got μ={mu}, σ={sigma}")));
        }
        Ok(Self::Normal { mu, sigma })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("uniform needs a < b, got a={a}, b={b}")));
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn rademacher() -> Self {
        Self::Rademacher
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Domain(format!("student_t needs ν > 0, got {nu}")));
        }
        Ok(Self::StudentT { nu })
    }

    pub fn pareto(x_m: f64, tail_index: f64) -> Result<Self> {
        if !(x_m > 0.0) || !(tail_index > 0.0) {
            return Err(Error::Domain(format!(
                "pareto needs x_m > 0 and tail index > 0, got ({x_m}, {tail_index})"
            )));
        }
        Ok(Self::Pareto { x_m, tail_index })
    }

    pub fn point_mass(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Domain("point mass must be finite".into()));
        }
        Ok(Self::PointMass { c })
    }

    /// Analytic mean and standard deviation, when both exist.
    pub fn mean_sd(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Normal { mu, sigma } => Some((mu, sigma)),
            Self::Uniform { a, b } => Some(((a + b) / 2.0, (b - a) / 12f64.sqrt())),
            Self::Rademacher => Some((0.0, 1.0)),
            Self::StudentT { nu } => (nu > 2.0).then(|| (0.0, (nu / (nu - 2.0)).sqrt())),
            Self::Pareto { x_m, tail_index: al } => (al > 2.0).then(|| {
                let mean = al * x_m / (al - 1.0);
                let var = x_m * x_m * al / ((al - 1.0) * (al - 1.0) * (al - 2.0));
                (mean, var.sqrt())
            }),
            Self::PointMass { c } => Some((c, 0.0)),
        }
    }

    /// True when the law is a single atom (zero variance).
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::PointMass { .. })
    }

    /// `|X|` for laws where it is a.s. constant (rademacher, point mass).
    fn abs_deterministic(&self) -> Option<f64> {
        match *self {
            Self::Rademacher => Some(1.0),
            Self::PointMass { c } => Some(c.abs()),
            _ => None,
        }
    }

    /// Exponent above which E|X|^r is infinite, if any.
    fn finite_moment_bound(&self) -> Option<f64> {
        match *self {
            Self::StudentT { nu } => Some(nu),
            Self::Pareto { tail_index, .. } => Some(tail_index),
            _ => None,
        }
    }

    /// Support of |X| as (lower, upper); upper is `None` for half-lines.
    fn abs_support(&self) -> (f64, Option<f64>) {
        match *self {
            Self::Normal { .. } | Self::StudentT { .. } => (0.0, None),
            Self::Uniform { a, b } => {
                if a >= 0.0 {
                    (a, Some(b))
                } else if b <= 0.0 {
                    (-b, Some(-a))
                } else {
                    (0.0, Some(f64::max(-a, b)))
                }
            }
            Self::Pareto { x_m, .. } => (x_m, None),
            Self::Rademacher => (1.0, Some(1.0)),
            Self::PointMass { c } => (c.abs(), Some(c.abs())),
        }
    }

    /// Density of |X| at z ≥ 0 (continuous kinds only).
    pub(crate) fn abs_pdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Normal { mu, sigma } => {
                let d = Normal::new(mu, sigma).expect("validated");
                d.pdf(z) + d.pdf(-z)
            }
            Self::Uniform { a, b } => {
                let mut g = 0.0;
                if z >= a && z <= b {
                    g += 1.0;
                }
                if -z >= a && -z <= b {
                    g += 1.0;
                }
                g / (b - a)
            }
            Self::StudentT { nu } => {
                2.0 * StudentsT::new(0.0, 1.0, nu).expect("validated").pdf(z)
            }
            Self::Pareto { x_m, tail_index } => {
                if z < x_m {
                    0.0
                } else {
                    tail_index * x_m.powf(tail_index) / z.powf(tail_index + 1.0)
                }
            }
            Self::Rademacher | Self::PointMass { .. } => 0.0,
        }
    }

    /// CDF of |X| at z (continuous kinds only).
    pub(crate) fn abs_cdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Normal { mu, sigma } => {
                let d = Normal::new(mu, sigma).expect("validated");
                d.cdf(z) - d.cdf(-z)
            }
            Self::Uniform { a, b } => ((z.min(b) - (-z).max(a)).max(0.0)) / (b - a),
            Self::StudentT { nu } => {
                2.0 * StudentsT::new(0.0, 1.0, nu).expect("validated").cdf(z) - 1.0
            }
            Self::Pareto { x_m, tail_index } => {
                if z < x_m {
                    0.0
                } else {
                    1.0 - (x_m / z).powf(tail_index)
                }
            }
            Self::Rademacher | Self::PointMass { .. } => 0.0,
        }
    }

    /// Quantile of |X| by bisection on [`Self::abs_cdf`].
    fn abs_quantile(&self, q: f64) -> f64 {
        let (lo_s, hi_s) = self.abs_support();
        let mut hi = hi_s.unwrap_or_else(|| {
            let mut h = f64::max(1.0, lo_s * 2.0 + 1.0);
            let mut guard = 0;
            while self.abs_cdf(h) < q && guard < 4200 {
                h *= 2.0;
                guard += 1;
            }
            h
        });
        let mut lo = lo_s;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.abs_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// One draw from 64 uniform bits (exact inverse-CDF transforms).
    pub(crate) fn draw(&self, bits: u64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => {
                mu + sigma
                    * Normal::new(0.0, 1.0)
                        .expect("standard normal")
                        .inverse_cdf(rng::u01(bits))
            }
            Self::Uniform { a, b } => a + (b - a) * rng::u01(bits),
            Self::Rademacher => {
                if bits >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StudentT { nu } => StudentsT::new(0.0, 1.0, nu)
                .expect("validated")
                .inverse_cdf(rng::u01(bits)),
            Self::Pareto { x_m, tail_index } => {
                x_m * (1.0 - rng::u01(bits)).powf(-1.0 / tail_index)
            }
            Self::PointMass { c } => c,
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mu, sigma } => write!(f, "normal:{mu},{sigma}"),
            Self::Uniform { a, b } => write!(f, "uniform:{a},{b}"),
            Self::Rademacher => write!(f, "rademacher"),
            Self::StudentT { nu } => write!(f, "student_t:{nu}"),
            Self::Pareto { x_m, tail_index } => write!(f, "pareto:{x_m},{tail_index}"),
            Self::PointMass { c } => write!(f, "point_mass:{c}"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// `name:param1,param2` flag syntax, e.g. `normal:0,1`, `student_t:3`.
    /// `name(a,b)` is accepted as an alias. Defaults: `normal` → (0,1),
    /// `uniform` → (0,1), `point_mass` → 0.
    fn from_str(s:&str) -> Result<Self> {
        let cleaned = s.trim().replace('(', ":").replace(')', "");
        let (name, rest) = match cleaned.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (cleaned.as_str(), ""),
        };
        let params: Vec<f64> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Domain(format!("bad distribution parameter {tok:?}")))
                })
                .collect::<Result<_>>()?
        };
        let wrong_arity = |want: &str| {
            Error::Domain(format!("{name} takes {want} parameters, got {}", params.len()))
        };
        match name {
            "normal" => match params[..] {
                [] => Self::normal(0.0, 1.0),
                [mu, sigma] => Self::normal(mu, sigma),
                _ => Err(wrong_arity("0 or 2")),
            },
            "uniform" => match params[..] {
                [] => Self::uniform(0.0, 1.0),
                [a, b] => Self::uniform(a, b),
                _ => Err(wrong_arity("0 or 2")),
            },
            "rademacher" => {
                if params.is_empty() {
                    Ok(Self::Rademacher)
                } else {
                    Err(wrong_arity("no"))
                }
            }
            "student_t" => match params[..] {
                [nu] => Self::student_t(nu),
                _ => Err(wrong_arity("1")),
            },
            "pareto" => match params[..] {
                [x_m, tail] => Self::pareto(x_m, tail),
                _ => Err(wrong_arity("2")),
            },
            "point_mass" => match params[..] {
                [] => Self::point_mass(0.0),
                [c] => Self::point_mass(c),
                _ => Err(wrong_arity("0 or 1")),
            },
            other => Err(Error::Domain(format!("unknown distribution {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// E|X|^r, by quadrature against the density of |X| when finite; the
/// symbolic value [`MomentValue::Infinite`] when the tail-index rule says the
/// moment diverges (student_t(ν): r ≥ ν; pareto(·, a): r ≥ a). Pareto uses
/// its exact closed form a·x_m^r/(a−r): near the tail index no quadrature
/// can certify 1e-8.
pub fn abs_moment(dist: &DistributionSpec, r: f64) -> Result<MomentValue> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("moment order must be positive, got {r}")));
    }
    if let Some(bound) = dist.finite_moment_bound() {
        if r >= bound {
            return Ok(MomentValue::Infinite);
        }
    }
    if let Some(z) = dist.abs_deterministic() {
        return Ok(MomentValue::Finite(z.powf(r)));
    }
    if let DistributionSpec::Pareto { x_m, tail_index } = *dist {
        return Ok(MomentValue::Finite(
            tail_index * x_m.powf(r) / (tail_index - r),
        ));
    }
    let f = |z: f64| if z > 0.0 { z.powf(r) * dist.abs_pdf(z) } else { 0.0 };
    let (lo, hi) = dist.abs_support();
    let value = match hi {
        Some(hi) => {
            // Bounded support: split at density kinks of |X|.
            let mut knots = vec![lo, hi];
            if let DistributionSpec::Uniform { a, b } = *dist {
                if a < 0.0 && 0.0 < b {
                    knots.push(f64::min(-a, b));
                }
            }
            knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
            knots.dedup();
            quad::integrate_pieces(&f, &knots, MOMENT_REL_TOL)
        }
        None => {
            // Body pieces at |X| quantiles, then the tangent-transformed tail.
            let mut knots = vec![lo];
            for q in [0.5, 0.9, 0.99, 1.0 - 1e-4, 1.0 - 1e-8] {
                knots.push(dist.abs_quantile(q));
            }
            knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
            knots.dedup();
            quad::integrate_pieces(&f, &knots, MOMENT_REL_TOL)
                + quad::integrate_to_inf(&f, *knots.last().unwrap(), MOMENT_REL_TOL)
        }
    };
    Ok(MomentValue::Finite(value))
}

/// Verdict for the SLLN(α) series condition via its moment bracket:
/// sufficient E|X|^{3/α} < ∞, necessary E|X|^{2/α} < ∞.
pub fn slln_condition_verdict(dist: &DistributionSpec, alpha: f64) -> Result<ConditionVerdict> {
    if !(alpha > 0.5) {
        return Err(Error::Domain(format!("SLLN diagnostics need α > 1/2, got {alpha}")));
    }
    let sufficient_order = 3.0 / alpha;
    let necessary_order = 2.0 / alpha;
    let sufficient = abs_moment(dist, sufficient_order)?;
    let necessary = abs_moment(dist, necessary_order)?;
    let verdict = if sufficient.is_finite() {
        Verdict::HoldsSufficient
    } else if !necessary.is_finite() {
        Verdict::FailsNecessary
    } else {
        Verdict::Indeterminate
    };
    Ok(ConditionVerdict {
        condition: ConditionId::Slln { alpha },
        verdict,
        evidence: VerdictEvidence {
            sufficient_order,
            sufficient_moment: sufficient,
            necessary_order,
            necessary_moment: necessary,
        },
    })
}

/// Verdict for the LL series condition: sufficient E|X|⁶ < ∞, necessary
/// E|X|^β < ∞ for all β < 6 (probed at β = 5.5).
pub fn ll_condition_verdict(dist: &DistributionSpec) -> Result<ConditionVerdict> {
    let sufficient = abs_moment(dist, 6.0)?;
    let necessary = abs_moment(dist, LL_NECESSITY_PROBE_BETA)?;
    let verdict = if sufficient.is_finite() {
        Verdict::HoldsSufficient
    } else if !necessary.is_finite() {
        Verdict::FailsNecessary
    } else {
        Verdict::Indeterminate
    };
    Ok(ConditionVerdict {
        condition: ConditionId::Ll,
        verdict,
        evidence: VerdictEvidence {
            sufficient_order: 6.0,
            sufficient_moment: sufficient,
            necessary_order: LL_NECESSITY_PROBE_BETA,
            necessary_moment: necessary,
        },
    })
}

/// Monte Carlo estimates of the two functionals bracketing the LL series
/// condition, over `n_mc` i.i.d. pairs (intended n_mc ≥ 10⁴).
pub fn ll_functionals(dist: &DistributionSpec, n_mc: usize, seed: u64) -> LlFunctionals {
    let e = std::f64::consts::E;
    let mut mean27 = 0.0;
    let mut m2_27 = 0.0;
    let mut mean28 = 0.0;
    let mut m2_28 = 0.0;
    for t in 0..n_mc {
        let x1 = dist.draw(rng::entry_bits(seed, t as u64, 0));
        let x2 = dist.draw(rng::entry_bits(seed, t as u64, 1));
        let y = x1 * x2;
        let l = (e + y.abs()).ln();
        let t27 = y.powi(6) / l.powi(3);
        let t28 = y.powi(4) / l.powi(2);
        let k = (t + 1) as f64;
        let d27 = t27 - mean27;
        mean27 += d27 / k;
        m2_27 += d27 * (t27 - mean27);
        let d28 = t28 - mean28;
        mean28 += d28 / k;
        m2_28 += d28 * (t28 - mean28);
    }
    let nf = n_mc as f64;
    let se = |m2: f64| {
        if n_mc > 1 {
            (m2 / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        }
    };
    LlFunctionals {
        f27: mean27,
        f28: mean28,
        se27: se(m2_27),
        se28: se(m2_28),
        n_mc,
        seed,
    }
}

/// `P(Z_{n:1}·Z_{n:2} ≥ a)` — the product of the two largest of n absolute
/// values — via the top-two order-statistic representation
/// `∫₀^∞ n(n−1)·G(z)^{n−2}·g(z)·(1 − G(max(z, a/z))) dz`.
///
/// Laws with a.s. constant |X| = z₀ are evaluated exactly as 1{z₀² ≥ a}.
pub fn top_two_product_tail(dist: &DistributionSpec, n: usize, a: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("need n ≥ 2, got {n}")));
    }
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("threshold must be nonnegative, got {a}")));
    }
    if let Some(z0) = dist.abs_deterministic() {
        return Ok(if z0 * z0 >= a { 1.0 } else { 0.0 });
    }
    if a == 0.0 {
        return Ok(1.0);
    }
    let coeff = (n * (n - 1)) as f64;
    let pow = (n - 2) as i32;
    let f = |z: f64| {
        let g = dist.abs_pdf(z);
        if g == 0.0 {
            return 0.0;
        }
        let big = if z > 0.0 { f64::max(z, a / z) } else { f64::INFINITY };
        let tail = 1.0 - dist.abs_cdf(big);
        if tail == 0.0 {
            return 0.0;
        }
        coeff * dist.abs_cdf(z).powi(pow) * g * tail
    };

    let (lo, hi) = dist.abs_support();
    let mut knots = vec![lo, a.sqrt()];
    if let Some(h) = hi {
        // Below a/hi the needed partner exceeds the support: integrand is 0.
        knots.push(a / h);
        knots.push(h);
    }
    for q in [0.5, 0.9, 1.0 - 1.0 / n as f64, 1.0 - 0.1 / n as f64, 1.0 - 0.01 / n as f64] {
        knots.push(dist.abs_quantile(q));
    }
    let upper = hi.unwrap_or(f64::INFINITY);
    knots.retain(|&z| z.is_finite() && z >= lo && z <= upper);
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();

    let mut total = quad::integrate_pieces(&f, &knots, TAIL_INTERNAL_TOL);
    if hi.is_none() {
        total += quad::integrate_to_inf(&f, *knots.last().unwrap(), TAIL_INTERNAL_TOL);
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Partial sums `Σ_{n=2..N} P(Z_{n:1}Z_{n:2} ≥ a_n)` with `a_n = n^α` (SLLN)
/// or `√(n·ln n)` (LL), evaluated on a geometric grid with trapezoidal
/// interpolation in log n between grid points. Diagnostic only: a truncated
/// sum cannot decide convergence of the series.
pub fn series_partial_sums(
    dist: &DistributionSpec,
    mode: SeriesMode,
    n_max: usize,
) -> Result<Vec<SeriesPoint>> {
    if n_max < 2 {
        return Err(Error::Domain(format!("need N ≥ 2, got {n_max}")));
    }
    if let SeriesMode::Slln { alpha } = mode {
        if !(alpha > 0.5) {
            return Err(Error::Domain(format!("series diagnostics need α > 1/2, got {alpha}")));
        }
    }
    let threshold = |n: usize| -> f64 {
        let nf = n as f64;
        match mode {
            SeriesMode::Slln { alpha } => nf.powf(alpha),
            SeriesMode::Ll => (nf * nf.ln()).sqrt(),
        }
    };

    let mut grid = Vec::new();
    let mut n = 2usize;
    while n < n_max {
        grid.push(n);
        n = usize::max(n + 1, (n as f64 * 1.25).round() as usize);
    }
    grid.push(n_max);

    let mut points = Vec::with_capacity(grid.len());
    let mut sum = 0.0;
    let mut prev: Option<(usize, f64)> = None;
    for &nk in &grid {
        let tk = top_two_product_tail(dist, nk, threshold(nk))?;
        match prev {
            None => sum += tk, // the n = 2 term itself
            Some((np, tp)) => {
                if nk - np == 1 {
                    sum += tk;
                } else {
                    // Σ_{m=np+1..nk} t(m) ≈ ∫ t dn, trapezoid in u = ln n.
                    let du = (nk as f64).ln() - (np as f64).ln();
                    sum += du / 2.0 * (tp * np as f64 + tk * nk as f64);
                }
            }
        }
        prev = Some((nk, tk));
        points.push(SeriesPoint { n: nk, partial_sum: sum });
    }
    Ok(points)
}
