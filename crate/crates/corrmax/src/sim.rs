//! Seeded Monte Carlo experiments that probe the almost-sure limit laws and
//! the distributional limit at desk scale.
//!
//! Samples are nested: entry (k, i) of a simulated array depends only on
//! (seed, k, i), so the n × p matrix for a larger (n, p) extends the smaller
//! one entrywise. That matches the theorems, which quantify over a single
//! infinite array rather than fresh samples per n. Experiments are pure
//! functions of (config, seeds); reruns are bit-identical.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, jiang_transform};
use crate::error::{Error, Result};
use crate::kernel::{self, CorrPolicy};
use crate::matrix::DataMatrix;
use crate::moments::DistributionSpec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Alpha recorded with LL/EVD records for their SLLN-normalized columns.
pub const DEFAULT_ALPHA: f64 = 0.75;

pub mod rng {
    //! Counter-based pseudo-randomness: SplitMix64-style finalizers over the
    //! (seed, row, column) key. Each 64-bit draw is
    //! `mix64(mix64(mix64(seed ^ C0) ^ row·C1) ^ col·C2)`, where `mix64` is
    //! the SplitMix64 output permutation and C1, C2 are odd constants, so
    //! draws are random-access and independent of evaluation order.

    const C0: u64 = 0x9E37_79B9_7F4A_7C15;
    const C1: u64 = 0xC2B2_AE3D_27D4_EB4F;
    const C2: u64 = 0x1656_67B1_9E37_79F9;

    /// SplitMix64 output permutation (a bijection on u64).
    #[inline]
    pub fn mix64(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// The 64 bits for matrix entry (row, col) under `seed`.
    #[inline]
    pub fn entry_bits(seed: u64, row: u64, col: u64) -> u64 {
        let h = mix64(seed ^ C0);
        let h = mix64(h ^ row.wrapping_mul(C1));
        mix64(h ^ col.wrapping_mul(C2))
    }

    /// Map 64 bits to the open interval (0, 1): 53 mantissa bits, centered,
    /// so inverse-CDF transforms never see 0 or 1.
    #[inline]
    pub fn u01(bits: u64) -> f64 {
        ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Seed for task `index` derived from a root seed (used by the CLI to
    /// expand `--seeds N` and by replicate sweeps).
    #[inline]
    pub fn derive_seed(root: u64, index: u64) -> u64 {
        mix64(root ^ index.wrapping_mul(C1) ^ C0)
    }
}

// ---------------------------------------------------------------------------
// Dimension schedules
// ---------------------------------------------------------------------------

/// How the active dimension p_n grows with the sample size n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PnSchedule {
    /// `p_n = max(2, round(n/γ))`, so n/p_n → γ.
    Proportional { gamma: f64 },
    /// n/p_n alternates between c_lo and c_hi every `period_decades` decades
    /// of n: bounded away from 0 and ∞ with no limit.
    RatioBand {
        c_lo: f64,
        c_hi: f64,
        period_decades: u32,
    },
    /// Constant dimension.
    Fixed { p: usize },
}

impl PnSchedule {
    pub fn proportional(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self::Proportional { gamma })
    }

    pub fn ratio_band(c_lo: f64, c_hi: f64, period_decades: u32) -> Result<Self> {
        if !(c_lo > 0.0 && c_hi >= c_lo && c_hi.is_finite()) {
            return Err(Error::Domain(format!(
                "ratio band needs 0 < c_lo ≤ c_hi, got [{c_lo}, {c_hi}]"
            )));
        }
        if period_decades == 0 {
            return Err(Error::Domain("period_decades must be ≥ 1".into()));
        }
        Ok(Self::RatioBand { c_lo, c_hi, period_decades })
    }

    pub fn fixed(p: usize) -> Self {
        Self::Fixed { p }
    }

    /// The target ratio n/p_n before rounding, if the schedule has one.
    pub fn target_ratio(&self, n: usize) -> Option<f64> {
        match *self {
            Self::Proportional { gamma } => Some(gamma),
            Self::RatioBand { c_lo, c_hi, period_decades } => {
                let phase = ((n as f64).log10() / period_decades as f64).floor() as i64;
                Some(if phase % 2 == 0 { c_lo } else { c_hi })
            }
            Self::Fixed { .. } => None,
        }
    }

    /// Active dimension at sample size n.
    pub fn p_for(&self, n: usize) -> usize {
        match *self {
            Self::Fixed { p } => p,
            _ => {
                let r = self.target_ratio(n).expect("ratio schedules");
                usize::max(2, (n as f64 / r).round() as usize)
            }
        }
    }

    /// Declared bounds for n/p_n, when the schedule has them.
    pub fn declared_band(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Proportional { gamma } => Some((gamma, gamma)),
            Self::RatioBand { c_lo, c_hi, .. } => Some((c_lo, c_hi)),
            Self::Fixed { .. } => None,
        }
    }

    /// Check the realized ratio over every n in [n_lo, n_hi] against the
    /// declared band, with rounding slack; the `max(2, ·)` floor region is
    /// exempt (the band holds for all n past it).
    pub fn validate_over(&self, n_lo: usize, n_hi: usize) -> Result<()> {
        let Some((lo, hi)) = self.declared_band() else {
            return Ok(());
        };
        for n in n_lo..=n_hi {
            let target = self.target_ratio(n).expect("banded schedules");
            if (n as f64) < 1.5 * target {
                continue; // p clamps to 2 here
            }
            let realized = n as f64 / self.p_for(n) as f64;
            let slack_hi = hi * (1.0 + hi / n as f64);
            let slack_lo = lo / (1.0 + lo / n as f64);
            if realized > slack_hi || realized < slack_lo {
                return Err(Error::Domain(format!(
                    "schedule leaves its ratio band at n = {n}: n/p = {realized}, band [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// An n × p matrix of i.i.d. draws from `dist`, keyed by (seed, row, column).
///
/// Prefixes nest: `sample_matrix(dist, 10, 5, s)` is the top-left block of
/// `sample_matrix(dist, 20, 8, s)`, entry for entry.
pub fn sample_matrix(dist: &DistributionSpec, n: usize, p: usize, seed: u64) -> DataMatrix {
    sample_transformed(dist, n, p, seed, 0.0, 1.0)
}

/// Sampled entries mapped through x ↦ (x − shift)/scale.
fn sample_transformed(
    dist: &DistributionSpec,
    n: usize,
    p: usize,
    seed: u64,
    shift: f64,
    scale: f64,
) -> DataMatrix {
    let mut data = vec![0.0f64; n * p];
    let fill_row = |k: usize, row: &mut [f64]| {
        for (i, v) in row.iter_mut().enumerate() {
            let x = dist.draw(rng::entry_bits(seed, k as u64, i as u64));
            *v = (x - shift) / scale;
        }
    };
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(p).enumerate().for_each(|(k, row)| fill_row(k, row));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(p).enumerate().for_each(|(k, row)| fill_row(k, row));
    DataMatrix::from_vec(n, p, data).expect("samples are finite, n and p ≥ 2")
}

/// Standardizing transform (mean 0, variance 1) for laws where both moments
/// exist, e.g. t(ν) ↦ t(ν)/√(ν/(ν−2)) for ν > 2.
fn standardizer(dist: &DistributionSpec) -> Result<(f64, f64)> {
    let (mean, sd) = dist.mean_sd().ok_or_else(|| {
        Error::Domain(format!(
            "{dist} has no finite variance; the √(n log n) law needs EX² = 1"
        ))
    })?;
    if sd == 0.0 {
        return Err(Error::DegenerateColumn(1));
    }
    Ok((mean, sd))
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Normalized statistics of one checkpoint. The L-based fields are absent
/// only for degenerate laws run under the W-only SLLN path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub n: usize,
    pub p: usize,
    /// W_n / n^α
    pub w_slln: f64,
    /// n^{1−α} L_n
    pub l_slln: Option<f64>,
    /// W_n / √(n ln n)
    pub w_ll: f64,
    /// (n/ln n)^{1/2} L_n
    pub l_ll: Option<f64>,
    /// max_i |Σ_k X_ki| / √(n ln n)
    pub colsum_ll: f64,
    /// n L² − 4 ln n + ln ln n
    pub t_stat: Option<f64>,
}

/// One seeded replicate's trajectory of normalized statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub dist: DistributionSpec,
    pub schedule: PnSchedule,
    pub alpha: f64,
    pub checkpoints: Vec<usize>,
    pub normalized: Vec<NormalizedPoint>,
}

/// Distributional-limit experiment output: per-replicate records, the
/// transformed samples, and their KS distance to the limit CDF at γ = n/p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvdExperiment {
    pub records: Vec<ExperimentRecord>,
    pub t_samples: Vec<f64>,
    pub ks: f64,
}

/// Growth of the LL-normalized coherence between the first and last
/// checkpoint of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRecord {
    pub seed: u64,
    pub l_ll_first: f64,
    pub l_ll_last: f64,
    pub growth_ratio: f64,
}

fn checkpoint_record(
    pt: &kernel::TrajectoryPoint,
    alpha: f64,
) -> NormalizedPoint {
    let nf = pt.n as f64;
    let root_ll = (nf * nf.ln()).sqrt();
    NormalizedPoint {
        n: pt.n,
        p: pt.p,
        w_slln: pt.w / nf.powf(alpha),
        l_slln: pt.l.map(|l| nf.powf(1.0 - alpha) * l),
        w_ll: pt.w / root_ll,
        l_ll: pt.l.map(|l| (nf / nf.ln()).sqrt() * l),
        colsum_ll: pt.colsum_max / root_ll,
        t_stat: pt.l.map(|l| jiang_transform(l, pt.n).expect("n ≥ 2 validated")),
    }
}

fn trajectory_experiment(
    dist: &DistributionSpec,
    standardize: bool,
    schedule: &PnSchedule,
    alpha: f64,
    checkpoints: &[usize],
    seeds: &[u64],
    policy: CorrPolicy,
) -> Result<Vec<ExperimentRecord>> {
    if seeds.is_empty() {
        return Err(Error::Domain("no seeds supplied".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::Domain("no checkpoints supplied".into()));
    }
    let n_last = *checkpoints.last().unwrap();
    schedule.validate_over(checkpoints[0], n_last)?;
    let p_needed = checkpoints.iter().map(|&n| schedule.p_for(n)).max().unwrap();
    let (shift, scale) = if standardize { standardizer(dist)? } else { (0.0, 1.0) };

    let run_seed = |&seed: &u64| -> Result<ExperimentRecord> {
        let x = sample_transformed(dist, n_last, p_needed, seed, shift, scale);
        let traj = kernel::prefix_trajectory_policy(&x, schedule, checkpoints, policy)?;
        Ok(ExperimentRecord {
            seed,
            dist: dist.clone(),
            schedule: *schedule,
            alpha,
            checkpoints: checkpoints.to_vec(),
            normalized: traj.points.iter().map(|pt| checkpoint_record(pt, alpha)).collect(),
        })
    };
    #[cfg(feature = "parallel")]
    let records: Result<Vec<_>> = seeds.par_iter().map(run_seed).collect();
    #[cfg(not(feature = "parallel"))]
    let records: Result<Vec<_>> = seeds.iter().map(run_seed).collect();
    records
}

/// SLLN trajectories: `W_n/n^α` (and `n^{1−α}L_n` for nondegenerate laws)
/// along the checkpoints, per seed. The law drives both to 0.
pub fn run_slln_experiment(
    dist: &DistributionSpec,
    schedule: &PnSchedule,
    alpha: f64,
    checkpoints: &[usize],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    if !(alpha > 0.5) {
        return Err(Error::Domain(format!("the SLLN normalization needs α > 1/2, got {alpha}")));
    }
    let policy = if dist.is_degenerate() {
        CorrPolicy::Omit
    } else {
        CorrPolicy::Require
    };
    trajectory_experiment(dist, false, schedule, alpha, checkpoints, seeds, policy)
}

/// Law-of-the-logarithm trajectories: `W_n/√(n ln n)`, `(n/ln n)^{1/2}L_n`,
/// and the column-sum analogue, per seed. Entries are standardized to mean 0
/// and variance 1 (required by the W law; L is scale-free).
pub fn run_ll_experiment(
    dist: &DistributionSpec,
    schedule: &PnSchedule,
    checkpoints: &[usize],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    trajectory_experiment(
        dist,
        true,
        schedule,
        DEFAULT_ALPHA,
        checkpoints,
        seeds,
        CorrPolicy::Require,
    )
}

/// Distributional-limit experiment: independent n × p replicates, one per
/// seed; collects `t = nL² − 4 ln n + ln ln n` and its KS distance — the
/// sup distance of the empirical CDF from the limit CDF at γ = n/p.
pub fn run_evd_experiment(
    dist: &DistributionSpec,
    n: usize,
    p: usize,
    seeds: &[u64],
) -> Result<EvdExperiment> {
    if seeds.is_empty() {
        return Err(Error::Domain("no seeds supplied".into()));
    }
    let schedule = PnSchedule::fixed(p);
    let checkpoints = [n];
    let run_seed = |&seed: &u64| -> Result<ExperimentRecord> {
        let x = sample_matrix(dist, n, p, seed);
        let traj = kernel::prefix_trajectory_policy(&x, &schedule, &checkpoints, CorrPolicy::Require)?;
        Ok(ExperimentRecord {
            seed,
            dist: dist.clone(),
            schedule,
            alpha: DEFAULT_ALPHA,
            checkpoints: checkpoints.to_vec(),
            normalized: traj.points.iter().map(|pt| checkpoint_record(pt, DEFAULT_ALPHA)).collect(),
        })
    };
    #[cfg(feature = "parallel")]
    let records: Vec<ExperimentRecord> = seeds.par_iter().map(run_seed).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let records: Vec<ExperimentRecord> = seeds.iter().map(run_seed).collect::<Result<_>>()?;

    let t_samples: Vec<f64> = records
        .iter()
        .map(|r| r.normalized[0].t_stat.expect("nondegenerate replicate"))
        .collect();
    let ks = ks_distance(&t_samples, n as f64 / p as f64)?;
    Ok(EvdExperiment { records, t_samples, ks })
}

/// Heavy-tail probe: growth of `(n/ln n)^{1/2} L_n` between the first and
/// last checkpoints, per seed. For laws violating the LL moment condition
/// the statistic drifts upward instead of stabilizing near 2.
pub fn divergence_probe(
    dist: &DistributionSpec,
    schedule: &PnSchedule,
    checkpoints: &[usize],
    seeds: &[u64],
) -> Result<Vec<GrowthRecord>> {
    if checkpoints.len() < 2 {
        return Err(Error::Domain("growth needs at least two checkpoints".into()));
    }
    let records = run_ll_experiment(dist, schedule, checkpoints, seeds)?;
    Ok(records
        .iter()
        .map(|r| {
            let first = r.normalized.first().unwrap().l_ll.expect("nondegenerate");
            let last = r.normalized.last().unwrap().l_ll.expect("nondegenerate");
            GrowthRecord {
                seed: r.seed,
                l_ll_first: first,
                l_ll_last: last,
                growth_ratio: last / first,
            }
        })
        .collect())
}

/// Sup distance between the empirical CDF of `samples` and the limit CDF at
/// the given γ: `max_i max(|i/m − F(x_(i))|, |(i−1)/m − F(x_(i))|)`.
pub fn ks_distance(samples: &[f64], gamma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("KS distance needs at least one sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let m = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (idx, &x) in sorted.iter().enumerate() {
        let f = asymptotics::limit_cdf(x, gamma)?;
        let hi = (idx + 1) as f64 / m - f;
        let lo = f - idx as f64 / m;
        sup = sup.max(hi.abs()).max(lo.abs());
    }
    Ok(sup)
}

/// Median of a nonempty slice (average of the middle pair for even counts),
/// after a deterministic sort.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{limit_cdf, limit_quantile};
    use approx::assert_relative_eq;

    fn normal01() -> DistributionSpec {
        DistributionSpec::normal(0.0, 1.0).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_nested() {
        let dist = normal01();
        let a = sample_matrix(&dist, 10, 5, 42);
        let b = sample_matrix(&dist, 10, 5, 42);
        assert_eq!(a, b);
        let big = sample_matrix(&dist, 20, 8, 42);
        for k in 0..10 {
            for i in 0..5 {
                assert_eq!(a.row(k)[i].to_bits(), big.row(k)[i].to_bits());
            }
        }
        assert_ne!(a, sample_matrix(&dist, 10, 5, 43));
    }

    #[test]
    fn point_mass_sampling() {
        let dist = DistributionSpec::point_mass(2.5).unwrap();
        let x = sample_matrix(&dist, 4, 3, 0);
        assert!(x.entries().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn sample_moments_roughly_match() {
        // 200k draws: mean and variance of the standardized t(3) transform.
        let dist = DistributionSpec::student_t(3.0).unwrap();
        let x = sample_transformed(&dist, 1000, 200, 9, 0.0, 3f64.sqrt());
        let m = x.entries().iter().sum::<f64>() / x.entries().len() as f64;
        let v = x.entries().iter().map(|e| (e - m) * (e - m)).sum::<f64>()
            / x.entries().len() as f64;
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0).abs() < 0.15, "variance {v}");
    }

    #[test]
    fn uniform_bits_cover_unit_interval() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 0..100_000u64 {
            let u = rng::u01(rng::entry_bits(1, t, 0));
            assert!(u > 0.0 && u < 1.0);
            lo = lo.min(u);
            hi = hi.max(u);
        }
        assert!(lo < 1e-4 && hi > 1.0 - 1e-4);
    }

    #[test]
    fn schedule_shapes() {
        let prop = PnSchedule::proportional(1.0).unwrap();
        assert_eq!(prop.p_for(500), 500);
        let half = PnSchedule::proportional(2.0).unwrap();
        assert_eq!(half.p_for(64), 32);
        assert_eq!(half.p_for(3), 2);

        let band = PnSchedule::ratio_band(0.5, 2.0, 1).unwrap();
        assert_eq!(band.p_for(250), 500); // decade 2: ratio 0.5
        assert_eq!(band.p_for(2000), 1000); // decade 3: ratio 2
        assert!(band.validate_over(100, 5000).is_ok());
        let ratios: Vec<f64> = [250usize, 2000]
            .iter()
            .map(|&n| n as f64 / band.p_for(n) as f64)
            .collect();
        assert!(ratios[0] < 1.0 && ratios[1] > 1.0, "oscillates: {ratios:?}");

        assert!(PnSchedule::proportional(0.0).is_err());
        assert!(PnSchedule::ratio_band(2.0, 0.5, 1).is_err());
    }

    #[test]
    fn schedule_contract_over_checkpoints() {
        for schedule in [
            PnSchedule::proportional(1.0).unwrap(),
            PnSchedule::proportional(2.5).unwrap(),
            PnSchedule::ratio_band(0.5, 2.0, 1).unwrap(),
        ] {
            let (lo, hi) = schedule.declared_band().unwrap();
            for &n in &[50usize, 130, 250, 999, 1000, 2000, 4000] {
                let p = schedule.p_for(n);
                let realized = n as f64 / p as f64;
                assert!(realized <= hi * (1.0 + hi / n as f64), "n={n}");
                assert!(realized >= lo / (1.0 + lo / n as f64), "n={n}");
            }
            schedule.validate_over(50, 4000).unwrap();
        }
    }

    #[test]
    fn slln_point_mass_is_w_only_zero() {
        let dist = DistributionSpec::point_mass(0.0).unwrap();
        let recs = run_slln_experiment(
            &dist,
            &PnSchedule::proportional(1.0).unwrap(),
            0.75,
            &[10, 20, 40],
            &[1, 2],
        )
        .unwrap();
        for rec in &recs {
            for pt in &rec.normalized {
                assert_eq!(pt.w_slln, 0.0);
                assert!(pt.l_slln.is_none());
                assert!(pt.t_stat.is_none());
            }
        }
    }

    #[test]
    fn ll_rejects_degenerate_law() {
        let dist = DistributionSpec::point_mass(0.0).unwrap();
        let err = run_ll_experiment(
            &dist,
            &PnSchedule::proportional(1.0).unwrap(),
            &[10, 20],
            &[1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateColumn(_)));
    }

    #[test]
    fn records_are_reproducible_and_consistent() {
        let dist = DistributionSpec::rademacher();
        let sched = PnSchedule::proportional(1.0).unwrap();
        let cks = [16usize, 32, 64];
        let a = run_slln_experiment(&dist, &sched, 0.6, &cks, &[7, 8]).unwrap();
        let b = run_slln_experiment(&dist, &sched, 0.6, &cks, &[7, 8]).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for rec in &a {
            for pt in &rec.normalized {
                let nf = pt.n as f64;
                // w_ll·√(n ln n) = W_n = w_slln·n^α
                let w_from_ll = pt.w_ll * (nf * nf.ln()).sqrt();
                let w_from_slln = pt.w_slln * nf.powf(rec.alpha);
                assert_relative_eq!(w_from_ll, w_from_slln, max_relative = 1e-12);
                assert!(pt.w_slln.is_finite() && pt.w_slln >= 0.0);
                assert!(pt.colsum_ll.is_finite() && pt.colsum_ll >= 0.0);
                let l_slln = pt.l_slln.unwrap();
                assert!(l_slln.is_finite() && l_slln >= 0.0);
            }
        }
    }

    #[test]
    fn ll_standardizes_heavy_tails() {
        // t(3)/√3 has unit variance; the record should carry finite values.
        let dist = DistributionSpec::student_t(3.0).unwrap();
        let recs = run_ll_experiment(
            &dist,
            &PnSchedule::proportional(1.0).unwrap(),
            &[32, 64],
            &[5],
        )
        .unwrap();
        assert!(recs[0].normalized.iter().all(|pt| pt.l_ll.unwrap().is_finite()));

        // No finite variance → no standardization.
        let t15 = DistributionSpec::student_t(1.5).unwrap();
        assert!(matches!(
            run_ll_experiment(&t15, &PnSchedule::proportional(1.0).unwrap(), &[32], &[5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn evd_experiment_shapes_and_determinism() {
        let dist = normal01();
        let seeds: Vec<u64> = (0..60).map(|i| rng::derive_seed(0, i)).collect();
        let a = run_evd_experiment(&dist, 40, 40, &seeds).unwrap();
        assert_eq!(a.t_samples.len(), 60);
        assert!((0.0..=1.0).contains(&a.ks));
        let b = run_evd_experiment(&dist, 40, 40, &seeds).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        let pm = DistributionSpec::point_mass(1.0).unwrap();
        assert!(run_evd_experiment(&pm, 10, 10, &seeds[..2]).is_err());
    }

    #[test]
    fn divergence_probe_deterministic() {
        let dist = DistributionSpec::student_t(3.0).unwrap();
        let sched = PnSchedule::proportional(1.0).unwrap();
        let a = divergence_probe(&dist, &sched, &[32, 128], &[1, 2, 3]).unwrap();
        let b = divergence_probe(&dist, &sched, &[32, 128], &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
        for g in &a {
            assert_relative_eq!(
                g.growth_ratio,
                g.l_ll_last / g.l_ll_first,
                max_relative = 1e-15
            );
        }
        assert!(matches!(
            divergence_probe(&dist, &sched, &[32], &[1]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ks_distance_geometry() {
        // Single sample at the γ-median: ECDF jumps 0 → 1 there, so sup = 1/2.
        let med = limit_quantile(0.5, 1.0).unwrap();
        assert_relative_eq!(ks_distance(&[med], 1.0).unwrap(), 0.5, max_relative = 1e-12);

        // Exact centered quantiles: ks = 1/(2m).
        let gamma = 2.0;
        let m = 100;
        let samples: Vec<f64> = (1..=m)
            .map(|i| limit_quantile((i as f64 - 0.5) / m as f64, gamma).unwrap())
            .collect();
        assert_relative_eq!(
            ks_distance(&samples, gamma).unwrap(),
            1.0 / (2.0 * m as f64),
            max_relative = 1e-9
        );

        // All mass far left: distance → 1.
        let far = vec![-1e6; 9];
        assert!((ks_distance(&far, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(limit_cdf(-1e6, 1.0).unwrap() < 1e-12);
        assert!(ks_distance(&[], 1.0).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
