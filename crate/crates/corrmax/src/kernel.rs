//! Blocked extremal statistics over data matrices.
//!
//! Computes the largest absolute off-diagonal Gram entry `W_n`, the largest
//! absolute off-diagonal correlation `L_n` (the coherence), and the two-array
//! cross-Gram maximum `T_n`, plus incremental prefix trajectories of `W` and
//! `L` over a growing sample.
//!
//! All Gram products run over 128×128 column-pair tiles with rows consumed in
//! fixed 4096-row blocks whose partials combine pairwise. Tiles are
//! independent work units and the max-reduction is a total order (value
//! descending, then lexicographic index pair), so every result is
//! bit-identical for any worker count.
//!
//! Column indices in results and arguments here are 1-based column numbers,
//! matching the statistic definitions (`max_{1 ≤ i < j ≤ p}`).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::{self, is_degenerate, ColumnSummary, DataMatrix};
use crate::sim::PnSchedule;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Column-pair tile edge for the blocked Gram products.
pub const TILE: usize = 128;

/// An extremal statistic value with its achieving column pair.
///
/// `i` and `j` are 1-based column numbers; `i < j` for the symmetric
/// statistics, `i ≠ j` for the cross-Gram statistic. Ties are broken toward
/// the lexicographically smallest pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MaxEntryResult {
    pub value: f64,
    pub i: usize,
    pub j: usize,
    pub n_used: usize,
    pub p_used: usize,
}

/// Which statistic the naive oracle computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    /// `W_n`: max |Σ_k X_ki X_kj| over i < j.
    Gram,
    /// `L_n`: max |ρ̂_ij| over i < j.
    Corr,
}

/// One checkpoint of a prefix trajectory. `l` is `None` only under the
/// W-only policy used for degenerate simulated laws.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    pub p: usize,
    pub w: f64,
    pub l: Option<f64>,
    /// max_i |Σ_k X_ki| over the active columns.
    pub colsum_max: f64,
}

/// `W_n` and `L_n` along a nested-checkpoint schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PrefixTrajectory {
    pub points: Vec<TrajectoryPoint>,
}

/// How the trajectory treats degenerate active columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CorrPolicy {
    /// Hard error (the default for the public API).
    Require,
    /// Exclude degenerate columns from the correlation scan.
    SkipDegenerate,
    /// Do not compute `L` at all.
    Omit,
}

// ---------------------------------------------------------------------------
// Candidates and reduction
// ---------------------------------------------------------------------------

/// Internal best-entry record, 0-based indices.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    i: usize,
    j: usize,
}

impl Candidate {
    /// Total order: larger value wins, ties go to the smaller (i, j).
    fn beats(&self, other: &Candidate) -> bool {
        self.value > other.value
            || (self.value == other.value && (self.i, self.j) < (other.i, other.j))
    }
}

fn merge(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.beats(&y) { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn consider(best: &mut Option<Candidate>, value: f64, i: usize, j: usize) {
    let cand = Candidate { value, i, j };
    match best {
        Some(b) if b.beats(&cand) => {}
        _ => *best = Some(cand),
    }
}

// ---------------------------------------------------------------------------
// Blocked Gram tiles
// ---------------------------------------------------------------------------

/// Accumulate `Σ_k U[k][i]·V[k][j]` for the tile `ti × tj` into `out`
/// (row-major `ti.len() × tj.len()`, zeroed by the caller), consuming the
/// given row blocks with pairwise combination of block partials.
fn gram_tile(
    u: &DataMatrix,
    v: &DataMatrix,
    blocks: &[Range<usize>],
    ti: &Range<usize>,
    tj: &Range<usize>,
    out: &mut [f64],
) {
    match blocks.len() {
        0 => {}
        1 => gram_block(u, v, blocks[0].clone(), ti, tj, out),
        len => {
            let mid = len.div_ceil(2);
            gram_tile(u, v, &blocks[..mid], ti, tj, out);
            let mut right = vec![0.0; out.len()];
            gram_tile(u, v, &blocks[mid..], ti, tj, &mut right);
            for (o, r) in out.iter_mut().zip(right) {
                *o += r;
            }
        }
    }
}

/// Straight-line accumulation of one row block. The k-loop is unrolled by
/// four; each tile entry still receives its terms in row order, so the sum
/// per entry is independent of the unroll factor.
fn gram_block(
    u: &DataMatrix,
    v: &DataMatrix,
    rows: Range<usize>,
    ti: &Range<usize>,
    tj: &Range<usize>,
    out: &mut [f64],
) {
    let w = tj.len();
    let mut k = rows.start;
    while k + 4 <= rows.end {
        let (u0, u1, u2, u3) = (u.row(k), u.row(k + 1), u.row(k + 2), u.row(k + 3));
        let s0 = &v.row(k)[tj.clone()];
        let s1 = &v.row(k + 1)[tj.clone()];
        let s2 = &v.row(k + 2)[tj.clone()];
        let s3 = &v.row(k + 3)[tj.clone()];
        for (ii, i) in ti.clone().enumerate() {
            let (a0, a1, a2, a3) = (u0[i], u1[i], u2[i], u3[i]);
            let orow = &mut out[ii * w..(ii + 1) * w];
            for jj in 0..w {
                orow[jj] = orow[jj] + a0 * s0[jj] + a1 * s1[jj] + a2 * s2[jj] + a3 * s3[jj];
            }
        }
        k += 4;
    }
    while k < rows.end {
        let ur = u.row(k);
        let s = &v.row(k)[tj.clone()];
        for (ii, i) in ti.clone().enumerate() {
            let a = ur[i];
            let orow = &mut out[ii * w..(ii + 1) * w];
            for jj in 0..w {
                orow[jj] += a * s[jj];
            }
        }
        k += 1;
    }
}

fn tile_ranges(p: usize) -> Vec<Range<usize>> {
    (0..p.div_ceil(TILE))
        .map(|t| t * TILE..usize::min((t + 1) * TILE, p))
        .collect()
}

/// Upper-triangle tile pairs (ti.start ≤ tj.start), diagonal tiles included.
fn upper_tile_pairs(p: usize) -> Vec<(Range<usize>, Range<usize>)> {
    let tiles = tile_ranges(p);
    let mut pairs = Vec::new();
    for (a, ti) in tiles.iter().enumerate() {
        for tj in &tiles[a..] {
            pairs.push((ti.clone(), tj.clone()));
        }
    }
    pairs
}

/// Every ordered tile pair, for the asymmetric cross-Gram statistic.
fn all_tile_pairs(p: usize) -> Vec<(Range<usize>, Range<usize>)> {
    let tiles = tile_ranges(p);
    let mut pairs = Vec::new();
    for ti in &tiles {
        for tj in &tiles {
            pairs.push((ti.clone(), tj.clone()));
        }
    }
    pairs
}

fn map_reduce_tiles<W>(pairs: Vec<(Range<usize>, Range<usize>)>, work: W) -> TileBest
where
    W: Fn(&(Range<usize>, Range<usize>)) -> TileBest + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        pairs
            .par_iter()
            .map(&work)
            .reduce(TileBest::default, TileBest::merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs
            .iter()
            .map(&work)
            .fold(TileBest::default(), TileBest::merge)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct TileBest {
    gram: Option<Candidate>,
    corr: Option<Candidate>,
}

impl TileBest {
    fn merge(a: Self, b: Self) -> Self {
        TileBest {
            gram: merge(a.gram, b.gram),
            corr: merge(a.corr, b.corr),
        }
    }
}

// ---------------------------------------------------------------------------
// One-shot extremal statistics
// ---------------------------------------------------------------------------

struct CorrCtx {
    mean: Vec<f64>,
    css: Vec<f64>,
    keep: Vec<bool>,
}

fn corr_ctx(x: &DataMatrix, skip_degenerate: bool) -> Result<CorrCtx> {
    let summaries = x.column_summaries();
    if !skip_degenerate {
        if let Some(idx) = summaries.iter().position(|s| s.degenerate) {
            return Err(Error::DegenerateColumn(idx + 1));
        }
    }
    let keep: Vec<bool> = summaries.iter().map(|s| !s.degenerate).collect();
    if keep.iter().filter(|&&k| k).count() < 2 {
        return Err(Error::Shape(
            "fewer than 2 non-degenerate columns remain".into(),
        ));
    }
    Ok(CorrCtx {
        mean: summaries.iter().map(|s| s.mean).collect(),
        css: summaries.iter().map(|s| s.css).collect(),
        keep,
    })
}

/// Shared blocked pass producing the Gram and/or correlation maxima.
fn wl_scan(x: &DataMatrix, corr: Option<&CorrCtx>) -> TileBest {
    let blocks: Vec<Range<usize>> = matrix::block_ranges(x.n()).collect();
    let n = x.n() as f64;
    let work = |(ti, tj): &(Range<usize>, Range<usize>)| -> TileBest {
        let w = tj.len();
        let mut buf = vec![0.0; ti.len() * w];
        gram_tile(x, x, &blocks, ti, tj, &mut buf);
        let mut best = TileBest::default();
        for (ii, i) in ti.clone().enumerate() {
            for (jj, j) in tj.clone().enumerate() {
                if j <= i {
                    continue;
                }
                let g = buf[ii * w + jj];
                consider(&mut best.gram, g.abs(), i, j);
                if let Some(ctx) = corr {
                    if ctx.keep[i] && ctx.keep[j] {
                        let num = g - n * ctx.mean[i] * ctx.mean[j];
                        let rho = num / (ctx.css[i] * ctx.css[j]).sqrt();
                        consider(&mut best.corr, rho.abs(), i, j);
                    }
                }
            }
        }
        best
    };
    map_reduce_tiles(upper_tile_pairs(x.p()), work)
}

/// `W_n = max_{1 ≤ i < j ≤ p} |Σ_{k=1}^n X_ki X_kj|`.
pub fn gram_offdiag_max(x: &DataMatrix) -> MaxEntryResult {
    let best = wl_scan(x, None).gram.expect("p ≥ 2 guarantees a pair");
    MaxEntryResult {
        value: best.value,
        i: best.i + 1,
        j: best.j + 1,
        n_used: x.n(),
        p_used: x.p(),
    }
}

/// `L_n = max_{1 ≤ i < j ≤ p} |ρ̂_ij|`. The scan ranks pairs in one blocked
/// Gram pass via `Σ(X_ki−X̄_i)(X_kj−X̄_j) = Σ X_ki X_kj − n X̄_i X̄_j`; the
/// winning pair is then re-evaluated through the defining centered formula,
/// so the reported value is the Pearson coefficient itself (exactly 1 for
/// duplicated columns, for instance).
///
/// Degenerate columns are a hard error unless `skip_degenerate` excludes
/// them from the scan (which shrinks `p_used`).
pub fn corr_offdiag_max(x: &DataMatrix, skip_degenerate: bool) -> Result<MaxEntryResult> {
    let ctx = corr_ctx(x, skip_degenerate)?;
    let best = wl_scan(x, Some(&ctx)).corr.expect("≥ 2 kept columns");
    corr_result(x, &ctx, best)
}

/// `W_n` and `L_n` from a single blocked pass.
pub fn wl_offdiag_max(
    x: &DataMatrix,
    skip_degenerate: bool,
) -> Result<(MaxEntryResult, MaxEntryResult)> {
    let ctx = corr_ctx(x, skip_degenerate)?;
    let best = wl_scan(x, Some(&ctx));
    let g = best.gram.expect("p ≥ 2");
    let c = best.corr.expect("≥ 2 kept columns");
    Ok((
        MaxEntryResult {
            value: g.value,
            i: g.i + 1,
            j: g.j + 1,
            n_used: x.n(),
            p_used: x.p(),
        },
        corr_result(x, &ctx, c)?,
    ))
}

fn corr_result(x: &DataMatrix, ctx: &CorrCtx, best: Candidate) -> Result<MaxEntryResult> {
    Ok(MaxEntryResult {
        value: pearson(x, best.i + 1, best.j + 1)?.abs(),
        i: best.i + 1,
        j: best.j + 1,
        n_used: x.n(),
        p_used: ctx.keep.iter().filter(|&&k| k).count(),
    })
}

/// `T_n = max_{1 ≤ i ≠ j ≤ p} |Σ_{k=1}^n U_ki V_kj|` over ordered pairs.
pub fn cross_gram_max(u: &DataMatrix, v: &DataMatrix) -> Result<MaxEntryResult> {
    if u.n() != v.n() || u.p() != v.p() {
        return Err(Error::Shape(format!(
            "arrays must share a shape, got {}×{} and {}×{}",
            u.n(),
            u.p(),
            v.n(),
            v.p()
        )));
    }
    let blocks: Vec<Range<usize>> = matrix::block_ranges(u.n()).collect();
    let work = |(ti, tj): &(Range<usize>, Range<usize>)| -> TileBest {
        let w = tj.len();
        let mut buf = vec![0.0; ti.len() * w];
        gram_tile(u, v, &blocks, ti, tj, &mut buf);
        let mut best = TileBest::default();
        for (ii, i) in ti.clone().enumerate() {
            for (jj, j) in tj.clone().enumerate() {
                if i == j {
                    continue;
                }
                consider(&mut best.gram, buf[ii * w + jj].abs(), i, j);
            }
        }
        best
    };
    let best = map_reduce_tiles(all_tile_pairs(u.p()), work)
        .gram
        .expect("p ≥ 2");
    Ok(MaxEntryResult {
        value: best.value,
        i: best.i + 1,
        j: best.j + 1,
        n_used: u.n(),
        p_used: u.p(),
    })
}

/// Pearson correlation of columns `i` and `j` (1-based), by the direct
/// centered formula with blocked summation. This is the scalar reference
/// route; the blocked maxima use the uncentered Gram identity instead.
pub fn pearson(x: &DataMatrix, i: usize, j: usize) -> Result<f64> {
    let p = x.p();
    if i < 1 || i > p || j < 1 || j > p {
        return Err(Error::Shape(format!(
            "column numbers must lie in 1..={p}, got ({i}, {j})"
        )));
    }
    let (ci, cj) = (i - 1, j - 1);
    let si = column_summary_one(x, ci);
    let sj = column_summary_one(x, cj);
    if si.degenerate {
        return Err(Error::DegenerateColumn(i));
    }
    if sj.degenerate {
        return Err(Error::DegenerateColumn(j));
    }
    let num_parts: Vec<f64> = matrix::block_ranges(x.n())
        .map(|r| {
            let mut acc = 0.0;
            for k in r {
                let row = x.row(k);
                acc += (row[ci] - si.mean) * (row[cj] - sj.mean);
            }
            acc
        })
        .collect();
    let rho = matrix::pairwise_sum(&num_parts) / (si.css * sj.css).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

fn column_summary_one(x: &DataMatrix, c: usize) -> ColumnSummary {
    let sums: Vec<f64> = matrix::block_ranges(x.n())
        .map(|r| r.map(|k| x.row(k)[c]).sum())
        .collect();
    let mean = matrix::pairwise_sum(&sums) / x.n() as f64;
    let css_parts: Vec<f64> = matrix::block_ranges(x.n())
        .map(|r| {
            r.map(|k| {
                let d = x.row(k)[c] - mean;
                d * d
            })
            .sum()
        })
        .collect();
    let css = matrix::pairwise_sum(&css_parts);
    ColumnSummary {
        mean,
        css,
        degenerate: is_degenerate(css, x.n(), mean),
    }
}

// ---------------------------------------------------------------------------
// Naive oracles
// ---------------------------------------------------------------------------

/// Unblocked sequential triple loop over column pairs; ground truth for the
/// property tests. Intended for small inputs (p ≤ 256 by convention).
pub fn oracle_max_naive(x: &DataMatrix, kind: StatKind) -> Result<MaxEntryResult> {
    let (n, p) = (x.n(), x.p());
    let mut best: Option<Candidate> = None;
    match kind {
        StatKind::Gram => {
            for i in 0..p {
                for j in (i + 1)..p {
                    let mut s = 0.0;
                    for k in 0..n {
                        let row = x.row(k);
                        s += row[i] * row[j];
                    }
                    consider(&mut best, s.abs(), i, j);
                }
            }
        }
        StatKind::Corr => {
            // Independent route: plain sequential mean, centered products.
            let mut means = vec![0.0; p];
            for c in 0..p {
                let mut s = 0.0;
                for k in 0..n {
                    s += x.row(k)[c];
                }
                means[c] = s / n as f64;
            }
            let mut css = vec![0.0; p];
            for c in 0..p {
                let mut s = 0.0;
                for k in 0..n {
                    let d = x.row(k)[c] - means[c];
                    s += d * d;
                }
                if is_degenerate(s, n, means[c]) {
                    return Err(Error::DegenerateColumn(c + 1));
                }
                css[c] = s;
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    let mut num = 0.0;
                    for k in 0..n {
                        let row = x.row(k);
                        num += (row[i] - means[i]) * (row[j] - means[j]);
                    }
                    let rho = num / (css[i] * css[j]).sqrt();
                    consider(&mut best, rho.abs(), i, j);
                }
            }
        }
    }
    let b = best.expect("p ≥ 2");
    Ok(MaxEntryResult {
        value: if kind == StatKind::Corr {
            b.value.min(1.0)
        } else {
            b.value
        },
        i: b.i + 1,
        j: b.j + 1,
        n_used: n,
        p_used: p,
    })
}

/// Naive sequential cross-Gram maximum over ordered pairs i ≠ j.
pub fn oracle_cross_naive(u: &DataMatrix, v: &DataMatrix) -> Result<MaxEntryResult> {
    if u.n() != v.n() || u.p() != v.p() {
        return Err(Error::Shape("arrays must share a shape".into()));
    }
    let (n, p) = (u.n(), u.p());
    let mut best: Option<Candidate> = None;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let mut s = 0.0;
            for k in 0..n {
                s += u.row(k)[i] * v.row(k)[j];
            }
            consider(&mut best, s.abs(), i, j);
        }
    }
    let b = best.expect("p ≥ 2");
    Ok(MaxEntryResult {
        value: b.value,
        i: b.i + 1,
        j: b.j + 1,
        n_used: n,
        p_used: p,
    })
}

// ---------------------------------------------------------------------------
// Incremental prefix trajectories
// ---------------------------------------------------------------------------

/// Upper strict triangle of a p×p accumulator, packed row segments.
struct PackedUpper {
    p: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl PackedUpper {
    fn new(p: usize) -> Self {
        let mut offsets = Vec::with_capacity(p);
        let mut acc = 0;
        for i in 0..p {
            offsets.push(acc);
            acc += p - i - 1;
        }
        PackedUpper {
            p,
            offsets,
            data: vec![0.0; acc],
        }
    }

    /// Entries (i, j) for j in i+1..p, contiguous.
    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i] + (self.p - i - 1)]
    }

    fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[self.offsets[i] + (j - i - 1)] += v;
    }
}

/// `W_n` and `L_n` along nested checkpoints, maintained incrementally.
///
/// Gram partial sums are kept for every column the schedule will ever
/// activate (O(p²) memory); each checkpoint reports the maxima over the
/// leading `schedule(n)` columns. Matches a from-scratch recomputation to
/// 1e-10 relative.
pub fn prefix_trajectory(
    x: &DataMatrix,
    schedule: &PnSchedule,
    checkpoints: &[usize],
    skip_degenerate: bool,
) -> Result<PrefixTrajectory> {
    let policy = if skip_degenerate {
        CorrPolicy::SkipDegenerate
    } else {
        CorrPolicy::Require
    };
    prefix_trajectory_policy(x, schedule, checkpoints, policy)
}

pub(crate) fn prefix_trajectory_policy(
    x: &DataMatrix,
    schedule: &PnSchedule,
    checkpoints: &[usize],
    policy: CorrPolicy,
) -> Result<PrefixTrajectory> {
    if checkpoints.is_empty() {
        return Err(Error::Domain("no checkpoints supplied".into()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("checkpoints must be strictly increasing".into()));
    }
    if checkpoints[0] < 2 {
        return Err(Error::Domain("checkpoints start at n ≥ 2".into()));
    }
    let n_last = *checkpoints.last().unwrap();
    if n_last > x.n() {
        return Err(Error::Shape(format!(
            "checkpoint n = {n_last} exceeds the {} available rows",
            x.n()
        )));
    }
    let active: Vec<usize> = checkpoints.iter().map(|&n| schedule.p_for(n)).collect();
    let p_max = *active.iter().max().unwrap();
    if p_max > x.p() {
        return Err(Error::Shape(format!(
            "schedule activates {p_max} columns but the matrix has {}",
            x.p()
        )));
    }

    let mut gram = PackedUpper::new(p_max);
    let mut sums = vec![0.0; p_max];
    let mut sumsq = vec![0.0; p_max];
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut prev = 0usize;

    for (&nk, &pk) in checkpoints.iter().zip(&active) {
        append_chunk(x, prev..nk, &mut gram, &mut sums, &mut sumsq);
        prev = nk;
        points.push(checkpoint_stats(&gram, &sums, &sumsq, nk, pk, policy)?);
    }
    Ok(PrefixTrajectory { points })
}

/// Fold rows `chunk` into the running Gram/sum/sum-of-squares state.
/// Blocks are laid out inside the chunk; one elementwise add per chunk
/// keeps the accumulation order a pure function of the checkpoint grid.
fn append_chunk(
    x: &DataMatrix,
    chunk: Range<usize>,
    gram: &mut PackedUpper,
    sums: &mut [f64],
    sumsq: &mut [f64],
) {
    if chunk.is_empty() {
        return;
    }
    let p = gram.p;
    let blocks: Vec<Range<usize>> = matrix::block_ranges(chunk.len())
        .map(|r| chunk.start + r.start..chunk.start + r.end)
        .collect();

    // Column sums and sums of squares for the chunk, pairwise over blocks.
    let fold_cols = |f: &(dyn Fn(f64) -> f64 + Sync)| -> Vec<f64> {
        let partials: Vec<Vec<f64>> = blocks
            .iter()
            .map(|r| {
                let mut acc = vec![0.0; p];
                for k in r.clone() {
                    for (a, &v) in acc.iter_mut().zip(&x.row(k)[..p]) {
                        *a += f(v);
                    }
                }
                acc
            })
            .collect();
        matrix::pairwise_merge(partials)
    };
    for (s, v) in sums.iter_mut().zip(fold_cols(&|v| v)) {
        *s += v;
    }
    for (s, v) in sumsq.iter_mut().zip(fold_cols(&|v| v * v)) {
        *s += v;
    }

    // Gram tiles for the chunk, then one ordered merge into the running state.
    let pairs = upper_tile_pairs(p);
    let work = |(ti, tj): &(Range<usize>, Range<usize>)| -> Vec<f64> {
        let mut buf = vec![0.0; ti.len() * tj.len()];
        gram_tile(x, x, &blocks, ti, tj, &mut buf);
        buf
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Vec<f64>> = pairs.par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Vec<f64>> = pairs.iter().map(work).collect();

    for ((ti, tj), buf) in pairs.iter().zip(results) {
        let w = tj.len();
        for (ii, i) in ti.clone().enumerate() {
            for (jj, j) in tj.clone().enumerate() {
                if j > i {
                    gram.add_at(i, j, buf[ii * w + jj]);
                }
            }
        }
    }
}

fn checkpoint_stats(
    gram: &PackedUpper,
    sums: &[f64],
    sumsq: &[f64],
    nk: usize,
    pk: usize,
    policy: CorrPolicy,
) -> Result<TrajectoryPoint> {
    let n = nk as f64;
    let mut w_best: Option<Candidate> = None;
    let mut colsum_max = 0.0f64;
    for i in 0..pk {
        colsum_max = colsum_max.max(sums[i].abs());
        for (jj, g) in gram.row(i)[..pk - i - 1].iter().enumerate() {
            consider(&mut w_best, g.abs(), i, i + 1 + jj);
        }
    }
    let w = w_best.expect("pk ≥ 2").value;

    let l = match policy {
        CorrPolicy::Omit => None,
        _ => {
            let css: Vec<f64> = (0..pk).map(|i| sumsq[i] - sums[i] * sums[i] / n).collect();
            let mut keep = vec![true; pk];
            for i in 0..pk {
                if is_degenerate(css[i], nk, sums[i] / n) {
                    if policy == CorrPolicy::Require {
                        return Err(Error::DegenerateColumn(i + 1));
                    }
                    keep[i] = false;
                }
            }
            if keep.iter().filter(|&&k| k).count() < 2 {
                return Err(Error::Shape(
                    "fewer than 2 non-degenerate active columns".into(),
                ));
            }
            let mut l_best: Option<Candidate> = None;
            for i in 0..pk {
                if !keep[i] {
                    continue;
                }
                for (jj, g) in gram.row(i)[..pk - i - 1].iter().enumerate() {
                    let j = i + 1 + jj;
                    if !keep[j] {
                        continue;
                    }
                    let num = g - sums[i] * sums[j] / n;
                    let rho = num / (css[i] * css[j]).sqrt();
                    consider(&mut l_best, rho.abs(), i, j);
                }
            }
            Some(l_best.expect("≥ 2 kept").value.min(1.0))
        }
    };

    Ok(TrajectoryPoint {
        n: nk,
        p: pk,
        w,
        l,
        colsum_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DistributionSpec;
    use crate::sim;
    use approx::assert_relative_eq;

    fn m(rows: Vec<Vec<f64>>) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn pearson_derived_value() {
        // Columns (1,2,3) and (1,2,4): scalar oracle gives 9/(2·√21).
        let x = m(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 4.0]]);
        let expect = 9.0 / (2.0 * 21f64.sqrt());
        assert_relative_eq!(pearson(&x, 1, 2).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(expect, 0.981980506, max_relative = 1e-8);
    }

    #[test]
    fn pearson_self_and_degenerate() {
        let x = m(vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(pearson(&x, 1, 1).unwrap(), 1.0);
        assert!(matches!(pearson(&x, 1, 2), Err(Error::DegenerateColumn(2))));
        assert!(matches!(pearson(&x, 0, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn gram_max_examples() {
        let x = m(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let r = gram_offdiag_max(&x);
        assert_eq!((r.value, r.i, r.j), (14.0, 1, 2));

        let zero = DataMatrix::from_vec(4, 3, vec![0.0; 12]).unwrap();
        let r = gram_offdiag_max(&zero);
        assert_eq!((r.value, r.i, r.j), (0.0, 1, 2));

        let neg = m(vec![vec![1.0, -1.0], vec![1.0, -1.0], vec![1.0, -1.0]]);
        let r = gram_offdiag_max(&neg);
        assert_eq!((r.value, r.i, r.j), (3.0, 1, 2));
    }

    #[test]
    fn corr_max_examples() {
        let dup = m(vec![vec![1.0, 7.0, 1.0], vec![2.0, -1.0, 2.0], vec![3.0, 0.5, 3.0]]);
        let r = corr_offdiag_max(&dup, false).unwrap();
        assert_eq!((r.value, r.i, r.j), (1.0, 1, 3));

        let negated = m(vec![vec![1.0, -1.0], vec![2.0, -2.0], vec![4.0, -4.0]]);
        let r = corr_offdiag_max(&negated, false).unwrap();
        assert_eq!(r.value, 1.0);

        let x = m(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 4.0]]);
        let r = corr_offdiag_max(&x, false).unwrap();
        assert_relative_eq!(r.value, 9.0 / (2.0 * 21f64.sqrt()), max_relative = 1e-13);
    }

    #[test]
    fn corr_skip_policy() {
        let x = m(vec![
            vec![5.0, 1.0, 1.0],
            vec![5.0, 2.0, 2.5],
            vec![5.0, 3.0, 2.75],
        ]);
        assert!(matches!(
            corr_offdiag_max(&x, false),
            Err(Error::DegenerateColumn(1))
        ));
        let r = corr_offdiag_max(&x, true).unwrap();
        assert_eq!(r.p_used, 2);
        assert_eq!((r.i, r.j), (2, 3));

        let all_const = m(vec![vec![5.0, 2.0], vec![5.0, 2.0], vec![5.0, 2.0]]);
        assert!(matches!(
            corr_offdiag_max(&all_const, true),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cross_gram_examples() {
        // Constant V reduces T to the max absolute column sum of U.
        let u = m(vec![vec![1.0, -2.0], vec![3.0, -4.0], vec![0.5, 1.0]]);
        let ones = DataMatrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let r = cross_gram_max(&u, &ones).unwrap();
        assert_eq!(r.value, 5.0); // col sums 4.5 and -5
        assert_eq!((r.i, r.j), (2, 1));

        // U = V = X gives W_n.
        let x = m(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let t = cross_gram_max(&x, &x).unwrap();
        let w = gram_offdiag_max(&x);
        assert_eq!(t.value, w.value);

        // Hand-computed ordered-pair example: max at (2, 1).
        let u = m(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = m(vec![vec![0.0, 2.0], vec![3.0, 0.0]]);
        let r = cross_gram_max(&u, &v).unwrap();
        assert_eq!((r.value, r.i, r.j), (3.0, 2, 1));

        let bad = DataMatrix::from_vec(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(cross_gram_max(&u, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn oracle_examples() {
        let x = m(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(oracle_max_naive(&x, StatKind::Gram).unwrap().value, 14.0);

        let eye = m(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = oracle_max_naive(&eye, StatKind::Gram).unwrap();
        assert_eq!((r.value, r.i, r.j), (0.0, 1, 2));

        let dup = m(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        assert_eq!(oracle_max_naive(&dup, StatKind::Corr).unwrap().value, 1.0);
    }

    #[test]
    fn blocked_matches_oracle_on_random_matrices() {
        let dists = [
            DistributionSpec::normal(0.0, 1.0).unwrap(),
            DistributionSpec::uniform(-1.0, 2.0).unwrap(),
            DistributionSpec::student_t(3.0).unwrap(),
        ];
        for seed in 0..40u64 {
            let dist = &dists[(seed % 3) as usize];
            let n = 3 + (sim::rng::mix64(seed) % 62) as usize;
            let p = 2 + (sim::rng::mix64(seed ^ 0xabcd) % 31) as usize;
            let x = sim::sample_matrix(dist, n, p, seed);
            let w = gram_offdiag_max(&x);
            let wo = oracle_max_naive(&x, StatKind::Gram).unwrap();
            assert_relative_eq!(w.value, wo.value, max_relative = 1e-12);
            assert_eq!((w.i, w.j), (wo.i, wo.j), "gram argmax, seed {seed}");

            let l = corr_offdiag_max(&x, false).unwrap();
            let lo = oracle_max_naive(&x, StatKind::Corr).unwrap();
            assert_relative_eq!(l.value, lo.value, max_relative = 1e-12);
            assert_eq!((l.i, l.j), (lo.i, lo.j), "corr argmax, seed {seed}");

            let v = sim::sample_matrix(dist, n, p, seed ^ 0x5a5a);
            let t = cross_gram_max(&x, &v).unwrap();
            let to = oracle_cross_naive(&x, &v).unwrap();
            assert_relative_eq!(t.value, to.value, max_relative = 1e-12);
            assert_eq!((t.i, t.j), (to.i, to.j));
        }
    }

    #[test]
    fn tall_matrix_crosses_block_boundary() {
        // n > 4096 exercises the pairwise block combination.
        let dist = DistributionSpec::uniform(-1.0, 1.0).unwrap();
        let x = sim::sample_matrix(&dist, 9000, 3, 7);
        let w = gram_offdiag_max(&x);
        let wo = oracle_max_naive(&x, StatKind::Gram).unwrap();
        assert_relative_eq!(w.value, wo.value, max_relative = 1e-12);
        assert_eq!((w.i, w.j), (wo.i, wo.j));
        let l = corr_offdiag_max(&x, false).unwrap();
        let lo = oracle_max_naive(&x, StatKind::Corr).unwrap();
        assert_relative_eq!(l.value, lo.value, max_relative = 1e-12);
    }

    #[test]
    fn corr_value_recomputable_at_argmax() {
        let dist = DistributionSpec::normal(2.0, 3.0).unwrap();
        let x = sim::sample_matrix(&dist, 40, 12, 99);
        let r = corr_offdiag_max(&x, false).unwrap();
        let direct = pearson(&x, r.i, r.j).unwrap().abs();
        assert_relative_eq!(r.value, direct, max_relative = 1e-12);
    }

    #[test]
    fn trajectory_single_checkpoint_matches_one_shot() {
        let dist = DistributionSpec::normal(0.0, 1.0).unwrap();
        let x = sim::sample_matrix(&dist, 50, 20, 3);
        let traj = prefix_trajectory(
            &x,
            &PnSchedule::fixed(20),
            &[50],
            false,
        )
        .unwrap();
        let pt = &traj.points[0];
        let w = gram_offdiag_max(&x);
        let l = corr_offdiag_max(&x, false).unwrap();
        assert_eq!(pt.w, w.value); // identical blocked path, bit-equal
        assert_relative_eq!(pt.l.unwrap(), l.value, max_relative = 1e-10);
    }

    #[test]
    fn trajectory_matches_from_scratch_oracle() {
        // Random 64×32, checkpoints {8,16,32,64}, schedule p_n = n/2.
        let dist = DistributionSpec::normal(0.0, 1.0).unwrap();
        let x = sim::sample_matrix(&dist, 64, 32, 11);
        let schedule = PnSchedule::proportional(2.0).unwrap();
        let cks = [8usize, 16, 32, 64];
        let traj = prefix_trajectory(&x, &schedule, &cks, false).unwrap();
        for (pt, &nk) in traj.points.iter().zip(&cks) {
            let pk = schedule.p_for(nk);
            assert_eq!(pt.p, pk);
            let lead = x.leading(nk, pk).unwrap();
            let w = oracle_max_naive(&lead, StatKind::Gram).unwrap();
            let l = oracle_max_naive(&lead, StatKind::Corr).unwrap();
            assert_relative_eq!(pt.w, w.value, max_relative = 1e-10);
            assert_relative_eq!(pt.l.unwrap(), l.value, max_relative = 1e-10);
        }
    }

    #[test]
    fn trajectory_rejects_bad_inputs() {
        let x = DataMatrix::from_vec(4, 3, vec![0.1; 12]).unwrap();
        let sched = PnSchedule::fixed(3);
        assert!(matches!(
            prefix_trajectory(&x, &sched, &[2, 2], false),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            prefix_trajectory(&x, &sched, &[2, 8], false),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            prefix_trajectory(&x, &PnSchedule::fixed(9), &[4], false),
            Err(Error::Shape(_))
        ));
        // All-constant matrix: W fine, L degenerate.
        assert!(matches!(
            prefix_trajectory(&x, &sched, &[4], false),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn zero_matrix_trajectory_degenerates() {
        let x = DataMatrix::from_vec(6, 4, vec![0.0; 24]).unwrap();
        let r = prefix_trajectory(&x, &PnSchedule::fixed(4), &[3, 6], false);
        assert!(matches!(r, Err(Error::DegenerateColumn(_))));
    }

    #[test]
    fn pairwise_product_identity() {
        // max_{i<j} |x_i x_j| equals the product of the two largest |x_i|,
        // exactly, per sample.
        for seed in 0..50u64 {
            let len = 2 + (sim::rng::mix64(seed) % 40) as usize;
            let xs: Vec<f64> = (0..len)
                .map(|t| {
                    let u = sim::rng::u01(sim::rng::entry_bits(seed, t as u64, 0));
                    (u - 0.5) * 20.0
                })
                .collect();
            let mut best = f64::NEG_INFINITY;
            for i in 0..len {
                for j in (i + 1)..len {
                    best = best.max((xs[i] * xs[j]).abs());
                }
            }
            let mut mags: Vec<f64> = xs.iter().map(|v| v.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(best, mags[0] * mags[1], "seed {seed}");
        }
    }

    #[test]
    fn affine_map_preserves_corr_max() {
        let dist = DistributionSpec::normal(0.0, 1.0).unwrap();
        for seed in 0..10u64 {
            let x = sim::sample_matrix(&dist, 30, 8, seed);
            let base = corr_offdiag_max(&x, false).unwrap();
            let rows: Vec<Vec<f64>> = (0..x.n())
                .map(|k| {
                    x.row(k)
                        .iter()
                        .enumerate()
                        .map(|(c, &v)| {
                            let a = 0.1 + 3.0 * sim::rng::u01(sim::rng::entry_bits(99, c as u64, 0));
                            let b = 10.0 * (sim::rng::u01(sim::rng::entry_bits(7, c as u64, 1)) - 0.5);
                            a * v + b
                        })
                        .collect()
                })
                .collect();
            let mapped = DataMatrix::from_rows(rows).unwrap();
            let after = corr_offdiag_max(&mapped, false).unwrap();
            assert_relative_eq!(base.value, after.value, max_relative = 1e-10);
            assert_eq!((base.i, base.j), (after.i, after.j));
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn results_identical_across_worker_counts() {
        let dist = DistributionSpec::student_t(5.0).unwrap();
        let x = sim::sample_matrix(&dist, 600, 300, 17);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let w = gram_offdiag_max(&x);
                let l = corr_offdiag_max(&x, false).unwrap();
                let t = prefix_trajectory(
                    &x,
                    &PnSchedule::proportional(2.0).unwrap(),
                    &[150, 300, 600],
                    false,
                )
                .unwrap();
                (
                    w.value.to_bits(),
                    w.i,
                    w.j,
                    l.value.to_bits(),
                    l.i,
                    l.j,
                    t.points
                        .iter()
                        .map(|pt| (pt.w.to_bits(), pt.l.unwrap().to_bits(), pt.colsum_max.to_bits()))
                        .collect::<Vec<_>>(),
                )
            })
        };
        let r1 = run(1);
        assert_eq!(r1, run(2));
        assert_eq!(r1, run(8));
    }
}
