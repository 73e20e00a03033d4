//! Extremal statistics of sample correlation matrices.
//!
//! Given an n × p data matrix (rows = samples, columns = variables) this
//! crate computes, with blocked deterministic kernels:
//!
//! - `W_n`, the largest absolute off-diagonal entry of the Gram matrix X'X;
//! - `L_n`, the largest absolute off-diagonal Pearson correlation (the
//!   coherence of the matrix);
//! - `T_n`, the two-array cross-Gram analogue over ordered column pairs;
//!
//! and builds on them:
//!
//! - [`asymptotics`]: the type-I extreme-value limit of
//!   `n·L² − 4 log n + log log n` (CDF, quantile, p-value) and the
//!   independence test that rejects H₀: R = I on its upper tail;
//! - [`moments`]: diagnostics for the moment/series conditions behind the
//!   strong laws (power-normalized SLLN, √(n log n) law of the logarithm);
//! - [`sim`]: seeded, nested Monte Carlo experiments that verify the
//!   almost-sure limits (W/n^α → 0, W/√(n log n) → 2, (n/log n)^{1/2}L → 2,
//!   column-sum bound) and the distributional limit, reproducibly.
//!
//! Every computation is bit-identical for any worker count: row sums use
//! fixed 4096-row blocks with pairwise combination, and max reductions use a
//! total order (value, then lexicographic index pair).

pub mod asymptotics;
mod error;
pub mod kernel;
pub mod matrix;
pub mod moments;
pub mod sim;

pub use error::{Error, Result};
pub use kernel::{MaxEntryResult, PrefixTrajectory, StatKind, TrajectoryPoint};
pub use matrix::{ColumnSummary, DataMatrix};
pub use moments::{ConditionVerdict, DistributionSpec, MomentValue, Verdict};
pub use sim::{ExperimentRecord, NormalizedPoint, PnSchedule};
