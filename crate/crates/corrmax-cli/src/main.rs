//! `corrmax` — extremal correlation statistics, the coherence-based
//! independence test, moment diagnostics, and seeded verification
//! experiments, from the command line.
//!
//! Data goes to `--output` (default stdout), diagnostics to stderr; the exit
//! code is 0 exactly when a report was produced. Outputs are deterministic
//! given the flags: `--threads` never changes a byte.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use corrmax::moments::{self, DistributionSpec};
use corrmax::sim::{self, rng, ExperimentRecord, NormalizedPoint, PnSchedule};
use corrmax::{asymptotics, kernel, DataMatrix};

#[derive(Parser)]
#[command(name = "corrmax", version, about = "Extremal statistics of sample correlation matrices")]
struct Cli {
    /// Worker threads (default: machine parallelism; env CORRMAX_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Root seed for anything randomized.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Report format for stat/test/check.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Compute W (max |Gram entry|), L (max |correlation|), or T (two-array cross maximum) on a matrix file.
    Stat(StatArgs),
    /// Run the coherence-based independence test (H0: identity correlation matrix).
    Test(TestArgs),
    /// Run a seeded verification experiment and write records, CSV, and a summary.
    Simulate(SimArgs),
    /// Classify the SLLN/LL moment conditions for an analytic distribution.
    Check(CheckArgs),
}

#[derive(Args)]
struct StatArgs {
    /// Input matrix (CSV, or the CMX1 binary container; sniffed by magic).
    #[arg(long, short)]
    input: PathBuf,
    /// Second matrix, required for the T statistic.
    #[arg(long)]
    second: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Statistic::Both)]
    statistic: Statistic,
    /// Skip one header row when reading CSV.
    #[arg(long)]
    has_header: bool,
    /// Exclude zero-variance columns from L instead of erroring.
    #[arg(long)]
    skip_degenerate: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Statistic {
    W,
    L,
    T,
    Both,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Significance level in (0, 1).
    #[arg(long, default_value_t = 0.05, value_parser = parse_level)]
    level: f64,
    #[arg(long)]
    has_header: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    /// Distribution, name:params (normal:0,1 | uniform:a,b | rademacher |
    /// student_t:nu | pareto:xm,tail | point_mass:c).
    #[arg(long, default_value = "normal")]
    dist: DistributionSpec,
    /// SLLN normalization exponent (> 1/2).
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    /// Target ratio n/p for the proportional schedule.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Schedule override: proportional | ratio_band:lo,hi[,decades] | fixed:p.
    #[arg(long)]
    schedule: Option<String>,
    /// Comma-separated checkpoint sample sizes.
    #[arg(long, default_value = "250,500,1000,2000")]
    checkpoints: String,
    /// Number of seeds (trajectory experiments).
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Replicates for the distributional-limit experiment (≥ 100).
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// Sample size for the distributional-limit experiment.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Dimension for the distributional-limit experiment (default round(n/γ)).
    #[arg(long)]
    p: Option<usize>,
    /// Write one JSON record per line here.
    #[arg(long)]
    out_records: Option<PathBuf>,
    /// Write plot-ready CSV here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Experiment {
    Slln,
    Ll,
    Evd,
    Diverge,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    dist: DistributionSpec,
    #[arg(long, value_enum)]
    condition: Condition,
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    /// Also report Monte Carlo estimates of the LL bracket functionals,
    /// with this many sample pairs (0 = off).
    #[arg(long, default_value_t = 0)]
    mc_samples: usize,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Condition {
    Slln,
    Ll,
}

fn parse_level(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie in (0, 1), got {v}"))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli
        .threads
        .or_else(|| std::env::var("CORRMAX_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("thread pool setup")?;
    }
    let report = match &cli.command {
        Command::Stat(args) => cmd_stat(args, cli.format)?,
        Command::Test(args) => cmd_test(args, cli.format)?,
        Command::Simulate(args) => cmd_simulate(args, cli.seed)?,
        Command::Check(args) => cmd_check(args, cli.seed, cli.format)?,
    };
    match &cli.output {
        Some(path) => fs::write(path, report).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.as_bytes())?;
        }
    }
    Ok(())
}

fn load_matrix(path: &Path, has_header: bool) -> Result<DataMatrix> {
    let mut magic = [0u8; 4];
    let is_binary = fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic).map(|()| &magic == corrmax::matrix::BINARY_MAGIC))
        .unwrap_or(false);
    let loaded = if is_binary {
        DataMatrix::load_binary(path)
    } else {
        DataMatrix::load_csv(path, has_header)
    };
    loaded.with_context(|| format!("loading {}", path.display()))
}

// ---------------------------------------------------------------------------
// stat
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct StatReport {
    n: usize,
    p: usize,
    #[serde(rename = "W", skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
    #[serde(rename = "W_pair", skip_serializing_if = "Option::is_none")]
    w_pair: Option<(usize, usize)>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    l: Option<f64>,
    #[serde(rename = "L_pair", skip_serializing_if = "Option::is_none")]
    l_pair: Option<(usize, usize)>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(rename = "T_pair", skip_serializing_if = "Option::is_none")]
    t_pair: Option<(usize, usize)>,
}

fn cmd_stat(args: &StatArgs, format: Format) -> Result<String> {
    let x = load_matrix(&args.input, args.has_header)?;
    let mut report = StatReport {
        n: x.n(),
        p: x.p(),
        w: None,
        w_pair: None,
        l: None,
        l_pair: None,
        t: None,
        t_pair: None,
    };
    match args.statistic {
        Statistic::T => {
            let second = args
                .second
                .as_ref()
                .context("--statistic T needs --second <PATH>")?;
            let v = load_matrix(second, args.has_header)?;
            let t = kernel::cross_gram_max(&x, &v)?;
            report.t = Some(t.value);
            report.t_pair = Some((t.i, t.j));
        }
        Statistic::W => {
            let w = kernel::gram_offdiag_max(&x);
            report.w = Some(w.value);
            report.w_pair = Some((w.i, w.j));
        }
        Statistic::L => {
            let l = kernel::corr_offdiag_max(&x, args.skip_degenerate)?;
            report.l = Some(l.value);
            report.l_pair = Some((l.i, l.j));
        }
        Statistic::Both => {
            let (w, l) = kernel::wl_offdiag_max(&x, args.skip_degenerate)?;
            report.w = Some(w.value);
            report.w_pair = Some((w.i, w.j));
            report.l = Some(l.value);
            report.l_pair = Some((l.i, l.j));
        }
    }
    render(&report, format)
}

// ---------------------------------------------------------------------------
// test
// ---------------------------------------------------------------------------

fn cmd_test(args: &TestArgs, format: Format) -> Result<String> {
    let x = load_matrix(&args.input, args.has_header)?;
    let report = asymptotics::run_test(&x, args.level)?;
    render(&report, format)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimSummary<'a> {
    experiment: &'static str,
    dist: &'a DistributionSpec,
    schedule: PnSchedule,
    alpha: f64,
    seed_root: u64,
    seeds: usize,
    checkpoints: Vec<usize>,
    medians: Vec<MedianRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth: Option<GrowthSummary>,
}

#[derive(Serialize)]
struct MedianRow {
    n: usize,
    p: usize,
    w_slln: f64,
    l_slln: Option<f64>,
    w_ll: f64,
    l_ll: Option<f64>,
    colsum_ll: f64,
    t_stat: Option<f64>,
}

#[derive(Serialize)]
struct GrowthSummary {
    median: f64,
    per_seed: Vec<sim::GrowthRecord>,
}

fn cmd_simulate(args: &SimArgs, seed_root: u64) -> Result<String> {
    let schedule = build_schedule(args)?;
    let checkpoints = parse_checkpoints(&args.checkpoints)?;
    let name = match args.experiment {
        Experiment::Slln => "slln",
        Experiment::Ll => "ll",
        Experiment::Evd => "evd",
        Experiment::Diverge => "diverge",
    };

    let (records, ks, growth, schedule_used, checkpoints_used);
    match args.experiment {
        Experiment::Slln => {
            let seeds = derive_seeds(seed_root, args.seeds)?;
            records =
                sim::run_slln_experiment(&args.dist, &schedule, args.alpha, &checkpoints, &seeds)?;
            ks = None;
            growth = None;
            schedule_used = schedule;
            checkpoints_used = checkpoints;
        }
        Experiment::Ll => {
            let seeds = derive_seeds(seed_root, args.seeds)?;
            records = sim::run_ll_experiment(&args.dist, &schedule, &checkpoints, &seeds)?;
            ks = None;
            growth = None;
            schedule_used = schedule;
            checkpoints_used = checkpoints;
        }
        Experiment::Evd => {
            if args.replicates < 100 {
                bail!("the distributional-limit experiment needs --replicates ≥ 100");
            }
            let seeds = derive_seeds(seed_root, args.replicates)?;
            let p = args.p.unwrap_or_else(|| {
                usize::max(2, (args.n as f64 / args.gamma).round() as usize)
            });
            let evd = sim::run_evd_experiment(&args.dist, args.n, p, &seeds)?;
            records = evd.records;
            ks = Some(evd.ks);
            growth = None;
            schedule_used = PnSchedule::fixed(p);
            checkpoints_used = vec![args.n];
        }
        Experiment::Diverge => {
            let seeds = derive_seeds(seed_root, args.seeds)?;
            records = sim::run_ll_experiment(&args.dist, &schedule, &checkpoints, &seeds)?;
            let per_seed: Vec<sim::GrowthRecord> =
                sim::divergence_probe(&args.dist, &schedule, &checkpoints, &seeds)?;
            let ratios: Vec<f64> = per_seed.iter().map(|g| g.growth_ratio).collect();
            growth = Some(GrowthSummary {
                median: sim::median(&ratios),
                per_seed,
            });
            ks = None;
            schedule_used = schedule;
            checkpoints_used = checkpoints;
        }
    }

    if let Some(path) = &args.out_records {
        write_jsonl(&records, path)?;
    }
    if let Some(path) = &args.out_csv {
        write_records_csv(&records, path)?;
    }

    let summary = SimSummary {
        experiment: name,
        dist: &args.dist,
        schedule: schedule_used,
        alpha: records.first().map_or(args.alpha, |r| r.alpha),
        seed_root,
        seeds: records.len(),
        checkpoints: checkpoints_used,
        medians: median_rows(&records),
        ks,
        growth,
    };
    Ok(format!("{}\n", serde_json::to_string_pretty(&summary)?))
}

fn build_schedule(args: &SimArgs) -> Result<PnSchedule> {
    let Some(spec) = &args.schedule else {
        return Ok(PnSchedule::proportional(args.gamma)?);
    };
    let cleaned = spec.trim().replace('(', ":").replace(')', "");
    let (name, rest) = match cleaned.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (cleaned.as_str(), ""),
    };
    let params: Vec<f64> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow::anyhow!("bad schedule parameter {t:?}")))
            .collect::<Result<_>>()?
    };
    Ok(match (name, params.as_slice()) {
        ("proportional", []) => PnSchedule::proportional(args.gamma)?,
        ("proportional", [g]) => PnSchedule::proportional(*g)?,
        ("ratio_band", [lo, hi]) => PnSchedule::ratio_band(*lo, *hi, 1)?,
        ("ratio_band", [lo, hi, d]) => PnSchedule::ratio_band(*lo, *hi, *d as u32)?,
        ("fixed", [p]) => PnSchedule::fixed(*p as usize),
        _ => bail!("unrecognized schedule {spec:?} (proportional | ratio_band:lo,hi[,decades] | fixed:p)"),
    })
}

fn parse_checkpoints(s: &str) -> Result<Vec<usize>> {
    let cks: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| anyhow::anyhow!("bad checkpoint {t:?}")))
        .collect::<Result<_>>()?;
    if cks.is_empty() {
        bail!("need at least one checkpoint");
    }
    Ok(cks)
}

fn derive_seeds(root: u64, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        bail!("need at least one seed");
    }
    Ok((0..count as u64).map(|i| rng::derive_seed(root, i)).collect())
}

fn median_rows(records: &[ExperimentRecord]) -> Vec<MedianRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    (0..first.normalized.len())
        .map(|idx| {
            let pts: Vec<&NormalizedPoint> =
                records.iter().map(|r| &r.normalized[idx]).collect();
            let med = |get: &dyn Fn(&NormalizedPoint) -> f64| {
                sim::median(&pts.iter().map(|pt| get(pt)).collect::<Vec<_>>())
            };
            let med_opt = |get: &dyn Fn(&NormalizedPoint) -> Option<f64>| {
                let vals: Vec<f64> = pts.iter().filter_map(|pt| get(pt)).collect();
                (!vals.is_empty()).then(|| sim::median(&vals))
            };
            MedianRow {
                n: pts[0].n,
                p: pts[0].p,
                w_slln: med(&|pt| pt.w_slln),
                l_slln: med_opt(&|pt| pt.l_slln),
                w_ll: med(&|pt| pt.w_ll),
                l_ll: med_opt(&|pt| pt.l_ll),
                colsum_ll: med(&|pt| pt.colsum_ll),
                t_stat: med_opt(&|pt| pt.t_stat),
            }
        })
        .collect()
}

fn write_jsonl(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn write_records_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut out = String::from("seed,n,p,w_slln,l_slln,w_ll,l_ll,colsum_ll,t_stat\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for record in records {
        for pt in &record.normalized {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                record.seed,
                pt.n,
                pt.p,
                pt.w_slln,
                cell(pt.l_slln),
                pt.w_ll,
                cell(pt.l_ll),
                pt.colsum_ll,
                cell(pt.t_stat),
            ));
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CheckReport {
    #[serde(flatten)]
    verdict: corrmax::ConditionVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    functionals: Option<moments::LlFunctionals>,
}

fn cmd_check(args: &CheckArgs, seed: u64, format: Format) -> Result<String> {
    let verdict = match args.condition {
        Condition::Slln => moments::slln_condition_verdict(&args.dist, args.alpha)?,
        Condition::Ll => moments::ll_condition_verdict(&args.dist)?,
    };
    let functionals = (args.mc_samples > 0 && args.condition == Condition::Ll).then(|| {
        moments::ll_functionals(&args.dist, args.mc_samples.max(10_000), seed)
    });
    render(&CheckReport { verdict, functionals }, format)
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

fn render<T: Serialize>(value: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(format!("{}\n", serde_json::to_string_pretty(value)?)),
        Format::Csv => {
            // Flatten one JSON object into a header row and a value row.
            let json = serde_json::to_value(value)?;
            let obj = json
                .as_object()
                .context("csv format needs a flat report")?;
            let mut header = Vec::new();
            let mut row = Vec::new();
            for (key, val) in obj {
                header.push(key.clone());
                row.push(match val {
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                });
            }
            Ok(format!("{}\n{}\n", header.join(","), row.join(",")))
        }
    }
}
