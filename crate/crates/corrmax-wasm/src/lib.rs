//! wasm-bindgen bindings for the browser demo: explore the extreme-value
//! limit law, watch the √(n/log n)-normalized coherence approach its limit,
//! and run the independence test on synthetic data with adjustable
//! cross-correlation. All exports return JSON strings for a framework-free
//! page to parse.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use corrmax::moments::DistributionSpec;
use corrmax::sim::{self, PnSchedule};
use corrmax::{asymptotics, DataMatrix, Result};

const DEMO_MAX_N: usize = 3000;
const DEMO_MAX_CELLS: usize = 4_000_000;

#[derive(Serialize)]
struct Curve {
    t: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    q90: f64,
    q95: f64,
    q99: f64,
}

fn limit_curve_impl(gamma: f64, t_min: f64, t_max: f64, points: usize) -> Result<Curve> {
    let points = points.clamp(2, 4096);
    let mut t = Vec::with_capacity(points);
    let mut cdf = Vec::with_capacity(points);
    let mut pdf = Vec::with_capacity(points);
    let coeff = 1.0 / (gamma * gamma * (8.0 * std::f64::consts::PI).sqrt());
    for k in 0..points {
        let x = t_min + (t_max - t_min) * k as f64 / (points - 1) as f64;
        let f = asymptotics::limit_cdf(x, gamma)?;
        t.push(x);
        cdf.push(f);
        pdf.push(f * coeff / 2.0 * (-x / 2.0).exp());
    }
    Ok(Curve {
        t,
        cdf,
        pdf,
        q90: asymptotics::limit_quantile(0.90, gamma)?,
        q95: asymptotics::limit_quantile(0.95, gamma)?,
        q99: asymptotics::limit_quantile(0.99, gamma)?,
    })
}

/// CDF/PDF of the limit law `exp(−e^{−t/2}/(γ²√(8π)))` on a grid, plus
/// upper quantiles, as JSON.
#[wasm_bindgen]
pub fn limit_curve(gamma: f64, t_min: f64, t_max: f64, points: usize) -> std::result::Result<String, JsValue> {
    to_js(limit_curve_impl(gamma, t_min, t_max, points))
}

#[derive(Serialize)]
struct TrajectoryOut {
    points: Vec<TrajectoryPointOut>,
}

#[derive(Serialize)]
struct TrajectoryPointOut {
    n: usize,
    p: usize,
    l_ll: f64,
    w_ll: f64,
    colsum_ll: f64,
}

fn ll_trajectory_impl(dist: &str, seed: u32, gamma: f64, n_max: usize) -> Result<TrajectoryOut> {
    let dist: DistributionSpec = dist.parse()?;
    let n_max = n_max.clamp(40, DEMO_MAX_N);
    let schedule = PnSchedule::proportional(gamma)?;
    let mut checkpoints = Vec::new();
    let mut n = 40usize;
    while n < n_max {
        checkpoints.push(n);
        n = usize::max(n + 1, (n as f64 * 1.4) as usize);
    }
    checkpoints.push(n_max);
    let records = sim::run_ll_experiment(&dist, &schedule, &checkpoints, &[seed as u64])?;
    Ok(TrajectoryOut {
        points: records[0]
            .normalized
            .iter()
            .map(|pt| TrajectoryPointOut {
                n: pt.n,
                p: pt.p,
                l_ll: pt.l_ll.unwrap_or(f64::NAN),
                w_ll: pt.w_ll,
                colsum_ll: pt.colsum_ll,
            })
            .collect(),
    })
}

/// One seeded nested trajectory of the √(n/log n)-normalized coherence, the
/// √(n log n)-normalized Gram maximum, and the column-sum analogue, as JSON.
#[wasm_bindgen]
pub fn ll_trajectory(dist: &str, seed: u32, gamma: f64, n_max: usize) -> std::result::Result<String, JsValue> {
    to_js(ll_trajectory_impl(dist, seed, gamma, n_max))
}

#[derive(Serialize)]
struct TestOut {
    report: asymptotics::TestReport,
    rho_injected: f64,
}

fn independence_test_impl(
    n: usize,
    p: usize,
    rho: f64,
    seed: u32,
    level: f64,
) -> Result<TestOut> {
    let n = n.clamp(10, DEMO_MAX_N);
    let p = p.clamp(2, DEMO_MAX_CELLS / n);
    let rho = rho.clamp(-0.999, 0.999);
    let dist = DistributionSpec::normal(0.0, 1.0).expect("valid");
    let base = sim::sample_matrix(&dist, n, p, seed as u64);
    // Inject dependence between the first two columns: x₂ ← ρx₁ + √(1−ρ²)x₂.
    let scale = (1.0 - rho * rho).sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let row = base.row(k);
            let mut out = row.to_vec();
            out[1] = rho * row[0] + scale * row[1];
            out
        })
        .collect();
    let x = DataMatrix::from_rows(rows)?;
    let report = asymptotics::run_test(&x, level)?;
    Ok(TestOut { report, rho_injected: rho })
}

/// Sample an n×p standard-normal matrix, blend correlation ρ into one column
/// pair, and run the coherence test at the given level. JSON report.
#[wasm_bindgen]
pub fn independence_test(
    n: usize,
    p: usize,
    rho: f64,
    seed: u32,
    level: f64,
) -> std::result::Result<String, JsValue> {
    to_js(independence_test_impl(n, p, rho, seed, level))
}

fn to_js<T: Serialize>(out: Result<T>) -> std::result::Result<String, JsValue> {
    match out {
        Ok(v) => serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())),
        Err(e) => Err(JsValue::from_str(&e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_monotone_and_quantiles_ordered() {
        let c = limit_curve_impl(1.0, -10.0, 15.0, 200).unwrap();
        assert!(c.cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.pdf.iter().all(|&v| v >= 0.0));
        assert!(c.q90 < c.q95 && c.q95 < c.q99);
    }

    #[test]
    fn trajectory_runs_and_targets_two() {
        let t = ll_trajectory_impl("normal", 3, 1.0, 400).unwrap();
        assert!(t.points.len() > 3);
        let last = t.points.last().unwrap();
        assert_eq!(last.n, 400);
        assert!(last.l_ll > 1.0 && last.l_ll < 3.0);
    }

    #[test]
    fn test_rejects_only_with_injected_correlation() {
        let clean = independence_test_impl(300, 120, 0.0, 7, 0.05).unwrap();
        let rigged = independence_test_impl(300, 120, 0.95, 7, 0.05).unwrap();
        assert!(rigged.report.l > clean.report.l);
        assert!(rigged.report.reject);
        assert_eq!(rigged.report.argmax_pair, (1, 2));
    }

    #[test]
    fn outputs_serialize() {
        let json = serde_json::to_string(&limit_curve_impl(2.0, -5.0, 5.0, 16).unwrap()).unwrap();
        assert!(json.contains("\"cdf\""));
    }
}
