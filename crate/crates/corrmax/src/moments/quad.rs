//! Adaptive Simpson quadrature used by the moment diagnostics.
//!
//! Finite pieces run a 32-panel composite pass to fix the error scale, then
//! refine each panel adaptively. Half-lines use the substitution
//! `z = lo + tan(u)`, `dz = sec²u du`, mapping `[lo, ∞)` onto `[0, π/2]`.

const PANELS: usize = 32;
const MAX_DEPTH: u32 = 48;
/// Floor for the absolute tolerance, so genuinely tiny integrals (order-
/// statistic tails far out) still resolve relatively.
const MIN_ABS: f64 = 1e-300;

/// Integrate `f` over `[a, b]` to roughly `rel_tol` relative accuracy.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    // Composite pre-pass to estimate the scale.
    let h = (b - a) / PANELS as f64;
    let mut nodes = [0.0f64; PANELS + 1];
    for (i, node) in nodes.iter_mut().enumerate() {
        *node = f(a + h * i as f64);
    }
    let mut coarse = 0.0;
    for i in 0..PANELS {
        let lo = a + h * i as f64;
        coarse += simpson(nodes[i], f(lo + h / 2.0), nodes[i + 1], h);
    }
    let tol = (coarse.abs() * rel_tol).max(MIN_ABS) / PANELS as f64;

    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + h * i as f64;
        let hi = lo + h;
        let mid = lo + h / 2.0;
        let fm = f(mid);
        let whole = simpson(nodes[i], fm, nodes[i + 1], h);
        total += adapt(f, lo, hi, nodes[i], fm, nodes[i + 1], whole, tol, MAX_DEPTH);
    }
    total
}

/// Integrate over `[knots[0], knots.last()]`, split at every knot.
pub(crate) fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, knots: &[f64], rel_tol: f64) -> f64 {
    knots
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], rel_tol))
        .sum()
}

/// Integrate `f` over `[lo, ∞)`.
///
/// Power tails span many binades, which defeats a single adaptive pass, so
/// the half-line is first cut into decade pieces `[lo + s·10^k, lo + s·10^{k+1}]`
/// (s = the scale of `lo`) out to 10¹⁶·s; the remainder is handled by the
/// tangent substitution `z = base + tan(u)`, `dz = sec²u du`.
pub(crate) fn integrate_to_inf<F: Fn(f64) -> f64>(f: &F, lo: f64, rel_tol: f64) -> f64 {
    let s = f64::max(1.0, lo.abs());
    let mut total = 0.0;
    let mut left = lo;
    for k in 0..=16 {
        let right = lo + s * 10f64.powi(k);
        total += integrate(f, left, right, rel_tol);
        left = right;
    }
    let g = |u: f64| {
        let t = u.tan();
        f(left + t) * (1.0 + t * t)
    };
    total + integrate(&g, 0.0, std::f64::consts::FRAC_PI_2, rel_tol)
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = (a + b) / 2.0;
    let lm = (a + m) / 2.0;
    let rm = (m + b) / 2.0;
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}
