//! Adaptive composite Simpson quadrature.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// `breaks` are interior points where `f` may lose smoothness (interpolant
/// knots); each sub-interval is integrated separately.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    breaks: &[f64],
) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -adaptive_simpson(f, b, a, rel_tol, breaks);
    }
    let mut pts = Vec::with_capacity(breaks.len() + 2);
    pts.push(a);
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);

    // Absolute floor from a coarse estimate of the total magnitude.
    let scale: f64 = pts
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) / 6.0 * (f(w[0]).abs() + 4.0 * f(m).abs() + f(w[1]).abs())
        })
        .sum();
    let abs_tol = (rel_tol * scale).max(f64::MIN_POSITIVE);
    let total_len = b - a;

    pts.windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let m = 0.5 * (lo + hi);
            let (flo, fm, fhi) = (f(lo), f(m), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
            let tol = abs_tol * (hi - lo) / total_len;
            recurse(&f, lo, hi, flo, fm, fhi, whole, tol, MAX_DEPTH)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
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
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Trapezoid rule over tabulated samples.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}
