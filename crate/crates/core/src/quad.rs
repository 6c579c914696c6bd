//! Adaptive quadrature for smooth one-dimensional integrands.
//!
//! Globally adaptive Simpson with Richardson acceptance; ample for the phase
//! integrals here, whose integrands are smooth on the integration interval.

/// Integrate `f` over [a, b] (either orientation) to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fl = f(lo);
    let fh = f(hi);
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh);
    sign * adaptive(&f, lo, hi, fl, fm, fh, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
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
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        left + right + err / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
