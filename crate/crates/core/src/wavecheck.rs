//! Residual verification: the wave operator applied to the assembled ansatz.
//!
//! The operator □ = ∂00 − ∂ρρ − ∂φφ/ρ² − D(f−1)D with D = −∂0 + ∂ρ is applied
//! to u = a e^{ikS} as a coefficient-of-k decomposition
//!
//!   e^{−ikS} □(a e^{ikS}) = −k²·(eikonal term) + ik·(transport term) + □a,
//!
//! never by differencing the oscillatory field at large k; a direct
//! finite-difference cross-check is run at small k only. The module also
//! hosts the shared curve-fitting utilities (exponential / power-law /
//! affine) used by the asymptotic-rate reports.

use crate::geodesic::affine_fit;
use crate::interp::CubicSpline;
use crate::metric::{self, Branch, MetricParams, MetricError};
use crate::quad;
use crate::transport::{bump_chi, BumpSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

/// Step for the finite-difference stencils on amplitude fields.
const FD_H: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum WavecheckError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("probe ({x0}, {rho}) outside the interpolable chart [{lo}, {hi}]")]
    OutOfChart { x0: f64, rho: f64, lo: f64, hi: f64 },
    #[error("finite-difference cross-check failed: {0}")]
    FdInconsistent(String),
    #[error("bad fit data: {0}")]
    BadData(String),
}

/// Coefficient-of-k decomposition of □(a e^{ikS}) at one probe point.
#[derive(Clone, Copy, Debug)]
pub struct ResidualTerms {
    pub eikonal: Complex64,
    pub transport: Complex64,
    pub remainder: Complex64,
}

impl ResidualTerms {
    pub fn total(&self, k: f64) -> Complex64 {
        -k * k * self.eikonal + Complex64::i() * k * self.transport + self.remainder
    }

    fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self { eikonal: z, transport: z, remainder: z }
    }
}

/// One residual evaluation: probe point, frequency, ansatz order, terms.
#[derive(Clone, Copy, Debug)]
pub struct ResidualProbe {
    pub x0: f64,
    pub rho: f64,
    pub phi: f64,
    pub k: f64,
    pub order: usize,
    pub terms: ResidualTerms,
}

// --- finite-difference helpers on planar fields g(x0, ρ, φ) ---------------

/// Fourth-order first derivative along one axis (0 = x0, 1 = ρ, 2 = φ).
fn d1_axis(
    g: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    axis: usize,
    h: f64,
) -> Complex64 {
    let at = |s: f64| match axis {
        0 => g(p.0 + s, p.1, p.2),
        1 => g(p.0, p.1 + s, p.2),
        _ => g(p.0, p.1, p.2 + s),
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

/// Fourth-order second derivative along one axis.
fn d2_axis(
    g: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    axis: usize,
    h: f64,
) -> Complex64 {
    let at = |s: f64| match axis {
        0 => g(p.0 + s, p.1, p.2),
        1 => g(p.0, p.1 + s, p.2),
        _ => g(p.0, p.1, p.2 + s),
    };
    (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h))
        / (12.0 * h * h)
}

fn d_x0(g: &dyn Fn(f64, f64, f64) -> Complex64, p: (f64, f64, f64)) -> Complex64 {
    d1_axis(g, p, 0, FD_H)
}
fn d_rho(g: &dyn Fn(f64, f64, f64) -> Complex64, p: (f64, f64, f64)) -> Complex64 {
    d1_axis(g, p, 1, FD_H)
}
fn d_phi(g: &dyn Fn(f64, f64, f64) -> Complex64, p: (f64, f64, f64)) -> Complex64 {
    d1_axis(g, p, 2, FD_H)
}

/// D g = (−∂0 + ∂ρ) g by central differences.
fn d_radial_h(
    g: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    h: f64,
) -> Complex64 {
    -d1_axis(g, p, 0, h) + d1_axis(g, p, 1, h)
}

fn d_radial(g: &dyn Fn(f64, f64, f64) -> Complex64, p: (f64, f64, f64)) -> Complex64 {
    d_radial_h(g, p, FD_H)
}

/// □ g = g00 − gρρ − gφφ/ρ² − D((f−1)·Dg), all by finite differences with
/// the given stencil step.
pub fn box_operator_h(
    g: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    params: &MetricParams,
    h: f64,
) -> Complex64 {
    let pp = *params;
    let inner = move |x0: f64, rho: f64, phi: f64| -> Complex64 {
        (pp.f(rho) - 1.0) * d_radial_h(g, (x0, rho, phi), h)
    };
    d2_axis(g, p, 0, h) - d2_axis(g, p, 1, h) - d2_axis(g, p, 2, h) / (p.1 * p.1)
        - d_radial_h(&inner, p, h)
}

pub fn box_operator(
    g: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    params: &MetricParams,
) -> Complex64 {
    box_operator_h(g, p, params, FD_H)
}

/// Three-term decomposition of □(a e^{ikS}) with generic field closures.
///
/// `grad_s` supplies analytic first derivatives (S0, Sρ, Sφ) when available;
/// otherwise they are taken by finite differences. Second derivatives of S
/// and all derivatives of a are finite differences.
pub fn wave_operator_terms(
    s: &dyn Fn(f64, f64, f64) -> f64,
    grad_s: Option<[f64; 3]>,
    a: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    params: &MetricParams,
) -> ResidualTerms {
    let sc = |x0: f64, rho: f64, phi: f64| Complex64::new(s(x0, rho, phi), 0.0);
    let rho = p.1;
    let f = params.f(rho);
    let [s0, s_r, s_p] = grad_s.unwrap_or_else(|| {
        [d_x0(&sc, p).re, d_rho(&sc, p).re, d_phi(&sc, p).re]
    });
    let ds = -s0 + s_r;

    // Eikonal term: H0 evaluated on ∇S, times a.
    let h0 = s0 * s0 - s_r * s_r - s_p * s_p / (rho * rho) + (1.0 - f) * ds * ds;
    let a_val = a(p.0, p.1, p.2);
    let eikonal = a_val * h0;

    // Transport term: 2(S0 a0 − Sρ aρ − Sφ aφ/ρ² − (f−1) DS·Da) + a·□S.
    let a0 = d_x0(a, p);
    let a_r = d_rho(a, p);
    let a_p = d_phi(a, p);
    let da = -a0 + a_r;
    let s00 = d2_axis(&sc, p, 0, FD_H).re;
    let srr = d2_axis(&sc, p, 1, FD_H).re;
    let spp = d2_axis(&sc, p, 2, FD_H).re;
    let pp = *params;
    let ds_field = move |x0: f64, r: f64, ph: f64| -> Complex64 {
        (pp.f(r) - 1.0) * d_radial(&sc, (x0, r, ph))
    };
    let box_s = s00 - srr - spp / (rho * rho) - d_radial(&ds_field, p).re;
    let transport = 2.0 * (s0 * a0 - s_r * a_r - s_p * a_p / (rho * rho) - (f - 1.0) * ds * da)
        + a_val * box_s;

    let remainder = box_operator(a, p, params);
    ResidualTerms { eikonal, transport, remainder }
}

/// Pure finite-difference □ applied to the oscillatory field itself; only
/// meaningful at small k where the stencil resolves the oscillation.
pub fn wave_operator_direct(
    u: &dyn Fn(f64, f64, f64) -> Complex64,
    p: (f64, f64, f64),
    params: &MetricParams,
    h: f64,
) -> Complex64 {
    box_operator_h(u, p, params, h)
}

// --- Eulerian chart of the ingoing geometric-optics family -----------------

/// Eulerian description of the Minus-branch ray family launched from φ′ = 0
/// with common momenta: the time-of-passage map T(ρ) (strictly decreasing)
/// links labels and positions, T(ρ) = T(ρ′) + x0 along the ray labelled ρ′.
///
/// T is precomputed on a fine radial grid (splined; the grid is dense enough
/// that the interpolant is exact to ODE-comparable accuracy), which makes the
/// amplitude field smooth under the finite-difference stencils above.
pub struct MinusChart {
    pub params: MetricParams,
    pub xi0: f64,
    pub xi_phi: f64,
    pub rho_10: f64,
    pub bump: BumpSpec,
    r_lo: f64,
    r_hi: f64,
    t_spline: CubicSpline,
}

impl MinusChart {
    pub fn new(
        params: &MetricParams,
        xi0: f64,
        xi_phi: f64,
        rho_10: f64,
        bump: BumpSpec,
    ) -> Result<Self, WavecheckError> {
        let r0 = crate::geodesic::turning_radius(xi0, xi_phi, params)
            .map_err(|e| WavecheckError::BadData(e.to_string()))?;
        let r_lo = r0 + 0.05 * (bump.center[0] - r0);
        let r_hi = rho_10 + 0.5;
        let n = 4001;
        let rc = bump.center[0];
        // dx0/dρ on the ingoing branch (negative).
        let slope = |r: f64| {
            let d = metric::discriminant_delta(r, xi0, xi_phi, params).max(0.0);
            let sd = d.sqrt();
            let w = xi_phi * xi_phi / (r * r);
            -(sd + w / (xi0 + sd)) / sd
        };
        let mut rs = Vec::with_capacity(n);
        let mut ts = Vec::with_capacity(n);
        for i in 0..n {
            rs.push(r_lo + (r_hi - r_lo) * i as f64 / (n - 1) as f64);
        }
        // T(ρ) with T(ρ_center) = 0, accumulated between grid nodes.
        let i_c = ((rc - r_lo) / (r_hi - r_lo) * (n - 1) as f64).round() as usize;
        ts.resize(n, 0.0);
        ts[i_c] = quad::integrate(slope, rc, rs[i_c], 1e-13);
        for i in (0..i_c).rev() {
            ts[i] = ts[i + 1] + quad::integrate(slope, rs[i + 1], rs[i], 1e-13);
        }
        for i in i_c + 1..n {
            ts[i] = ts[i - 1] + quad::integrate(slope, rs[i - 1], rs[i], 1e-13);
        }
        Ok(Self {
            params: *params,
            xi0,
            xi_phi,
            rho_10,
            bump,
            r_lo,
            r_hi,
            t_spline: CubicSpline::new(&rs, &ts),
        })
    }

    /// Radial extent of the chart.
    pub fn rho_range(&self) -> (f64, f64) {
        (self.r_lo, self.r_hi)
    }

    /// Time of passage T(ρ) of the reference ray (T(ρ_center) = 0,
    /// decreasing in ρ).
    pub fn t_of(&self, rho: f64) -> f64 {
        self.t_spline.eval(rho)
    }

    fn check(&self, x0: f64, rho: f64) -> Result<(), WavecheckError> {
        if rho <= self.r_lo || rho >= self.r_hi {
            return Err(WavecheckError::OutOfChart {
                x0,
                rho,
                lo: self.r_lo,
                hi: self.r_hi,
            });
        }
        Ok(())
    }

    /// Launch label ρ′ of the ray through (x0, ρ).
    pub fn label_of(&self, x0: f64, rho: f64) -> Result<f64, WavecheckError> {
        self.check(x0, rho)?;
        let t_target = self.t_spline.eval(rho) - x0;
        let (lo, hi) = self.t_spline.x_range();
        if t_target > self.t_spline.eval(lo) || t_target < self.t_spline.eval(hi) {
            return Err(WavecheckError::OutOfChart { x0, rho, lo: self.r_lo, hi: self.r_hi });
        }
        Ok(self.t_spline.invert(t_target))
    }

    /// Position at time x0 of the ray labelled ρ′.
    pub fn rho_on_ray(&self, label: f64, x0: f64) -> Result<f64, WavecheckError> {
        self.check(0.0, label)?;
        let t_target = self.t_spline.eval(label) + x0;
        Ok(self.t_spline.invert(t_target))
    }

    /// Leading Eulerian amplitude a00(x0, ρ) = χ(ρ′)·(Δ(ρ′)/Δ(ρ))^{1/4}.
    pub fn a0(&self, x0: f64, rho: f64) -> Result<f64, WavecheckError> {
        let label = self.label_of(x0, rho)?;
        let chi = bump_chi([label, 0.0, 0.0], &self.bump);
        Ok(crate::transport::amplitude_closed_form(
            label,
            rho,
            chi,
            self.xi0,
            self.xi_phi,
            &self.params,
        ))
    }

    /// φ-reduced eikonal phase Ŝ(x0, ρ) = ξ0·x0 + ∫_{ρ10}^{ρ} ξρ⁻ dr.
    pub fn s_hat(&self, x0: f64, rho: f64) -> f64 {
        let w = quad::integrate(
            |r| metric::xi_rho(r, self.xi0, self.xi_phi, Branch::Minus, &self.params).unwrap(),
            self.rho_10,
            rho,
            1e-12,
        );
        self.xi0 * x0 + w
    }

    /// Coefficient-of-k terms of the GO ansatz with the given amplitude
    /// field. The eikonal gradient and all second derivatives of S are
    /// analytic (the phase is exactly the branch root), so the eikonal term
    /// vanishes to rounding and the transport term is limited only by the
    /// amplitude stencil.
    pub fn ansatz_terms(
        &self,
        x0: f64,
        rho: f64,
        a: &dyn Fn(f64, f64, f64) -> Complex64,
    ) -> Result<ResidualTerms, WavecheckError> {
        self.check(x0, rho)?;
        let params = &self.params;
        let f = params.f(rho);
        let fp = params.f_prime(rho);
        let xr = metric::xi_rho(rho, self.xi0, self.xi_phi, Branch::Minus, params)?;
        let xrp = metric::xi_rho_minus_prime(rho, self.xi0, self.xi_phi, params)?;
        let (s0, s_r, s_p) = (self.xi0, xr, self.xi_phi);
        let ds = -s0 + s_r;
        let h0 = s0 * s0 - s_r * s_r - s_p * s_p / (rho * rho) + (1.0 - f) * ds * ds;

        let p = (x0, rho, 0.0);
        let a_val = a(x0, rho, 0.0);
        let a_t = d_x0(a, p);
        let a_r = d_rho(a, p);
        let a_p = d_phi(a, p);
        let da = -a_t + a_r;
        // □S = −f ξρ′ − f′(ξρ − ξ0), from the analytic pieces.
        let box_s = -f * xrp - fp * (xr - self.xi0);
        let transport = 2.0
            * (s0 * a_t - s_r * a_r - s_p * a_p / (rho * rho) - (f - 1.0) * ds * da)
            + a_val * box_s;
        let remainder = box_operator(a, p, params);
        Ok(ResidualTerms { eikonal: a_val * h0, transport, remainder })
    }
}

// --- first-order amplitude correction --------------------------------------

/// The order-one amplitude a1 = i·b on a (label, x0) grid, where b solves the
/// driven transport equation along each ray:
///
///   db/dx0 = M·b + (□a0)/H_{0ξ0},   b(0) = 0,
///
/// so that ik·T(a1) cancels the order-zero remainder □a0. Solved with a
/// fixed-step RK4 (deterministic and smooth in the label, so the Eulerian
/// field interpolates cleanly under finite differences).
pub struct AmplitudeGrid {
    labels: Vec<f64>,
    times: Vec<f64>,
    /// rows[j] = spline of b along the ray labels[j], in x0.
    rows: Vec<CubicSpline>,
}

impl AmplitudeGrid {
    pub fn build(
        chart: &MinusChart,
        label_lo: f64,
        label_hi: f64,
        n_labels: usize,
        x0_max: f64,
        n_times: usize,
    ) -> Result<Self, WavecheckError> {
        let labels: Vec<f64> = (0..n_labels)
            .map(|j| label_lo + (label_hi - label_lo) * j as f64 / (n_labels - 1) as f64)
            .collect();
        let times: Vec<f64> =
            (0..n_times).map(|m| x0_max * m as f64 / (n_times - 1) as f64).collect();
        let rows: Vec<Result<CubicSpline, WavecheckError>> = labels
            .par_iter()
            .map(|&label| {
                let mut vals = Vec::with_capacity(n_times);
                vals.push(0.0);
                let mut b = 0.0;
                let a0 = |x0: f64, r: f64, _ph: f64| {
                    Complex64::new(chart.a0(x0, r).unwrap_or(0.0), 0.0)
                };
                let rhs = |x0: f64, b: f64| -> Result<f64, WavecheckError> {
                    let r = chart.rho_on_ray(label, x0)?;
                    let xr =
                        metric::xi_rho(r, chart.xi0, chart.xi_phi, Branch::Minus, &chart.params)?;
                    let f = chart.params.f(r);
                    let h0x0 = 2.0 * (2.0 - f) * chart.xi0 + 2.0 * (f - 1.0) * xr;
                    let fp = chart.params.f_prime(r);
                    let xrp =
                        metric::xi_rho_minus_prime(r, chart.xi0, chart.xi_phi, &chart.params)?;
                    let m = (f * xrp + fp * (xr - chart.xi0)) / h0x0;
                    let src = box_operator(&a0, (x0, r, 0.0), &chart.params).re / h0x0;
                    Ok(m * b + src)
                };
                let sub = 2; // RK4 substeps per stored interval
                for m in 1..n_times {
                    let (t0, t1) = (times[m - 1], times[m]);
                    let h = (t1 - t0) / sub as f64;
                    for s in 0..sub {
                        let t = t0 + s as f64 * h;
                        let k1 = rhs(t, b)?;
                        let k2 = rhs(t + 0.5 * h, b + 0.5 * h * k1)?;
                        let k3 = rhs(t + 0.5 * h, b + 0.5 * h * k2)?;
                        let k4 = rhs(t + h, b + h * k3)?;
                        b += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    }
                    vals.push(b);
                }
                Ok(CubicSpline::new(&times, &vals))
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { labels, times, rows })
    }

    /// a1(x0, ρ) = i·b at the Eulerian point, via the label chart.
    pub fn eval(&self, chart: &MinusChart, x0: f64, rho: f64) -> Result<Complex64, WavecheckError> {
        let label = chart.label_of(x0, rho)?;
        let x0c = x0.clamp(self.times[0], *self.times.last().unwrap());
        let col: Vec<f64> = self.rows.iter().map(|r| r.eval(x0c)).collect();
        let across = CubicSpline::new(&self.labels, &col);
        let lc = label.clamp(self.labels[0], *self.labels.last().unwrap());
        Ok(Complex64::i() * across.eval(lc))
    }
}

// --- residual scaling -------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub order: usize,
    pub k_list: Vec<f64>,
    /// R(k) = max over probes of |total residual| / k².
    pub r_values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Evaluate the decomposition at every probe for the order-N ansatz
/// u = (a0 + a1/k) e^{ikS} and fit log R(k) against log k. The terms are
/// k-independent per order and assembled per k by linearity.
pub fn residual_scaling(
    chart: &MinusChart,
    grid: Option<&AmplitudeGrid>,
    probes: &[(f64, f64)],
    k_list: &[f64],
    order: usize,
) -> Result<ScalingReport, WavecheckError> {
    assert!(order <= 1, "only N = 0 and N = 1 are assembled");
    let per_probe: Vec<Result<(ResidualTerms, ResidualTerms), WavecheckError>> = probes
        .par_iter()
        .map(|&(x0, rho)| {
            let a0 = |t: f64, r: f64, _p: f64| Complex64::new(chart.a0(t, r).unwrap_or(0.0), 0.0);
            let t0 = chart.ansatz_terms(x0, rho, &a0)?;
            let t1 = if order >= 1 {
                let g = grid.expect("order 1 needs the a1 grid");
                let a1 = |t: f64, r: f64, _p: f64| {
                    g.eval(chart, t, r).unwrap_or(Complex64::new(0.0, 0.0))
                };
                chart.ansatz_terms(x0, rho, &a1)?
            } else {
                ResidualTerms::zero()
            };
            Ok((t0, t1))
        })
        .collect();
    let per_probe = per_probe.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut r_values = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut worst: f64 = 0.0;
        for (t0, t1) in &per_probe {
            let total = t0.total(k) + t1.total(k) / k;
            worst = worst.max(total.norm());
        }
        r_values.push(worst / (k * k));
    }
    let pts: Vec<(f64, f64)> =
        k_list.iter().zip(&r_values).map(|(&k, &r)| (k.ln(), r.ln())).collect();
    let (slope, intercept) = affine_fit(&pts);
    Ok(ScalingReport { order, k_list: k_list.to_vec(), r_values, slope, intercept })
}

// --- shared fit utilities ---------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// y = coeff · e^{−rate·x}; params = (rate, coeff).
    ExpDecay,
    /// y = coeff · x^{exponent}; params = (exponent, coeff).
    PowerLaw,
    /// y = a·x + b; params = (a, b).
    Affine,
}

#[derive(Clone, Copy, Debug)]
pub struct FitResult {
    pub params: (f64, f64),
    /// RMS residual in the fitted (possibly log-transformed) domain,
    /// normalized by the data spread.
    pub residual: f64,
}

pub fn fit_model(xs: &[f64], ys: &[f64], model: FitModel) -> Result<FitResult, WavecheckError> {
    if xs.len() != ys.len() || xs.len() < 5 {
        return Err(WavecheckError::BadData(format!(
            "need at least 5 matched points, got {}/{}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(WavecheckError::BadData("non-finite input".into()));
    }
    let pts: Vec<(f64, f64)> = match model {
        FitModel::Affine => xs.iter().copied().zip(ys.iter().copied()).collect(),
        FitModel::ExpDecay => {
            if ys.iter().any(|&y| y <= 0.0) {
                return Err(WavecheckError::BadData("ExpDecay needs one-signed y > 0".into()));
            }
            xs.iter().zip(ys).map(|(&x, &y)| (x, y.ln())).collect()
        }
        FitModel::PowerLaw => {
            if xs.iter().any(|&x| x <= 0.0) || ys.iter().any(|&y| y <= 0.0) {
                return Err(WavecheckError::BadData("PowerLaw needs positive x and y".into()));
            }
            xs.iter().zip(ys).map(|(&x, &y)| (x.ln(), y.ln())).collect()
        }
    };
    let (a, b) = affine_fit(&pts);
    let n = pts.len() as f64;
    let rms =
        (pts.iter().map(|&(x, y)| (y - a * x - b).powi(2)).sum::<f64>() / n).sqrt();
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let spread =
        (pts.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-300);
    let params = match model {
        FitModel::Affine => (a, b),
        FitModel::ExpDecay => (-a, b.exp()),
        FitModel::PowerLaw => (a, b.exp()),
    };
    Ok(FitResult { params, residual: rms / spread })
}
