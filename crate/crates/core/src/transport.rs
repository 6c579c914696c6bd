//! Amplitude transport along rays: the compactly supported initial bump χ,
//! the transport coefficient M∓ in closed rationalized form, the scalar
//! transport ODE (with optional source term for the higher-order hierarchy)
//! and tail extrapolation of the Plus-branch amplitude limit.

use crate::eikonal::Ray;
use crate::geodesic::{affine_fit, Trajectory};
use crate::metric::{self, Branch, MetricError, MetricParams, PhaseState};
use crate::ode::{Integrator, OdeSystem};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("branch root undefined at rho={rho} (Δ={delta})")]
    BranchUndefined { rho: f64, delta: f64 },
    #[error("transport ODE failed: {0}")]
    OdeFailure(String),
    #[error("amplitude track has no turning point; nothing to carry across a band")]
    MissingCausticData,
    #[error("not enough tail samples for the limit fit (found {0})")]
    InsufficientTail(usize),
}

/// Compactly supported C∞ initial amplitude bump.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
}

/// χ(y) = height · exp(1 − 1/(1 − |z|²)) with z = (y − center)/width inside
/// the unit ball of z, zero outside; smooth across the boundary.
pub fn bump_chi(y: [f64; 3], spec: &BumpSpec) -> f64 {
    let z2 = (0..3)
        .map(|i| (y[i] - spec.center[i]) / spec.width)
        .map(|z| z * z)
        .sum::<f64>();
    if z2 < 1.0 {
        spec.height * (1.0 - 1.0 / (1.0 - z2)).exp()
    } else {
        0.0
    }
}

/// Transport coefficient M on the state's branch, in the rationalized closed
/// form. The raw expression (f ξρ′ + f′(ξρ − ξ0))/H_{0ξ0} collapses to
///
///   M⁻ =  (√Δ)′ / (2(√Δ + w/(ξ0 + √Δ)))          (w = ξφ²/ρ²)
///   M⁺ = −(√Δ)′ · f / (2(ξ0 + (1 − f)√Δ))
///
/// both of which are finite across the horizons; M⁺ carries the explicit
/// factor f, which is the source of the O(r₋ − ρ) tail (sub-extremal) and
/// the O((ρ − m)³) tail (extremal, f degenerate quadratic).
pub fn transport_coefficient(state: &PhaseState, params: &MetricParams) -> Result<f64, TransportError> {
    let (rho, xi0, xi_phi) = (state.rho, state.xi0, state.xi_phi);
    let delta = metric::discriminant_delta(rho, xi0, xi_phi, params);
    if delta <= 0.0 {
        return Err(TransportError::BranchUndefined { rho, delta });
    }
    let sd = delta.sqrt();
    let sd_prime = metric::discriminant_delta_prime(rho, xi_phi, params) / (2.0 * sd);
    let f = params.f(rho);
    match state.branch {
        Branch::Minus => {
            let w = xi_phi * xi_phi / (rho * rho);
            Ok(sd_prime / (2.0 * (sd + w / (xi0 + sd))))
        }
        Branch::Plus => Ok(-sd_prime * f / (2.0 * (xi0 + (1.0 - f) * sd))),
    }
}

/// Closed-form solution of the leading transport equation: the amplitude at
/// radius ρ of a ray launched at ρ′ is a = a(ρ′)·(Δ(ρ′)/Δ(ρ))^{1/4}, valid on
/// both branches (∫M dx0 telescopes to −¼ ln Δ).
pub fn amplitude_closed_form(
    rho_p: f64,
    rho: f64,
    a_initial: f64,
    xi0: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> f64 {
    let d0 = metric::discriminant_delta(rho_p, xi0, xi_phi, params);
    let d1 = metric::discriminant_delta(rho, xi0, xi_phi, params);
    a_initial * (d0 / d1).powf(0.25)
}

#[derive(Clone, Debug)]
pub struct AmplitudeTrack {
    pub order: usize,
    pub x0: Vec<f64>,
    pub a: Vec<Complex64>,
    pub limit_estimate: Option<Complex64>,
}

impl AmplitudeTrack {
    pub fn last(&self) -> Complex64 {
        *self.a.last().unwrap()
    }
}

struct TransportSystem<'a> {
    traj: &'a Trajectory,
    params: MetricParams,
    source: Option<&'a dyn Fn(f64) -> Complex64>,
}

impl OdeSystem<2> for TransportSystem<'_> {
    fn rhs(&self, x0: f64, y: &[f64; 2], dydt: &mut [f64; 2]) {
        let st = self.traj.eval_at_x0(x0);
        let m = transport_coefficient(&st, &self.params).unwrap_or(0.0);
        let mut re = m * y[0];
        let mut im = m * y[1];
        if let Some(src) = self.source {
            let s = src(x0);
            re += s.re;
            im += s.im;
        }
        dydt[0] = re;
        dydt[1] = im;
    }
}

/// Solve the scalar linear transport ODE da/dx0 = M(x0)·a + source along the
/// ray between two coordinate times (order and initial value supplied by the
/// caller; the Minus→Plus branch is read off the trajectory).
pub fn solve_transport_ode(
    traj: &Trajectory,
    x0_from: f64,
    x0_to: f64,
    init: Complex64,
    source: Option<&dyn Fn(f64) -> Complex64>,
    order: usize,
    params: &MetricParams,
) -> Result<AmplitudeTrack, TransportError> {
    assert!(x0_to > x0_from);
    let sys = TransportSystem { traj, params: *params, source };
    let ig = Integrator::with_tol(1e-11, 1e-13);
    // Shift the time origin so the integrator's [t0, t_end] convention holds.
    struct Shifted<'a>(TransportSystem<'a>, f64);
    impl OdeSystem<2> for Shifted<'_> {
        fn rhs(&self, t: f64, y: &[f64; 2], dydt: &mut [f64; 2]) {
            self.0.rhs(t + self.1, y, dydt)
        }
    }
    let shifted = Shifted(sys, x0_from);
    let sol = ig
        .solve(&shifted, 0.0, &[init.re, init.im], x0_to - x0_from, &mut [])
        .map_err(|e| TransportError::OdeFailure(e.to_string()))?;
    // Resample the dense output on a uniform grid: downstream fits assume a
    // well-covered track regardless of how few steps the controller took.
    let span = sol.t_end();
    let n = 400.max(sol.ts.len());
    let mut x0 = Vec::with_capacity(n + 1);
    let mut a = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = span * i as f64 / n as f64;
        let y = if sol.dense.is_empty() { sol.y_end() } else { sol.eval(t) };
        x0.push(t + x0_from);
        a.push(Complex64::new(y[0], y[1]));
    }
    Ok(AmplitudeTrack { order, x0, a, limit_estimate: None })
}

/// Leading-order amplitude on the Minus segment: a00(0) = χ at the ray's
/// initial point, integrated up to the turning band edge t0 − ε (or to the
/// end of the trajectory when the ray has no turning point in span).
pub fn integrate_amplitude(
    ray: &Ray,
    chi: &BumpSpec,
    band_eps: f64,
    params: &MetricParams,
) -> Result<AmplitudeTrack, TransportError> {
    let y0 = crate::eikonal::rotate_plane(ray.rho_p, ray.phi_p, 0.0);
    let a0 = bump_chi(y0, chi);
    let x0_end = match ray.t0 {
        Some(t0) => t0 - band_eps,
        None => ray.traj.x0_end() * (1.0 - 1e-9),
    };
    if a0 == 0.0 {
        // Zero initial data propagates exactly; skip the solve.
        return Ok(AmplitudeTrack {
            order: 0,
            x0: vec![0.0, x0_end],
            a: vec![Complex64::new(0.0, 0.0); 2],
            limit_estimate: None,
        });
    }
    solve_transport_ode(&ray.traj, 0.0, x0_end, Complex64::new(a0, 0.0), None, 0, params)
}

/// Continue a00 on the Plus segment from the band exit value (produced by the
/// caustic matching) to the end of the trajectory.
pub fn continue_amplitude_plus(
    ray: &Ray,
    a_band_exit: Complex64,
    band_eps: f64,
    params: &MetricParams,
) -> Result<AmplitudeTrack, TransportError> {
    let t0 = ray.t0.ok_or(TransportError::MissingCausticData)?;
    let x0_end = ray.traj.x0_end() * (1.0 - 1e-9);
    solve_transport_ode(&ray.traj, t0 + band_eps, x0_end, a_band_exit, None, 0, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailModel {
    Exponential,
    PowerLaw,
}

#[derive(Clone, Copy, Debug)]
pub struct LimitEstimate {
    pub limit: Complex64,
    /// Decay rate (Exponential: e^{−rate·x0}) or exponent (PowerLaw: x0^{−rate}).
    pub tail_rate: f64,
    /// Gap between the two window estimates, for convergence reporting.
    pub window_gap: f64,
}

/// Extrapolate the large-x0 limit of a Plus-segment track.
///
/// Exponential model: Aitken extrapolation on two trailing windows, rate from
/// an affine fit of ln|a − limit|. PowerLaw: geometric three-point
/// extrapolation a(x), a(2x), a(4x) solving a = a∞ + c·x^{−q}.
pub fn amplitude_limit(
    track: &AmplitudeTrack,
    model: TailModel,
) -> Result<LimitEstimate, TransportError> {
    let n = track.x0.len();
    if n < 24 {
        return Err(TransportError::InsufficientTail(n));
    }
    if track.a.iter().all(|a| a.norm() == 0.0) {
        return Ok(LimitEstimate { limit: Complex64::new(0.0, 0.0), tail_rate: 0.0, window_gap: 0.0 });
    }
    let x_end = track.x0[n - 1];
    let x_start = track.x0[0];
    let eval = |x: f64| -> Complex64 {
        // Linear interpolation on the track (tracks are densely sampled).
        let i = track.x0.partition_point(|&t| t < x).clamp(1, n - 1);
        let (t0, t1) = (track.x0[i - 1], track.x0[i]);
        let w = if t1 > t0 { (x - t0) / (t1 - t0) } else { 0.0 };
        track.a[i - 1] * (1.0 - w) + track.a[i] * w
    };
    match model {
        TailModel::Exponential => {
            let aitken = |x: f64, h: f64| -> Complex64 {
                let (a0, a1, a2) = (eval(x), eval(x + h), eval(x + 2.0 * h));
                let den = a0 - a1 * 2.0 + a2;
                if den.norm() < 1e-300 {
                    a2
                } else {
                    (a0 * a2 - a1 * a1) / den
                }
            };
            let span = x_end - x_start;
            let h = span * 0.15;
            let e1 = aitken(x_end - 2.0 * h, h * 0.999);
            let e2 = aitken(x_end - 3.0 * h, h * 0.999);
            let limit = e1;
            // Rate from ln|a − limit| on the second half of the track.
            let pts: Vec<(f64, f64)> = track
                .x0
                .iter()
                .zip(&track.a)
                .filter(|(&t, a)| t > x_start + 0.4 * span && (*a - limit).norm() > 1e-14)
                .map(|(&t, a)| (t, (*a - limit).norm().ln()))
                .collect();
            if pts.len() < 8 {
                return Err(TransportError::InsufficientTail(pts.len()));
            }
            let (slope, _) = affine_fit(&pts);
            Ok(LimitEstimate { limit, tail_rate: -slope, window_gap: (e1 - e2).norm() })
        }
        TailModel::PowerLaw => {
            let x = x_end / 4.0;
            if x <= x_start {
                return Err(TransportError::InsufficientTail(n));
            }
            let (a0, a1, a2) = (eval(x), eval(2.0 * x), eval(4.0 * x));
            let d1 = a1 - a0;
            let d2 = a2 - a1;
            if d1.norm() < 1e-300 {
                return Ok(LimitEstimate { limit: a2, tail_rate: 0.0, window_gap: 0.0 });
            }
            let ratio = (d2 / d1).re.abs().max(1e-300);
            let q = -(ratio.ln() / std::f64::consts::LN_2);
            let r = 2.0_f64.powf(-q);
            let limit = a2 + d2 * (r / (1.0 - r));
            // Second-window estimate for the gap report.
            let xb = x * 0.7;
            let (b0, b1, b2) = (eval(xb), eval(2.0 * xb), eval(4.0 * xb));
            let e1b = b1 - b0;
            let e2b = b2 - b1;
            let limit_b = if e1b.norm() > 1e-300 {
                let rb = 2.0_f64.powf(-(-(e2b / e1b).re.abs().max(1e-300).ln() / std::f64::consts::LN_2));
                b2 + e2b * (rb / (1.0 - rb))
            } else {
                b2
            };
            Ok(LimitEstimate { limit, tail_rate: q, window_gap: (limit - limit_b).norm() })
        }
    }
}
