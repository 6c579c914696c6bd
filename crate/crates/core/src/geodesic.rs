//! Null bicharacteristics: the planar Hamiltonian flow in the affine
//! parameter, the full Cartesian flow used for cross-validation, horizon and
//! turning-point events, and the closed-form asymptotic rate fits.

use crate::metric::{
    self, Branch, CartesianState, MetricParams, MetricError, PhaseState, Regime,
};
use crate::ode::{
    EventAction, EventDirection, EventSpec, Integrator, OdeSystem, Solution, StopReason,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    OuterCrossing,
    InnerCrossing,
    TurningPoint,
    Escape,
    /// The ray fell below the minimum-radius guard (radial rays heading into
    /// the central singularity, which the optics construction does not model).
    MinRadiusGuard,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub x0: f64,
    pub rho: f64,
    pub phi: f64,
}

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("integration step control failed: {0}")]
    StepFailure(String),
    #[error("coordinate time stopped increasing (dx0/ds <= 0) at s={0}")]
    NonMonotoneTime(f64),
    #[error("no turning radius: the discriminant has no root (e.g. radial ray)")]
    NoRoot,
    #[error("multiple turning-radius candidates found: {0:?}")]
    AmbiguousRoot(Vec<f64>),
    #[error("not enough tail samples in the fit window (found {found}, need {need})")]
    InsufficientTail { found: usize, need: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Integration aborts (with a recorded event) below this radius.
    pub rmin_guard: f64,
    pub max_steps: usize,
    /// Integrate the field in −s instead of +s (for states whose natural
    /// affine parametrization runs coordinate time backwards).
    pub reverse_s: bool,
}

impl IntegrateOpts {
    pub fn for_params(params: &MetricParams) -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            rmin_guard: 1e-6 * params.m,
            max_steps: 2_000_000,
            reverse_s: false,
        }
    }
}

/// Planar Hamiltonian vector field in the affine parameter s.
///
/// State layout: [x0, ρ, φ, ξρ]; ξ0 and ξφ are conserved and enter as
/// parameters. Polynomial in the state — smooth through horizons and the
/// turning point.
pub struct PlanarField {
    pub params: MetricParams,
    pub xi0: f64,
    pub xi_phi: f64,
    /// +1 integrates in s, −1 in −s (used for solutions whose natural affine
    /// parametrization runs x0 backwards, e.g. the (−ξ0, Plus) branch swap).
    pub s_sign: f64,
}

impl OdeSystem<4> for PlanarField {
    fn rhs(&self, _s: f64, y: &[f64; 4], dydt: &mut [f64; 4]) {
        let (rho, xi_rho) = (y[1], y[3]);
        let f = self.params.f(rho);
        let fp = self.params.f_prime(rho);
        let d = self.xi0 - xi_rho;
        dydt[0] = self.s_sign * (2.0 * (2.0 - f) * self.xi0 + 2.0 * (f - 1.0) * xi_rho);
        dydt[1] = self.s_sign * (2.0 * (f - 1.0) * self.xi0 - 2.0 * f * xi_rho);
        dydt[2] = self.s_sign * (-2.0 * self.xi_phi / (rho * rho));
        dydt[3] =
            self.s_sign * (fp * d * d - 2.0 * self.xi_phi * self.xi_phi / (rho * rho * rho));
    }
}

/// d/ds of (x0, ρ, φ, ξρ) at a single state; the ground-truth field.
pub fn rhs_full_planar(state: &PhaseState, params: &MetricParams) -> Result<[f64; 4], MetricError> {
    if state.rho <= 0.0 {
        return Err(MetricError::DomainError(state.rho));
    }
    let field =
        PlanarField { params: *params, xi0: state.xi0, xi_phi: state.xi_phi, s_sign: 1.0 };
    let mut out = [0.0; 4];
    field.rhs(0.0, &[state.x0, state.rho, state.phi, state.xi_rho], &mut out);
    Ok(out)
}

/// Reduced x0-parametrized slopes (dρ/dx0, dφ/dx0) on the requested branch.
///
/// The Minus branch uses the f-cancelled forms, finite across both horizons;
/// the Plus branch keeps the factor f and is used away from horizons.
pub fn rhs_reduced(
    rho: f64,
    xi0: f64,
    xi_phi: f64,
    branch: Branch,
    params: &MetricParams,
) -> Result<(f64, f64), MetricError> {
    let delta = metric::discriminant_delta(rho, xi0, xi_phi, params);
    if delta < 0.0 {
        return Err(MetricError::NegativeDiscriminant { rho, delta });
    }
    let sd = delta.sqrt();
    let w = xi_phi * xi_phi / (rho * rho);
    match branch {
        Branch::Minus => {
            let denom = sd + w / (xi0 + sd);
            Ok((-sd / denom, -(xi_phi / (rho * rho)) / denom))
        }
        Branch::Plus => {
            let f = params.f(rho);
            let denom = xi0 + sd - f * sd;
            Ok((f * sd / denom, -f * (xi_phi / (rho * rho)) / denom))
        }
    }
}

#[derive(Debug)]
pub struct Trajectory {
    pub samples: Vec<PhaseState>,
    pub events: Vec<Event>,
    pub params: MetricParams,
    pub xi0: f64,
    pub xi_phi: f64,
    pub max_h0_residual: f64,
    sol: Solution<4>,
    /// s-values of turning events, used to tag branches.
    turn_s: Vec<f64>,
    initial_branch: Branch,
}

impl Trajectory {
    /// Coordinate time of the first turning point, if any.
    pub fn turning_time(&self) -> Option<f64> {
        self.events.iter().find(|e| e.kind == EventKind::TurningPoint).map(|e| e.x0)
    }

    pub fn x0_end(&self) -> f64 {
        self.samples.last().unwrap().x0
    }

    fn branch_at_s(&self, s: f64) -> Branch {
        let flips = self.turn_s.iter().filter(|&&ts| ts < s).count();
        if flips % 2 == 0 {
            self.initial_branch
        } else {
            match self.initial_branch {
                Branch::Minus => Branch::Plus,
                Branch::Plus => Branch::Minus,
            }
        }
    }

    /// Dense evaluation at a coordinate time inside the solved span.
    ///
    /// The first affine parameter with x0(s) = x0 is recovered by scanning the
    /// accepted steps for a bracket and bisecting the dense output inside it.
    /// (In the naked regime x0(s) can briefly decrease just past the turning
    /// point, where the x0 = const surfaces fail to be spacelike, so global
    /// bisection would be unsound; the first crossing is taken.)
    pub fn eval_at_x0(&self, x0: f64) -> PhaseState {
        let n = self.sol.ts.len();
        let mut bracket = None;
        for i in 0..n - 1 {
            let a = self.sol.ys[i][0] - x0;
            let b = self.sol.ys[i + 1][0] - x0;
            if a == 0.0 {
                bracket = Some((self.sol.ts[i], self.sol.ts[i]));
                break;
            }
            if a * b <= 0.0 {
                bracket = Some((self.sol.ts[i], self.sol.ts[i + 1]));
                break;
            }
        }
        let (mut lo, mut hi) = bracket.unwrap_or_else(|| self.sol.span());
        let increasing = self.sol.eval(hi)[0] >= self.sol.eval(lo)[0];
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.sol.eval(mid)[0] < x0) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        let y = self.sol.eval(s);
        self.state_from(y, s)
    }

    /// Dense evaluation at the first affine parameter with ρ(s) = rho, or
    /// `None` if the radius is never reached. Mirrors `eval_at_x0`: the
    /// accepted steps are scanned for the first bracket, which is then
    /// bisected on the dense output.
    pub fn eval_at_rho(&self, rho: f64) -> Option<PhaseState> {
        let n = self.sol.ts.len();
        let mut bracket = None;
        for i in 0..n - 1 {
            let a = self.sol.ys[i][1] - rho;
            let b = self.sol.ys[i + 1][1] - rho;
            if a == 0.0 {
                bracket = Some((self.sol.ts[i], self.sol.ts[i]));
                break;
            }
            if a * b <= 0.0 {
                bracket = Some((self.sol.ts[i], self.sol.ts[i + 1]));
                break;
            }
        }
        let (mut lo, mut hi) = bracket?;
        let increasing = self.sol.eval(hi)[1] >= self.sol.eval(lo)[1];
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.sol.eval(mid)[1] < rho) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        Some(self.state_from(self.sol.eval(s), s))
    }

    fn state_from(&self, y: [f64; 4], s: f64) -> PhaseState {
        let branch = self.branch_at_s(s);
        let mut xi_rho = y[3];
        // Deep-tail constraint projection: hugging the inner horizon, the
        // Plus-branch radial momentum grows like 1/f and its absolute ODE
        // error swamps the H0 = 0 identity; project onto the constraint root.
        if branch == Branch::Plus && xi_rho.abs() > 1e2 * self.xi0.abs() {
            if let Ok(root) = metric::xi_rho(y[1], self.xi0, self.xi_phi, Branch::Plus, &self.params)
            {
                xi_rho = root;
            }
        }
        PhaseState { x0: y[0], rho: y[1], phi: y[2], xi0: self.xi0, xi_rho, xi_phi: self.xi_phi, branch }
    }

    pub fn stop_reason(&self) -> StopReason {
        self.sol.stop
    }
}

/// Integrate a planar null bicharacteristic up to coordinate time `x0_max`.
///
/// Event bookkeeping: horizon crossings (sub-extremal/extremal), the turning
/// point (sign change of dρ/ds, with |Δ| ≈ 0 as a post-condition), escape
/// beyond the escape radius, and the minimum-radius guard.
pub fn integrate(
    initial: &PhaseState,
    x0_max: f64,
    opts: &IntegrateOpts,
    params: &MetricParams,
) -> Result<Trajectory, GeodesicError> {
    let field = PlanarField {
        params: *params,
        xi0: initial.xi0,
        xi_phi: initial.xi_phi,
        s_sign: if opts.reverse_s { -1.0 } else { 1.0 },
    };
    let y0 = [initial.x0, initial.rho, initial.phi, initial.xi_rho];

    let escape_r = params.escape_radius();
    let rmin = opts.rmin_guard;
    let xi0 = initial.xi0;
    let xi_phi = initial.xi_phi;
    let p = *params;

    // Event table. Indices are fixed so the hits can be classified afterwards.
    let mut events: Vec<EventSpec<'_, 4>> = vec![
        // 0: x0 budget exhausted.
        EventSpec {
            eval: Box::new(move |_s, y| y[0] - x0_max),
            direction: EventDirection::Rising,
            action: EventAction::Stop,
        },
        // 1: turning point, dρ/ds = 0.
        EventSpec {
            eval: Box::new(move |_s, y| {
                let f = p.f(y[1]);
                2.0 * (f - 1.0) * xi0 - 2.0 * f * y[3]
            }),
            direction: EventDirection::Any,
            action: EventAction::Continue,
        },
        // 2: escape.
        EventSpec {
            eval: Box::new(move |_s, y| y[1] - escape_r),
            direction: EventDirection::Rising,
            action: EventAction::Stop,
        },
        // 3: minimum-radius guard.
        EventSpec {
            eval: Box::new(move |_s, y| y[1] - rmin),
            direction: EventDirection::Falling,
            action: EventAction::Stop,
        },
    ];
    // 4: outer horizon, 5: inner horizon (when present and positive).
    let mut outer_idx = None;
    let mut inner_idx = None;
    if let Some(rp) = params.r_plus {
        outer_idx = Some(events.len());
        events.push(EventSpec {
            eval: Box::new(move |_s, y| y[1] - rp),
            direction: EventDirection::Any,
            action: EventAction::Continue,
        });
    }
    if let Some(rm) = params.r_minus {
        if rm > 0.0 && params.regime == Regime::SubExtremal {
            inner_idx = Some(events.len());
            events.push(EventSpec {
                eval: Box::new(move |_s, y| y[1] - rm),
                direction: EventDirection::Any,
                action: EventAction::Continue,
            });
        }
    }

    let ig = Integrator {
        tol: crate::ode::Tolerances { rel: opts.rel_tol, abs: opts.abs_tol },
        max_steps: opts.max_steps,
        initial_step: None,
    };
    let sol = ig
        .solve(&field, 0.0, &y0, 1e12, &mut events)
        .map_err(|e| GeodesicError::StepFailure(e.to_string()))?;

    // Coordinate time must increase along the whole run when horizons exist:
    // there both branch roots give dx0/ds > 0 wherever Δ ≥ 0. In the naked
    // regime the x0 = const surfaces stop being spacelike below r = e²/2m and
    // x0(s) genuinely dips on a short arc past the turning point, so the
    // check is not applicable there.
    if params.regime != Regime::Naked {
        for (i, y) in sol.ys.iter().enumerate() {
            let mut d = [0.0; 4];
            field.rhs(sol.ts[i], y, &mut d);
            if d[0] <= 0.0 {
                return Err(GeodesicError::NonMonotoneTime(sol.ts[i]));
            }
        }
    }

    let turn_s: Vec<f64> =
        sol.events.iter().filter(|h| h.index == 1).map(|h| h.t).collect();

    let mut traj = Trajectory {
        samples: Vec::with_capacity(sol.ts.len()),
        events: Vec::new(),
        params: *params,
        xi0,
        xi_phi,
        max_h0_residual: 0.0,
        sol,
        turn_s,
        initial_branch: initial.branch,
    };

    for (i, y) in traj.sol.ys.clone().iter().enumerate() {
        let st = traj.state_from(*y, traj.sol.ts[i]);
        let h0 = if st.xi_rho.abs() > 1e3 * xi0.abs() {
            metric::hamiltonian_planar_factored(st.rho, xi0, st.xi_rho, xi_phi, params)?
        } else {
            metric::hamiltonian_planar(st.rho, xi0, st.xi_rho, xi_phi, params)?
        };
        traj.max_h0_residual = traj.max_h0_residual.max(h0.abs());
        traj.samples.push(st);
    }

    let hits = traj.sol.events.clone();
    for hit in &hits {
        let st = traj.state_from(hit.y, hit.t);
        let kind = if hit.index == 1 {
            EventKind::TurningPoint
        } else if hit.index == 2 {
            EventKind::Escape
        } else if hit.index == 3 {
            EventKind::MinRadiusGuard
        } else if Some(hit.index) == outer_idx {
            EventKind::OuterCrossing
        } else if Some(hit.index) == inner_idx {
            EventKind::InnerCrossing
        } else {
            continue; // x0 budget: not a physical event
        };
        traj.events.push(Event { kind, x0: st.x0, rho: st.rho, phi: st.phi });
    }
    traj.events.sort_by(|a, b| a.x0.total_cmp(&b.x0));
    Ok(traj)
}

/// Cartesian field for the 8-dimensional system; ξ0 is conserved.
/// State layout: [x0, x1, x2, x3, ξ1, ξ2, ξ3].
pub struct CartesianField {
    pub params: MetricParams,
    pub xi0: f64,
}

impl OdeSystem<7> for CartesianField {
    fn rhs(&self, _s: f64, y: &[f64; 7], dydt: &mut [f64; 7]) {
        let x = [y[1], y[2], y[3]];
        let xi = [y[4], y[5], y[6]];
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let r = r2.sqrt();
        let g = 2.0 * self.params.m / r - self.params.e * self.params.e / r2; // 1 - f
        let fp = self.params.f_prime(r);
        let xdotxi = x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2];
        let b = -self.xi0 + xdotxi / r;
        dydt[0] = 2.0 * self.xi0 - 2.0 * g * b;
        for j in 0..3 {
            dydt[1 + j] = -2.0 * xi[j] + 2.0 * g * b * x[j] / r;
            // ∂B/∂xj = ξj/r − (x·ξ)xj/r³
            dydt[4 + j] =
                fp * (x[j] / r) * b * b - 2.0 * g * b * (xi[j] / r - xdotxi * x[j] / (r2 * r));
        }
    }
}

/// Integrate the Cartesian system for cross-validation (planarity,
/// equivariance, agreement with the planar chart).
pub fn integrate_cartesian(
    initial: &CartesianState,
    s_max: f64,
    opts: &IntegrateOpts,
    params: &MetricParams,
) -> Result<Vec<CartesianState>, GeodesicError> {
    let field = CartesianField { params: *params, xi0: initial.xi0 };
    let y0 = [
        initial.x0, initial.x[0], initial.x[1], initial.x[2], initial.xi[0], initial.xi[1],
        initial.xi[2],
    ];
    let ig = Integrator {
        tol: crate::ode::Tolerances { rel: opts.rel_tol, abs: opts.abs_tol },
        max_steps: opts.max_steps,
        initial_step: None,
    };
    let sol = ig
        .solve(&field, 0.0, &y0, s_max, &mut [])
        .map_err(|e| GeodesicError::StepFailure(e.to_string()))?;
    Ok(sol
        .ys
        .iter()
        .map(|y| CartesianState {
            x0: y[0],
            x: [y[1], y[2], y[3]],
            xi0: initial.xi0,
            xi: [y[4], y[5], y[6]],
        })
        .collect())
}

/// Radius at which Δ vanishes: the turning point of a ray with the given
/// conserved momenta.
///
/// Sub-extremal/extremal: the root is bracketed in (0, r₋). Naked: a log-grid
/// scan brackets sign changes; exactly one is required.
pub fn turning_radius(
    xi0: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<f64, GeodesicError> {
    if xi_phi == 0.0 {
        return Err(GeodesicError::NoRoot);
    }
    let delta = |r: f64| metric::discriminant_delta(r, xi0, xi_phi, params);
    let r_lo_floor = 1e-9 * params.m;

    let brackets: Vec<(f64, f64)> = match params.regime {
        Regime::SubExtremal | Regime::Extremal => {
            let rm = params.r_minus.unwrap();
            if rm <= 0.0 {
                return Err(GeodesicError::NoRoot); // Schwarzschild: Δ > 0 down to r = 0
            }
            // Δ(r₋) = ξ0² > 0 and Δ → −∞ as r → 0 (e ≠ 0): scan downward.
            let mut found = Vec::new();
            let n = 400;
            let mut prev_r = rm;
            let mut prev_v = delta(prev_r);
            for i in 1..=n {
                let r = rm * (r_lo_floor / rm).powf(i as f64 / n as f64);
                let v = delta(r);
                if prev_v * v < 0.0 {
                    found.push((r, prev_r));
                }
                prev_r = r;
                prev_v = v;
            }
            found
        }
        Regime::Naked => {
            let mut found = Vec::new();
            let r_hi = 100.0 * params.m;
            let n = 2000;
            let mut prev_r = r_hi;
            let mut prev_v = delta(prev_r);
            for i in 1..=n {
                let r = r_hi * (r_lo_floor / r_hi).powf(i as f64 / n as f64);
                let v = delta(r);
                if prev_v * v < 0.0 {
                    found.push((r, prev_r));
                }
                prev_r = r;
                prev_v = v;
            }
            found
        }
    };

    if brackets.is_empty() {
        return Err(GeodesicError::NoRoot);
    }
    // Bisect keeping lo on the Δ < 0 side, and return the Δ ≥ 0 endpoint so
    // callers can evaluate √Δ and the branch roots at the returned radius.
    let refine = |(mut lo, mut hi): (f64, f64)| -> f64 {
        if delta(lo) >= 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = delta(mid);
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= f64::EPSILON * hi.abs() {
                break;
            }
        }
        hi
    };
    if brackets.len() > 1 {
        return Err(GeodesicError::AmbiguousRoot(brackets.into_iter().map(refine).collect()));
    }
    Ok(refine(brackets[0]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateModel {
    Exponential,
    Reciprocal,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub coeff: f64,
    pub model: RateModel,
    pub window: (f64, f64),
    pub n_samples: usize,
}

/// Fit the closed-form approach rate of the Plus-branch tail.
///
/// Sub-extremal: r₋ − ρ decays like e^{−λ x0}; the fitted λ is compared with
/// (r₊ − r₋)/(2 r₋²). The fit window is taken deep in the tail
/// (r₋ − ρ ∈ [5e−10, 5e−5]·r₋) where the subleading corrections, themselves
/// exponentially small, no longer bias the slope.
///
/// Extremal: m − ρ ≈ 2m²/x0; (m − ρ)·x0 is fitted affinely against 1/x0 and
/// the intercept estimates the coefficient 2m², removing the O(1/x0)
/// correction term.
pub fn horizon_approach_rate(
    traj: &Trajectory,
    params: &MetricParams,
) -> Result<RateFit, GeodesicError> {
    let need = 12;
    match params.regime {
        Regime::SubExtremal => {
            let rm = params.r_minus.unwrap();
            let t0 = traj.turning_time().ok_or(GeodesicError::InsufficientTail {
                found: 0,
                need,
            })?;
            let (lo, hi) = (5e-10 * rm, 5e-5 * rm);
            let pts: Vec<(f64, f64)> = traj
                .samples
                .iter()
                .filter(|s| s.x0 > t0 && rm - s.rho > lo && rm - s.rho < hi)
                .map(|s| (s.x0, (rm - s.rho).ln()))
                .collect();
            if pts.len() < need {
                return Err(GeodesicError::InsufficientTail { found: pts.len(), need });
            }
            let (slope, _intercept) = affine_fit(&pts);
            Ok(RateFit {
                rate: -slope,
                coeff: f64::NAN,
                model: RateModel::Exponential,
                window: (lo, hi),
                n_samples: pts.len(),
            })
        }
        Regime::Extremal => {
            let m = params.m;
            let t0 = traj.turning_time().ok_or(GeodesicError::InsufficientTail {
                found: 0,
                need,
            })?;
            let x0_min = (2.0 * t0).max(0.05 * traj.x0_end());
            let pts: Vec<(f64, f64)> = traj
                .samples
                .iter()
                .filter(|s| s.x0 > x0_min && m - s.rho > 0.0 && m - s.rho < 0.05 * m)
                .map(|s| (1.0 / s.x0, (m - s.rho) * s.x0))
                .collect();
            if pts.len() < need {
                return Err(GeodesicError::InsufficientTail { found: pts.len(), need });
            }
            let (_slope, intercept) = affine_fit(&pts);
            Ok(RateFit {
                rate: f64::NAN,
                coeff: intercept,
                model: RateModel::Reciprocal,
                window: (x0_min, traj.x0_end()),
                n_samples: pts.len(),
            })
        }
        Regime::Naked => Err(GeodesicError::InsufficientTail { found: 0, need }),
    }
}

/// Least-squares affine fit y = a·x + b, returning (a, b).
pub fn affine_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    (a, b)
}

/// Build the canonical initial state: infalling (Minus-branch) ray at
/// (ρ0, φ0) with conserved momenta (ξ0, ξφ).
pub fn initial_minus_state(
    rho0: f64,
    phi0: f64,
    xi0: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<PhaseState, MetricError> {
    let xi_rho = metric::xi_rho(rho0, xi0, xi_phi, Branch::Minus, params)?;
    Ok(PhaseState { x0: 0.0, rho: rho0, phi: phi0, xi0, xi_rho, xi_phi, branch: Branch::Minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::classify;

    #[test]
    fn rhs_at_outer_horizon() {
        let p = classify(1.0, 0.6).unwrap();
        let st = PhaseState {
            x0: 0.0,
            rho: 1.8,
            phi: 0.0,
            xi0: 1.0,
            xi_rho: 0.5,
            xi_phi: 0.7,
            branch: Branch::Minus,
        };
        let d = rhs_full_planar(&st, &p).unwrap();
        assert!((d[1] - (-2.0)).abs() < 1e-12); // dρ/ds = −2ξ0 at f = 0
        assert!((d[2] - (-2.0 * 0.7 / (1.8 * 1.8))).abs() < 1e-12);
    }

    #[test]
    fn rhs_stationary_at_turning_point() {
        let p = classify(1.0, 0.6).unwrap();
        let r0 = turning_radius(1.0, 1.0, &p).unwrap();
        let xr = metric::xi_rho(r0, 1.0, 1.0, Branch::Minus, &p).unwrap();
        let st = PhaseState {
            x0: 0.0,
            rho: r0,
            phi: 0.0,
            xi0: 1.0,
            xi_rho: xr,
            xi_phi: 1.0,
            branch: Branch::Minus,
        };
        let d = rhs_full_planar(&st, &p).unwrap();
        // √Δ at the bisection-limited root is O(√(Δ′·ulp(r0))) ≈ 3e−8.
        assert!((d[1] / d[0]).abs() < 1e-7, "dρ/dx0 = {}", d[1] / d[0]);
    }

    // Far-field ingoing ray. With this Hamiltonian the flat-space ingoing
    // root is ξρ = +ξ0 (dρ/ds = −2ξρ when f = 1), so dρ/dx0 = −1.
    #[test]
    fn rhs_flat_probe() {
        let p = classify(1.0, 0.6).unwrap();
        let st = PhaseState {
            x0: 0.0,
            rho: 1e9,
            phi: 0.0,
            xi0: 1.0,
            xi_rho: 1.0,
            xi_phi: 0.0,
            branch: Branch::Minus,
        };
        let d = rhs_full_planar(&st, &p).unwrap();
        assert!((d[1] + 2.0).abs() < 1e-8);
        assert!((d[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn reduced_slopes() {
        let p = classify(1.0, 0.6).unwrap();
        let (drho, _) = rhs_reduced(1.8, 1.0, 0.0, Branch::Minus, &p).unwrap();
        assert!((drho + 1.0).abs() < 1e-12);
        let (drho, _) = rhs_reduced(1e9, 1.0, 1.0, Branch::Minus, &p).unwrap();
        assert!((drho + 1.0).abs() < 1e-8);
        // At the turning point both branches are radially stationary.
        let r0 = turning_radius(1.0, 1.0, &p).unwrap();
        let (drho, dphi) = rhs_reduced(r0, 1.0, 1.0, Branch::Minus, &p).unwrap();
        assert!(drho.abs() < 1e-7);
        assert!(dphi.is_finite() && dphi.abs() > 0.0);
    }

    #[test]
    fn reduced_matches_full_field() {
        let p = classify(1.0, 0.6).unwrap();
        for &rho in &[0.21, 0.5, 1.0, 1.79, 1.81, 3.0] {
            let xr = metric::xi_rho(rho, 1.0, 0.8, Branch::Minus, &p).unwrap();
            let st = PhaseState {
                x0: 0.0,
                rho,
                phi: 0.0,
                xi0: 1.0,
                xi_rho: xr,
                xi_phi: 0.8,
                branch: Branch::Minus,
            };
            let d = rhs_full_planar(&st, &p).unwrap();
            let (drho, dphi) = rhs_reduced(rho, 1.0, 0.8, Branch::Minus, &p).unwrap();
            assert!((d[1] / d[0] - drho).abs() < 1e-9, "rho={rho}");
            assert!((d[2] / d[0] - dphi).abs() < 1e-9, "rho={rho}");
        }
    }

    #[test]
    fn canonical_event_sequence() {
        let p = classify(1.0, 0.6).unwrap();
        let init = initial_minus_state(3.0, 0.0, 1.0, 1.0, &p).unwrap();
        let opts = IntegrateOpts::for_params(&p);
        let traj = integrate(&init, 40.0, &opts, &p).unwrap();
        let kinds: Vec<EventKind> = traj.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EventKind::OuterCrossing, EventKind::InnerCrossing, EventKind::TurningPoint]
        );
        assert!((traj.events[0].rho - 1.8).abs() < 1e-6);
        assert!((traj.events[1].rho - 0.2).abs() < 1e-6);
        let tp = traj.events[2];
        let d = metric::discriminant_delta(tp.rho, 1.0, 1.0, &p);
        assert!(d.abs() < 1e-9, "Δ at turning = {d}");
        // After the turn ρ increases monotonically toward r₋ = 0.2.
        let t0 = tp.x0;
        let mut prev = 0.0;
        for s in traj.samples.iter().filter(|s| s.x0 > t0) {
            assert!(s.rho > prev && s.rho < 0.2 + 1e-9);
            prev = s.rho;
        }
    }

    #[test]
    fn radial_ray_has_no_turning_point() {
        let p = classify(1.0, 0.6).unwrap();
        let init = initial_minus_state(3.0, 0.0, 1.0, 0.0, &p).unwrap();
        let opts = IntegrateOpts::for_params(&p);
        let traj = integrate(&init, 40.0, &opts, &p).unwrap();
        assert!(traj.events.iter().all(|e| e.kind != EventKind::TurningPoint));
        assert!(traj.events.iter().any(|e| e.kind == EventKind::MinRadiusGuard));
    }

    #[test]
    fn naked_ray_turns_then_escapes() {
        let p = classify(1.0, 1.2).unwrap();
        let init = initial_minus_state(3.0, 0.0, 5.0, 1.0, &p).unwrap();
        let opts = IntegrateOpts::for_params(&p);
        let traj = integrate(&init, 1e4, &opts, &p).unwrap();
        let kinds: Vec<EventKind> = traj.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::TurningPoint, EventKind::Escape]);
    }

    #[test]
    fn turning_radius_canonical() {
        let p = classify(1.0, 0.6).unwrap();
        let r0 = turning_radius(1.0, 1.0, &p).unwrap();
        assert!(r0 > 0.0 && r0 < 0.2);
        assert!(metric::discriminant_delta(r0, 1.0, 1.0, &p).abs() <= 1e-12);
        // Larger ξ0/|ξφ| pulls the turning point inward.
        let mut prev = r0;
        for xi0 in [2.0, 4.0, 8.0] {
            let r = turning_radius(xi0, 1.0, &p).unwrap();
            assert!(r < prev);
            prev = r;
        }
        assert!(matches!(turning_radius(1.0, 0.0, &p), Err(GeodesicError::NoRoot)));
    }

    #[test]
    fn h0_conserved_along_canonical_run() {
        let p = classify(1.0, 0.6).unwrap();
        let init = initial_minus_state(3.0, 0.0, 1.0, 1.0, &p).unwrap();
        let opts = IntegrateOpts::for_params(&p);
        let traj = integrate(&init, 30.0, &opts, &p).unwrap();
        assert!(traj.max_h0_residual <= 1e-9, "max |H0| = {}", traj.max_h0_residual);
    }

    #[test]
    fn subextremal_rate_matches_closed_form() {
        let p = classify(1.0, 0.6).unwrap();
        let init = initial_minus_state(3.0, 0.0, 1.0, 1.0, &p).unwrap();
        let opts = IntegrateOpts::for_params(&p);
        let traj = integrate(&init, 40.0, &opts, &p).unwrap();
        let fit = horizon_approach_rate(&traj, &p).unwrap();
        let expected = (1.8 - 0.2) / (2.0 * 0.2 * 0.2);
        assert!(
            (fit.rate - expected).abs() / expected < 0.01,
            "rate {} vs {}",
            fit.rate,
            expected
        );
    }

    #[test]
    fn cartesian_stays_planar() {
        let p = classify(1.0, 0.6).unwrap();
        let init = initial_minus_state(3.0, 0.0, 1.0, 1.0, &p).unwrap();
        let c0 = metric::planar_to_cartesian(&init);
        let opts = IntegrateOpts::for_params(&p);
        let states = integrate_cartesian(&c0, 2.0, &opts, &p).unwrap();
        for s in &states {
            assert!(s.x[2].abs() <= 1e-10 && s.xi[2].abs() <= 1e-10);
        }
    }

    #[test]
    fn branch_swap_symmetry() {
        // Remark-2.1-style check: negating (ξ0, ξρ, ξφ) maps the Minus root
        // onto the Plus root and reverses the Hamiltonian field, i.e. the two
        // branches trace the same geometry with the affine parameter flipped.
        let p = classify(1.0, 0.6).unwrap();
        for &rho in &[0.5, 1.0, 2.5, 4.0] {
            let xm = metric::xi_rho(rho, 1.0, 1.0, Branch::Minus, &p).unwrap();
            let xp = metric::xi_rho(rho, -1.0, -1.0, Branch::Plus, &p).unwrap();
            assert!((xp + xm).abs() < 1e-12, "rho={rho}: {xp} vs {}", -xm);
            let sa = PhaseState {
                x0: 0.0,
                rho,
                phi: 0.0,
                xi0: 1.0,
                xi_rho: xm,
                xi_phi: 1.0,
                branch: Branch::Minus,
            };
            let sb = PhaseState { xi0: -1.0, xi_rho: -xm, xi_phi: -1.0, branch: Branch::Plus, ..sa };
            let da = rhs_full_planar(&sa, &p).unwrap();
            let db = rhs_full_planar(&sb, &p).unwrap();
            for i in 0..3 {
                assert!((da[i] + db[i]).abs() < 1e-12, "rho={rho} comp {i}");
            }
            assert!((da[3] - db[3]).abs() < 1e-12); // dξρ/ds negates with ξρ
        }
    }
}
