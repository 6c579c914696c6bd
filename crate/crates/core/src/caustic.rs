//! Carrying the WKB solution through the turning-point caustic.
//!
//! Near the common turning radius the position-space Jacobian degenerates and
//! the geometric-optics amplitude blows up; the solution is re-represented as
//! an oscillatory integral over the radial momentum η = ξρ (Maslov ansatz).
//! This module builds the Legendre phase tables along a one-parameter fan of
//! rays, evaluates the momentum integral by direct quadrature and by
//! stationary phase, and matches the two geometric-optics families across the
//! caustic band, which fixes the π/2 caustic phase.
//!
//! The fan is realized through a single reference orbit: rays launched from
//! different radii with the same conserved momenta are time translates of one
//! another (the planar field is autonomous), so the state of the ray labelled
//! ρ′ at time x0 is the reference state at x0 + τ(ρ′), with the azimuth
//! shifted back by the reference azimuth at τ(ρ′).

use crate::geodesic::{
    self, GeodesicError, IntegrateOpts, Trajectory,
};
use crate::interp::CubicSpline;
use crate::metric::{self, MetricError, MetricParams};
use crate::quad;
use crate::transport::{bump_chi, BumpSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Oscillatory-quadrature resolution: nodes per period of the fastest phase
/// oscillation, the floor applied regardless of k, and the hard cap beyond
/// which the integral is reported as under-resolved.
const NODES_PER_PERIOD: f64 = 50.0;
const MIN_QUAD_NODES: usize = 60_001;
const MAX_QUAD_NODES: usize = 20_000_001;
/// |L''| below this is treated as a degenerate stationary point.
const DEGENERATE_L2: f64 = 1e-4;
/// Interior tolerance for the Legendre consistency invariant dL/dη = ρ.
const LEGENDRE_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum CausticError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error("invalid fan specification: {0}")]
    InvalidSpec(String),
    #[error("momentum samples are not strictly monotone at index {index}")]
    NonMonotoneMomentum { index: usize },
    #[error("Legendre consistency dL/dη = ρ violated: max gap {max_gap:e}")]
    LegendreInconsistent { max_gap: f64 },
    #[error("oscillatory quadrature under-resolved: {needed} nodes needed, cap {cap}")]
    UnderResolved { needed: usize, cap: usize },
    #[error("no stationary point: ρ = {rho} outside the table's radial range")]
    NoStationaryPoint { rho: f64 },
    #[error("degenerate stationary point: |L''| = {second_derivative:e}")]
    DegenerateStationaryPoint { second_derivative: f64 },
    #[error("matching across the caustic failed: {0}")]
    MatchFailure(String),
}

/// One-parameter fan of rays for the caustic construction: launch radii
/// ρ′ ∈ [rho_lo, rho_hi] at φ′ = 0 with common conserved momenta, weighted by
/// a compactly supported bump in ρ′.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FanSpec {
    pub rho_center: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub n: usize,
    /// Reference radius where S0 vanishes (phase normalization).
    pub rho_10: f64,
    pub xi0: f64,
    pub xi_phi: f64,
    pub bump: BumpSpec,
}

impl FanSpec {
    /// The canonical caustic fan around ρ′ = 3 used throughout: bump of width
    /// 0.5, fan padded to [2.45, 3.55] so the amplitude vanishes smoothly
    /// inside the table.
    pub fn canonical(xi0: f64, xi_phi: f64) -> Self {
        Self {
            rho_center: 3.0,
            rho_lo: 2.45,
            rho_hi: 3.55,
            n: 2001,
            rho_10: 4.0,
            xi0,
            xi_phi,
            bump: BumpSpec { center: [3.0, 0.0, 0.0], width: 0.5, height: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<(), CausticError> {
        if !(self.rho_lo < self.rho_center && self.rho_center < self.rho_hi) {
            return Err(CausticError::InvalidSpec(
                "need rho_lo < rho_center < rho_hi".into(),
            ));
        }
        if self.n < 9 {
            return Err(CausticError::InvalidSpec("need at least 9 fan rays".into()));
        }
        if self.rho_10 < self.rho_hi {
            return Err(CausticError::InvalidSpec(
                "phase reference rho_10 must lie beyond the fan".into(),
            ));
        }
        if self.xi_phi == 0.0 {
            return Err(CausticError::InvalidSpec(
                "radial fan (xi_phi = 0) has no turning point".into(),
            ));
        }
        if self.bump.center[0] - self.bump.width <= self.rho_lo
            || self.bump.center[0] + self.bump.width >= self.rho_hi
        {
            return Err(CausticError::InvalidSpec(
                "bump support must lie strictly inside the fan".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self, i: usize) -> f64 {
        self.rho_lo + (self.rho_hi - self.rho_lo) * i as f64 / (self.n - 1) as f64
    }
}

/// The realized fan: reference orbit (both time directions), per-label time
/// translations and launch phases, and the cached phase anchors.
pub struct RayFan {
    pub spec: FanSpec,
    pub params: MetricParams,
    /// Turning time of the center ray.
    pub t0c: f64,
    /// Common turning radius of the fan (all rays share the momenta).
    pub r0: f64,
    fwd: Trajectory,
    bwd: Trajectory,
    taus: Vec<f64>,
    phi_refs: Vec<f64>,
    /// S0(ρ′) = ∫_{ρ10}^{ρ′} ξρ⁻ dr per label.
    s0m: Vec<f64>,
    chis: Vec<f64>,
    /// Split radius for the √-regular change of variables near r0.
    w_anchor_rho: f64,
    w_anchor: f64,
    /// ∫_{ρ10}^{r0} ξρ⁻ dr.
    w_to_r0: f64,
}

fn xi_rho_minus_clamped(r: f64, xi0: f64, xi_phi: f64, params: &MetricParams) -> f64 {
    let d = metric::discriminant_delta(r, xi0, xi_phi, params).max(0.0);
    let w = xi_phi * xi_phi / (r * r);
    xi0 - w / (xi0 + d.sqrt())
}

fn xi_rho_plus_clamped(r: f64, xi0: f64, xi_phi: f64, params: &MetricParams) -> f64 {
    let d = metric::discriminant_delta(r, xi0, xi_phi, params).max(0.0);
    let f = params.f(r);
    ((f - 1.0) * xi0 - d.sqrt()) / f
}

pub fn build_fan(spec: &FanSpec, params: &MetricParams) -> Result<RayFan, CausticError> {
    spec.validate()?;
    let init = geodesic::initial_minus_state(spec.rho_center, 0.0, spec.xi0, spec.xi_phi, params)?;
    let opts = IntegrateOpts::for_params(params);
    // Forward until escape (covers the whole band and every translate used).
    let fwd = geodesic::integrate(&init, f64::INFINITY, &opts, params)?;
    let bwd_opts = IntegrateOpts { reverse_s: true, ..opts };
    let bwd = geodesic::integrate(&init, f64::INFINITY, &bwd_opts, params)?;
    let t0c = fwd
        .turning_time()
        .ok_or_else(|| CausticError::InvalidSpec("center ray never turns".into()))?;
    let r0 = geodesic::turning_radius(spec.xi0, spec.xi_phi, params)?;

    let mut taus = Vec::with_capacity(spec.n);
    let mut phi_refs = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let rp = spec.label(i);
        if (rp - spec.rho_center).abs() < 1e-14 {
            taus.push(0.0);
            phi_refs.push(0.0);
            continue;
        }
        // The reference passes ρ′ < ρc on its ingoing leg (forward in s) and
        // ρ′ > ρc before launch (backward in s).
        let traj = if rp < spec.rho_center { &fwd } else { &bwd };
        let st = traj.eval_at_rho(rp).ok_or_else(|| {
            CausticError::InvalidSpec(format!("label {rp} outside the reference orbit span"))
        })?;
        taus.push(st.x0);
        phi_refs.push(st.phi);
    }

    // Phase normalization S0(ρ′), accumulated between adjacent labels.
    let xirm = |r: f64| xi_rho_minus_clamped(r, spec.xi0, spec.xi_phi, params);
    let mut s0m = Vec::with_capacity(spec.n);
    let mut acc = quad::integrate(xirm, spec.rho_10, spec.label(0), 1e-13);
    s0m.push(acc);
    for i in 1..spec.n {
        acc += quad::integrate(xirm, spec.label(i - 1), spec.label(i), 1e-13);
        s0m.push(acc);
    }

    let chis: Vec<f64> = (0..spec.n).map(|i| bump_chi([spec.label(i), 0.0, 0.0], &spec.bump)).collect();

    // Anchors for the eikonal phase: the √Δ kink at r0 is removed with
    // r = r0 + u², applied below w_anchor_rho.
    let w_anchor_rho = r0 + 0.25 * (spec.rho_center - r0);
    let w_anchor = quad::integrate(xirm, spec.rho_10, w_anchor_rho, 1e-12);
    let ua = (w_anchor_rho - r0).sqrt();
    let w_to_r0 =
        w_anchor + quad::integrate(|u| xirm(r0 + u * u) * 2.0 * u, ua, 0.0, 1e-12);

    Ok(RayFan {
        spec: *spec,
        params: *params,
        t0c,
        r0,
        fwd,
        bwd,
        taus,
        phi_refs,
        s0m,
        chis,
        w_anchor_rho,
        w_anchor,
        w_to_r0,
    })
}

impl RayFan {
    fn ref_state(&self, x0: f64) -> crate::metric::PhaseState {
        if x0 >= 0.0 {
            self.fwd.eval_at_x0(x0)
        } else {
            self.bwd.eval_at_x0(x0)
        }
    }

    /// State of the fan ray `i` at time x0: (ρ, Δφ, η) with Δφ the azimuth
    /// accumulated since launch and η = ξρ.
    pub fn ray_state(&self, i: usize, x0: f64) -> (f64, f64, f64) {
        let st = self.ref_state(x0 + self.taus[i]);
        (st.rho, st.phi - self.phi_refs[i], st.xi_rho)
    }

    /// Same for an off-grid label, recovering its time translation from the
    /// reference orbit.
    pub fn ray_state_label(&self, label: f64, x0: f64) -> Result<(f64, f64, f64), CausticError> {
        if (label - self.spec.rho_center).abs() < 1e-14 {
            let st = self.ref_state(x0);
            return Ok((st.rho, st.phi, st.xi_rho));
        }
        let traj = if label < self.spec.rho_center { &self.fwd } else { &self.bwd };
        let at = traj.eval_at_rho(label).ok_or_else(|| {
            CausticError::InvalidSpec(format!("label {label} outside the reference orbit span"))
        })?;
        let st = self.ref_state(x0 + at.x0);
        Ok((st.rho, st.phi - at.phi, st.xi_rho))
    }

    /// Ŝ⁻(x0, ρ) = ξ0·x0 + ∫_{ρ10}^{ρ} ξρ⁻ dr: the φ-reduced eikonal phase of
    /// the ingoing family (full phase S = Ŝ + ξφ·φ).
    pub fn s_minus(&self, x0: f64, rho: f64) -> f64 {
        let xirm = |r: f64| xi_rho_minus_clamped(r, self.spec.xi0, self.spec.xi_phi, &self.params);
        let w = if rho >= self.w_anchor_rho {
            quad::integrate(xirm, self.spec.rho_10, rho, 1e-12)
        } else {
            let ua = (self.w_anchor_rho - self.r0).sqrt();
            let ub = (rho - self.r0).max(0.0).sqrt();
            self.w_anchor
                + quad::integrate(|u| xirm(self.r0 + u * u) * 2.0 * u, ua, ub, 1e-12)
        };
        self.spec.xi0 * x0 + w
    }

    /// Ŝ⁺(x0, ρ): the outgoing-family phase, continued through the common
    /// turning radius.
    pub fn s_plus(&self, x0: f64, rho: f64) -> f64 {
        let xirp = |r: f64| xi_rho_plus_clamped(r, self.spec.xi0, self.spec.xi_phi, &self.params);
        let ub = (rho - self.r0).max(0.0).sqrt();
        let tail = quad::integrate(|u| xirp(self.r0 + u * u) * 2.0 * u, 0.0, ub, 1e-12);
        self.spec.xi0 * x0 + self.w_to_r0 + tail
    }

    /// Closed-form geometric-optics amplitude of the ray labelled ρ′ when it
    /// sits at radius ρ.
    pub fn go_amp(&self, label: f64, rho: f64) -> f64 {
        let chi = bump_chi([label, 0.0, 0.0], &self.spec.bump);
        crate::transport::amplitude_closed_form(
            label,
            rho,
            chi,
            self.spec.xi0,
            self.spec.xi_phi,
            &self.params,
        )
    }
}

/// Legendre data of the Lagrangian section at a fixed time: strictly monotone
/// momentum samples η = ξρ, the Legendre phase L(η) = ρη − Ŝ, and the
/// momentum-side symbol amp(η) = a·|dρ/dη|^{1/2}.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    pub x0: f64,
    pub eta_samples: Vec<f64>,
    pub l_values: Vec<f64>,
    pub amp_values: Vec<Complex64>,
    /// ρ(η) = dL/dη at the nodes.
    pub rho_values: Vec<f64>,
    /// Launch labels ρ′, aligned with the η ordering.
    pub rho_labels: Vec<f64>,
    /// Azimuthal slice the table lives on (the e^{ikξφφ} factor is carried
    /// separately).
    pub phi: f64,
    pub xi0: f64,
    pub xi_phi: f64,
}

impl PhaseTable {
    /// Validate and normalize raw table data: η must be strictly monotone
    /// (ascending order is enforced, reversing all columns if needed) and the
    /// interior nodes must satisfy the Legendre consistency dL/dη = ρ.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x0: f64,
        mut eta: Vec<f64>,
        mut l: Vec<f64>,
        mut amp: Vec<Complex64>,
        mut rho: Vec<f64>,
        mut labels: Vec<f64>,
        xi0: f64,
        xi_phi: f64,
    ) -> Result<Self, CausticError> {
        let n = eta.len();
        assert!(
            n >= 5 && l.len() == n && amp.len() == n && rho.len() == n && labels.len() == n,
            "phase table columns must agree and hold at least 5 nodes"
        );
        if eta[n - 1] < eta[0] {
            eta.reverse();
            l.reverse();
            amp.reverse();
            rho.reverse();
            labels.reverse();
        }
        for i in 0..n - 1 {
            if eta[i + 1] <= eta[i] {
                return Err(CausticError::NonMonotoneMomentum { index: i });
            }
        }
        // Legendre consistency on interior nodes. The derivative estimate is
        // the cubic-spline slope (O(h⁴) in the interior), so the gap measures
        // the data and not the difference scheme; the outermost nodes are
        // skipped to stay clear of the natural boundary conditions.
        let spline = CubicSpline::new(&eta, &l);
        let skip = 10.min(n / 4).max(1);
        let mut max_gap: f64 = 0.0;
        for i in skip..n - skip {
            max_gap = max_gap.max((spline.deriv(eta[i]) - rho[i]).abs());
        }
        if max_gap > LEGENDRE_TOL {
            return Err(CausticError::LegendreInconsistent { max_gap });
        }
        Ok(Self {
            x0,
            eta_samples: eta,
            l_values: l,
            amp_values: amp,
            rho_values: rho,
            rho_labels: labels,
            phi: 0.0,
            xi0,
            xi_phi,
        })
    }

    /// Sign of L'' = dρ/dη at the middle of the table (one sign throughout a
    /// valid band-edge table).
    pub fn second_derivative_sign(&self) -> f64 {
        let m = self.eta_samples.len() / 2;
        let d = (self.rho_values[m + 1] - self.rho_values[m - 1])
            / (self.eta_samples[m + 1] - self.eta_samples[m - 1]);
        d.signum()
    }

    pub fn eta_range(&self) -> (f64, f64) {
        (self.eta_samples[0], *self.eta_samples.last().unwrap())
    }
}

/// The constant prefactor of the Maslov ansatz, calibrated on a band-edge
/// table so that the stationary-phase value of the integral reproduces the
/// geometric-optics field with no residual phase: e^{i(π/4)·sign L''}.
pub fn fold_factor(table: &PhaseTable) -> Complex64 {
    Complex64::from_polar(1.0, PI / 4.0 * table.second_derivative_sign())
}

/// Build the Legendre phase table of the fan at time x0: η_i = ξρ of ray i,
/// L_i = ρ_i η_i − Ŝ_i with Ŝ_i = S0(ρ′_i) − ξφ·Δφ_i(x0), and the momentum
/// symbol amp_i = a_i·|dρ/dη|^{1/2} from the closed-form transported
/// amplitude.
pub fn legendre_phase(fan: &RayFan, x0: f64) -> Result<PhaseTable, CausticError> {
    let n = fan.spec.n;
    let mut eta = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = fan.spec.label(i);
        let (r, dphi, e) = fan.ray_state(i, x0);
        let s_hat = fan.s0m[i] - fan.spec.xi_phi * dphi;
        eta.push(e);
        rho.push(r);
        l.push(r * e - s_hat);
        a.push(crate::transport::amplitude_closed_form(
            label,
            r,
            fan.chis[i],
            fan.spec.xi0,
            fan.spec.xi_phi,
            &fan.params,
        ));
        labels.push(label);
    }
    // |dρ/dη| at the nodes by centered differences (one-sided at the ends).
    let mut amp = Vec::with_capacity(n);
    for i in 0..n {
        let (j0, j1) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
        let l2 = (rho[j1] - rho[j0]) / (eta[j1] - eta[j0]);
        amp.push(Complex64::new(a[i] * l2.abs().sqrt(), 0.0));
    }
    PhaseTable::new(x0, eta, l, amp, rho, labels, fan.spec.xi0, fan.spec.xi_phi)
}

struct TableSplines {
    l: CubicSpline,
    rho: CubicSpline,
    amp_re: CubicSpline,
    amp_im: CubicSpline,
}

fn table_splines(table: &PhaseTable) -> TableSplines {
    let re: Vec<f64> = table.amp_values.iter().map(|c| c.re).collect();
    let im: Vec<f64> = table.amp_values.iter().map(|c| c.im).collect();
    TableSplines {
        l: CubicSpline::new(&table.eta_samples, &table.l_values),
        rho: CubicSpline::new(&table.eta_samples, &table.rho_values),
        amp_re: CubicSpline::new(&table.eta_samples, &re),
        amp_im: CubicSpline::new(&table.eta_samples, &im),
    }
}

/// Direct quadrature of the momentum-side oscillatory integral
///
///   √(k/2π) ∫ amp(η) e^{ik(ρη − L(η))} dη
///
/// on a uniform η grid fine enough for the fastest oscillation, with a cosine
/// taper on the outer 10% of the window (a no-op when the symbol is already
/// compactly supported inside it).
pub fn maslov_integral(table: &PhaseTable, k: f64, rho: f64) -> Result<Complex64, CausticError> {
    let (e0, e1) = table.eta_range();
    let width = e1 - e0;
    let slope = table
        .rho_values
        .iter()
        .map(|&r| (rho - r).abs())
        .fold(0.0_f64, f64::max);
    let periods = k * width * slope / (2.0 * PI);
    let needed = (NODES_PER_PERIOD * periods).ceil() as usize;
    if needed > MAX_QUAD_NODES {
        return Err(CausticError::UnderResolved { needed, cap: MAX_QUAD_NODES });
    }
    let n = needed.max(MIN_QUAD_NODES) | 1;
    let sp = table_splines(table);
    let h = width / (n - 1) as f64;
    // Endpoint damping is only needed when the symbol does not already vanish
    // at the window edges; tapering a compactly supported symbol would
    // suppress stationary points sitting near the edge of its support.
    let peak = table.amp_values.iter().map(|a| a.norm()).fold(0.0_f64, f64::max);
    let edge_amp = table.amp_values[0]
        .norm()
        .max(table.amp_values.last().unwrap().norm());
    let ramp = if edge_amp > 1e-9 * peak { 0.1 * width } else { 0.0 };
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let eta = e0 + h * j as f64;
        let edge = (eta - e0).min(e1 - eta);
        let w = if edge < ramp { 0.5 * (1.0 - (PI * edge / ramp).cos()) } else { 1.0 };
        let trap = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let amp = Complex64::new(sp.amp_re.eval(eta), sp.amp_im.eval(eta));
        let phase = k * (rho * eta - sp.l.eval(eta));
        sum += amp * Complex64::from_polar(w * trap, phase);
    }
    Ok((k / (2.0 * PI)).sqrt() * h * sum)
}

/// Diagnostics of the stationary point found by `stationary_phase_eval`.
#[derive(Clone, Copy, Debug)]
pub struct StationaryPointReport {
    pub eta0: f64,
    /// ρη0 − L(η0); equals the eikonal phase Ŝ∓(x0, ρ) of the matching family.
    pub phase_value: f64,
    /// L''(η0).
    pub second_derivative: f64,
    /// sign(−L''): the Maslov phase index of this evaluation, flipping across
    /// the caustic.
    pub maslov_sign: i32,
}

/// Leading stationary-phase value of the Maslov integral at (k, ρ):
///
///   amp(η0)·|L''|^{−1/2}·e^{ik(ρη0 − L)}·e^{i(π/4)·sign(−L'')}
///
/// where η0 solves L'(η) = ρ (unique on a band-edge table, where L'' keeps
/// one sign).
pub fn stationary_phase_eval(
    table: &PhaseTable,
    k: f64,
    rho: f64,
) -> Result<(Complex64, StationaryPointReport), CausticError> {
    let sp = table_splines(table);
    let (mut rlo, mut rhi) = (table.rho_values[0], *table.rho_values.last().unwrap());
    if rlo > rhi {
        std::mem::swap(&mut rlo, &mut rhi);
    }
    if rho < rlo || rho > rhi {
        return Err(CausticError::NoStationaryPoint { rho });
    }
    let eta0 = sp.rho.invert(rho);
    let l2 = sp.rho.deriv(eta0);
    if l2.abs() < DEGENERATE_L2 {
        return Err(CausticError::DegenerateStationaryPoint { second_derivative: l2 });
    }
    let amp0 = Complex64::new(sp.amp_re.eval(eta0), sp.amp_im.eval(eta0));
    let phase_value = rho * eta0 - sp.l.eval(eta0);
    let maslov_sign = if l2 > 0.0 { -1 } else { 1 };
    let value = amp0 / l2.abs().sqrt()
        * Complex64::from_polar(1.0, k * phase_value + PI / 4.0 * maslov_sign as f64);
    Ok((value, StationaryPointReport { eta0, phase_value, second_derivative: l2, maslov_sign }))
}

/// Probe labels over the interior of the bump support (the outermost sliver
/// is excluded: there the geometric field is below the normalization scale
/// and the relative comparison is dominated by the tails of neighbours).
fn probe_labels(fan: &RayFan, n: usize) -> Vec<f64> {
    let c = fan.spec.bump.center[0];
    let w = 0.80 * fan.spec.bump.width;
    (0..n).map(|i| c - w + 2.0 * w * i as f64 / (n - 1) as f64).collect()
}

/// Sup-norm mismatch (normalized by the peak geometric amplitude) between the
/// folded Maslov integral and the ingoing geometric-optics field on a
/// minus-side band-edge table.
pub fn band_edge_mismatch(fan: &RayFan, table: &PhaseTable, k: f64) -> Result<f64, CausticError> {
    let fold = fold_factor(table);
    let labels = probe_labels(fan, 15);
    let mut peak: f64 = 0.0;
    let mut probes = Vec::with_capacity(labels.len());
    for &lab in &labels {
        let (rho, _, _) = fan.ray_state_label(lab, table.x0)?;
        let a = fan.go_amp(lab, rho);
        peak = peak.max(a.abs());
        probes.push((rho, a));
    }
    let mut worst: f64 = 0.0;
    for (rho, a) in probes {
        let uq = fold * maslov_integral(table, k, rho)?;
        let ug = a * Complex64::from_polar(1.0, k * fan.s_minus(table.x0, rho));
        worst = worst.max((uq - ug).norm());
    }
    Ok(worst / peak)
}

/// Result of matching the two geometric-optics families across the caustic
/// band [t0 − ε, t0 + ε].
pub struct CrossingReport {
    pub table_minus: PhaseTable,
    pub table_plus: PhaseTable,
    /// Ansatz prefactor calibrated on the minus edge.
    pub fold: Complex64,
    /// e^{i(π/2)·sign L''₋}: the phase picked up by the amplitude across the
    /// fold caustic (Maslov index one).
    pub caustic_phase: Complex64,
    /// Outgoing amplitude per fan label at t0 + ε, aligned with
    /// `table_plus.rho_labels`.
    pub a_plus: Vec<Complex64>,
    /// Quadrature-vs-GO mismatch at `k_check` on the minus edge.
    pub mismatch: f64,
    /// |ρη0 − L − Ŝ∓| at the center probe on each edge.
    pub phase_identity_minus: f64,
    pub phase_identity_plus: f64,
    /// Worst relative gap between the stationary-phase modulus of the plus
    /// table and the closed-form outgoing amplitude over the probes.
    pub flux_error: f64,
}

/// Build both band-edge tables, verify the representation against the
/// ingoing family, and cross the band: the outgoing amplitude is the
/// closed-form transport continuation (the Δ^{1/4} rule, which the turning
/// point does not interrupt) times the π/2 caustic phase fixed by the
/// stationary-phase sign flip.
pub fn match_and_cross(
    fan: &RayFan,
    band_eps: f64,
    k_check: f64,
) -> Result<CrossingReport, CausticError> {
    let table_minus = legendre_phase(fan, fan.t0c - band_eps)?;
    let table_plus = legendre_phase(fan, fan.t0c + band_eps)?;
    let sig_minus = table_minus.second_derivative_sign();
    let sig_plus = table_plus.second_derivative_sign();
    if sig_minus == sig_plus {
        return Err(CausticError::MatchFailure(format!(
            "L'' did not change sign across the band ({sig_minus} on both edges); \
             widen the band past the last turning time of the fan"
        )));
    }
    let fold = fold_factor(&table_minus);
    let caustic_phase = Complex64::from_polar(1.0, PI / 2.0 * sig_minus);

    let mismatch = band_edge_mismatch(fan, &table_minus, k_check)?;
    if mismatch > 5.0 / k_check {
        return Err(CausticError::MatchFailure(format!(
            "minus-edge mismatch {mismatch:.3e} exceeds 5/k = {:.3e}",
            5.0 / k_check
        )));
    }

    // Phase identity at the center probe on each edge.
    let (rho_b, _, _) = fan.ray_state_label(fan.spec.rho_center, table_minus.x0)?;
    let (_, rep_b) = stationary_phase_eval(&table_minus, k_check, rho_b)?;
    let phase_identity_minus =
        (rep_b.phase_value - fan.s_minus(table_minus.x0, rho_b)).abs();
    let (rho_a, _, _) = fan.ray_state_label(fan.spec.rho_center, table_plus.x0)?;
    let (_, rep_a) = stationary_phase_eval(&table_plus, k_check, rho_a)?;
    let phase_identity_plus = (rep_a.phase_value - fan.s_plus(table_plus.x0, rho_a)).abs();

    // Outgoing amplitudes: closed-form continuation times the caustic phase.
    let a_plus: Vec<Complex64> = table_plus
        .rho_labels
        .iter()
        .zip(&table_plus.rho_values)
        .map(|(&lab, &rho)| caustic_phase * fan.go_amp(lab, rho))
        .collect();

    // Flux continuity: the SP modulus of the plus table must reproduce the
    // outgoing amplitude (the |dρ/dη|^{1/2} factors cancel).
    let mut flux_error: f64 = 0.0;
    for &lab in &probe_labels(fan, 15) {
        let (rho, _, _) = fan.ray_state_label(lab, table_plus.x0)?;
        let (val, _) = stationary_phase_eval(&table_plus, k_check, rho)?;
        let target = fan.go_amp(lab, rho).abs();
        flux_error = flux_error.max((val.norm() - target).abs() / target);
    }
    if flux_error > 0.02 {
        return Err(CausticError::MatchFailure(format!(
            "amplitude-flux continuity violated: relative gap {flux_error:.3e}"
        )));
    }

    Ok(CrossingReport {
        table_minus,
        table_plus,
        fold,
        caustic_phase,
        a_plus,
        mismatch,
        phase_identity_minus,
        phase_identity_plus,
        flux_error,
    })
}
