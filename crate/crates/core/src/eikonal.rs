//! Phase functions S∓ on ray bundles: the Lagrangian representation of the
//! eikonal, the lift of planar data to 3D by rotations about the y2-axis,
//! finite-difference Jacobians for caustic detection, and residual checks of
//! the eikonal equation.

use crate::geodesic::{self, GeodesicError, IntegrateOpts, Trajectory};
use crate::metric::{self, Branch, CartesianState, MetricError, MetricParams};
use crate::quad;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EikonalError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error("invalid bundle specification: {0}")]
    InvalidSpec(String),
    #[error("Jacobian finite differences inconsistent at x0={x0} (Richardson gap {gap:.3})")]
    GridTooCoarse { x0: f64, gap: f64 },
    #[error("branch undefined near the turning band at x0={0} (|Δ| too small)")]
    BranchUndefined(f64),
}

/// Initial-data patch V0 × (−δ, δ) and the grid resolving it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BundleSpec {
    pub rho_center: f64,
    pub phi_center: f64,
    /// Half-width of V0 in both ρ′ and φ′.
    pub eps: f64,
    /// Half-width of the rotation-angle interval.
    pub delta: f64,
    pub n_rho: usize,
    pub n_phi: usize,
    pub n_alpha: usize,
    pub xi0: f64,
    pub xi_phi: f64,
    /// Reference radius of the phase integral; S is defined up to this
    /// convention and the choice is recorded in output metadata.
    pub rho_10: f64,
}

impl BundleSpec {
    pub fn canonical(rho_center: f64, xi0: f64, xi_phi: f64) -> Self {
        Self {
            rho_center,
            phi_center: 0.0,
            eps: 0.05,
            delta: 0.05,
            n_rho: 9,
            n_phi: 9,
            n_alpha: 5,
            xi0,
            xi_phi,
            rho_10: rho_center + 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EikonalError> {
        if !(self.eps > 0.0 && self.delta > 0.0) {
            return Err(EikonalError::InvalidSpec("eps and delta must be positive".into()));
        }
        for (name, n) in [("n_rho", self.n_rho), ("n_phi", self.n_phi), ("n_alpha", self.n_alpha)]
        {
            if n < 3 || n % 2 == 0 {
                return Err(EikonalError::InvalidSpec(format!(
                    "{name} must be odd and >= 3, got {n}"
                )));
            }
        }
        if self.rho_10 <= self.rho_center + self.eps {
            return Err(EikonalError::InvalidSpec(format!(
                "rho_10 = {} must exceed rho_center + eps = {}",
                self.rho_10,
                self.rho_center + self.eps
            )));
        }
        Ok(())
    }

    pub fn rho_p(&self, i: usize) -> f64 {
        self.rho_center - self.eps
            + 2.0 * self.eps * i as f64 / (self.n_rho - 1) as f64
    }

    pub fn phi_p(&self, j: usize) -> f64 {
        self.phi_center - self.eps
            + 2.0 * self.eps * j as f64 / (self.n_phi - 1) as f64
    }

    pub fn alpha(&self, k: usize) -> f64 {
        -self.delta + 2.0 * self.delta * k as f64 / (self.n_alpha - 1) as f64
    }
}

/// One planar ray of the bundle with its Lagrangian phase value.
#[derive(Debug)]
pub struct Ray {
    pub rho_p: f64,
    pub phi_p: f64,
    pub s0: f64,
    /// Turning time, when the ray has one within the integrated span.
    pub t0: Option<f64>,
    pub traj: Trajectory,
}

/// Bundle of rays over the (ρ′, φ′) grid. The α direction is carried by the
/// rotations O_α, which commute with the flow; rays at α ≠ 0 are exact
/// rotations of the planar ones and are represented implicitly.
#[derive(Debug)]
pub struct RayBundle {
    pub spec: BundleSpec,
    pub params: MetricParams,
    /// Row-major over (i_rho, j_phi).
    pub rays: Vec<Ray>,
    /// First zero-crossing time of the planar Jacobian, per interior node
    /// (None at boundary nodes and where no crossing was found).
    pub caustic_time: Vec<Option<f64>>,
    /// Common time horizon over which all rays are defined.
    pub x0_common: f64,
}

/// Phase value S0⁻(ρ′, φ′) = ∫_{ρ10}^{ρ′} ξρ⁻(ρ1) dρ1 + φ′ξφ.
pub fn s0_minus(
    rho_p: f64,
    phi_p: f64,
    xi0: f64,
    xi_phi: f64,
    rho_10: f64,
    params: &MetricParams,
) -> Result<f64, EikonalError> {
    let (lo, hi) = if rho_p < rho_10 { (rho_p, rho_10) } else { (rho_10, rho_p) };
    for i in 0..=200 {
        let r = lo + (hi - lo) * i as f64 / 200.0;
        let d = metric::discriminant_delta(r, xi0, xi_phi, params);
        if d <= 0.0 {
            return Err(MetricError::NegativeDiscriminant { rho: r, delta: d }.into());
        }
    }
    let integral = quad::integrate(
        |r| metric::xi_rho(r, xi0, xi_phi, Branch::Minus, params).unwrap_or(f64::NAN),
        rho_10,
        rho_p,
        1e-11,
    );
    Ok(integral + phi_p * xi_phi)
}

/// Lift a planar point to the rotated plane Π_α:
/// y = (ρ′cosφ′cosα, ρ′sinφ′, ρ′cosφ′sinα).
pub fn rotate_plane(rho_p: f64, phi_p: f64, alpha: f64) -> [f64; 3] {
    let (sp, cp) = phi_p.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    [rho_p * cp * ca, rho_p * sp, rho_p * cp * sa]
}

/// Rotate a planar Cartesian phase state into Π_α (positions and covectors
/// transform identically under the orthogonal map).
pub fn rotate_state(s: &CartesianState, alpha: f64) -> CartesianState {
    let (sa, ca) = alpha.sin_cos();
    // O_α sends the plane x3 = 0 to x3 = x1 sinα, fixing the x2-axis.
    let fwd = |v: [f64; 3]| [v[0] * ca - v[2] * sa, v[1], v[0] * sa + v[2] * ca];
    CartesianState { x0: s.x0, x: fwd(s.x), xi0: s.xi0, xi: fwd(s.xi) }
}

impl RayBundle {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.spec.n_phi + j
    }

    pub fn ray(&self, i: usize, j: usize) -> &Ray {
        &self.rays[self.idx(i, j)]
    }

    pub fn center_ray(&self) -> &Ray {
        self.ray(self.spec.n_rho / 2, self.spec.n_phi / 2)
    }

    /// Planar 2×2 Jacobian of Eq. (3.5) at an interior node, by centered
    /// finite differences across the grid.
    pub fn jacobian_planar(&self, i: usize, j: usize, x0: f64) -> f64 {
        let (n_rho, n_phi) = (self.spec.n_rho, self.spec.n_phi);
        assert!(i >= 1 && i + 1 < n_rho && j >= 1 && j + 1 < n_phi, "interior nodes only");
        let h_rho = self.ray(i + 1, j).rho_p - self.ray(i, j).rho_p;
        let h_phi = self.ray(i, j + 1).phi_p - self.ray(i, j).phi_p;
        let sp = |ii: usize, jj: usize| {
            let st = self.ray(ii, jj).traj.eval_at_x0(x0);
            (st.rho, st.phi)
        };
        let (r_ip, f_ip) = sp(i + 1, j);
        let (r_im, f_im) = sp(i - 1, j);
        let (r_jp, f_jp) = sp(i, j + 1);
        let (r_jm, f_jm) = sp(i, j - 1);
        let drho_drp = (r_ip - r_im) / (2.0 * h_rho);
        let dphi_drp = (f_ip - f_im) / (2.0 * h_rho);
        let drho_dfp = (r_jp - r_jm) / (2.0 * h_phi);
        let dphi_dfp = (f_jp - f_jm) / (2.0 * h_phi);
        drho_drp * dphi_dfp - drho_dfp * dphi_drp
    }

    /// 3D Jacobian of the (ρ′, φ′, α)-map of Eq. (3.11) at an interior node,
    /// evaluated on the central plane. The α-column is finite-differenced
    /// over the rotation grid; the planar columns reuse [`jacobian_planar`].
    pub fn jacobian_3d(&self, i: usize, j: usize, x0: f64) -> f64 {
        let st = self.ray(i, j).traj.eval_at_x0(x0);
        let c = metric::planar_to_cartesian(&st);
        // Only x3 varies to first order in α at α = 0, so the determinant
        // factorizes into (planar Cartesian block) · (∂x3/∂α).
        let k = self.spec.n_alpha / 2;
        let da = self.spec.alpha(k + 1) - self.spec.alpha(k);
        let x3_p = rotate_state(&c, da).x[2];
        let x3_m = rotate_state(&c, -da).x[2];
        let dx3_da = (x3_p - x3_m) / (2.0 * da);
        // Planar polar→Cartesian block contributes a factor ρ.
        st.rho * self.jacobian_planar(i, j, x0) * dx3_da
    }

    /// Richardson consistency check of the planar FD Jacobian at the center
    /// node: the wide-stencil (2h) estimate must agree within 10% wherever
    /// the Jacobian is not near its zero crossing.
    fn richardson_check(&self, x0: f64) -> Result<(), EikonalError> {
        let (i, j) = (self.spec.n_rho / 2, self.spec.n_phi / 2);
        if i < 2 || j < 2 || i + 2 >= self.spec.n_rho || j + 2 >= self.spec.n_phi {
            return Ok(()); // grid too small for the wide stencil; skip
        }
        let h_rho = self.ray(i + 1, j).rho_p - self.ray(i, j).rho_p;
        let narrow = self.jacobian_planar(i, j, x0);
        let rho_at = |ii: usize| self.ray(ii, j).traj.eval_at_x0(x0).rho;
        let wide = (rho_at(i + 2) - rho_at(i - 2)) / (4.0 * h_rho);
        let narrow_dr = (rho_at(i + 1) - rho_at(i - 1)) / (2.0 * h_rho);
        let scale = narrow_dr.abs().max(wide.abs());
        if scale < 0.1 || narrow.abs() < 0.1 {
            return Ok(()); // near the caustic zero; relative check meaningless
        }
        let gap = (wide - narrow_dr).abs() / scale;
        if gap > 0.10 {
            return Err(EikonalError::GridTooCoarse { x0, gap });
        }
        Ok(())
    }
}

/// Integrate every grid ray, attach the Lagrangian phase values S0⁻, and
/// locate the first Jacobian zero crossing per interior node.
pub fn propagate_bundle(
    spec: &BundleSpec,
    x0_max: f64,
    opts: &IntegrateOpts,
    params: &MetricParams,
) -> Result<RayBundle, EikonalError> {
    spec.validate()?;
    let nodes: Vec<(usize, usize)> =
        (0..spec.n_rho).flat_map(|i| (0..spec.n_phi).map(move |j| (i, j))).collect();
    let rays: Vec<Ray> = nodes
        .par_iter()
        .map(|&(i, j)| -> Result<Ray, EikonalError> {
            let rho_p = spec.rho_p(i);
            let phi_p = spec.phi_p(j);
            let init = geodesic::initial_minus_state(rho_p, phi_p, spec.xi0, spec.xi_phi, params)?;
            let traj = geodesic::integrate(&init, x0_max, opts, params)?;
            let s0 = s0_minus(rho_p, phi_p, spec.xi0, spec.xi_phi, spec.rho_10, params)?;
            let t0 = traj.turning_time();
            Ok(Ray { rho_p, phi_p, s0, t0, traj })
        })
        .collect::<Result<_, _>>()?;

    let x0_common = rays
        .iter()
        .map(|r| r.traj.x0_end())
        .fold(f64::INFINITY, f64::min);

    let mut bundle = RayBundle {
        spec: *spec,
        params: *params,
        rays,
        caustic_time: Vec::new(),
        x0_common,
    };

    // Richardson sanity at a few early times (before any caustic).
    let t_probe_max = bundle
        .rays
        .iter()
        .filter_map(|r| r.t0)
        .fold(x0_common, f64::min)
        .min(x0_common);
    for frac in [0.1, 0.35, 0.6] {
        bundle.richardson_check(frac * 0.8 * t_probe_max)?;
    }

    // First J zero crossing per node (interior only).
    let mut caustic = vec![None; bundle.rays.len()];
    for i in 1..spec.n_rho - 1 {
        for j in 1..spec.n_phi - 1 {
            let n_scan = 400;
            let end = x0_common * (1.0 - 1e-9);
            let mut prev_t = 0.0;
            let mut prev_j = bundle.jacobian_planar(i, j, prev_t);
            for q in 1..=n_scan {
                let t = end * q as f64 / n_scan as f64;
                let jv = bundle.jacobian_planar(i, j, t);
                if prev_j * jv < 0.0 {
                    // Bisect the crossing.
                    let (mut lo, mut hi) = (prev_t, t);
                    let lo_neg = prev_j < 0.0;
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if (bundle.jacobian_planar(i, j, mid) < 0.0) == lo_neg {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    caustic[i * spec.n_phi + j] = Some(0.5 * (lo + hi));
                    break;
                }
                prev_t = t;
                prev_j = jv;
            }
        }
    }
    bundle.caustic_time = caustic;
    Ok(bundle)
}

/// Residual of the eikonal equation (the quadratic form of Eq. 3.7) at a ray
/// point: S_{x0} = ξ0, S_φ = ξφ and S_ρ is the branch root at the ray's
/// current radius.
pub fn eikonal_residual(bundle: &RayBundle, i: usize, j: usize, x0: f64) -> Result<f64, EikonalError> {
    let st = bundle.ray(i, j).traj.eval_at_x0(x0);
    let d = metric::discriminant_delta(st.rho, st.xi0, st.xi_phi, &bundle.params);
    if d <= 1e-8 * st.xi0 * st.xi0 {
        return Err(EikonalError::BranchUndefined(x0));
    }
    let s_rho = metric::xi_rho(st.rho, st.xi0, st.xi_phi, st.branch, &bundle.params)?;
    Ok(metric::hamiltonian_planar(st.rho, st.xi0, s_rho, st.xi_phi, &bundle.params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::classify;

    fn canonical_bundle() -> (MetricParams, RayBundle) {
        let p = classify(1.0, 0.6).unwrap();
        let spec = BundleSpec::canonical(3.0, 1.0, 1.0);
        let opts = IntegrateOpts::for_params(&p);
        let b = propagate_bundle(&spec, 40.0, &opts, &p).unwrap();
        (p, b)
    }

    #[test]
    fn s0_empty_integral() {
        let p = classify(1.0, 0.6).unwrap();
        assert_eq!(s0_minus(4.0, 0.0, 1.0, 1.0, 4.0, &p).unwrap(), 0.0);
    }

    // Flat surrogate: with m → 0 the rationalized Minus root tends to +ξ0
    // (ingoing contract dρ/dx0 = −1), so S0 ≈ ξ0(ρ′ − ρ10).
    #[test]
    fn s0_flat_surrogate() {
        let p = classify(1e-9, 0.0).unwrap();
        let v = s0_minus(3.0, 0.0, 1.0, 0.0, 4.0, &p).unwrap();
        assert!((v - (3.0 - 4.0)).abs() < 1e-7, "S0 = {v}");
    }

    #[test]
    fn s0_derivative_is_momentum_root() {
        let p = classify(1.0, 0.6).unwrap();
        let h = 1e-5;
        for &rp in &[2.5, 3.0, 3.5] {
            let fd = (s0_minus(rp + h, 0.0, 1.0, 1.0, 4.0, &p).unwrap()
                - s0_minus(rp - h, 0.0, 1.0, 1.0, 4.0, &p).unwrap())
                / (2.0 * h);
            let xr = metric::xi_rho(rp, 1.0, 1.0, Branch::Minus, &p).unwrap();
            assert!((fd - xr).abs() < 1e-6, "rp={rp}: {fd} vs {xr}");
        }
        // dS0/dφ′ = ξφ exactly.
        let dphi = (s0_minus(3.0, h, 1.0, 1.0, 4.0, &p).unwrap()
            - s0_minus(3.0, -h, 1.0, 1.0, 4.0, &p).unwrap())
            / (2.0 * h);
        assert!((dphi - 1.0).abs() < 1e-10);
    }

    #[test]
    fn s0_rejects_negative_discriminant() {
        let p = classify(1.0, 0.6).unwrap();
        // Interval dips below the turning radius where Δ < 0.
        assert!(matches!(
            s0_minus(0.05, 0.0, 1.0, 1.0, 4.0, &p),
            Err(EikonalError::Metric(MetricError::NegativeDiscriminant { .. }))
        ));
    }

    #[test]
    fn rotate_plane_identities() {
        let y = rotate_plane(3.0, 0.4, 0.0);
        assert!((y[0] - 3.0 * 0.4_f64.cos()).abs() < 1e-15);
        assert!((y[1] - 3.0 * 0.4_f64.sin()).abs() < 1e-15);
        assert_eq!(y[2], 0.0);
        for &a in &[0.3, -0.7, 1.2] {
            let y = rotate_plane(3.0, 0.4, a);
            let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            assert!((n - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rotated_state_closes_cartesian_hamiltonian() {
        let p = classify(1.0, 0.6).unwrap();
        let init = geodesic::initial_minus_state(3.0, 0.2, 1.0, 1.0, &p).unwrap();
        let c = metric::planar_to_cartesian(&init);
        for &a in &[0.0, 0.05, -0.05, 0.4] {
            let r = rotate_state(&c, a);
            let h = metric::hamiltonian_cartesian(&r, &p).unwrap();
            assert!(h.abs() < 1e-12, "alpha={a}: H = {h}");
            let n2: f64 = r.x.iter().map(|v| v * v).sum();
            assert!((n2.sqrt() - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn bundle_jacobians_and_caustic() {
        // Finer patch than the default: the J zero-crossing locator carries
        // an O(h²) finite-difference bias and the 1e−3 cross-check against
        // the turning time needs h = eps/4 = 0.005.
        let p = classify(1.0, 0.6).unwrap();
        let mut spec = BundleSpec::canonical(3.0, 1.0, 1.0);
        spec.eps = 0.02;
        let opts = IntegrateOpts::for_params(&p);
        let b = propagate_bundle(&spec, 40.0, &opts, &p).unwrap();
        let (ic, jc) = (b.spec.n_rho / 2, b.spec.n_phi / 2);
        // Initial condition: identity map, J = 1.
        let j0 = b.jacobian_planar(ic, jc, 1e-6);
        assert!((j0 - 1.0).abs() < 1e-3, "J(0) = {j0}");
        // 3D Jacobian nonzero initially (≈ ρ′² cos φ′).
        let j3 = b.jacobian_3d(ic, jc, 1e-6);
        assert!((j3 - 9.0).abs() < 0.1, "J3(0) = {j3}");
        // Bounded away from zero before the turning time, sign change at it.
        let t0 = b.center_ray().t0.unwrap();
        let mut t = 0.2;
        while t < t0 - 0.5 {
            assert!(b.jacobian_planar(ic, jc, t) > 0.05, "J({t})");
            t += 0.4;
        }
        let tc = b.caustic_time[b.idx(ic, jc)].expect("caustic crossing found");
        assert!(
            (tc - t0).abs() < 1e-3,
            "J crossing {tc} vs center turning {t0}"
        );
    }

    #[test]
    fn bundle_phase_residuals() {
        let (p, b) = canonical_bundle();
        let (ic, jc) = (b.spec.n_rho / 2, b.spec.n_phi / 2);
        let t0 = b.center_ray().t0.unwrap();
        let mut t = 0.3;
        while t < t0 - 0.6 {
            let r = eikonal_residual(&b, ic, jc, t).unwrap();
            assert!(r.abs() <= 1e-9, "residual {r} at {t}");
            t += 0.7;
        }
        // Perturbation sensitivity: shifting S_ρ by 1e−3 moves the residual
        // to O(1e−3 · scale).
        let st = b.ray(ic, jc).traj.eval_at_x0(1.0);
        let s_rho = metric::xi_rho(st.rho, 1.0, 1.0, Branch::Minus, &p).unwrap() + 1e-3;
        let r = metric::hamiltonian_planar(st.rho, 1.0, s_rho, 1.0, &p).unwrap();
        assert!(r.abs() > 1e-5 && r.abs() < 1e-1, "perturbed residual {r}");
    }

    #[test]
    fn spec_validation() {
        let mut s = BundleSpec::canonical(3.0, 1.0, 1.0);
        s.n_rho = 4;
        assert!(matches!(s.validate(), Err(EikonalError::InvalidSpec(_))));
        let mut s = BundleSpec::canonical(3.0, 1.0, 1.0);
        s.rho_10 = 3.01;
        assert!(matches!(s.validate(), Err(EikonalError::InvalidSpec(_))));
        assert!(BundleSpec::canonical(3.0, 1.0, 1.0).validate().is_ok());
    }
}
