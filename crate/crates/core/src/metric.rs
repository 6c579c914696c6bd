//! Reissner–Nordström metric data: the horizon function, the optical
//! Hamiltonians and the radial discriminant Δ.
//!
//! Everything downstream (geodesics, eikonal, transport, caustic) pulls its
//! coefficient functions from here. All derivatives are analytic; nothing in
//! this module differentiates numerically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizon structure of the metric, decided by comparing e² against m².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// e² < m²: two horizons r₋ < r₊.
    SubExtremal,
    /// e² = m² (exact comparison): degenerate horizon r₊ = r₋ = m.
    Extremal,
    /// e² > m²: naked singularity, f(r) > 0 for all r > 0.
    Naked,
}

/// Which root of the radial quadratic H0 = 0 a state lives on.
///
/// Minus is the infalling root, Plus the outgoing one; a trajectory switches
/// from Minus to Plus at its turning point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Minus,
    Plus,
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("radial coordinate must be positive, got {0}")]
    DomainError(f64),
    #[error("discriminant is negative at rho={rho}: delta={delta}")]
    NegativeDiscriminant { rho: f64, delta: f64 },
    #[error("plus-branch momentum has a pole at the horizon (f(rho)=0 at rho={0})")]
    HorizonPole(f64),
}

/// Mass, charge and the derived horizon data.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricParams {
    pub m: f64,
    pub e: f64,
    pub regime: Regime,
    /// Outer horizon; `None` in the naked regime.
    pub r_plus: Option<f64>,
    /// Inner horizon; `None` in the naked regime. Zero for e = 0
    /// (Schwarzschild), where it coincides with the central singularity.
    pub r_minus: Option<f64>,
}

/// Planar phase-space state (x0, ρ, φ; ξ0, ξρ, ξφ) restricted to x3 = 0.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseState {
    pub x0: f64,
    pub rho: f64,
    pub phi: f64,
    pub xi0: f64,
    pub xi_rho: f64,
    pub xi_phi: f64,
    pub branch: Branch,
}

/// Full Cartesian state (x0, x; ξ0, ξ).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CartesianState {
    pub x0: f64,
    pub x: [f64; 3],
    pub xi0: f64,
    pub xi: [f64; 3],
}

/// Classify the regime and compute the horizons.
pub fn classify(m: f64, e: f64) -> Result<MetricParams, MetricError> {
    if m <= 0.0 {
        return Err(MetricError::NonPositiveMass(m));
    }
    let (regime, r_plus, r_minus) = if e * e < m * m {
        let s = (m * m - e * e).sqrt();
        (Regime::SubExtremal, Some(m + s), Some(m - s))
    } else if e * e == m * m {
        (Regime::Extremal, Some(m), Some(m))
    } else {
        (Regime::Naked, None, None)
    };
    Ok(MetricParams { m, e, regime, r_plus, r_minus })
}

impl MetricParams {
    /// The horizon function f(r) = 1 − 2m/r + e²/r².
    pub fn f(&self, r: f64) -> f64 {
        1.0 - 2.0 * self.m / r + self.e * self.e / (r * r)
    }

    /// f′(r) = 2m/r² − 2e²/r³.
    pub fn f_prime(&self, r: f64) -> f64 {
        2.0 * self.m / (r * r) - 2.0 * self.e * self.e / (r * r * r)
    }

    /// Factored form f(r) = (r − r₊)(r − r₋)/r², available when horizons exist.
    pub fn f_factored(&self, r: f64) -> Option<f64> {
        match (self.r_plus, self.r_minus) {
            (Some(rp), Some(rm)) => Some((r - rp) * (r - rm) / (r * r)),
            _ => None,
        }
    }

    /// Escape radius used to classify unbound rays in the naked regime.
    pub fn escape_radius(&self) -> f64 {
        100.0 * self.m.max(self.r_plus.unwrap_or(0.0))
    }
}

/// Guarded evaluation of f with a domain check, for external callers.
pub fn lapse_f(r: f64, params: &MetricParams) -> Result<f64, MetricError> {
    if r <= 0.0 {
        return Err(MetricError::DomainError(r));
    }
    Ok(params.f(r))
}

/// Full Cartesian Hamiltonian
/// H = ξ0² − |ξ|² + (2m/r − e²/r²)(−ξ0 + x̂·ξ)².
///
/// The last factor is built from the unit radial covector component
/// ξr = x·ξ/|x|: that is what the inverse of the metric produces, and it is
/// the only reading under which the planar restriction reproduces H0 (the
/// displayed symbol elides the 1/r and is exact only at r = 1).
pub fn hamiltonian_cartesian(s: &CartesianState, params: &MetricParams) -> Result<f64, MetricError> {
    let r2 = s.x[0] * s.x[0] + s.x[1] * s.x[1] + s.x[2] * s.x[2];
    if r2 == 0.0 {
        return Err(MetricError::DomainError(0.0));
    }
    let r = r2.sqrt();
    let g = 2.0 * params.m / r - params.e * params.e / r2; // = 1 - f
    let b = -s.xi0 + (s.x[0] * s.xi[0] + s.x[1] * s.xi[1] + s.x[2] * s.xi[2]) / r;
    let xi2 = s.xi[0] * s.xi[0] + s.xi[1] * s.xi[1] + s.xi[2] * s.xi[2];
    Ok(s.xi0 * s.xi0 - xi2 + g * b * b)
}

/// Planar Hamiltonian
/// H0 = (2−f)ξ0² + 2(f−1)ξ0ξρ − fξρ² − ξφ²/ρ².
pub fn hamiltonian_planar(
    rho: f64,
    xi0: f64,
    xi_rho: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<f64, MetricError> {
    if rho <= 0.0 {
        return Err(MetricError::DomainError(rho));
    }
    let f = params.f(rho);
    Ok((2.0 - f) * xi0 * xi0 + 2.0 * (f - 1.0) * xi0 * xi_rho - f * xi_rho * xi_rho
        - xi_phi * xi_phi / (rho * rho))
}

/// H0 evaluated in the factored form −f·(ξρ − ξρ⁺)(ξρ − ξρ⁻).
///
/// Algebraically identical to [`hamiltonian_planar`] but conditioned for the
/// deep inner-horizon tail, where ξρ on the Plus branch grows like 1/f and the
/// direct quadratic suffers catastrophic cancellation.
pub fn hamiltonian_planar_factored(
    rho: f64,
    xi0: f64,
    xi_rho: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<f64, MetricError> {
    let f = params.f(rho);
    if f.abs() < HORIZON_F_TOL {
        // At a horizon the quadratic degenerates to a linear equation; the
        // direct form is perfectly conditioned there.
        return hamiltonian_planar(rho, xi0, xi_rho, xi_phi, params);
    }
    let minus = xi_rho_minus(rho, xi0, xi_phi, params)?;
    let plus = self::xi_rho(rho, xi0, xi_phi, Branch::Plus, params)?;
    Ok(-f * (xi_rho - plus) * (xi_rho - minus))
}

/// Below this |f| a radius counts as "on a horizon" for the pole checks:
/// f(r±) evaluates to a few ulps rather than exactly zero.
pub const HORIZON_F_TOL: f64 = 1e-12;

/// Radial discriminant Δ = ξ0² − f(ρ)ξφ²/ρ².
pub fn discriminant_delta(rho: f64, xi0: f64, xi_phi: f64, params: &MetricParams) -> f64 {
    xi0 * xi0 - params.f(rho) * xi_phi * xi_phi / (rho * rho)
}

/// dΔ/dρ, analytic.
pub fn discriminant_delta_prime(rho: f64, xi_phi: f64, params: &MetricParams) -> f64 {
    let w = xi_phi * xi_phi / (rho * rho);
    let w_prime = -2.0 * w / rho;
    -(params.f_prime(rho) * w + params.f(rho) * w_prime)
}

fn xi_rho_minus(rho: f64, xi0: f64, xi_phi: f64, params: &MetricParams) -> Result<f64, MetricError> {
    let delta = discriminant_delta(rho, xi0, xi_phi, params);
    if delta < 0.0 {
        return Err(MetricError::NegativeDiscriminant { rho, delta });
    }
    let w = xi_phi * xi_phi / (rho * rho);
    Ok(xi0 - w / (xi0 + delta.sqrt()))
}

/// Radial momentum root ξρ of H0 = 0 on the requested branch.
///
/// The Minus branch uses the rationalized form ξ0 − (ξφ²/ρ²)/(ξ0 + √Δ), which
/// is finite across both horizons; the Plus branch uses the direct quadratic
/// root ((f−1)ξ0 − √Δ)/f and genuinely has a pole at f = 0.
pub fn xi_rho(
    rho: f64,
    xi0: f64,
    xi_phi: f64,
    branch: Branch,
    params: &MetricParams,
) -> Result<f64, MetricError> {
    let delta = discriminant_delta(rho, xi0, xi_phi, params);
    if delta < 0.0 {
        return Err(MetricError::NegativeDiscriminant { rho, delta });
    }
    match branch {
        Branch::Minus => xi_rho_minus(rho, xi0, xi_phi, params),
        Branch::Plus => {
            let f = params.f(rho);
            if f.abs() < HORIZON_F_TOL {
                return Err(MetricError::HorizonPole(rho));
            }
            Ok(((f - 1.0) * xi0 - delta.sqrt()) / f)
        }
    }
}

/// d(ξρ⁻)/dρ, differentiated analytically from the rationalized form.
pub fn xi_rho_minus_prime(
    rho: f64,
    xi0: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<f64, MetricError> {
    let delta = discriminant_delta(rho, xi0, xi_phi, params);
    if delta <= 0.0 {
        return Err(MetricError::NegativeDiscriminant { rho, delta });
    }
    let sd = delta.sqrt();
    let w = xi_phi * xi_phi / (rho * rho);
    let w_prime = -2.0 * w / rho;
    let sd_prime = discriminant_delta_prime(rho, xi_phi, params) / (2.0 * sd);
    let denom = xi0 + sd;
    Ok(-(w_prime * denom - w * sd_prime) / (denom * denom))
}

/// d(ξρ⁺)/dρ, from the direct root; requires f ≠ 0.
pub fn xi_rho_plus_prime(
    rho: f64,
    xi0: f64,
    xi_phi: f64,
    params: &MetricParams,
) -> Result<f64, MetricError> {
    let delta = discriminant_delta(rho, xi0, xi_phi, params);
    if delta <= 0.0 {
        return Err(MetricError::NegativeDiscriminant { rho, delta });
    }
    let f = params.f(rho);
    if f.abs() < HORIZON_F_TOL {
        return Err(MetricError::HorizonPole(rho));
    }
    let sd = delta.sqrt();
    let fp = params.f_prime(rho);
    let sd_prime = discriminant_delta_prime(rho, xi_phi, params) / (2.0 * sd);
    // d/drho of ((f-1)*xi0 - sqrt(D))/f by the quotient rule.
    Ok(((fp * xi0 - sd_prime) * f - ((f - 1.0) * xi0 - sd) * fp) / (f * f))
}

/// Map a planar phase state to the Cartesian chart (the plane x3 = 0).
pub fn planar_to_cartesian(s: &PhaseState) -> CartesianState {
    let (sin_phi, cos_phi) = s.phi.sin_cos();
    // Covector transform: xi_x = xi_rho cos φ − (ξφ/ρ) sin φ, etc.
    CartesianState {
        x0: s.x0,
        x: [s.rho * cos_phi, s.rho * sin_phi, 0.0],
        xi0: s.xi0,
        xi: [
            s.xi_rho * cos_phi - s.xi_phi / s.rho * sin_phi,
            s.xi_rho * sin_phi + s.xi_phi / s.rho * cos_phi,
            0.0,
        ],
    }
}
