//! Large-deviation rate function for the lower tail of the ASEP current.
//!
//! With `S(ζ) = ζ/(1−ζ) + ((1−ε)/4)·log(−ζ)` (principal logarithm), the
//! critical points are `ζ1 = (√ε−1)/(√ε+1)` and `ζ2 = 1/ζ1`, and
//! `Φ̂₊(ε) = S(ζ1) − S(ζ2) = √ε − (1−ε)·atanh(√ε)`. The contour argument needs
//! `τ < |ζ1| < 1 < |ζ2| < |ζ1|/τ`, which holds exactly for
//! `ε < ε° = ((1−√τ)/(1+√τ))²`; `Φ₊` freezes `Φ̂₊` at `ε°` beyond that.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Parameters derived from the jump bias `q ∈ (1/2, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub q: f64,
    pub gamma: f64,
    pub tau: f64,
    pub eps_circ: f64,
}

impl RateParams {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.5 && q <= 1.0) {
            return invalid(format!("q = {q} outside (1/2, 1]"));
        }
        let tau = (1.0 - q) / q;
        let st = tau.sqrt();
        let eps_circ = ((1.0 - st) / (1.0 + st)).powi(2);
        Ok(Self { q, gamma: 2.0 * q - 1.0, tau, eps_circ })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        invalid(format!("ε = {eps} outside (0,1)"))
    }
}

/// `atanh(x) = ½·log((1+x)/(1−x))`, evaluated as `½·log1p(2x/(1−x))`.
pub fn atanh(x: f64) -> f64 {
    if x >= 1.0 {
        return f64::INFINITY;
    }
    0.5 * (2.0 * x / (1.0 - x)).ln_1p()
}

/// The action `S(ζ)`.
pub fn action_s(zeta: Complex64, eps: f64) -> Result<Complex64> {
    if zeta == Complex64::new(1.0, 0.0) {
        return invalid("ζ = 1 is a pole of S");
    }
    if zeta.im == 0.0 && zeta.re >= 0.0 {
        return invalid(format!("ζ = {zeta} lies on the branch cut of log(−ζ)"));
    }
    Ok(zeta / (1.0 - zeta) + (1.0 - eps) / 4.0 * (-zeta).ln())
}

/// `S′(ζ) = 1/(1−ζ)² + (1−ε)/(4ζ)`.
pub fn action_s_prime(zeta: Complex64, eps: f64) -> Complex64 {
    1.0 / ((1.0 - zeta) * (1.0 - zeta)) + (1.0 - eps) / (4.0 * zeta)
}

/// The two negative real critical points `(ζ1, ζ2)`.
pub fn critical_points(eps: f64) -> Result<(f64, f64)> {
    check_eps(eps)?;
    let s = eps.sqrt();
    let z1 = (s - 1.0) / (s + 1.0);
    Ok((z1, (s + 1.0) / (s - 1.0)))
}

/// Closed forms of `S″` at the critical points.
pub fn s_second(eps: f64) -> Result<(f64, f64)> {
    check_eps(eps)?;
    let s = eps.sqrt();
    Ok((-(1.0 + s).powi(3) * s / (4.0 * (1.0 - s)), (1.0 - s).powi(3) * s / (4.0 * (1.0 + s))))
}

/// `Φ̂₊(ε) = √ε − (1−ε)·atanh(√ε)`.
pub fn phi_hat_plus(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let s = eps.sqrt();
    Ok(s - (1.0 - eps) * atanh(s))
}

/// `Φ₊(ε)`: `Φ̂₊` below `ε°`, constant `Φ̂₊(ε°)` above.
pub fn phi_plus(eps: f64, params: &RateParams) -> Result<f64> {
    check_eps(eps)?;
    if eps >= params.eps_circ {
        phi_hat_plus(params.eps_circ)
    } else {
        phi_hat_plus(eps)
    }
}

fn critical(i: u8, eps: f64) -> Result<f64> {
    let (z1, z2) = critical_points(eps)?;
    match i {
        1 => Ok(z1),
        2 => Ok(z2),
        _ => invalid(format!("critical point index {i} must be 1 or 2")),
    }
}

/// `Re S(ζ_i·e^{iθ})` over a grid of angles in `(0, π)`.
pub fn re_s_profile(i: u8, eps: f64, thetas: &[f64]) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return invalid("θ grid is empty");
    }
    let z = critical(i, eps)?;
    thetas
        .iter()
        .map(|&th| {
            if !(th > 0.0 && th < std::f64::consts::PI) {
                return invalid(format!("θ = {th} outside (0, π)"));
            }
            Ok(action_s(Complex64::from_polar(z.abs(), th + std::f64::consts::PI), eps)?.re)
        })
        .collect()
}

/// Closed form of `∂θ Re S(ζ_i·e^{iθ})`; positive for `i = 1`, negative for `i = 2` on `(0, π)`.
pub fn d_theta_re_s(i: u8, eps: f64, theta: f64) -> Result<f64> {
    critical(i, eps)?;
    let s = eps.sqrt();
    let v = (1.0 - eps) * s * theta.sin() / (1.0 + eps + (1.0 - eps) * theta.cos()).powi(2);
    Ok(if i == 1 { v } else { -v })
}

/// Whether the contour radii `|ζ1|, |ζ2|` satisfy `τ < |ζ1| < 1 < |ζ2| < |ζ1|/τ`.
pub fn radii_admissible(eps: f64, params: &RateParams) -> Result<bool> {
    let (z1, z2) = critical_points(eps)?;
    let (r, rp) = (z1.abs(), z2.abs());
    Ok(params.tau < r && r < 1.0 && 1.0 < rp && rp * params.tau < r)
}
