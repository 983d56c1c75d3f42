//! Exact law of a single ASEP particle via a Fredholm determinant.
//!
//! For step initial data and `τ = (1−q)/q`, the probability that particle `m`
//! has not moved to the left of the origin at time `t/γ` is a `μ`-contour
//! integral of `(μ;τ)_∞ · det(1 + μJ)`, where `J` is an integral kernel on
//! the circle `|η| = r` built from
//! `f_τ(μ, z) = Σ_{k∈ℤ} τ^k z^k / (1 − τ^k μ)` and `φ_t(ζ) = exp(tζ/(1−ζ))`.
//!
//! Every contour integral is a periodic trapezoidal rule on a circle, which
//! converges exponentially fast for these analytic integrands. The Fredholm
//! series is evaluated on the Nyström discretisation: with `K = J·diag(w)`,
//! the `n`-fold tensor-product trapezoid of the `n`-th series term equals the
//! elementary symmetric function `e_n(K)`, obtained here from traces of
//! powers of `K` through Newton's identities.
//!
//! The event convention: with particles packed on `…, −1, 0` the contour
//! integral evaluates `P(x_m(t/γ) ≥ 0)`, which is what
//! [`prob_xm_nonnegative`] returns.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rate::{critical_points, radii_admissible, RateParams};

/// Largest accepted value of [`QuadratureSpec::estimated_cost`].
///
/// One unit is roughly one complex multiply-add; the default budget
/// corresponds to about a minute of single-core work.
pub const WORK_BUDGET: f64 = 5.0e10;

/// Largest imaginary part of the `μ`-integral accepted as round-off.
pub const RESIDUE_TOL: f64 = 1e-6;

/// Cap on the number of terms summed on each side of `f_τ`.
const MAX_SERIES_TERMS: usize = 1_000_000;

/// Relative distance below which a denominator `1 − τ^k μ` counts as a pole.
const POLE_TOL: f64 = 1e-12;

/// Contour radii, node counts and truncation orders of the evaluator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Radius of the `η` circle, in `(τ, 1)`.
    pub r: f64,
    /// Radius of the `ζ` circle, in `(1, r/τ)`.
    pub r_prime: f64,
    /// Radius of the `μ` circle, in `(τ, ∞)` away from `{1, τ⁻¹, τ⁻², …}`.
    #[serde(rename = "R")]
    pub big_r: f64,
    pub n_zeta: usize,
    pub n_eta: usize,
    pub n_mu: usize,
    /// Highest Fredholm series order kept.
    pub n_max: usize,
    /// Tail tolerance of the `f_τ` series and the Pochhammer product.
    pub series_tol: f64,
}

impl QuadratureSpec {
    /// Default contours for jump bias `q`: `r = (1+τ)/2`, `r′ = (1 + r/τ)/2`,
    /// `R = (1+τ)/2`, with 128/64/32 nodes and `n_max = 3`.
    pub fn default_for(params: &RateParams) -> Result<Self> {
        let tau = check_tau(params.tau)?;
        let r = 0.5 * (1.0 + tau);
        let spec = Self {
            r,
            r_prime: 0.5 * (1.0 + r / tau),
            big_r: default_mu_radius(tau),
            n_zeta: 128,
            n_eta: 64,
            n_mu: 32,
            n_max: 3,
            series_tol: 1e-16,
        };
        spec.validate(params)?;
        Ok(spec)
    }

    /// Contours through the critical points: `r = |ζ1|`, `r′ = |ζ2|`.
    ///
    /// Requires `ε < ε°`, which is exactly when these radii are admissible.
    pub fn for_eps(params: &RateParams, eps: f64) -> Result<Self> {
        if !radii_admissible(eps, params)? {
            return invalid(format!(
                "critical radii at ε = {eps} are not admissible (ε° = {})",
                params.eps_circ
            ));
        }
        let (z1, z2) = critical_points(eps)?;
        let spec = Self { r: z1.abs(), r_prime: z2.abs(), ..Self::default_for(params)? };
        spec.validate(params)?;
        Ok(spec)
    }

    /// Every node count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_zeta: self.n_zeta * factor,
            n_eta: self.n_eta * factor,
            n_mu: self.n_mu * factor,
            ..*self
        }
    }

    /// Checks the radius constraints, node counts and the work budget.
    pub fn validate(&self, params: &RateParams) -> Result<()> {
        let tau = check_tau(params.tau)?;
        if !(self.r > tau && self.r < 1.0) {
            return invalid(format!("r = {} outside (τ, 1) = ({tau}, 1)", self.r));
        }
        if !(self.r_prime > 1.0 && self.r_prime * tau < self.r) {
            return invalid(format!(
                "r′ = {} outside (1, r/τ) = (1, {})",
                self.r_prime,
                self.r / tau
            ));
        }
        if !(self.big_r > tau && self.big_r.is_finite()) {
            return invalid(format!("R = {} must exceed τ = {tau}", self.big_r));
        }
        if mu_radius_hits_pole(self.big_r, tau) {
            return invalid(format!("R = {} lies on a pole τ^(-k) of the μ integrand", self.big_r));
        }
        for (name, n) in [("N_zeta", self.n_zeta), ("N_eta", self.n_eta), ("N_mu", self.n_mu)] {
            if n < 16 {
                return invalid(format!("{name} = {n} must be at least 16"));
            }
        }
        if self.n_max < 1 || self.n_max > self.n_eta {
            return invalid(format!("n_max = {} must lie in [1, N_eta]", self.n_max));
        }
        if !(self.series_tol > 0.0 && self.series_tol < 1e-3) {
            return invalid(format!("series_tol = {} must lie in (0, 1e-3)", self.series_tol));
        }
        let cost = self.estimated_cost();
        if cost > WORK_BUDGET {
            return Err(Error::WorkloadExceeded { estimated: cost, budget: WORK_BUDGET });
        }
        Ok(())
    }

    /// Work estimate of one [`prob_xm_nonnegative`] call in complex
    /// multiply-add units: `f_τ` evaluations, the kernel product, the
    /// `n_max − 1` powers used for the traces and the full determinant.
    pub fn estimated_cost(&self) -> f64 {
        let (nz, ne) = (self.n_zeta as f64, self.n_eta as f64);
        let f_evals = if self.n_zeta % self.n_eta == 0 { nz } else { nz * ne };
        let per_mu = f_evals * 200.0
            + nz * ne * 4.0
            + ne * ne * nz
            + (self.n_max.saturating_sub(1) as f64) * ne.powi(3)
            + ne.powi(3);
        per_mu * self.n_mu as f64
    }
}

fn check_tau(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        invalid(format!("τ = {tau} outside (0, 1); q = 1 has no Fredholm representation"))
    }
}

fn mu_radius_hits_pole(big_r: f64, tau: f64) -> bool {
    let mut p = 1.0;
    while p <= big_r * (1.0 + 1e-6) {
        if ((big_r - p) / p).abs() < 1e-9 {
            return true;
        }
        p /= tau;
    }
    false
}

fn default_mu_radius(tau: f64) -> f64 {
    let mut big_r = 0.5 * (1.0 + tau);
    while mu_radius_hits_pole(big_r, tau) {
        big_r += 1e-3;
    }
    big_r
}

/// `k`-th of `n` equispaced nodes on the circle of the given radius.
fn node(radius: f64, k: usize, n: usize) -> Complex64 {
    Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64)
}

/// The bidirectional series `f_τ(μ, z) = Σ_{k∈ℤ} τ^k z^k / (1 − τ^k μ)`.
///
/// Requires `0 < τ < 1`, `1 < |z| < 1/τ` and `μ ∉ τ^ℤ`. Each side is summed
/// until a geometric bound on its remainder falls below `tol·max(1, |sum|)`.
pub fn f_tau(mu: Complex64, z: Complex64, tau: f64, tol: f64) -> Result<Complex64> {
    check_tau(tau)?;
    let az = z.norm();
    if !(az > 1.0 && az * tau < 1.0) {
        return invalid(format!("|z| = {az} outside the annulus (1, 1/τ) = (1, {})", 1.0 / tau));
    }
    if mu == Complex64::new(0.0, 0.0) {
        return invalid("μ = 0 is the accumulation point of the poles τ^k");
    }
    let amu = mu.norm();
    let pole = || invalid(format!("μ = {mu} lies on a pole τ^k of f_τ"));

    // k ≥ 0: (τz)^k / (1 − τ^k μ).
    let tz = z * tau;
    let atz = tz.norm();
    let mut pos = Complex64::new(0.0, 0.0);
    let mut pow_tz = Complex64::new(1.0, 0.0);
    let mut tk = 1.0;
    let mut k = 0;
    loop {
        let den = 1.0 - mu * tk;
        if den.norm() < POLE_TOL * (1.0 + amu * tk) {
            return pole();
        }
        pos += pow_tz / den;
        pow_tz *= tz;
        tk *= tau;
        k += 1;
        let rest = amu * tk;
        if rest < 0.5 {
            // Remainder ≤ |τz|^k / ((1 − |μ|τ^k)(1 − |τz|)).
            let bound = pow_tz.norm() / ((1.0 - rest) * (1.0 - atz));
            if bound < tol * pos.norm().max(1.0) {
                break;
            }
        }
        if k > MAX_SERIES_TERMS {
            return invalid(format!("f_τ positive series did not converge at z = {z}"));
        }
    }

    // k = −j ≤ −1: z^{−j} / (τ^j − μ).
    let zi = 1.0 / z;
    let azi = zi.norm();
    let mut neg = Complex64::new(0.0, 0.0);
    let mut pow_zi = zi;
    let mut tj = tau;
    let mut j = 1;
    loop {
        let den = tj - mu;
        if den.norm() < POLE_TOL * (tj + amu) {
            return pole();
        }
        neg += pow_zi / den;
        pow_zi *= zi;
        tj *= tau;
        j += 1;
        if tj < 0.5 * amu {
            // Remainder ≤ |z|^{−j} / ((|μ| − τ^j)(1 − 1/|z|)).
            let bound = pow_zi.norm() / ((amu - tj) * (1.0 - azi));
            if bound < tol * neg.norm().max(1.0) {
                break;
            }
        }
        if j > MAX_SERIES_TERMS {
            return invalid(format!("f_τ negative series did not converge at z = {z}"));
        }
    }
    Ok(pos + neg)
}

/// The infinite Pochhammer symbol `(μ;τ)_∞ = ∏_{k≥0} (1 − μτ^k)` for `0 ≤ τ < 1`.
///
/// Factors are multiplied while `|μ|τ^k ≥ tol`; the remaining ones are
/// replaced by their first-order product `exp(−μτ^K/(1−τ))`.
pub fn pochhammer_inf(mu: Complex64, tau: f64, tol: f64) -> Result<Complex64> {
    if !(0.0..1.0).contains(&tau) {
        return invalid(format!("τ = {tau} outside [0, 1)"));
    }
    let amu = mu.norm();
    let mut prod = Complex64::new(1.0, 0.0);
    let mut tk = 1.0;
    while amu * tk >= tol {
        prod *= 1.0 - mu * tk;
        tk *= tau;
    }
    Ok(prod * (-mu * tk / (1.0 - tau)).exp())
}

/// Model inputs shared by the kernel, determinant and probability.
#[derive(Clone, Copy, Debug)]
struct KernelInputs<'a> {
    m: u32,
    t: f64,
    params: &'a RateParams,
    quad: &'a QuadratureSpec,
}

impl KernelInputs<'_> {
    fn check(&self) -> Result<()> {
        if self.m < 1 {
            return invalid("particle label m must be at least 1");
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return invalid(format!("t = {} must be positive and finite", self.t));
        }
        self.quad.validate(self.params)
    }

    /// `log(φ_t(ζ) ζ^m)`; the branch of `log ζ` is irrelevant for integer `m`.
    fn log_numerator(&self, zeta: Complex64) -> Complex64 {
        self.t * zeta / (1.0 - zeta) + zeta.ln() * self.m as f64
    }

    /// `−log(φ_t(η′) η′^{m+1})`.
    fn log_inv_denominator(&self, eta: Complex64) -> Complex64 {
        -(self.t * eta / (1.0 - eta) + eta.ln() * (self.m + 1) as f64)
    }
}

/// One entry `J^{(μ)}_{m,t}(η, η′)` by direct trapezoidal quadrature over
/// the `N_zeta` nodes of `|ζ| = r′`.
///
/// `η` and `η′` must lie on the circle `|·| = r` (relative tolerance `1e-9`).
pub fn kernel_j(
    eta: Complex64,
    eta_p: Complex64,
    mu: Complex64,
    m: u32,
    t: f64,
    params: &RateParams,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    let inp = KernelInputs { m, t, params, quad };
    inp.check()?;
    for (name, e) in [("η", eta), ("η′", eta_p)] {
        if ((e.norm() - quad.r) / quad.r).abs() > 1e-9 {
            return invalid(format!("{name} = {e} is not on the circle |·| = {}", quad.r));
        }
    }
    let lb = inp.log_inv_denominator(eta_p);
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..quad.n_zeta {
        let zeta = node(quad.r_prime, a, quad.n_zeta);
        let f = f_tau(mu, zeta / eta_p, params.tau, quad.series_tol)?;
        let w = zeta / quad.n_zeta as f64;
        acc += w * (inp.log_numerator(zeta) + lb).exp() * f / (zeta - eta);
    }
    Ok(acc)
}

/// The weighted Nyström matrix `K[i][j] = J(η_i, η_j)·η_j/N_eta`.
fn kernel_matrix(mu: Complex64, inp: &KernelInputs) -> Result<DMatrix<Complex64>> {
    let quad = inp.quad;
    let (nz, ne) = (quad.n_zeta, quad.n_eta);
    let tau = inp.params.tau;
    let zetas: Vec<Complex64> = (0..nz).map(|a| node(quad.r_prime, a, nz)).collect();
    let etas: Vec<Complex64> = (0..ne).map(|j| node(quad.r, j, ne)).collect();

    // f(μ, ζ_a/η_j); on commensurate grids it depends only on a − j·(Nz/Ne) mod Nz.
    let f_of: Box<dyn Fn(usize, usize) -> Complex64> = if nz % ne == 0 {
        let stride = nz / ne;
        let ratio = quad.r_prime / quad.r;
        let table = (0..nz)
            .map(|d| f_tau(mu, node(ratio, d, nz), tau, quad.series_tol))
            .collect::<Result<Vec<_>>>()?;
        Box::new(move |a, j| table[(a + nz - (j * stride) % nz) % nz])
    } else {
        let table = (0..nz * ne)
            .map(|idx| f_tau(mu, zetas[idx / ne] / etas[idx % ne], tau, quad.series_tol))
            .collect::<Result<Vec<_>>>()?;
        Box::new(move |a, j| table[a * ne + j])
    };

    let la: Vec<Complex64> = zetas.iter().map(|&z| inp.log_numerator(z)).collect();
    let lb: Vec<Complex64> = etas.iter().map(|&e| inp.log_inv_denominator(e)).collect();
    let f_mat = DMatrix::from_fn(nz, ne, |a, j| {
        zetas[a] / nz as f64 * (la[a] + lb[j]).exp() * f_of(a, j)
    });
    let c_mat = DMatrix::from_fn(ne, nz, |i, a| 1.0 / (zetas[a] - etas[i]));
    let mut k = c_mat * f_mat;
    for j in 0..ne {
        let w = etas[j] / ne as f64;
        for i in 0..ne {
            k[(i, j)] *= w;
        }
    }
    Ok(k)
}

/// Elementary symmetric functions `e_0..e_n` of the eigenvalues of `k`,
/// from the power-sum traces through Newton's identities.
fn elementary_symmetric(k: &DMatrix<Complex64>, n: usize) -> Vec<Complex64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(Complex64::new(k.nrows() as f64, 0.0));
    let mut power = k.clone();
    for i in 1..=n {
        p.push(power.trace());
        if i < n {
            power = &power * k;
        }
    }
    let mut e = vec![Complex64::new(1.0, 0.0)];
    for order in 1..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 1..=order {
            let term = e[order - i] * p[i];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        e.push(acc / order as f64);
    }
    e
}

/// Rigorous bound on `Σ_{n>n_max} |μ|^n |e_n(K)|`.
///
/// By Hadamard's inequality every principal minor of `K` is bounded by the
/// product of its column norms, so `|e_n(K)| ≤ e_n(c)` with `c_j = ‖K e_j‖`.
fn hadamard_tail(k: &DMatrix<Complex64>, mu_abs: f64, n_max: usize) -> f64 {
    let n = k.ncols();
    let mut e = vec![0.0f64; n + 1];
    e[0] = 1.0;
    for j in 0..n {
        let c = mu_abs * k.column(j).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for order in (1..=j + 1).rev() {
            e[order] += e[order - 1] * c;
        }
    }
    e[n_max + 1..].iter().sum()
}

/// Result of a truncated Fredholm series evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredholmValue {
    /// `Σ_{n ≤ n_max} μ^n e_n(K)`.
    pub value: Complex64,
    /// The individual terms `μ^n e_n(K)` for `n = 0..=n_max`.
    pub terms: Vec<Complex64>,
    /// Upper bound on the modulus of the omitted terms.
    pub tail_estimate: f64,
    /// `det(I + μK)` of the full discretised operator, as a diagnostic.
    pub full_det: Complex64,
}

fn det_from_matrix(mu: Complex64, k: &DMatrix<Complex64>, n_max: usize) -> FredholmValue {
    let e = elementary_symmetric(k, n_max);
    let mut mu_n = Complex64::new(1.0, 0.0);
    let terms: Vec<Complex64> = e
        .iter()
        .map(|&en| {
            let term = mu_n * en;
            mu_n *= mu;
            term
        })
        .collect();
    let value = terms.iter().sum();
    let n = k.nrows();
    let full = DMatrix::<Complex64>::identity(n, n) + k * mu;
    FredholmValue {
        value,
        terms,
        tail_estimate: hadamard_tail(k, mu.norm(), n_max),
        full_det: full.determinant(),
    }
}

/// `det(1 + μ J^{(μ)}_{m,t})` truncated after order `n_max`.
pub fn fredholm_det(
    mu: Complex64,
    m: u32,
    t: f64,
    params: &RateParams,
    quad: &QuadratureSpec,
) -> Result<FredholmValue> {
    let inp = KernelInputs { m, t, params, quad };
    inp.check()?;
    if mu == Complex64::new(0.0, 0.0) {
        return Ok(FredholmValue {
            value: Complex64::new(1.0, 0.0),
            terms: vec![Complex64::new(1.0, 0.0)],
            tail_estimate: 0.0,
            full_det: Complex64::new(1.0, 0.0),
        });
    }
    let k = kernel_matrix(mu, &inp)?;
    Ok(det_from_matrix(mu, &k, quad.n_max))
}

/// Outcome of [`prob_xm_nonnegative`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    /// The real part of the integral, clamped to `[0, 1]`.
    pub value: f64,
    /// The raw complex value of the truncated-series integral.
    pub raw: Complex64,
    /// `|Im|` of the raw value.
    pub imag_residue: f64,
    /// Bound on the contribution of the omitted series orders.
    pub tail_estimate: f64,
    /// The same integral with the full discretised determinant.
    pub full_det_value: f64,
}

/// `P(x_m(t/γ) ≥ 0)` for the ASEP with step initial data, as the trapezoidal
/// rule for `(2πi)⁻¹ ∮_{|μ|=R} (μ;τ)_∞ det(1 + μJ) dμ/μ`.
///
/// `μ` nodes are processed in parallel and summed in index order, so the
/// result does not depend on the thread count.
pub fn prob_xm_nonnegative(
    m: u32,
    t: f64,
    params: &RateParams,
    quad: &QuadratureSpec,
) -> Result<ProbabilityReport> {
    let inp = KernelInputs { m, t, params, quad };
    inp.check()?;
    let nodes = (0..quad.n_mu)
        .into_par_iter()
        .map(|k| {
            let mu = node(quad.big_r, k, quad.n_mu);
            let poch = pochhammer_inf(mu, params.tau, quad.series_tol)?;
            let det = det_from_matrix(mu, &kernel_matrix(mu, &inp)?, quad.n_max);
            Ok((poch, det))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = quad.n_mu as f64;
    let mut raw = Complex64::new(0.0, 0.0);
    let mut full = Complex64::new(0.0, 0.0);
    let mut tail = 0.0;
    for (poch, det) in &nodes {
        raw += poch * det.value / n;
        full += poch * det.full_det / n;
        tail += poch.norm() * det.tail_estimate / n;
    }
    if raw.im.abs() > RESIDUE_TOL {
        return Err(Error::ResidueCheck { re: raw.re, im: raw.im });
    }
    Ok(ProbabilityReport {
        value: raw.re.clamp(0.0, 1.0),
        raw,
        imag_residue: raw.im.abs(),
        tail_estimate: tail,
        full_det_value: full.re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{action_s, phi_plus};
    use crate::stats::fit_log_slope;
    use proptest::prelude::*;
    use crate::rng::SimRng;

    const TOL: f64 = 1e-16;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn q75() -> (RateParams, QuadratureSpec) {
        let p = RateParams::new(0.75).unwrap();
        let quad = QuadratureSpec::default_for(&p).unwrap();
        (p, quad)
    }

    fn brute_f(mu: Complex64, z: Complex64, tau: f64, k_max: i32) -> Complex64 {
        (-k_max..=k_max)
            .map(|k| {
                if k >= 0 {
                    (tau * z).powi(k) / (1.0 - mu * tau.powi(k))
                } else {
                    // Same term with numerator and denominator scaled by τ^{−k}.
                    z.powi(k) / (tau.powi(-k) - mu)
                }
            })
            .sum()
    }

    #[test]
    fn f_tau_matches_long_sum() {
        let (mu, z, tau) = (c(0.5, 0.0), c(1.5, 0.0), 0.3);
        let fast = f_tau(mu, z, tau, TOL).unwrap();
        // τ^k z^k = (τz)^k for both signs of k; 1000 terms per side.
        let slow = brute_f(mu, z, tau, 1000);
        assert!((fast - slow).norm() < 1e-12, "{fast} vs {slow}");
        let z2 = c(1.2, 1.1);
        let fast = f_tau(c(-0.7, 0.4), z2, tau, TOL).unwrap();
        let slow = brute_f(c(-0.7, 0.4), z2, tau, 1000);
        assert!((fast - slow).norm() < 1e-12 * slow.norm().max(1.0));
    }

    #[test]
    fn f_tau_domain_errors() {
        assert!(f_tau(c(0.5, 0.0), c(1.5, 0.0), 0.0, TOL).is_err());
        assert!(f_tau(c(0.5, 0.0), c(0.9, 0.0), 0.3, TOL).is_err());
        assert!(f_tau(c(0.5, 0.0), c(3.5, 0.0), 0.3, TOL).is_err());
        assert!(f_tau(c(1.0, 0.0), c(1.5, 0.0), 0.3, TOL).is_err());
        assert!(f_tau(c(0.09, 0.0), c(1.5, 0.0), 0.3, TOL).is_err());
        assert!(f_tau(c(1.0 / 0.09, 0.0), c(1.5, 0.0), 0.3, TOL).is_err());
        assert!(f_tau(c(0.0, 0.0), c(1.5, 0.0), 0.3, TOL).is_err());
    }

    #[test]
    fn pochhammer_values() {
        assert_eq!(pochhammer_inf(c(0.0, 0.0), 0.3, TOL).unwrap(), c(1.0, 0.0));
        assert_eq!(pochhammer_inf(c(1.0, 0.0), 0.3, TOL).unwrap().norm(), 0.0);
        let mu = c(0.5, 0.0);
        let slow: Complex64 = (0..200).map(|k| 1.0 - mu * 0.3f64.powi(k)).product();
        assert!((pochhammer_inf(mu, 0.3, TOL).unwrap() - slow).norm() < 1e-12);
        let mu = c(-1.3, 2.2);
        let slow: Complex64 = (0..200).map(|k| 1.0 - mu * 0.8f64.powi(k)).product();
        let fast = pochhammer_inf(mu, 0.8, TOL).unwrap();
        assert!((fast - slow).norm() < 1e-12 * slow.norm().max(1.0));
    }

    #[test]
    fn residue_identity_on_mu_circle() {
        for &q in &[0.6, 0.75, 0.95] {
            let p = RateParams::new(q).unwrap();
            let quad = QuadratureSpec::default_for(&p).unwrap();
            let n = quad.n_mu;
            let s: Complex64 = (0..n)
                .map(|k| pochhammer_inf(node(quad.big_r, k, n), p.tau, TOL).unwrap())
                .sum::<Complex64>()
                / n as f64;
            assert!((s - 1.0).norm() < 1e-8, "q={q}: {s}");
        }
    }

    #[test]
    fn q_binomial_identity() {
        let (tau, w) = (0.3, c(2.5, 0.0));
        let big_r = 0.5 * (1.0 + tau);
        let n = 64;
        // (2πi)⁻¹∮ g(μ) dμ = mean over nodes of μ·g(μ).
        let lhs: Complex64 = (0..n)
            .map(|k| {
                let mu = node(big_r, k, n);
                mu * pochhammer_inf(mu, tau, TOL).unwrap() * f_tau(mu, w, tau, TOL).unwrap()
            })
            .sum::<Complex64>()
            / n as f64;
        let tt = pochhammer_inf(c(tau, 0.0), tau, TOL).unwrap();
        let rhs = -(tt / w) / pochhammer_inf(1.0 / w, tau, TOL).unwrap();
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn quadrature_validation() {
        let p = RateParams::new(0.75).unwrap();
        let good = QuadratureSpec::default_for(&p).unwrap();
        assert!((good.r - 2.0 / 3.0).abs() < 1e-15);
        assert!((good.r_prime - 1.5).abs() < 1e-15);
        for bad in [
            QuadratureSpec { r: 0.2, ..good },
            QuadratureSpec { r: 1.0, ..good },
            QuadratureSpec { r_prime: 1.0, ..good },
            QuadratureSpec { r_prime: 2.0, ..good },
            QuadratureSpec { big_r: 0.3, ..good },
            QuadratureSpec { big_r: 1.0, ..good },
            QuadratureSpec { big_r: 3.0, ..good },
            QuadratureSpec { big_r: 9.0, ..good },
            QuadratureSpec { n_eta: 8, ..good },
            QuadratureSpec { n_max: 0, ..good },
        ] {
            assert!(bad.validate(&p).is_err(), "{bad:?}");
        }
        assert!(QuadratureSpec::default_for(&RateParams::new(1.0).unwrap()).is_err());
        let huge = QuadratureSpec { n_eta: 4096, n_zeta: 8192, ..good };
        assert!(matches!(huge.validate(&p), Err(Error::WorkloadExceeded { .. })));
    }

    #[test]
    fn eps_radii_follow_critical_points() {
        let p = RateParams::new(0.95).unwrap();
        let quad = QuadratureSpec::for_eps(&p, 0.3).unwrap();
        let (z1, z2) = critical_points(0.3).unwrap();
        assert_eq!((quad.r, quad.r_prime), (z1.abs(), z2.abs()));
        assert!(QuadratureSpec::for_eps(&p, p.eps_circ + 0.01).is_err());
    }

    #[test]
    fn matrix_entries_match_direct_kernel() {
        let (p, quad) = q75();
        let mu = node(quad.big_r, 3, quad.n_mu);
        let inp = KernelInputs { m: 2, t: 4.0, params: &p, quad: &quad };
        let k = kernel_matrix(mu, &inp).unwrap();
        let general = QuadratureSpec { n_zeta: 100, n_eta: 24, ..quad };
        let inp_g = KernelInputs { quad: &general, ..inp };
        let kg = kernel_matrix(mu, &inp_g).unwrap();
        for &(i, j) in &[(0, 0), (5, 17), (40, 3), (63, 63)] {
            let (ei, ej) = (node(quad.r, i, 64), node(quad.r, j, 64));
            let direct = kernel_j(ei, ej, mu, 2, 4.0, &p, &quad).unwrap() * ej / 64.0;
            assert!((k[(i, j)] - direct).norm() < 1e-12 * direct.norm().max(1e-3));
        }
        for &(i, j) in &[(0, 0), (7, 19)] {
            let (ei, ej) = (node(quad.r, i, 24), node(quad.r, j, 24));
            let direct = kernel_j(ei, ej, mu, 2, 4.0, &p, &general).unwrap() * ej / 24.0;
            assert!((kg[(i, j)] - direct).norm() < 1e-12 * direct.norm().max(1e-3));
        }
    }

    #[test]
    fn kernel_rejects_off_circle_points() {
        let (p, quad) = q75();
        let eta = node(quad.r, 1, 8);
        assert!(kernel_j(eta * 1.1, eta, c(0.5, 0.1), 2, 4.0, &p, &quad).is_err());
        assert!(kernel_j(eta, eta, c(0.5, 0.1), 0, 4.0, &p, &quad).is_err());
        assert!(kernel_j(eta, eta, c(0.5, 0.1), 2, -1.0, &p, &quad).is_err());
    }

    #[test]
    fn kernel_self_converges_in_zeta_nodes() {
        let (p, quad) = q75();
        let fine = QuadratureSpec { n_zeta: 256, ..quad };
        let mu = c(0.4, 0.6);
        for &(i, j) in &[(0, 0), (3, 11), (9, 2)] {
            let (e1, e2) = (node(quad.r, i, 16), node(quad.r, j, 16));
            let a = kernel_j(e1, e2, mu, 2, 4.0, &p, &quad).unwrap();
            let b = kernel_j(e1, e2, mu, 2, 4.0, &p, &fine).unwrap();
            assert!((a - b).norm() < 1e-8 * b.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_conjugation_symmetry() {
        let (p, quad) = q75();
        let mu = c(0.3, 0.5);
        // Node sets are closed under conjugation: conj(node k) = node N−k.
        let (e1, e2) = (node(quad.r, 5, 64), node(quad.r, 20, 64));
        let a = kernel_j(e1, e2, mu, 2, 4.0, &p, &quad).unwrap();
        let b = kernel_j(e1.conj(), e2.conj(), mu.conj(), 2, 4.0, &p, &quad).unwrap();
        assert!((a.conj() - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn sign_rewritten_integrand_agrees() {
        // φ(ζ)ζ^m/(φ(η′)η′^{m+1}) = exp{t(S(ζ) − S(η′)) + (m − t(1−ε)/4)(log(−ζ) − log(−η′))}/η′.
        let (t, m, eps) = (40.0, 7u32, 0.3);
        let (r, rp) = (0.4, 1.8);
        for k in 0..12 {
            let zeta = Complex64::from_polar(rp, 0.3 + 0.5 * k as f64);
            let eta = Complex64::from_polar(r, 1.1 - 0.45 * k as f64);
            let direct = (t * zeta / (1.0 - zeta)).exp() * zeta.powu(m)
                / ((t * eta / (1.0 - eta)).exp() * eta.powu(m + 1));
            let ds = action_s(zeta, eps).unwrap() - action_s(eta, eps).unwrap();
            let dl = (-zeta).ln() - (-eta).ln();
            let rewritten = (t * ds + (m as f64 - t * (1.0 - eps) / 4.0) * dl).exp() / eta;
            assert!((direct - rewritten).norm() < 1e-10 * direct.norm(), "{direct} vs {rewritten}");
        }
    }

    #[test]
    fn det_at_zero_and_conjugate() {
        let (p, quad) = q75();
        let d0 = fredholm_det(c(0.0, 0.0), 2, 4.0, &p, &quad).unwrap();
        assert_eq!(d0.value, c(1.0, 0.0));
        let mu = node(quad.big_r, 5, quad.n_mu);
        let a = fredholm_det(mu, 2, 4.0, &p, &quad).unwrap();
        let b = fredholm_det(mu.conj(), 2, 4.0, &p, &quad).unwrap();
        assert!((a.value.conj() - b.value).norm() < 1e-10 * a.value.norm().max(1.0));
        assert!((a.full_det.conj() - b.full_det).norm() < 1e-10 * a.full_det.norm().max(1.0));
    }

    #[test]
    fn truncation_change_within_tail_estimate() {
        let (p, quad) = q75();
        let q2 = QuadratureSpec { n_max: 2, ..quad };
        for k in [0, 7, 16] {
            let mu = node(quad.big_r, k, quad.n_mu);
            let d2 = fredholm_det(mu, 2, 4.0, &p, &q2).unwrap();
            let d3 = fredholm_det(mu, 2, 4.0, &p, &quad).unwrap();
            assert!((d3.value - d2.value).norm() < d2.tail_estimate);
            assert!((d3.full_det - d3.value).norm() <= d3.tail_estimate * (1.0 + 1e-9) + 1e-14);
        }
    }

    /// `(1/n!) Σ over ordered n-tuples of det[K(i_a, i_b)]` by brute force.
    fn tensor_product_term(k: &DMatrix<Complex64>, n: usize) -> Complex64 {
        let size = k.nrows();
        let mut idx = vec![0usize; n];
        let mut total = Complex64::new(0.0, 0.0);
        loop {
            let sub = DMatrix::from_fn(n, n, |a, b| k[(idx[a], idx[b])]);
            total += sub.determinant();
            let mut pos = 0;
            loop {
                if pos == n {
                    let fact: f64 = (1..=n).map(|x| x as f64).product();
                    return total / fact;
                }
                idx[pos] += 1;
                if idx[pos] < size {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn newton_terms_equal_tensor_product_quadrature() {
        let p = RateParams::new(0.75).unwrap();
        let quad = QuadratureSpec { n_zeta: 64, n_eta: 16, ..QuadratureSpec::default_for(&p).unwrap() };
        let inp = KernelInputs { m: 2, t: 4.0, params: &p, quad: &quad };
        let k = kernel_matrix(c(0.4, 0.5), &inp).unwrap();
        let e = elementary_symmetric(&k, 3);
        for n in 1..=3 {
            let brute = tensor_product_term(&k, n);
            assert!((e[n] - brute).norm() < 1e-10 * brute.norm().max(1e-12), "n={n}");
        }
    }

    #[test]
    fn rank_one_lemma_bound() {
        let mut rng = SimRng::new(17);
        let delta = 0.125;
        for &t in &[1e3f64, 1e6, 1e9] {
            for n in 1..=6usize {
                for _ in 0..50 {
                    let jh = DMatrix::from_fn(n, n, |_, _| {
                        Complex64::from_polar(rng.uniform() * 3.0, rng.uniform() * 2.0 * PI)
                    });
                    let b = 1.0 + jh.iter().map(|x| x.norm()).fold(0.0, f64::max);
                    let j = DMatrix::from_element(n, n, c(1.0, 0.0)) + &jh * c(t.powf(-delta), 0.0);
                    let nf = n as f64;
                    let bound = b.powi(n as i32) * nf.powf(nf / 2.0 + 1.0) * t.powf(-delta * (nf - 1.0));
                    assert!(j.determinant().norm() <= bound, "t={t} n={n}");
                }
            }
        }
    }

    #[test]
    fn probability_reference_values() {
        let (p, quad) = q75();
        let want = [(1, 0.99855), (2, 0.94113), (3, 0.605285), (4, 0.15549), (5, 0.010155)];
        let mut prev = 1.0;
        for &(m, v) in &want {
            let rep = prob_xm_nonnegative(m, 6.0, &p, &quad).unwrap();
            assert!((rep.full_det_value - v).abs() < 2e-5, "m={m}: {}", rep.full_det_value);
            assert!((rep.value - rep.full_det_value).abs() <= rep.tail_estimate + 1e-12);
            assert!(rep.imag_residue < 1e-10);
            assert!(rep.value <= prev + 1e-12, "not monotone at m={m}");
            prev = rep.value;
        }
    }

    #[test]
    fn probability_self_converges() {
        let (p, quad) = q75();
        let a = prob_xm_nonnegative(2, 4.0, &p, &quad).unwrap();
        let b = prob_xm_nonnegative(2, 4.0, &p, &quad.refined(2)).unwrap();
        assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn lower_tail_decays_at_rate_scale() {
        // P(x_m(t/γ) < 0) with m = ⌊(1−ε)t/4⌋ must decay at least like e^{−tΦ₊/2}.
        let p = RateParams::new(0.95).unwrap();
        let quad = QuadratureSpec::default_for(&p).unwrap();
        let eps = 0.3;
        let pts: Vec<(f64, f64)> = [20.0f64, 40.0, 60.0]
            .iter()
            .map(|&t| {
                let m = ((1.0 - eps) * t / 4.0).floor() as u32;
                let rep = prob_xm_nonnegative(m, t, &p, &quad).unwrap();
                (t, 1.0 - rep.full_det_value)
            })
            .collect();
        assert!(pts.iter().all(|&(_, v)| v > 0.0));
        let fit = fit_log_slope(&pts).unwrap();
        assert!(fit.slope <= -0.5 * phi_plus(eps, &p).unwrap(), "slope {}", fit.slope);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_tau_conjugate_symmetric(
            mr in 0.2f64..3.0, ma in 0.1f64..3.0, zr in 1.05f64..3.0, za in -3.0f64..3.0
        ) {
            let tau = 0.3;
            let mu = Complex64::from_polar(mr, ma);
            let z = Complex64::from_polar(zr, za);
            let a = f_tau(mu, z, tau, TOL).unwrap();
            let b = f_tau(mu.conj(), z.conj(), tau, TOL).unwrap();
            prop_assert!((a.conj() - b).norm() <= 1e-13 * a.norm().max(1.0));
        }

        #[test]
        fn pochhammer_functional_equation(mr in 0.0f64..4.0, ma in 0.0f64..6.28, tau in 0.05f64..0.9) {
            // (μ;τ)_∞ = (1 − μ)(μτ;τ)_∞.
            let mu = Complex64::from_polar(mr, ma);
            let a = pochhammer_inf(mu, tau, TOL).unwrap();
            let b = (1.0 - mu) * pochhammer_inf(mu * tau, tau, TOL).unwrap();
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }
}
