//! Block-renormalisation parameter schedules and the multiscale master bound.
//!
//! Level `k` of the scheme uses blocks of side `L_k = L_0·l_1⋯l_k`. Given the
//! probability `ε_k` that a level-`k` block is still minus at time `T_k`, the
//! next level is bounded by a bootstrap term, an erosion term and a
//! chronological-path term:
//!
//! ```text
//! (5 n l′/3)^d (2 n^{d−1} ε)^{⌊n/3⌋} + (5 l′/3)^d e^{−γ n L}
//!     + 4d L′ Σ_{r ≥ ⌊L′/4⌋} (2de·t′/r)^r
//! ```
//!
//! with primes denoting level `k+1`. The schedules make `ε_k` doubly
//! exponentially small within a few levels, so all quantities are carried as
//! [`Tower`] numbers and every comparison is done in that representation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tower::Tower;

const E: f64 = std::f64::consts::E;

/// Cap on explicitly summed chronological-path terms.
const MAX_PATH_TERMS: u64 = 10_000_000;

/// Inputs of a renormalisation schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// Lattice dimension, at least 2.
    pub d: u32,
    /// Erosion-time exponent: eroding a cube of side `L` takes `C·L^α`.
    pub alpha: f64,
    /// Erosion-time constant `C`.
    pub c: f64,
    /// Erosion tail rate: `P(T > C L^α) ≤ e^{−γL}`.
    pub gamma: f64,
    pub eps0: f64,
    pub l0: f64,
    /// Extra block growth exponent used when `α > 1`.
    pub delta: f64,
    /// Decay constant `χ`; `None` selects the `α = 1` choice.
    pub chi: Option<f64>,
    /// Deepest level reported.
    pub k_max: usize,
}

impl ScheduleParams {
    /// The `α = 1` schedule with the standard constants.
    pub fn alpha1(d: u32, c: f64, gamma: f64, eps0: f64, l0: f64, k_max: usize) -> Self {
        Self { d, alpha: 1.0, c, gamma, eps0, l0, delta: 0.0, chi: None, k_max }
    }

    /// Upper limit on `L_0` when `α > 1`: `K·ε0^{−2δ/((d−1)(α−1))}`.
    pub fn l0_limit(&self) -> f64 {
        let (dm1, am1) = (self.d as f64 - 1.0, self.alpha - 1.0);
        let k = (2.0 * E).powf(self.alpha / (am1 * dm1)) / (32.0 * self.d as f64 * E).powf(1.0 / am1);
        k * self.eps0.powf(-2.0 * self.delta / (dm1 * am1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return invalid(format!("dimension d = {} must be at least 2", self.d));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return invalid(format!("α = {} must be at least 1", self.alpha));
        }
        if !(self.c > 0.0 && self.gamma > 0.0) {
            return invalid("erosion constants C and γ must be positive");
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return invalid(format!("ε0 = {} outside (0,1)", self.eps0));
        }
        if !(self.l0 >= 1.0 && self.l0.is_finite()) {
            return invalid(format!("L0 = {} must be at least 1", self.l0));
        }
        if self.alpha == 1.0 {
            if self.l0 < 4.0 {
                return invalid(format!("L0 = {} must be at least 4 when α = 1", self.l0));
            }
        } else {
            if !(self.delta > 0.0) {
                return invalid("δ must be positive when α > 1");
            }
            if self.chi.is_none() {
                return invalid("χ must be supplied when α > 1");
            }
            let lim = self.l0_limit();
            if self.l0 > lim {
                return invalid(format!("L0 = {} exceeds K·ε0^(−2δ/((d−1)(α−1))) = {lim}", self.l0));
            }
        }
        if let Some(chi) = self.chi {
            if !(chi > 0.0 && chi.is_finite()) {
                return invalid(format!("χ = {chi} must be positive"));
            }
        }
        Ok(())
    }
}

/// `(D, χ)` of the `α = 1` schedule.
pub fn constants_alpha1(d: u32, c: f64, gamma: f64) -> Result<(f64, f64)> {
    if d < 2 || !(c > 0.0 && gamma > 0.0) {
        return invalid("constants need d ≥ 2 and positive C, γ");
    }
    let s = (2.0 * E).powf(1.0 / (d as f64 - 1.0));
    let dd = 6.0 / (5.0 * s) + 32.0 * d as f64 * c;
    let chi = (1.0 / (24.0 * s)).min(gamma / (4.0 * s)).min(dd * std::f64::consts::LN_2 / 64.0);
    Ok((dd, chi))
}

/// One level of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub k: usize,
    pub eps_k: Tower,
    pub n_k: Tower,
    /// `l_k` (1 at level 0).
    pub l_k: Tower,
    #[serde(rename = "L_k")]
    pub big_l_k: Tower,
    /// `t_k` (0 at level 0).
    pub t_k: Tower,
    #[serde(rename = "T_k")]
    pub big_t_k: Tower,
    /// Bound on the level-`k+1` failure probability, or `None` with a reason.
    pub master_bound_k: Option<Tower>,
    pub master_note: Option<String>,
    /// `master_bound_k ≤ ε_{k+1}`.
    pub bound_holds: Option<bool>,
    /// `⌊L_{k+1}/4⌋ ≥ 4de·t_{k+1}`.
    pub time_constraint_holds: bool,
    /// `ε_k` is outside `f64` range.
    pub underflow: bool,
}

/// Quantities of one level before the master bound is attached.
#[derive(Clone, Debug)]
struct Level {
    eps: Tower,
    n: Tower,
    l: Tower,
    big_l: Tower,
    t: Tower,
    big_t: Tower,
}

/// `n = ⌊(2eε)^{−1/(d−1)}⌋`.
fn n_of(eps: &Tower, d: u32) -> Tower {
    Tower::from_f64(2.0 * E).mul(eps).powf(-1.0 / (d as f64 - 1.0)).floor()
}

/// Levels `0..=k_max+1` of the schedule.
fn levels(p: &ScheduleParams) -> Result<Vec<Level>> {
    p.validate()?;
    let dm1 = p.d as f64 - 1.0;
    let (dd, chi) = match p.chi {
        Some(chi) => (constants_alpha1(p.d, p.c, p.gamma)?.0, chi),
        None => constants_alpha1(p.d, p.c, p.gamma)?,
    };
    let eps0 = Tower::from_f64(p.eps0);
    let mut out = vec![Level {
        n: n_of(&eps0, p.d),
        eps: eps0,
        l: Tower::one(),
        big_l: Tower::from_f64(p.l0),
        t: Tower::zero(),
        big_t: Tower::zero(),
    }];
    for _ in 0..=p.k_max {
        let prev = out.last().expect("level 0 exists");
        let root = prev.eps.powf(1.0 / dm1);
        let eps = Tower::exp(&Tower::from_f64(chi).div(&root).neg());
        let l = if p.alpha == 1.0 {
            Tower::from_f64(dd).div(&root).floor()
        } else {
            prev.eps.powf(-(p.alpha + 2.0 * p.delta) / dm1).floor()
        };
        if l.is_zero() {
            return Err(Error::Precondition {
                name: "block_growth",
                detail: "l_k = 0; ε is too large for the schedule".into(),
            });
        }
        let nl = prev.n.mul(&prev.big_l);
        let t = Tower::from_f64(p.c).mul(&if p.alpha == 1.0 { nl } else { nl.powf(p.alpha) });
        let level = Level {
            n: n_of(&eps, p.d),
            eps,
            big_l: prev.big_l.mul(&l),
            big_t: prev.big_t.add(&t),
            l,
            t,
        };
        out.push(level);
    }
    Ok(out)
}

/// Inputs of a single master-bound evaluation.
#[derive(Clone, Debug)]
pub struct MasterInputs {
    /// Level-`k` failure probability (or its bound).
    pub eps_tilde: Tower,
    pub n_k: Tower,
    pub l_next: Tower,
    pub big_l: Tower,
    pub big_l_next: Tower,
    pub t_next: Tower,
    pub d: u32,
    pub gamma: f64,
    /// Erosion constants used to check `t_{k+1} ≥ C(n_k L_k)^α`.
    pub c: f64,
    pub alpha: f64,
}

/// The three terms of the master bound and their sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MasterBound {
    pub bootstrap: Tower,
    pub erosion: Tower,
    pub path: Tower,
    pub total: Tower,
}

/// `Σ_{r ≥ r0} (c/r)^r` in the `Tower` domain.
///
/// Consecutive terms have ratio `c/(r+1)·(r/(r+1))^r ≤ c/(r+1)`. For flat
/// `r0` the terms are summed until one falls below `1e-300` of the partial
/// sum, and the geometric remainder is added. For non-flat `r0` the sum is
/// bounded by `first/(1−ρ)` with `ρ = c/(r0+1)`, which needs `ρ < 1`.
fn path_sum(c: &Tower, r0: &Tower) -> Result<Tower> {
    if r0.signum() <= 0.0 {
        return Err(Error::Precondition {
            name: "path_start",
            detail: "⌊L_{k+1}/4⌋ must be at least 1".into(),
        });
    }
    let log_term = |r: &Tower| r.mul(&c.div(r).ln_abs());
    if let (Some(r0f), Some(cf)) = (r0.as_f64(), c.as_f64()) {
        if r0f < 1e15 {
            let mut log_sum: Option<f64> = None;
            let mut r = r0f;
            let mut steps = 0u64;
            loop {
                let lt = r * (cf / r).ln();
                let ls = match log_sum {
                    None => lt,
                    Some(s) => s.max(lt) + (-(s - lt).abs()).exp().ln_1p(),
                };
                log_sum = Some(ls);
                let rho = cf / (r + 1.0);
                if rho < 1.0 && lt - ls < -300.0 * std::f64::consts::LN_10 {
                    // Remainder ≤ term·ρ/(1−ρ).
                    let tail = lt + (rho / (1.0 - rho)).ln();
                    let total = ls.max(tail) + (-(ls - tail).abs()).exp().ln_1p();
                    return Ok(Tower::exp(&Tower::from_f64(total)));
                }
                r += 1.0;
                steps += 1;
                if steps > MAX_PATH_TERMS {
                    return Err(Error::Precondition {
                        name: "path_sum",
                        detail: format!("path sum from r0 = {r0f} with 2de·t = {cf} did not settle"),
                    });
                }
            }
        }
    }
    let rho = c.div(&r0.add(&Tower::one()));
    match rho.as_f64() {
        Some(rf) if rf < 1.0 => {
            Ok(Tower::exp(&log_term(r0)).div(&Tower::from_f64(1.0 - rf)))
        }
        _ => Err(Error::Precondition {
            name: "path_sum",
            detail: format!("terms are not decreasing from r0 = {r0} (2de·t = {c})"),
        }),
    }
}

/// The master bound on the level-`k+1` failure probability.
pub fn master_bound(inp: &MasterInputs) -> Result<MasterBound> {
    let d = inp.d as f64;
    let one = Tower::one();
    let n = &inp.n_k;
    let five_thirds_l = Tower::from_f64(5.0 / 3.0).mul(&inp.l_next);
    if !(one.le(n) && n.le(&five_thirds_l.floor())) {
        return Err(Error::Precondition {
            name: "n_k_condition",
            detail: format!("need 1 ≤ n_k ≤ ⌊5 l_(k+1)/3⌋, got n_k = {n}, l_(k+1) = {}", inp.l_next),
        });
    }
    let needed = Tower::from_f64(inp.c).mul(&n.mul(&inp.big_l).powf(inp.alpha));
    if !needed.mul(&Tower::from_f64(1.0 - 1e-12)).le(&inp.t_next) {
        return Err(Error::Precondition {
            name: "t_k_condition",
            detail: format!("need t_(k+1) ≥ C(n_k L_k)^α = {needed}, got {}", inp.t_next),
        });
    }

    // (5 n l′/3)^d (2 n^{d−1} ε̃)^{⌊n/3⌋}; the base is formed by structural
    // products so that n ≈ 1/(2eε) cancels exactly.
    let bootstrap = if inp.eps_tilde.is_zero() {
        Tower::zero()
    } else {
        let base = Tower::from_f64(2.0).mul(&n.powf(d - 1.0)).mul(&inp.eps_tilde);
        let reps = n.div(&Tower::from_f64(3.0)).floor();
        let log = n.mul(&five_thirds_l).ln_abs().mul(&Tower::from_f64(d)).add(&reps.mul(&base.ln_abs()));
        Tower::exp(&log)
    };

    // (5 l′/3)^d e^{−γ n L}.
    let erosion_log = five_thirds_l
        .ln_abs()
        .mul(&Tower::from_f64(d))
        .sub(&Tower::from_f64(inp.gamma).mul(n).mul(&inp.big_l));
    let erosion = Tower::exp(&erosion_log);

    // 4d L′ Σ_{r ≥ ⌊L′/4⌋} (2de t′/r)^r.
    let r0 = inp.big_l_next.div(&Tower::from_f64(4.0)).floor();
    let c = Tower::from_f64(2.0 * d * E).mul(&inp.t_next);
    let path = Tower::from_f64(4.0 * d).mul(&inp.big_l_next).mul(&path_sum(&c, &r0)?);

    let total = bootstrap.add(&erosion).add(&path);
    Ok(MasterBound { bootstrap, erosion, path, total })
}

/// Rows `0..=k_max` of the schedule, each with its master bound.
pub fn schedule(p: &ScheduleParams) -> Result<Vec<ScheduleRow>> {
    let lv = levels(p)?;
    let d = p.d as f64;
    let rows = (0..=p.k_max)
        .map(|k| {
            let (cur, next) = (&lv[k], &lv[k + 1]);
            let inputs = MasterInputs {
                eps_tilde: cur.eps.clone(),
                n_k: cur.n.clone(),
                l_next: next.l.clone(),
                big_l: cur.big_l.clone(),
                big_l_next: next.big_l.clone(),
                t_next: next.t.clone(),
                d: p.d,
                gamma: p.gamma,
                c: p.c,
                alpha: p.alpha,
            };
            let (master, note) = match master_bound(&inputs) {
                Ok(mb) => (Some(mb.total), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let r0 = next.big_l.div(&Tower::from_f64(4.0)).floor();
            let time_ok = Tower::from_f64(4.0 * d * E).mul(&next.t).le(&r0);
            ScheduleRow {
                k,
                bound_holds: master.as_ref().map(|m| m.le(&next.eps)),
                master_bound_k: master,
                master_note: note,
                time_constraint_holds: time_ok,
                underflow: !cur.eps.is_flat(),
                eps_k: cur.eps.clone(),
                n_k: cur.n.clone(),
                l_k: cur.l.clone(),
                big_l_k: cur.big_l.clone(),
                t_k: cur.t.clone(),
                big_t_k: cur.big_t.clone(),
            }
        })
        .collect();
    Ok(rows)
}

/// One evaluated smallness condition, compared in log form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    /// `ln` of the left-hand side.
    pub log_lhs: f64,
    /// `ln` of the right-hand side.
    pub log_rhs: f64,
    pub holds: bool,
}

fn check(name: &str, log_lhs: f64, log_rhs: f64) -> ConditionCheck {
    ConditionCheck { name: name.into(), log_lhs, log_rhs, holds: log_lhs <= log_rhs }
}

/// Report for conditions (E1) to (E8).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub items: Vec<ConditionCheck>,
    /// Per-level checks of `ε_k ≤ ε_0^k`, present when a schedule was supplied.
    pub e8: Option<Vec<ConditionCheck>>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.items.iter().all(|c| c.holds) && self.e8.iter().flatten().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.items.iter().find(|c| c.name == name)
    }
}

/// Evaluates the smallness conditions at `ε′`.
///
/// (E8) is checked through its sufficient form `ε_k ≤ ε_0^k` along the given
/// schedule prefix.
pub fn check_conditions(
    eps_prime: f64,
    d: u32,
    dd: f64,
    chi: f64,
    gamma: f64,
    c: f64,
    prefix: Option<&[ScheduleRow]>,
) -> Result<ConditionReport> {
    if !(eps_prime > 0.0 && d >= 2 && dd > 0.0 && chi > 0.0 && gamma > 0.0 && c > 0.0) {
        return invalid("conditions need ε′, D, χ, γ, C > 0 and d ≥ 2");
    }
    let df = d as f64;
    let dm1 = df - 1.0;
    let le = eps_prime.ln();
    let root = (le / dm1).exp();
    let s = (2.0 * E).powf(1.0 / dm1);
    let ln2 = std::f64::consts::LN_2;
    let c_hat = 8.0 * df * 16.0 / (E * ln2);
    let iota = chi / dm1;
    let e7_rhs = (-iota / dm1 * iota.ln()).min(-dm1);
    let items = vec![
        check("E1", le, -(dm1 * 3f64.ln() + (2.0 * E).ln())),
        check("E2", le, dm1 * dd.ln()),
        check(
            "E3",
            -(1.0 / (12.0 * s) - chi) / root + df * (5.0 * dd / (3.0 * s)).ln() - 2.0 * df / dm1 * le,
            -(4f64.ln()),
        ),
        check(
            "E4",
            df * (5.0 * dd / 3.0).ln() - df / dm1 * le - (gamma / (2.0 * s) - chi) / root,
            -(4f64.ln()),
        ),
        check("E5", c_hat.ln() - (dd * ln2 / 32.0 - chi) / root, -(2f64.ln())),
        check("E6", -chi / root - 2.0 * le, 0.0),
        check("E7", le, e7_rhs),
    ];
    let e8 = prefix.map(|rows| {
        let l0 = rows.first().and_then(|r| r.eps_k.ln_f64()).unwrap_or(f64::NAN);
        rows.iter()
            .filter(|r| r.k >= 1)
            .map(|r| {
                let bound = Tower::from_f64(l0 * r.k as f64);
                let lhs = r.eps_k.ln_abs();
                ConditionCheck {
                    name: format!("E8[k={}]", r.k),
                    log_lhs: lhs.to_f64(),
                    log_rhs: l0 * r.k as f64,
                    holds: lhs.le(&bound),
                }
            })
            .collect()
    });
    Ok(ConditionReport { items, e8 })
}
