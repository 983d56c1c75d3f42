//! Signed iterated-exponential numbers for quantities far outside `f64` range.
//!
//! A [`Tower`] is either a plain `f64` ("flat") or `mant · e^E` where the
//! exponent `E` is itself a `Tower`. Block-renormalisation schedules produce
//! values such as `exp(−χ·exp(χ·e^{92000}))`, and the bookkeeping needs
//! products like `2·n·ε` where `n ≈ 1/(2eε)` to come out as exactly `1/e`.
//! Keeping the mantissa apart from the exponent makes such cancellations
//! structural: exponents that are identical cancel exactly, and mantissas
//! are multiplied as ordinary floats.
//!
//! Canonical forms:
//! - flat: `|ln|x|| < 600` or `x = 0`;
//! - folded: `±e^E` with flat `E`, `600 ≤ |E| < 10⁶` (the mantissa has been
//!   absorbed into `E` without visible loss);
//! - nested: `mant · e^E` otherwise, with `|ln|mant|| ≤ 300`.
//!
//! Two non-flat exponents that agree to a relative `1e-13` at every level are
//! treated as equal when adding; this is the only place precision is traded
//! for structure.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

/// `|ln|x||` below which a value is stored as a plain `f64`.
const FLAT_LOG: f64 = 600.0;
/// Mantissas are kept with `|ln|mant|| ≤ MANT_LOG`.
const MANT_LOG: f64 = 300.0;
/// Flat exponents below this magnitude absorb the mantissa.
const FOLD_MAX: f64 = 1e6;
/// Relative tolerance for treating two non-flat exponents as equal.
const TIE_REL: f64 = 1e-13;
/// A summand smaller by more than `e^{-40}` is dropped.
const NEGLIGIBLE_LOG: f64 = 40.0;

/// An iterated-exponential real number.
#[derive(Clone, Debug, PartialEq)]
pub struct Tower {
    mant: f64,
    exp: Option<Box<Tower>>,
}

impl Tower {
    /// A flat value. Panics on non-finite input, which would be a logic error.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "Tower::from_f64 needs a finite value, got {x}");
        if x != 0.0 && x.abs().ln().abs() >= FLAT_LOG {
            return Self::normalize(x.signum(), Self::from_f64(x.abs().ln()));
        }
        Self { mant: x, exp: None }
    }

    pub fn zero() -> Self {
        Self { mant: 0.0, exp: None }
    }

    pub fn one() -> Self {
        Self { mant: 1.0, exp: None }
    }

    /// `e^x`.
    pub fn exp(x: &Tower) -> Self {
        if let Some(v) = x.as_f64() {
            if v.abs() < FLAT_LOG {
                return Self::from_f64(v.exp());
            }
        }
        Self::normalize(1.0, x.clone())
    }

    /// The value as `f64` when flat.
    pub fn as_f64(&self) -> Option<f64> {
        self.exp.is_none().then_some(self.mant)
    }

    /// Nearest `f64`: overflow maps to `±∞`, underflow to `±0`.
    pub fn to_f64(&self) -> f64 {
        match &self.exp {
            None => self.mant,
            Some(e) if e.signum() > 0.0 => self.mant.signum() * f64::INFINITY,
            Some(_) => self.mant.signum() * 0.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.exp.is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    /// `−1`, `0` or `1`.
    pub fn signum(&self) -> f64 {
        if self.mant == 0.0 {
            0.0
        } else {
            self.mant.signum()
        }
    }

    /// Number of nested exponent levels (0 for flat values).
    pub fn depth(&self) -> usize {
        self.exp.as_ref().map_or(0, |e| 1 + e.depth())
    }

    pub fn neg(&self) -> Self {
        Self { mant: -self.mant, exp: self.exp.clone() }
    }

    /// `(mant, E)` with `|ln|mant|| ≤ 300`, so two mantissas multiply safely.
    fn parts(&self) -> (f64, Tower) {
        match &self.exp {
            Some(e) => (self.mant, (**e).clone()),
            None if self.mant != 0.0 && self.mant.abs().ln().abs() > MANT_LOG => {
                (self.mant.signum(), Self::from_f64(self.mant.abs().ln()))
            }
            None => (self.mant, Self::zero()),
        }
    }

    fn normalize(mant: f64, e: Tower) -> Self {
        debug_assert!(mant.is_finite());
        if mant == 0.0 {
            return Self::zero();
        }
        if e.is_zero() {
            return Self::from_f64(mant);
        }
        let lm = mant.abs().ln();
        if let Some(ef) = e.as_f64() {
            let l = ef + lm;
            if l.abs() < FLAT_LOG {
                return Self { mant: mant.signum() * l.exp(), exp: None };
            }
            if ef.abs() < FOLD_MAX {
                return Self { mant: mant.signum(), exp: Some(Box::new(Self::from_f64(l))) };
            }
        }
        if lm.abs() <= MANT_LOG {
            Self { mant, exp: Some(Box::new(e)) }
        } else {
            Self::normalize(mant.signum(), e.add(&Self::from_f64(lm)))
        }
    }

    /// Whether two values agree to `TIE_REL` at every level of structure.
    fn approx_eq(&self, other: &Tower) -> bool {
        let close = (self.mant - other.mant).abs() <= TIE_REL * self.mant.abs().max(other.mant.abs());
        match (&self.exp, &other.exp) {
            (None, None) => close,
            (Some(a), Some(b)) => close && a.approx_eq(b),
            _ => false,
        }
    }

    pub fn mul(&self, other: &Tower) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        if let (Some(a), Some(b)) = (self.as_f64(), other.as_f64()) {
            let p = a * b;
            if p != 0.0 && p.abs().ln().abs() < FLAT_LOG {
                return Self::from_f64(p);
            }
        }
        let (ma, ea) = self.parts();
        let (mb, eb) = other.parts();
        Self::normalize(ma * mb, ea.add(&eb))
    }

    /// `1/x`; panics on zero.
    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        let (m, e) = self.parts();
        Self::normalize(1.0 / m, e.neg())
    }

    pub fn div(&self, other: &Tower) -> Self {
        self.mul(&other.recip())
    }

    pub fn add(&self, other: &Tower) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_f64(), other.as_f64()) {
            return Self::from_f64(a + b);
        }
        let (ma, ea) = self.parts();
        let (mb, eb) = other.parts();
        if !ea.is_flat() && !eb.is_flat() && ea.approx_eq(&eb) {
            return Self::normalize(ma + mb, ea);
        }
        // ln|a| − ln|b|, with the exponent difference taken structurally.
        let gap = ea.sub(&eb).add(&Self::from_f64(ma.abs().ln() - mb.abs().ln()));
        match gap.as_f64() {
            Some(g) if g > NEGLIGIBLE_LOG => self.clone(),
            Some(g) if g < -NEGLIGIBLE_LOG => other.clone(),
            Some(g) => {
                let s = ma.signum() * mb.signum();
                let factor = 1.0 + s * (-g).exp();
                if factor == 0.0 {
                    Self::zero()
                } else {
                    self.mul(&Self::from_f64(factor))
                }
            }
            None if gap.signum() > 0.0 => self.clone(),
            None => other.clone(),
        }
    }

    pub fn sub(&self, other: &Tower) -> Self {
        self.add(&other.neg())
    }

    /// `ln|x|`; panics on zero.
    pub fn ln_abs(&self) -> Self {
        assert!(!self.is_zero(), "logarithm of zero");
        let (m, e) = self.parts();
        e.add(&Self::from_f64(m.abs().ln()))
    }

    /// `x^p` for `x > 0`; panics otherwise.
    pub fn powf(&self, p: f64) -> Self {
        assert!(self.signum() > 0.0, "powf needs a positive base");
        if p == 0.0 {
            return Self::one();
        }
        if let Some(v) = self.as_f64() {
            let r = v.powf(p);
            if r.is_finite() && r != 0.0 && r.ln().abs() < FLAT_LOG {
                return Self::from_f64(r);
            }
        }
        let (m, e) = self.parts();
        let lm = p * m.ln();
        let ep = e.mul(&Self::from_f64(p));
        if lm.abs() <= MANT_LOG {
            Self::normalize(lm.exp(), ep)
        } else {
            Self::normalize(1.0, ep.add(&Self::from_f64(lm)))
        }
    }

    /// Floor; values beyond `2^53` are their own floor, tiny values floor to 0 or −1.
    pub fn floor(&self) -> Self {
        match &self.exp {
            None => Self::from_f64(self.mant.floor()),
            Some(e) if e.signum() > 0.0 => self.clone(),
            Some(_) if self.mant > 0.0 => Self::zero(),
            Some(_) => Self::from_f64(-1.0),
        }
    }

    /// Total order by value (ties as in [`Tower::add`]).
    pub fn cmp_value(&self, other: &Tower) -> Ordering {
        let d = self.sub(other).signum();
        if d > 0.0 {
            Ordering::Greater
        } else if d < 0.0 {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }

    pub fn le(&self, other: &Tower) -> bool {
        self.cmp_value(other) != Ordering::Greater
    }

    /// `ln|x|` as `f64` when representable.
    pub fn ln_f64(&self) -> Option<f64> {
        self.ln_abs().as_f64()
    }
}

impl fmt::Display for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exp {
            None => write!(f, "{}", self.mant),
            Some(e) if self.mant == 1.0 => write!(f, "exp({e})"),
            Some(e) if self.mant == -1.0 => write!(f, "-exp({e})"),
            Some(e) => write!(f, "{}*exp({e})", self.mant),
        }
    }
}

impl Serialize for Tower {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl From<f64> for Tower {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}
