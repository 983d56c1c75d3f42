//! Finite boxes of Z^d, spin configurations and boundary conditions.
//!
//! Sites are stored in row-major order with the last axis varying fastest:
//! `index(x) = sum_a x[a] * stride[a]` where `stride[d-1] = 1` and
//! `stride[a] = stride[a+1] * sides[a+1]`. Boundary spins are virtual and
//! computed from the [`BoundaryCondition`] on demand.
//!
//! Text format: a header line `d=<d> sides=<n1,...,nd> boundary=<kind>`
//! followed by `len / n_d` rows of `n_d` characters, `+` for +1 and `-` for −1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;

/// Largest number of sites in a box; neighbour tables use 32-bit indices.
pub const MAX_SITES: usize = i32::MAX as usize;

/// Side lengths of a box `[0,n1-1] x ... x [0,nd-1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxShape {
    sides: Vec<usize>,
}

impl BoxShape {
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        if sides.is_empty() {
            return invalid("box dimension must be at least 1");
        }
        if sides.iter().any(|&n| n == 0) {
            return invalid(format!("box sides must be positive, got {sides:?}"));
        }
        let len = sides.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match len {
            Some(l) if l <= MAX_SITES => Ok(Self { sides }),
            _ => invalid(format!("box {sides:?} exceeds {MAX_SITES} sites")),
        }
    }

    /// The cube Λ_n = [0,n-1]^d.
    pub fn cube(d: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn len(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.sides).all(|(&c, &n)| c >= 0 && (c as usize) < n)
    }

    /// Row-major index of an in-box site.
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(x.iter().zip(&self.sides).fold(0usize, |acc, (&c, &n)| acc * n + c as usize))
    }

    /// Coordinates of the site with row-major index `idx`.
    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut x = vec![0i64; self.dim()];
        for a in (0..self.dim()).rev() {
            x[a] = (idx % self.sides[a]) as i64;
            idx /= self.sides[a];
        }
        x
    }
}

/// Spins assigned to sites outside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    AllPlus,
    AllMinus,
    /// −1 on `{x1 >= 1, x2 >= 1}` and +1 elsewhere; two dimensions only.
    Quadrant,
    /// Missing neighbours contribute nothing (diagnostic mode).
    Free,
}

impl BoundaryCondition {
    pub fn name(self) -> &'static str {
        match self {
            Self::AllPlus => "all-plus",
            Self::AllMinus => "all-minus",
            Self::Quadrant => "quadrant",
            Self::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all-plus" => Ok(Self::AllPlus),
            "all-minus" => Ok(Self::AllMinus),
            "quadrant" => Ok(Self::Quadrant),
            "free" => Ok(Self::Free),
            _ => Err(Error::Parse(format!("unknown boundary kind `{s}`"))),
        }
    }

    /// Spin of an exterior site, or 0 under the free condition.
    pub fn exterior_spin(self, x: &[i64]) -> i8 {
        match self {
            Self::AllPlus => 1,
            Self::AllMinus => -1,
            Self::Quadrant => quadrant_spin(x),
            Self::Free => 0,
        }
    }

    fn check_dim(self, d: usize) -> Result<()> {
        if self == Self::Quadrant && d != 2 {
            return invalid(format!("quadrant boundary requires d = 2, got d = {d}"));
        }
        Ok(())
    }
}

/// The quadrant pattern: −1 iff `x1 >= 1` and `x2 >= 1`.
pub fn quadrant_spin(x: &[i64]) -> i8 {
    if x[0] >= 1 && x[1] >= 1 {
        -1
    } else {
        1
    }
}

/// Half-open sub-box `lo <= x < hi`; empty when some `hi[a] <= lo[a]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl SubBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        Self { lo, hi }
    }

    /// The whole of `shape`.
    pub fn whole(shape: &BoxShape) -> Self {
        Self { lo: vec![0; shape.dim()], hi: shape.sides().iter().map(|&n| n as i64).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h <= l)
    }

    pub fn within(&self, shape: &BoxShape) -> bool {
        self.lo.len() == shape.dim()
            && self.hi.len() == shape.dim()
            && (self.is_empty()
                || self.lo.iter().zip(&self.hi).zip(shape.sides()).all(|((&l, &h), &n)| l >= 0 && h <= n as i64))
    }

    /// Side lengths of a non-empty sub-box.
    pub fn shape(&self) -> Result<BoxShape> {
        BoxShape::new(self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).max(0) as usize).collect())
    }

    /// Visits every site of the sub-box in row-major order.
    pub fn for_each_site(&self, mut f: impl FnMut(&[i64])) {
        if self.is_empty() {
            return;
        }
        let mut x = self.lo.clone();
        loop {
            f(&x);
            let mut a = x.len();
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                x[a] += 1;
                if x[a] < self.hi[a] {
                    break;
                }
                x[a] = self.lo[a];
            }
        }
    }
}

/// Neighbour code for an exterior +1 site.
pub const EXT_PLUS: i32 = -1;
/// Neighbour code for an exterior −1 site.
pub const EXT_MINUS: i32 = -2;
/// Neighbour code for a missing neighbour (free boundary).
pub const EXT_NONE: i32 = -3;

/// Precomputed nearest-neighbour table; `2d` entries per site ordered
/// `-e_1, +e_1, ..., -e_d, +e_d`.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub degree: usize,
    pub table: Vec<i32>,
}

impl Neighborhood {
    pub fn build(shape: &BoxShape, boundary: BoundaryCondition) -> Self {
        let d = shape.dim();
        let mut table = Vec::with_capacity(shape.len() * 2 * d);
        for idx in 0..shape.len() {
            let x = shape.coords(idx);
            let mut y = x.clone();
            for a in 0..d {
                for delta in [-1i64, 1] {
                    y[a] = x[a] + delta;
                    let code = match shape.index(&y) {
                        Some(j) => j as i32,
                        None => match boundary.exterior_spin(&y) {
                            1 => EXT_PLUS,
                            -1 => EXT_MINUS,
                            _ => EXT_NONE,
                        },
                    };
                    table.push(code);
                }
                y[a] = x[a];
            }
        }
        Self { degree: 2 * d, table }
    }

    #[inline]
    pub fn of(&self, idx: usize) -> &[i32] {
        &self.table[idx * self.degree..(idx + 1) * self.degree]
    }

    /// Sum of neighbouring spins of site `idx`.
    #[inline]
    pub fn field(&self, spins: &[i8], idx: usize) -> i32 {
        self.of(idx)
            .iter()
            .map(|&c| match c {
                EXT_PLUS => 1,
                EXT_MINUS => -1,
                EXT_NONE => 0,
                j => spins[j as usize] as i32,
            })
            .sum()
    }
}

/// Spins in {−1,+1} on a box together with a boundary condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfig {
    shape: BoxShape,
    spins: Vec<i8>,
    boundary: BoundaryCondition,
}

impl SpinConfig {
    /// Every spin equal to `value`.
    pub fn uniform(shape: BoxShape, boundary: BoundaryCondition, value: i8) -> Result<Self> {
        check_spin(value)?;
        boundary.check_dim(shape.dim())?;
        Ok(Self { spins: vec![value; shape.len()], shape, boundary })
    }

    pub fn from_spins(shape: BoxShape, boundary: BoundaryCondition, spins: Vec<i8>) -> Result<Self> {
        boundary.check_dim(shape.dim())?;
        if spins.len() != shape.len() {
            return invalid(format!("expected {} spins, got {}", shape.len(), spins.len()));
        }
        if let Some(&s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return invalid(format!("spin value {s} is not ±1"));
        }
        Ok(Self { shape, spins, boundary })
    }

    /// The quadrant initial condition on `[0,n-1]^2`: −1 iff both coordinates are ≥ 1.
    pub fn quadrant(n: usize) -> Result<Self> {
        let shape = BoxShape::cube(2, n)?;
        let spins = (0..shape.len()).map(|i| quadrant_spin(&shape.coords(i))).collect();
        Ok(Self { shape, spins, boundary: BoundaryCondition::Quadrant })
    }

    pub fn shape(&self) -> &BoxShape {
        &self.shape
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub(crate) fn spins_mut(&mut self) -> &mut [i8] {
        &mut self.spins
    }

    /// Spin at `x`; exterior sites return the boundary value (0 if free).
    pub fn spin(&self, x: &[i64]) -> i8 {
        match self.shape.index(x) {
            Some(i) => self.spins[i],
            None => self.boundary.exterior_spin(x),
        }
    }

    pub fn set(&mut self, x: &[i64], value: i8) -> Result<()> {
        check_spin(value)?;
        match self.shape.index(x) {
            Some(i) => {
                self.spins[i] = value;
                Ok(())
            }
            None => invalid(format!("site {x:?} outside box {:?}", self.shape.sides())),
        }
    }

    pub fn count_plus(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }

    /// `e_x = -sum_{y~x} σ_x σ_y`, with exterior spins taken from the boundary.
    pub fn local_energy(&self, x: &[i64]) -> Result<i32> {
        let Some(i) = self.shape.index(x) else {
            return invalid(format!("site {x:?} outside box {:?}", self.shape.sides()));
        };
        let mut y = x.to_vec();
        let mut sum = 0i32;
        for a in 0..x.len() {
            for delta in [-1i64, 1] {
                y[a] = x[a] + delta;
                sum += self.spin(&y) as i32;
            }
            y[a] = x[a];
        }
        Ok(-(self.spins[i] as i32) * sum)
    }

    /// Sets every spin of `sub` to `value`.
    pub fn fill_box(&mut self, sub: &SubBox, value: i8) -> Result<()> {
        check_spin(value)?;
        if !sub.within(&self.shape) {
            return invalid(format!("sub-box {sub:?} not inside box {:?}", self.shape.sides()));
        }
        let shape = &self.shape;
        let spins = &mut self.spins;
        sub.for_each_site(|x| spins[shape.index(x).expect("inside")] = value);
        Ok(())
    }

    /// Serialises to the text format described in the module docs.
    pub fn to_text(&self) -> String {
        write_grid(&self.shape, self.boundary, self.spins.iter().map(|&s| s == 1))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (shape, boundary, cells) = parse_grid(text)?;
        let spins = cells.into_iter().map(|b| if b { 1 } else { -1 }).collect();
        Self::from_spins(shape, boundary, spins)
    }
}

/// I.i.d. spins, +1 with probability `p`, drawn in index order from `seed`.
pub fn sample_product_config(shape: BoxShape, p: f64, boundary: BoundaryCondition, seed: u64) -> Result<SpinConfig> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("probability p = {p} outside [0,1]"));
    }
    let mut rng = SimRng::new(seed);
    let spins = (0..shape.len()).map(|_| if rng.bernoulli(p) { 1 } else { -1 }).collect();
    SpinConfig::from_spins(shape, boundary, spins)
}

fn check_spin(value: i8) -> Result<()> {
    if value == 1 || value == -1 {
        Ok(())
    } else {
        invalid(format!("spin value {value} is not ±1"))
    }
}

pub(crate) fn write_grid(shape: &BoxShape, boundary: BoundaryCondition, cells: impl Iterator<Item = bool>) -> String {
    let sides: Vec<String> = shape.sides().iter().map(|n| n.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "d={} sides={} boundary={}", shape.dim(), sides.join(","), boundary.name());
    let row = *shape.sides().last().expect("dim >= 1");
    for (i, c) in cells.enumerate() {
        out.push(if c { '+' } else { '-' });
        if (i + 1) % row == 0 {
            out.push('\n');
        }
    }
    out
}

pub(crate) fn parse_grid(text: &str) -> Result<(BoxShape, BoundaryCondition, Vec<bool>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
    let mut d = None;
    let mut sides = None;
    let mut boundary = None;
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
        match key {
            "d" => d = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "sides" => {
                let v: std::result::Result<Vec<usize>, _> = value.split(',').map(str::parse).collect();
                sides = Some(v.map_err(|e| Error::Parse(e.to_string()))?);
            }
            "boundary" => boundary = Some(BoundaryCondition::parse(value)?),
            _ => return Err(Error::Parse(format!("unknown header key `{key}`"))),
        }
    }
    let (Some(d), Some(sides), Some(boundary)) = (d, sides, boundary) else {
        return Err(Error::Parse("header needs d, sides and boundary".into()));
    };
    if sides.len() != d {
        return Err(Error::Parse(format!("d={d} but {} sides given", sides.len())));
    }
    let shape = BoxShape::new(sides)?;
    let row = *shape.sides().last().expect("dim >= 1");
    let mut cells = Vec::with_capacity(shape.len());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let line = line.trim_end();
        if line.chars().count() != row {
            return Err(Error::Parse(format!("row `{line}` has length != {row}")));
        }
        for ch in line.chars() {
            cells.push(match ch {
                '+' => true,
                '-' => false,
                _ => return Err(Error::Parse(format!("unexpected character `{ch}`"))),
            });
        }
    }
    if cells.len() != shape.len() {
        return Err(Error::Parse(format!("expected {} cells, found {}", shape.len(), cells.len())));
    }
    Ok((shape, boundary, cells))
}
