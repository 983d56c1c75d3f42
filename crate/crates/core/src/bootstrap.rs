//! Modified bootstrap percolation and the threshold-two −1 closure.
//!
//! Under the modified rule a vacant site becomes occupied when, along every
//! axis, at least one of its two neighbours is occupied. Sites outside the
//! box count as vacant. Closures are computed with a work queue that only
//! revisits neighbours of newly occupied sites; because the rule is monotone
//! the fixed point does not depend on the visiting order.
//!
//! The threshold-two rule turns a +1 site into −1 once two of its nearest
//! neighbours are −1 (exterior sites are +1). Its fixed point is covered by
//! well-separated rectangles, see [`minus_bootstrap_rectangles`].
//!
//! Text I/O reuses the spin format of [`crate::lattice`]: `+` is occupied
//! (1) and `-` is vacant (0).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{parse_grid, write_grid, BoundaryCondition, BoxShape, SubBox};
use crate::rng::SimRng;
use crate::stats::{wilson_interval, BinomialEstimate};

/// Occupation field of the modified bootstrap process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbpConfig {
    shape: BoxShape,
    occupied: Vec<u8>,
}

impl MbpConfig {
    pub fn empty(shape: BoxShape) -> Self {
        Self { occupied: vec![0; shape.len()], shape }
    }

    pub fn from_occupied(shape: BoxShape, occupied: Vec<u8>) -> Result<Self> {
        if occupied.len() != shape.len() {
            return invalid(format!("expected {} cells, got {}", shape.len(), occupied.len()));
        }
        if occupied.iter().any(|&v| v > 1) {
            return invalid("occupation values must be 0 or 1");
        }
        Ok(Self { shape, occupied })
    }

    /// I.i.d. occupation with probability `theta`, drawn in index order.
    pub fn sample(shape: BoxShape, theta: f64, rng: &mut SimRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return invalid(format!("theta = {theta} outside [0,1]"));
        }
        let occupied = (0..shape.len()).map(|_| rng.bernoulli(theta) as u8).collect();
        Ok(Self { shape, occupied })
    }

    pub fn shape(&self) -> &BoxShape {
        &self.shape
    }

    pub fn occupied(&self) -> &[u8] {
        &self.occupied
    }

    pub fn is_occupied(&self, x: &[i64]) -> bool {
        self.shape.index(x).is_some_and(|i| self.occupied[i] == 1)
    }

    pub fn occupy(&mut self, x: &[i64]) -> Result<()> {
        match self.shape.index(x) {
            Some(i) => {
                self.occupied[i] = 1;
                Ok(())
            }
            None => invalid(format!("site {x:?} outside the box")),
        }
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_full(&self) -> bool {
        self.occupied.iter().all(|&v| v == 1)
    }

    pub fn to_text(&self) -> String {
        write_grid(&self.shape, BoundaryCondition::AllMinus, self.occupied.iter().map(|&v| v == 1))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (shape, _, cells) = parse_grid(text)?;
        Self::from_occupied(shape, cells.into_iter().map(u8::from).collect())
    }

    /// Whether vacant site `x` satisfies the modified rule.
    fn rule_holds(&self, x: &mut [i64]) -> bool {
        (0..x.len()).all(|a| {
            let c = x[a];
            x[a] = c - 1;
            let minus = self.is_occupied(x);
            x[a] = c + 1;
            let plus = self.is_occupied(x);
            x[a] = c;
            minus || plus
        })
    }
}

/// One synchronous update of the modified rule.
pub fn mbp_step(c: &MbpConfig) -> MbpConfig {
    let mut next = c.clone();
    for i in 0..c.shape.len() {
        if c.occupied[i] == 0 {
            let mut x = c.shape.coords(i);
            if c.rule_holds(&mut x) {
                next.occupied[i] = 1;
            }
        }
    }
    next
}

/// Fixed point of [`mbp_step`].
pub fn mbp_closure(c: &MbpConfig) -> MbpConfig {
    let mut out = c.clone();
    let shape = c.shape.clone();
    let mut queued = vec![false; shape.len()];
    let mut queue: VecDeque<usize> = (0..shape.len()).filter(|&i| c.occupied[i] == 0).collect();
    for &i in &queue {
        queued[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        if out.occupied[i] == 1 {
            continue;
        }
        let mut x = shape.coords(i);
        if !out.rule_holds(&mut x) {
            continue;
        }
        out.occupied[i] = 1;
        for a in 0..x.len() {
            for delta in [-1i64, 1] {
                x[a] += delta;
                if let Some(j) = shape.index(&x) {
                    if out.occupied[j] == 0 && !queued[j] {
                        queued[j] = true;
                        queue.push_back(j);
                    }
                }
                x[a] -= delta;
            }
        }
    }
    out
}

/// Whether the closure of `c` restricted to `a` (vacant elsewhere) fills `a`.
pub fn internally_spans(c: &MbpConfig, a: &SubBox) -> Result<bool> {
    if !a.within(&c.shape) {
        return invalid(format!("sub-box {a:?} not inside the box"));
    }
    if a.is_empty() {
        return Ok(true);
    }
    let sub_shape = a.shape()?;
    let mut cells = Vec::with_capacity(sub_shape.len());
    a.for_each_site(|x| cells.push(c.is_occupied(x) as u8));
    let restricted = MbpConfig::from_occupied(sub_shape, cells)?;
    Ok(mbp_closure(&restricted).is_full())
}

/// Monte Carlo estimate of `P_theta(Λ_n is internally spanned)`.
///
/// Replica `r` samples its field from the stream `derive_seed(seed, [r])`.
pub fn spanning_probability(n: usize, theta: f64, d: usize, replicas: u64, seed: u64) -> Result<BinomialEstimate> {
    if replicas == 0 {
        return invalid("replicas must be at least 1");
    }
    if !(0.0..=1.0).contains(&theta) {
        return invalid(format!("theta = {theta} outside [0,1]"));
    }
    let shape = BoxShape::cube(d, n)?;
    let whole = SubBox::whole(&shape);
    let mut hits = 0u64;
    for r in 0..replicas {
        let mut rng = SimRng::derived(seed, &[r]);
        let c = MbpConfig::sample(shape.clone(), theta, &mut rng)?;
        if internally_spans(&c, &whole)? {
            hits += 1;
        }
    }
    wilson_interval(hits, replicas, 0.95)
}

/// Axis-aligned box with inclusive bounds `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Rect {
    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(c, (l, h))| l <= c && c <= h)
    }

    /// ℓ¹ distance between the two boxes.
    pub fn l1_gap(&self, other: &Rect) -> i64 {
        (0..self.lo.len())
            .map(|a| (other.lo[a] - self.hi[a]).max(self.lo[a] - other.hi[a]).max(0))
            .sum()
    }

    pub fn longest_side(&self) -> i64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l + 1).max().unwrap_or(0)
    }

    fn hull(&self, other: &Rect) -> Rect {
        Rect {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        }
    }
}

/// Rectangles no two of which have a common site within ℓ¹ distance 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectangleSet {
    pub rects: Vec<Rect>,
}

impl RectangleSet {
    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// No vertex lies within distance 1 of two rectangles, i.e. all pairwise gaps exceed 2.
    pub fn is_well_separated(&self) -> bool {
        self.rects
            .iter()
            .enumerate()
            .all(|(i, a)| self.rects[i + 1..].iter().all(|b| a.l1_gap(b) > 2))
    }

    pub fn covers(&self, x: &[i64]) -> bool {
        self.rects.iter().any(|r| r.contains(x))
    }
}

/// Fixed point of the threshold-two +1 → −1 rule inside `domain` (exterior +1).
pub fn minus_bootstrap_closure(domain: &BoxShape, field: &[i8]) -> Result<Vec<i8>> {
    if field.len() != domain.len() {
        return invalid(format!("field has {} sites, domain has {}", field.len(), domain.len()));
    }
    if field.iter().any(|&s| s != 1 && s != -1) {
        return invalid("field values must be ±1");
    }
    let mut out = field.to_vec();
    let mut queue: VecDeque<usize> = (0..domain.len()).filter(|&i| out[i] == 1).collect();
    let mut queued: Vec<bool> = out.iter().map(|&s| s == 1).collect();
    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        if out[i] == -1 {
            continue;
        }
        let mut x = domain.coords(i);
        let mut minus = 0;
        let mut nbrs = Vec::with_capacity(2 * x.len());
        for a in 0..x.len() {
            for delta in [-1i64, 1] {
                x[a] += delta;
                if let Some(j) = domain.index(&x) {
                    nbrs.push(j);
                    if out[j] == -1 {
                        minus += 1;
                    }
                }
                x[a] -= delta;
            }
        }
        if minus >= 2 {
            out[i] = -1;
            for j in nbrs {
                if out[j] == 1 && !queued[j] {
                    queued[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}

/// Minimal well-separated rectangles covering the −1 sites of the
/// threshold-two closure of `field`.
///
/// Bounding boxes of the connected components of the closure are merged
/// pairwise while two of them have ℓ¹ gap at most 2, until no merge applies.
pub fn minus_bootstrap_rectangles(domain: &BoxShape, field: &[i8]) -> Result<RectangleSet> {
    let closed = minus_bootstrap_closure(domain, field)?;
    let mut seen = vec![false; domain.len()];
    let mut rects = Vec::new();
    for start in 0..domain.len() {
        if closed[start] != -1 || seen[start] {
            continue;
        }
        let x0 = domain.coords(start);
        let mut rect = Rect { lo: x0.clone(), hi: x0 };
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let mut x = domain.coords(i);
            for a in 0..x.len() {
                rect.lo[a] = rect.lo[a].min(x[a]);
                rect.hi[a] = rect.hi[a].max(x[a]);
            }
            for a in 0..x.len() {
                for delta in [-1i64, 1] {
                    x[a] += delta;
                    if let Some(j) = domain.index(&x) {
                        if closed[j] == -1 && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                    x[a] -= delta;
                }
            }
        }
        rects.push(rect);
    }
    'merge: loop {
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                if rects[i].l1_gap(&rects[j]) <= 2 {
                    let b = rects.swap_remove(j);
                    rects[i] = rects[i].hull(&b);
                    continue 'merge;
                }
            }
        }
        break;
    }
    rects.sort_by(|a, b| a.lo.cmp(&b.lo));
    Ok(RectangleSet { rects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, sites: &[[i64; 2]]) -> MbpConfig {
        let mut c = MbpConfig::empty(BoxShape::cube(2, n).unwrap());
        for s in sites {
            c.occupy(s).unwrap();
        }
        c
    }

    /// Iterates the synchronous rule until nothing changes.
    fn brute_closure(c: &MbpConfig) -> MbpConfig {
        let mut cur = c.clone();
        loop {
            let next = mbp_step(&cur);
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    #[test]
    fn step_examples() {
        let full = MbpConfig::from_occupied(BoxShape::cube(2, 3).unwrap(), vec![1; 9]).unwrap();
        assert_eq!(mbp_step(&full), full);

        let c = cfg(3, &[[1, 0], [0, 1]]);
        let s = mbp_step(&c);
        assert!(s.is_occupied(&[0, 0]) && s.is_occupied(&[1, 1]));
        assert_eq!(s.count(), 4);

        let c = cfg(3, &[[0, 0], [2, 0]]);
        assert_eq!(mbp_step(&c), c);
    }

    #[test]
    fn closure_examples() {
        let e = MbpConfig::empty(BoxShape::cube(2, 5).unwrap());
        assert_eq!(mbp_closure(&e), e);
        let n = 6;
        let mut sites = Vec::new();
        for i in 0..n as i64 {
            sites.push([i, 0]);
            sites.push([0, i]);
        }
        let c = cfg(n, &sites);
        assert!(mbp_closure(&c).is_full());
        assert!(brute_closure(&c).is_full());
    }

    #[test]
    fn spanning_examples() {
        let shape = BoxShape::cube(2, 3).unwrap();
        let full = MbpConfig::from_occupied(shape.clone(), vec![1; 9]).unwrap();
        assert!(internally_spans(&full, &SubBox::new(vec![0, 0], vec![2, 2])).unwrap());

        let mut c = full.clone();
        c.occupied[shape.index(&[1, 1]).unwrap()] = 0;
        assert!(!internally_spans(&c, &SubBox::new(vec![1, 1], vec![2, 2])).unwrap());
        assert!(internally_spans(&c, &SubBox::whole(&shape)).unwrap());
        assert!(internally_spans(&c, &SubBox::new(vec![0, 0], vec![4, 4])).is_err());

        assert_eq!(spanning_probability(8, 1.0, 2, 20, 1).unwrap().estimate, 1.0);
        assert_eq!(spanning_probability(8, 0.0, 2, 20, 1).unwrap().estimate, 0.0);
        assert!(spanning_probability(8, 1.2, 2, 20, 1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let c = cfg(4, &[[0, 1], [3, 3]]);
        let text = c.to_text();
        assert_eq!(MbpConfig::from_text(&text).unwrap(), c);
    }

    #[test]
    fn rectangles_examples() {
        let domain = BoxShape::cube(2, 5).unwrap();
        let plus = vec![1i8; 25];
        assert!(minus_bootstrap_rectangles(&domain, &plus).unwrap().is_empty());

        let mut f = plus.clone();
        f[domain.index(&[1, 1]).unwrap()] = -1;
        f[domain.index(&[1, 2]).unwrap()] = -1;
        let r = minus_bootstrap_rectangles(&domain, &f).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r.covers(&[1, 1]) && r.covers(&[1, 2]));

        let mut f = plus.clone();
        f[domain.index(&[0, 0]).unwrap()] = -1;
        f[domain.index(&[2, 1]).unwrap()] = -1;
        let r = minus_bootstrap_rectangles(&domain, &f).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.rects.iter().all(|x| x.lo == x.hi));
        assert!(r.is_well_separated());

        let mut f = plus;
        f[domain.index(&[0, 0]).unwrap()] = -1;
        f[domain.index(&[1, 1]).unwrap()] = -1;
        let r = minus_bootstrap_rectangles(&domain, &f).unwrap();
        assert_eq!(r.rects, vec![Rect { lo: vec![0, 0], hi: vec![1, 1] }]);
    }

    fn random_field(n: usize, rho: f64, seed: u64) -> (BoxShape, Vec<i8>) {
        let shape = BoxShape::cube(2, n).unwrap();
        let mut rng = SimRng::new(seed);
        let f = (0..shape.len()).map(|_| if rng.bernoulli(rho) { -1 } else { 1 }).collect();
        (shape, f)
    }

    /// Whether `r` is internally spanned by the threshold-two rule applied to `field` restricted to `r`.
    fn minus_spans(shape: &BoxShape, field: &[i8], r: &Rect) -> bool {
        let sub = SubBox::new(r.lo.clone(), r.hi.iter().map(|h| h + 1).collect());
        let sub_shape = sub.shape().unwrap();
        let mut cells = Vec::new();
        sub.for_each_site(|x| cells.push(field[shape.index(x).unwrap()]));
        minus_bootstrap_closure(&sub_shape, &cells).unwrap().iter().all(|&s| s == -1)
    }

    proptest! {
        #[test]
        fn closure_matches_brute_force(n in 1usize..9, theta in 0.0f64..0.7, seed in any::<u64>()) {
            let mut rng = SimRng::new(seed);
            let c = MbpConfig::sample(BoxShape::cube(2, n).unwrap(), theta, &mut rng).unwrap();
            let fast = mbp_closure(&c);
            prop_assert_eq!(&fast, &brute_closure(&c));
            prop_assert_eq!(mbp_closure(&fast), fast);
        }

        #[test]
        fn closure_is_monotone(seed in any::<u64>(), extra in proptest::collection::vec((0i64..8, 0i64..8), 0..6)) {
            let mut rng = SimRng::new(seed);
            let c = MbpConfig::sample(BoxShape::cube(2, 8).unwrap(), 0.3, &mut rng).unwrap();
            let mut bigger = c.clone();
            for (a, b) in extra {
                bigger.occupy(&[a, b]).unwrap();
            }
            let (small, large) = (mbp_closure(&c), mbp_closure(&bigger));
            prop_assert!(small.occupied().iter().zip(large.occupied()).all(|(a, b)| a <= b));
        }

        #[test]
        fn rectangles_are_minimal_well_separated_covers(n in 2usize..12, rho in 0.0f64..0.25, seed in any::<u64>()) {
            let (shape, f) = random_field(n, rho, seed);
            let set = minus_bootstrap_rectangles(&shape, &f).unwrap();
            let closed = minus_bootstrap_closure(&shape, &f).unwrap();
            prop_assert!(set.is_well_separated());
            for i in 0..shape.len() {
                if closed[i] == -1 {
                    prop_assert!(set.covers(&shape.coords(i)));
                }
            }
            for r in &set.rects {
                let has_minus = (0..shape.len()).any(|i| f[i] == -1 && r.contains(&shape.coords(i)));
                prop_assert!(has_minus);
            }
        }

        #[test]
        fn aizenman_lebowitz_subrectangles(n in 3usize..9, rho in 0.05f64..0.3, seed in any::<u64>()) {
            let (shape, f) = random_field(n, rho, seed);
            let set = minus_bootstrap_rectangles(&shape, &f).unwrap();
            for r in &set.rects {
                let long = r.longest_side();
                for j in 1..long {
                    let lo_len = (j / 2 - 1).max(1);
                    let mut found = false;
                    'search: for x0 in r.lo[0]..=r.hi[0] {
                        for y0 in r.lo[1]..=r.hi[1] {
                            for x1 in x0..=r.hi[0] {
                                for y1 in y0..=r.hi[1] {
                                    let s = Rect { lo: vec![x0, y0], hi: vec![x1, y1] };
                                    let side = s.longest_side();
                                    if side >= lo_len && side <= j && minus_spans(&shape, &f, &s) {
                                        found = true;
                                        break 'search;
                                    }
                                }
                            }
                        }
                    }
                    prop_assert!(found, "no spanned subrectangle for j = {}", j);
                }
            }
        }
    }
}
