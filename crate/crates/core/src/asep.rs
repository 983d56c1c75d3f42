//! Asymmetric simple exclusion on Z with step initial data, and its coupling
//! to the quadrant interface of the two-dimensional coarsening model.
//!
//! The infinite step configuration is truncated to its `M` rightmost
//! particles. Particles are rung by one exponential race at rate `M` with a
//! uniform particle choice; the chosen particle attempts a right jump with
//! probability `q` and a left jump otherwise, and the attempt is suppressed
//! when the target is occupied. Random draws per event: particle index,
//! direction uniform, waiting time to the next event.
//!
//! Truncation rule: to observe `x_m` at time `s`, use at least
//! `M = m + ceil(s) + 10` particles. The missing particles sit to the left
//! of `x_M`, and a hole created there can only reach `x_m` by travelling
//! through the particle chain at bounded speed. The rule is empirical and
//! backed by a doubling test.
//!
//! Interface coupling: in the quadrant picture let `ρ_ℓ` be the number of
//! +1 sites in row `x2 = ℓ` with `x1 >= 1`. Then `x_ℓ = ρ_ℓ − ℓ`, outer-corner
//! growth (rate `q`) is a right jump and inner-corner decay (rate `1 − q`)
//! is a left jump, and `σ_(m,ℓ) = −1` iff `x_ℓ < m − ℓ`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{quadrant_spin, SpinConfig};
use crate::rng::SimRng;
use crate::stats::{wilson_interval, BinomialEstimate};

/// Strictly decreasing particle positions, rightmost first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsepState {
    positions: Vec<i64>,
    time: f64,
}

impl AsepState {
    pub fn from_positions(positions: Vec<i64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return invalid("an ASEP state needs at least one particle");
        }
        if positions.windows(2).any(|w| w[0] <= w[1]) {
            return invalid("positions must be strictly decreasing");
        }
        if !(time >= 0.0 && time.is_finite()) {
            return invalid(format!("time {time} must be finite and nonnegative"));
        }
        Ok(Self { positions, time })
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// Number of particles `M` kept by the truncation.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Position of particle `j` (1-based, `x_1` is rightmost).
    pub fn x(&self, j: usize) -> i64 {
        self.positions[j - 1]
    }

    pub fn is_ordered(&self) -> bool {
        self.positions.windows(2).all(|w| w[0] > w[1])
    }
}

/// Step initial condition `x_j = −j`, `j = 1..=M`.
pub fn step_initial(m: usize) -> Result<AsepState> {
    if m < 1 {
        return invalid("step_initial needs M >= 1");
    }
    Ok(AsepState { positions: (1..=m as i64).map(|j| -j).collect(), time: 0.0 })
}

/// Number of particles strictly right of the origin.
pub fn current_h0(state: &AsepState) -> usize {
    state.positions.iter().take_while(|&&x| x >= 1).count()
}

/// Truncation size for observing `x_m` up to model time `s`.
pub fn truncation_size(m: usize, s: f64) -> usize {
    m + s.max(0.0).ceil() as usize + 10
}

/// One ring of a particle clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsepEvent {
    pub index: u64,
    pub time: f64,
    pub particle: usize,
    pub old_pos: i64,
    pub new_pos: i64,
    pub right: bool,
    pub blocked: bool,
}

/// Event-driven ASEP simulator.
#[derive(Clone, Debug)]
pub struct AsepSim {
    state: AsepState,
    q: f64,
    next_event: f64,
    rng: SimRng,
    event_count: u64,
    log: Option<Vec<AsepEvent>>,
}

impl AsepSim {
    pub fn new(state: AsepState, q: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return invalid(format!("jump bias q = {q} outside [0,1]"));
        }
        let mut rng = SimRng::new(seed);
        let next_event = state.time + rng.exp1() / state.len() as f64;
        Ok(Self { state, q, next_event, rng, event_count: 0, log: None })
    }

    pub fn with_trajectory_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn state(&self) -> &AsepState {
        &self.state
    }

    pub fn into_state(self) -> AsepState {
        self.state
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn events(&self) -> Option<&[AsepEvent]> {
        self.log.as_deref()
    }

    /// Executes the next ring if it happens no later than `t`.
    #[inline]
    pub fn step_before(&mut self, t: f64) -> Option<AsepEvent> {
        if self.next_event > t {
            return None;
        }
        let m = self.state.positions.len();
        let i = self.rng.below(m as u64) as usize;
        let right = self.rng.uniform() < self.q;
        let time = self.next_event;
        self.state.time = time;
        self.next_event = time + self.rng.exp1() / m as f64;

        let pos = &mut self.state.positions;
        let old = pos[i];
        let blocked = if right { i > 0 && pos[i - 1] == old + 1 } else { i + 1 < m && pos[i + 1] == old - 1 };
        if !blocked {
            pos[i] = if right { old + 1 } else { old - 1 };
        }
        let ev = AsepEvent { index: self.event_count, time, particle: i, old_pos: old, new_pos: pos[i], right, blocked };
        self.event_count += 1;
        if let Some(log) = self.log.as_mut() {
            log.push(ev);
        }
        Some(ev)
    }

    pub fn evolve_until(&mut self, t: f64) -> Result<()> {
        if !t.is_finite() || t < self.state.time {
            return invalid(format!("target time {t} invalid at current time {}", self.state.time));
        }
        while self.step_before(t).is_some() {}
        self.state.time = t;
        Ok(())
    }

    /// Writes `time,event,particle_index,old_pos,new_pos,blocked` rows; particles are 1-based.
    pub fn write_trajectory<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event", "particle_index", "old_pos", "new_pos", "blocked"])?;
        for ev in self.log.iter().flatten() {
            w.write_record([
                ev.time.to_string(),
                if ev.right { "right" } else { "left" }.to_string(),
                (ev.particle + 1).to_string(),
                ev.old_pos.to_string(),
                ev.new_pos.to_string(),
                ev.blocked.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evolves `state` to time `t` with a fresh stream from `seed`.
pub fn evolve_asep(state: AsepState, t: f64, q: f64, seed: u64) -> Result<AsepState> {
    let mut sim = AsepSim::new(state, q, seed)?;
    sim.evolve_until(t)?;
    Ok(sim.into_state())
}

/// Whether `x_m(t/γ) < 0` in one run with `particles` particles.
pub fn ld_event_replica(m: usize, t: f64, q: f64, particles: usize, seed: u64) -> Result<bool> {
    let s = t / gamma_of(q)?;
    if m < 1 || m > particles {
        return invalid(format!("particle index m = {m} outside 1..={particles}"));
    }
    let state = evolve_asep(step_initial(particles)?, s, q, seed)?;
    Ok(state.x(m) < 0)
}

/// Monte Carlo estimate of `P(x_m(t/γ) < 0)` from step initial data.
///
/// Uses [`truncation_size`] particles; replica `r` runs on stream `derive_seed(seed, [r])`.
pub fn ld_event_probability(m: usize, t: f64, q: f64, replicas: u64, seed: u64) -> Result<BinomialEstimate> {
    let s = t / gamma_of(q)?;
    ld_event_probability_with(m, t, q, replicas, seed, truncation_size(m, s))
}

/// As [`ld_event_probability`] with an explicit particle count.
pub fn ld_event_probability_with(
    m: usize,
    t: f64,
    q: f64,
    replicas: u64,
    seed: u64,
    particles: usize,
) -> Result<BinomialEstimate> {
    if replicas == 0 {
        return invalid("replicas must be at least 1");
    }
    let mut hits = 0;
    for r in 0..replicas {
        if ld_event_replica(m, t, q, particles, crate::rng::derive_seed(seed, &[r]))? {
            hits += 1;
        }
    }
    wilson_interval(hits, replicas, 0.95)
}

fn gamma_of(q: f64) -> Result<f64> {
    if !(q > 0.5 && q <= 1.0) {
        return invalid(format!("drift experiments need 1/2 < q <= 1, got {q}"));
    }
    Ok(2.0 * q - 1.0)
}

/// Column heights of the +1 Young diagram in the quadrant `{x1 >= 1, x2 >= 1}`.
///
/// `heights[i]` counts the +1 sites in column `x1 = i + 1`; the profile is
/// weakly decreasing and carries no trailing zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaircaseInterface {
    heights: Vec<usize>,
}

impl StaircaseInterface {
    pub fn new(mut heights: Vec<usize>) -> Result<Self> {
        if heights.windows(2).any(|w| w[0] < w[1]) {
            return invalid(format!("column heights {heights:?} are not weakly decreasing"));
        }
        while heights.last() == Some(&0) {
            heights.pop();
        }
        Ok(Self { heights })
    }

    pub fn heights(&self) -> &[usize] {
        &self.heights
    }

    /// Row lengths `ρ_ℓ`, the conjugate partition.
    pub fn rows(&self) -> Vec<usize> {
        let top = self.heights.first().copied().unwrap_or(0);
        (1..=top).map(|l| self.heights.iter().take_while(|&&h| h >= l).count()).collect()
    }

    /// Builds the interface from row lengths (weakly decreasing).
    pub fn from_rows(rows: &[usize]) -> Result<Self> {
        let conj = Self::new(rows.to_vec())?;
        Self::new(conj.rows())
    }

    /// Reads the +1 region of a quadrant box and checks it is a Young diagram
    /// anchored at `(1,1)` with the axes `x1 = 0`, `x2 = 0` still +1.
    pub fn from_quadrant_config(config: &SpinConfig) -> Result<Self> {
        let sides = config.shape().sides();
        if sides.len() != 2 {
            return invalid("staircase extraction needs a two-dimensional box");
        }
        let (n1, n2) = (sides[0] as i64, sides[1] as i64);
        let mut heights = Vec::new();
        for i in 1..n1 {
            if config.spin(&[i, 0]) != 1 {
                return invalid(format!("axis site ({i},0) is −1"));
            }
            let h = (1..n2).take_while(|&l| config.spin(&[i, l]) == 1).count();
            if (1 + h as i64..n2).any(|l| config.spin(&[i, l]) == 1) {
                return invalid(format!("column {i} is not a staircase column"));
            }
            heights.push(h);
        }
        if (0..n2).any(|l| config.spin(&[0, l]) != 1) {
            return invalid("axis column x1 = 0 contains a −1");
        }
        Self::new(heights)
    }

    /// Spin at `x` in the quadrant picture (−1 outside the diagram inside the quadrant).
    pub fn spin(&self, x: &[i64]) -> i8 {
        if quadrant_spin(x) == 1 {
            return 1;
        }
        let col = x[0] as usize - 1;
        if self.heights.get(col).is_some_and(|&h| x[1] as usize <= h) {
            1
        } else {
            -1
        }
    }
}

/// Particle configuration `x_ℓ = ρ_ℓ − ℓ` for `ℓ = 1..=particles`.
pub fn quadrant_to_asep(interface: &StaircaseInterface, particles: usize) -> Result<AsepState> {
    let rows = interface.rows();
    if particles < 1 {
        return invalid("need at least one particle");
    }
    if rows.len() > particles {
        return invalid(format!("interface has {} rows but only {particles} particles", rows.len()));
    }
    let positions = (1..=particles).map(|l| rows.get(l - 1).copied().unwrap_or(0) as i64 - l as i64).collect();
    AsepState::from_positions(positions, 0.0)
}

/// Inverse of [`quadrant_to_asep`] on a window of `window` columns.
pub fn asep_to_quadrant(state: &AsepState, window: usize) -> Result<StaircaseInterface> {
    let mut rows = Vec::with_capacity(state.len());
    for (l, &x) in state.positions().iter().enumerate() {
        let rho = x + l as i64 + 1;
        if rho < 0 {
            return invalid(format!("particle {} at {x} is left of its initial site", l + 1));
        }
        if rho as usize > window {
            return invalid(format!("row {} of length {rho} exceeds the window {window}", l + 1));
        }
        rows.push(rho as usize);
    }
    StaircaseInterface::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glauber::GlauberSim;
    use crate::stats::{ks_critical_5pct, ks_two_sample, mean_sd};
    use proptest::prelude::*;

    #[test]
    fn step_initial_examples() {
        assert_eq!(step_initial(1).unwrap().positions(), &[-1]);
        assert_eq!(step_initial(3).unwrap().positions(), &[-1, -2, -3]);
        assert!(step_initial(0).is_err());
        assert!(step_initial(50).unwrap().is_ordered());
    }

    #[test]
    fn current_examples() {
        assert_eq!(current_h0(&step_initial(5).unwrap()), 0);
        assert_eq!(current_h0(&AsepState::from_positions(vec![3, 1, -2], 0.0).unwrap()), 2);
        assert!(AsepState::from_positions(vec![1, 1], 0.0).is_err());
    }

    #[test]
    fn zero_time_is_identity_and_time_cannot_decrease() {
        let s = step_initial(10).unwrap();
        assert_eq!(evolve_asep(s.clone(), 0.0, 0.7, 1).unwrap(), s);
        let later = evolve_asep(s, 2.0, 0.7, 1).unwrap();
        assert!(evolve_asep(later, 1.0, 0.7, 1).is_err());
    }

    #[test]
    fn free_particle_is_poisson() {
        let t = 3.0;
        let n = 10_000;
        let d: Vec<f64> = (0..n)
            .map(|s| (evolve_asep(step_initial(1).unwrap(), t, 1.0, s).unwrap().x(1) + 1) as f64)
            .collect();
        let (mean, _) = mean_sd(&d);
        assert!((mean - t).abs() < 3.0 * (t / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn truncation_doubling_is_invisible() {
        let (t, q, n) = (50.0, 0.75, 1000u64);
        let sample = |m: usize, salt: u64| -> Vec<f64> {
            (0..n)
                .map(|r| evolve_asep(step_initial(m).unwrap(), t, q, crate::rng::derive_seed(salt, &[r])).unwrap().x(10) as f64)
                .collect()
        };
        let a = sample(200, 1);
        let b = sample(400, 2);
        let d = ks_two_sample(&a, &b);
        assert!(d < ks_critical_5pct(a.len(), Some(b.len())), "KS {d}");
    }

    #[test]
    fn trajectory_csv() {
        let mut sim = AsepSim::new(step_initial(4).unwrap(), 0.6, 3).unwrap().with_trajectory_log();
        sim.evolve_until(2.0).unwrap();
        let mut buf = Vec::new();
        sim.write_trajectory(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,event,particle_index,old_pos,new_pos,blocked\n"));
        assert_eq!(text.lines().count() as u64, 1 + sim.event_count());
    }

    #[test]
    fn ld_event_examples() {
        let p = |t: f64| ld_event_probability((t * 0.8 / 4.0).round() as usize, t, 1.0, 4000, 7).unwrap();
        let (a, b, c) = (p(10.0), p(20.0), p(40.0));
        assert!(a.estimate > b.estimate && b.estimate > c.estimate, "{a:?} {b:?} {c:?}");
        let small = ld_event_probability(1, 20.0, 0.9, 2000, 3).unwrap();
        assert!(small.estimate < 0.01);
        assert!(ld_event_probability_with(30, 10.0, 0.9, 10, 1, 20).is_err());
        assert!(ld_event_probability(1, 10.0, 0.5, 10, 1).is_err());
    }

    #[test]
    fn quadrant_initial_maps_to_step() {
        let c = SpinConfig::quadrant(8).unwrap();
        let i = StaircaseInterface::from_quadrant_config(&c).unwrap();
        assert!(i.heights().is_empty());
        assert_eq!(quadrant_to_asep(&i, 5).unwrap(), step_initial(5).unwrap());
    }

    #[test]
    fn single_growth_is_right_jump_of_first_particle() {
        let mut c = SpinConfig::quadrant(6).unwrap();
        c.set(&[1, 1], 1).unwrap();
        let i = StaircaseInterface::from_quadrant_config(&c).unwrap();
        let s = quadrant_to_asep(&i, 3).unwrap();
        assert_eq!(s.positions(), &[0, -2, -3]);
        let mut bad = SpinConfig::quadrant(6).unwrap();
        bad.set(&[2, 2], 1).unwrap();
        assert!(StaircaseInterface::from_quadrant_config(&bad).is_err());
    }

    #[test]
    fn glauber_events_map_to_asep_jumps() {
        // Replays a quadrant trajectory and checks each flip is one legal particle jump.
        for seed in 0..20 {
            let mut sim = GlauberSim::new(SpinConfig::quadrant(20).unwrap(), 0.7, seed).unwrap();
            let mut prev = quadrant_to_asep(&StaircaseInterface::default(), 19).unwrap();
            while let Some(ev) = sim.step_before(6.0) {
                if ev.old_spin == ev.new_spin {
                    continue;
                }
                let x = sim.config().shape().coords(ev.site);
                let i = StaircaseInterface::from_quadrant_config(sim.config()).unwrap();
                let next = quadrant_to_asep(&i, 19).unwrap();
                let row = x[1] as usize;
                let delta = if ev.new_spin == 1 { 1 } else { -1 };
                for l in 1..=19 {
                    let expect = prev.x(l) + if l == row { delta } else { 0 };
                    assert_eq!(next.x(l), expect);
                }
                prev = next;
            }
        }
    }

    proptest! {
        #[test]
        fn staircase_round_trip(raw in proptest::collection::vec(0usize..12, 0..10), extra in 0usize..5) {
            let mut h = raw;
            h.sort_unstable_by(|a, b| b.cmp(a));
            let i = StaircaseInterface::new(h).unwrap();
            let m = i.heights().first().copied().unwrap_or(0) + extra + 1;
            let s = quadrant_to_asep(&i, m).unwrap();
            prop_assert!(s.is_ordered());
            prop_assert_eq!(asep_to_quadrant(&s, 12).unwrap(), i);
        }

        #[test]
        fn exclusion_holds_after_every_event(q in 0.0f64..=1.0, seed in any::<u64>()) {
            let mut sim = AsepSim::new(step_initial(30).unwrap(), q, seed).unwrap();
            while let Some(ev) = sim.step_before(20.0) {
                let p = sim.state().positions();
                let i = ev.particle;
                prop_assert!(i == 0 || p[i - 1] > p[i]);
                prop_assert!(i + 1 == p.len() || p[i] > p[i + 1]);
            }
            prop_assert!(sim.state().is_ordered());
        }
    }
}
