//! Continuous-time zero-temperature Glauber dynamics with tie-break bias `q`.
//!
//! Every site carries a rate-1 Poisson clock. The clocks are realised as one
//! exponential race at rate `N` (the number of sites) followed by a uniform
//! site choice, which has the same law and costs O(1) per event. On a ring
//! the site keeps its spin if `e_x < 0`, flips if `e_x > 0`, and becomes +1
//! with probability `q` if `e_x = 0`.
//!
//! Random draws per event, in order: site index, tie-break uniform `U`, and
//! the exponential waiting time to the next event. `U` is drawn at every ring
//! and only consulted on ties, so coupled copies see the same sequence.
//! The first waiting time is drawn when the simulator is built.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{BoundaryCondition, BoxShape, Neighborhood, SpinConfig, EXT_MINUS, EXT_NONE, EXT_PLUS};
use crate::rng::SimRng;

/// New spin of a site with current spin `spin` and neighbour field `field`.
#[inline]
fn resolve(spin: i8, field: i32, u: f64, q: f64) -> (i8, bool) {
    let e = -(spin as i32) * field;
    match e.signum() {
        -1 => (spin, false),
        1 => (-spin, false),
        _ => (if u < q { 1 } else { -1 }, true),
    }
}

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        invalid(format!("tie-break probability q = {q} outside [0,1]"))
    }
}

fn check_target(now: f64, t: f64) -> Result<()> {
    if !t.is_finite() {
        return invalid(format!("target time {t} is not finite"));
    }
    if t < now {
        return invalid(format!("target time {t} precedes current time {now}"));
    }
    Ok(())
}

/// One clock ring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlauberEvent {
    pub index: u64,
    pub time: f64,
    pub site: usize,
    pub energy: i32,
    pub old_spin: i8,
    pub new_spin: i8,
    pub used_tiebreak: bool,
}

/// Single-copy simulator.
#[derive(Clone, Debug)]
pub struct GlauberSim {
    config: SpinConfig,
    nb: Neighborhood,
    q: f64,
    clock_time: f64,
    next_event: f64,
    rng: SimRng,
    event_count: u64,
    log: Option<Vec<GlauberEvent>>,
}

impl GlauberSim {
    pub fn new(config: SpinConfig, q: f64, seed: u64) -> Result<Self> {
        check_q(q)?;
        let nb = Neighborhood::build(config.shape(), config.boundary());
        let mut rng = SimRng::new(seed);
        let rate = config.shape().len() as f64;
        let next_event = rng.exp1() / rate;
        Ok(Self { config, nb, q, clock_time: 0.0, next_event, rng, event_count: 0, log: None })
    }

    /// Records every subsequent event for [`GlauberSim::write_event_log`].
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &SpinConfig {
        &self.config
    }

    pub fn into_config(self) -> SpinConfig {
        self.config
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn clock_time(&self) -> f64 {
        self.clock_time
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn events(&self) -> Option<&[GlauberEvent]> {
        self.log.as_deref()
    }

    /// Executes the next event if it happens no later than `t`.
    #[inline]
    pub fn step_before(&mut self, t: f64) -> Option<GlauberEvent> {
        if self.next_event > t {
            return None;
        }
        let n = self.config.shape().len();
        let site = self.rng.below(n as u64) as usize;
        let u = self.rng.uniform();
        let time = self.next_event;
        self.clock_time = time;
        self.next_event = time + self.rng.exp1() / n as f64;

        let old = self.config.spins()[site];
        let field = self.nb.field(self.config.spins(), site);
        let (new, used) = resolve(old, field, u, self.q);
        self.config.spins_mut()[site] = new;
        let ev = GlauberEvent {
            index: self.event_count,
            time,
            site,
            energy: -(old as i32) * field,
            old_spin: old,
            new_spin: new,
            used_tiebreak: used,
        };
        self.event_count += 1;
        if let Some(log) = self.log.as_mut() {
            log.push(ev);
        }
        Some(ev)
    }

    /// Runs the dynamics up to time `t`.
    pub fn evolve_until(&mut self, t: f64) -> Result<()> {
        check_target(self.clock_time, t)?;
        while self.step_before(t).is_some() {}
        self.clock_time = t;
        Ok(())
    }

    /// Writes the recorded events as CSV.
    pub fn write_event_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["event_index", "time", "site_index", "e_x", "old_spin", "new_spin", "used_tiebreak"])?;
        for ev in self.log.iter().flatten() {
            w.write_record([
                ev.index.to_string(),
                ev.time.to_string(),
                ev.site.to_string(),
                ev.energy.to_string(),
                ev.old_spin.to_string(),
                ev.new_spin.to_string(),
                ev.used_tiebreak.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two copies driven by the same clock rings and tie-break uniforms.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    low: SpinConfig,
    high: SpinConfig,
    nb_low: Neighborhood,
    nb_high: Neighborhood,
    q_low: f64,
    q_high: f64,
    clock_time: f64,
    next_event: f64,
    rng: SimRng,
    event_count: u64,
    violations: u64,
}

impl CoupledPair {
    /// Requires `low <= high` pointwise, ordered boundaries and `q_low <= q_high`.
    pub fn new(low: SpinConfig, high: SpinConfig, q_low: f64, q_high: f64, seed: u64) -> Result<Self> {
        check_q(q_low)?;
        check_q(q_high)?;
        if q_low > q_high {
            return invalid(format!("q_low = {q_low} exceeds q_high = {q_high}"));
        }
        if low.shape() != high.shape() {
            return invalid("coupled copies must share a box shape");
        }
        if low.spins().iter().zip(high.spins()).any(|(a, b)| a > b) {
            return invalid("initial configurations are not pointwise ordered");
        }
        let nb_low = Neighborhood::build(low.shape(), low.boundary());
        let nb_high = Neighborhood::build(high.shape(), high.boundary());
        let ext = |c: i32| match c {
            EXT_PLUS => 1,
            EXT_MINUS => -1,
            EXT_NONE => 0,
            _ => 2,
        };
        let ordered = nb_low.table.iter().zip(&nb_high.table).all(|(&a, &b)| {
            let (va, vb) = (ext(a), ext(b));
            va == 2 && vb == 2 || va != 2 && vb != 2 && va <= vb
        });
        if !ordered {
            return invalid("boundary conditions are not ordered");
        }
        let mut rng = SimRng::new(seed);
        let next_event = rng.exp1() / low.shape().len() as f64;
        Ok(Self {
            low,
            high,
            nb_low,
            nb_high,
            q_low,
            q_high,
            clock_time: 0.0,
            next_event,
            rng,
            event_count: 0,
            violations: 0,
        })
    }

    pub fn low(&self) -> &SpinConfig {
        &self.low
    }

    pub fn high(&self) -> &SpinConfig {
        &self.high
    }

    pub fn clock_time(&self) -> f64 {
        self.clock_time
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Number of events after which `low <= high` failed at the updated site.
    pub fn ordering_violations(&self) -> u64 {
        self.violations
    }

    /// Runs both copies up to time `t`, checking the order after every event.
    pub fn evolve_coupled(&mut self, t: f64) -> Result<()> {
        check_target(self.clock_time, t)?;
        let n = self.low.shape().len();
        while self.next_event <= t {
            let site = self.rng.below(n as u64) as usize;
            let u = self.rng.uniform();
            self.clock_time = self.next_event;
            self.next_event += self.rng.exp1() / n as f64;

            let fl = self.nb_low.field(self.low.spins(), site);
            let fh = self.nb_high.field(self.high.spins(), site);
            let (nl, _) = resolve(self.low.spins()[site], fl, u, self.q_low);
            let (nh, _) = resolve(self.high.spins()[site], fh, u, self.q_high);
            self.low.spins_mut()[site] = nl;
            self.high.spins_mut()[site] = nh;
            self.event_count += 1;
            if nl > nh {
                self.violations += 1;
            }
            debug_assert!(nl <= nh, "coupled order broken at site {site}");
        }
        self.clock_time = t;
        Ok(())
    }
}

/// Result of an erosion run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ErosionOutcome {
    Eroded(f64),
    /// No erosion by the horizon; a right-censored observation.
    Timeout,
}

impl ErosionOutcome {
    pub fn time(self) -> Option<f64> {
        match self {
            Self::Eroded(t) => Some(t),
            Self::Timeout => None,
        }
    }
}

/// First time an all −1 cube Λ_L surrounded by +1 becomes all +1.
pub fn erosion_time(l: usize, q: f64, d: usize, seed: u64, t_max: f64) -> Result<ErosionOutcome> {
    if !(t_max > 0.0) {
        return invalid(format!("t_max = {t_max} must be positive"));
    }
    if l == 0 || d == 0 {
        return invalid("erosion needs L >= 1 and d >= 1");
    }
    let config = SpinConfig::uniform(BoxShape::cube(d, l)?, BoundaryCondition::AllPlus, -1)?;
    let mut minus = config.shape().len();
    let mut sim = GlauberSim::new(config, q, seed)?;
    while let Some(ev) = sim.step_before(t_max) {
        if ev.old_spin != ev.new_spin {
            if ev.new_spin == 1 {
                minus -= 1;
                if minus == 0 {
                    return Ok(ErosionOutcome::Eroded(ev.time));
                }
            } else {
                minus += 1;
            }
        }
    }
    Ok(ErosionOutcome::Timeout)
}

/// First time `s >= t` (up to `horizon`) at which `site` carries −1.
///
/// The simulator is first advanced to `t` if it is behind.
pub fn first_minus_time_after(sim: &mut GlauberSim, site: &[i64], t: f64, horizon: f64) -> Result<Option<f64>> {
    if !(horizon > t) {
        return invalid(format!("horizon {horizon} must exceed t = {t}"));
    }
    let Some(idx) = sim.config().shape().index(site) else {
        return invalid(format!("site {site:?} outside the box"));
    };
    if sim.clock_time() < t {
        sim.evolve_until(t)?;
    }
    if sim.config().spins()[idx] == -1 {
        return Ok(Some(sim.clock_time()));
    }
    while let Some(ev) = sim.step_before(horizon) {
        if ev.site == idx && ev.new_spin == -1 {
            return Ok(Some(ev.time));
        }
    }
    sim.evolve_until(horizon)?;
    Ok(None)
}

/// Supremum of times in `[clock_time, horizon]` at which `site` is −1, if any.
///
/// For every `t` in that range, `σ_site = −1` at some `s ∈ [t, horizon]`
/// exactly when the returned time is at least `t`.
pub fn last_minus_time(sim: &mut GlauberSim, site: &[i64], horizon: f64) -> Result<Option<f64>> {
    let Some(idx) = sim.config().shape().index(site) else {
        return invalid(format!("site {site:?} outside the box"));
    };
    check_target(sim.clock_time(), horizon)?;
    let mut last = (sim.config().spins()[idx] == -1).then(|| sim.clock_time());
    while let Some(ev) = sim.step_before(horizon) {
        if ev.site == idx && ev.old_spin == -1 && ev.new_spin == 1 {
            last = Some(ev.time);
        }
    }
    sim.evolve_until(horizon)?;
    if sim.config().spins()[idx] == -1 {
        last = Some(horizon);
    }
    Ok(last)
}
