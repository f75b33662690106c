//! A system of independent populations with an absorbing barrier.
//!
//! Each slot: every live object takes one branching step with its own
//! environment draw and is removed once its size is `<= l`; then
//! `Poisson(q)` newborns of size `l` arrive; then the slot is observed.
//! An object's lifetime `P` counts the observations it appears in, so
//! `E[N] = q E[P]` for the number of objects `N`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::branching::log_mean_moments;
use crate::error::{Error, Result};
use crate::modulator::ModulatorSpec;
use crate::offspring::{sample_offspring_sum, OffspringSpec};
use crate::rng::SimRng;

/// Cap on a single object's lifetime in the pilot run.
const LIFETIME_CAP: u64 = 100_000_000;

#[derive(Debug, Clone)]
pub struct AbsorbingSystemSpec {
    /// Mean arrivals per slot.
    pub arrival_rate: f64,
    pub offspring: OffspringSpec,
    pub modulator: ModulatorSpec,
    pub barrier: u64,
}

impl AbsorbingSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::spec("arrival rate must be finite and non-negative"));
        }
        if self.barrier == 0 {
            return Err(Error::spec("barrier must be at least 1"));
        }
        if !self.modulator.is_iid() {
            return Err(Error::spec("absorbing system needs an i.i.d. environment"));
        }
        self.offspring.check_against(&self.modulator)?;
        let m = self.drift();
        if !(m < 0.0) {
            return Err(Error::NonNegativeDrift { drift: m });
        }
        Ok(())
    }

    /// `E[log mu(J)]`.
    pub fn drift(&self) -> f64 {
        log_mean_moments(&self.modulator, &self.offspring).0
    }
}

/// The observed system at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregateDraw {
    /// Total size `Z_s` of all live objects.
    pub total: u64,
    /// Number of live objects.
    pub objects: u64,
}

/// A recorded run of the system.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregatePath {
    pub totals: Vec<u64>,
    pub objects: Vec<u64>,
    /// Lifetimes of objects born and absorbed inside the recording window.
    pub lifetimes: Vec<u64>,
}

impl AggregatePath {
    pub fn mean_objects(&self) -> f64 {
        self.objects.iter().sum::<u64>() as f64 / self.objects.len().max(1) as f64
    }

    pub fn mean_lifetime(&self) -> f64 {
        self.lifetimes.iter().sum::<u64>() as f64 / self.lifetimes.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Object {
    size: u64,
    age: u64,
    recorded: bool,
}

/// A validated system with a pilot estimate of the mean lifetime.
#[derive(Debug, Clone)]
pub struct AbsorbingSystem {
    spec: AbsorbingSystemSpec,
    arrivals: Option<Poisson<f64>>,
    mean_lifetime: f64,
}

impl AbsorbingSystem {
    /// Estimates `E[P]` from `pilot` independent lifetimes.
    pub fn new(spec: AbsorbingSystemSpec, pilot: usize, rng: &mut SimRng) -> Result<Self> {
        spec.validate()?;
        let arrivals = if spec.arrival_rate > 0.0 {
            Some(Poisson::new(spec.arrival_rate).map_err(|e| Error::spec(e.to_string()))?)
        } else {
            None
        };
        let mut sys = AbsorbingSystem {
            spec,
            arrivals,
            mean_lifetime: 1.0,
        };
        let pilot = pilot.max(1);
        let mut total = 0u64;
        for _ in 0..pilot {
            total += sys.lifetime(rng)?;
        }
        sys.mean_lifetime = total as f64 / pilot as f64;
        Ok(sys)
    }

    pub fn spec(&self) -> &AbsorbingSystemSpec {
        &self.spec
    }

    /// Pilot estimate of `E[P]`.
    pub fn mean_lifetime(&self) -> f64 {
        self.mean_lifetime
    }

    /// Smallest horizon accepted by [`AbsorbingSystem::draw`].
    pub fn min_horizon(&self) -> u64 {
        (20.0 * self.mean_lifetime).ceil() as u64 + 1
    }

    fn lifetime<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let mut o = Object {
            size: self.spec.barrier,
            age: 1,
            recorded: false,
        };
        loop {
            if !self.evolve(&mut o, rng)? {
                return Ok(o.age);
            }
            o.age += 1;
            if o.age > LIFETIME_CAP {
                return Err(Error::CycleCap { cap: LIFETIME_CAP });
            }
        }
    }

    /// One branching step; false when the object is absorbed.
    #[inline]
    fn evolve<R: Rng + ?Sized>(&self, o: &mut Object, rng: &mut R) -> Result<bool> {
        let state = self.spec.modulator.sampler().next_step(rng).state;
        o.size = sample_offspring_sum(&self.spec.offspring, state, o.size, rng)?;
        Ok(o.size > self.spec.barrier)
    }

    fn slot<R: Rng + ?Sized>(&self, live: &mut Vec<Object>, lifetimes: Option<&mut Vec<u64>>, record_births: bool, rng: &mut R) -> Result<()> {
        let mut dead = Vec::new();
        let mut err = None;
        live.retain_mut(|o| {
            if err.is_some() {
                return true;
            }
            match self.evolve(o, rng) {
                Ok(true) => {
                    o.age += 1;
                    true
                }
                Ok(false) => {
                    if o.recorded {
                        dead.push(o.age);
                    }
                    false
                }
                Err(e) => {
                    err = Some(e);
                    true
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(l) = lifetimes {
            l.extend(dead);
        }
        let births = self.arrivals.as_ref().map_or(0, |d| d.sample(rng) as u64);
        for _ in 0..births {
            live.push(Object {
                size: self.spec.barrier,
                age: 1,
                recorded: record_births,
            });
        }
        Ok(())
    }

    fn observe(live: &[Object]) -> Result<AggregateDraw> {
        let mut total = 0u64;
        for o in live {
            total = total.checked_add(o.size).ok_or(Error::Saturation { step: 0 })?;
        }
        Ok(AggregateDraw {
            total,
            objects: live.len() as u64,
        })
    }

    /// Run an initially empty system for `horizon` slots and observe it.
    pub fn draw<R: Rng + ?Sized>(&self, horizon: u64, rng: &mut R) -> Result<AggregateDraw> {
        if horizon < self.min_horizon() {
            return Err(Error::spec(format!(
                "horizon {horizon} is below 20 mean lifetimes ({})",
                self.min_horizon()
            )));
        }
        let mut live = Vec::new();
        for n in 1..=horizon {
            self.slot(&mut live, None, false, rng).map_err(|e| e.at_step(n))?;
        }
        Self::observe(&live).map_err(|e| e.at_step(horizon))
    }

    /// Run `burn_in` unrecorded slots, then record `len` consecutive slots.
    pub fn path<R: Rng + ?Sized>(&self, burn_in: u64, len: usize, rng: &mut R) -> Result<AggregatePath> {
        let mut live = Vec::new();
        let mut step = 0u64;
        for _ in 0..burn_in {
            step += 1;
            self.slot(&mut live, None, false, rng).map_err(|e| e.at_step(step))?;
        }
        let mut out = AggregatePath {
            totals: Vec::with_capacity(len),
            objects: Vec::with_capacity(len),
            lifetimes: Vec::new(),
        };
        for _ in 0..len {
            step += 1;
            self.slot(&mut live, Some(&mut out.lifetimes), true, rng)
                .map_err(|e| e.at_step(step))?;
            let d = Self::observe(&live).map_err(|e| e.at_step(step))?;
            out.totals.push(d.total);
            out.objects.push(d.objects);
        }
        Ok(out)
    }
}

/// One draw of `Z_s` from a fresh system (pilot of 1000 lifetimes).
pub fn run_absorbing_aggregate(spec: &AbsorbingSystemSpec, horizon: u64, rng: &mut SimRng) -> Result<u64> {
    let sys = AbsorbingSystem::new(spec.clone(), 1000, rng)?;
    Ok(sys.draw(horizon, rng)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::OffspringDist;
    use crate::rng::RngStream;

    fn spec(q: f64, d: OffspringDist, l: u64) -> AbsorbingSystemSpec {
        AbsorbingSystemSpec {
            arrival_rate: q,
            offspring: OffspringSpec::new(vec![d]).unwrap(),
            modulator: ModulatorSpec::constant(1.0).unwrap(),
            barrier: l,
        }
    }

    #[test]
    fn empty_system() {
        let s = spec(0.0, OffspringDist::Poisson(0.5), 1);
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(run_absorbing_aggregate(&s, 1000, &mut rng).unwrap(), 0);
    }

    #[test]
    fn one_slot_lifetimes() {
        let s = spec(2.0, OffspringDist::Deterministic(0), 3);
        let mut rng = RngStream::new(1, 0).rng();
        let sys = AbsorbingSystem::new(s, 100, &mut rng).unwrap();
        assert_eq!(sys.mean_lifetime(), 1.0);
        let p = sys.path(10, 100_000, &mut rng).unwrap();
        assert!(p.totals.iter().zip(&p.objects).all(|(t, o)| *t == 3 * o));
        assert!(p.lifetimes.iter().all(|l| *l == 1));
        let mean = p.mean_objects();
        let var = p.objects.iter().map(|o| (*o as f64 - mean).powi(2)).sum::<f64>() / p.objects.len() as f64;
        assert!((mean - 2.0).abs() < 0.03 && (var - 2.0).abs() < 0.06, "{mean} {var}");
    }

    #[test]
    fn short_horizon_rejected() {
        let s = spec(1.0, OffspringDist::Deterministic(0), 1);
        let mut rng = RngStream::new(2, 0).rng();
        let sys = AbsorbingSystem::new(s, 10, &mut rng).unwrap();
        assert!(sys.draw(5, &mut rng).is_err());
        assert!(sys.draw(50, &mut rng).is_ok());
    }

    #[test]
    fn supercritical_rejected() {
        let s = spec(1.0, OffspringDist::Poisson(1.2), 1);
        assert!(matches!(s.validate(), Err(Error::NonNegativeDrift { .. })));
    }
}
