//! Reflected multiplicative processes in the log domain.
//!
//! `log M_{n+1} = max(log M_n + log J_n, log l)`; for `l = 1` this is the
//! Lindley recursion `Q_{n+1} = max(Q_n + X_n, 0)` with `X_n = log J_n`, and
//! both runs below execute the same floating-point operations.

use rand::Rng;

use super::{
    chain_lengths, replicate, stationary_horizon, resolve_burn_in, truncated_burn_in, PathConfig, SampleKind, SampleMeta,
    TailSampleSet, TrajectorySample, HORIZON_EPS, NEAR_CRITICAL_DRIFT, ZERO_SNAP,
};
use crate::error::{Error, Result};
use crate::modulator::{ModulatorSampler, ModulatorSpec};
use crate::rng::RngStream;

#[inline]
fn reflect(x: f64, inc: f64, floor: f64, ceil: f64) -> f64 {
    (x + inc).max(floor).min(ceil)
}

struct LogRecursion {
    floor: f64,
    ceil: f64,
    start: f64,
    steps: u64,
}

impl LogRecursion {
    fn for_rmp(modulator: &ModulatorSpec, cfg: &PathConfig) -> Result<Self> {
        cfg.validate()?;
        let steps = match cfg.upper_barrier {
            Some(u) => truncated_burn_in(cfg, modulator, modulator.mean_log(), modulator.var_log(), (u / cfg.barrier).ln()),
            None => resolve_burn_in(cfg, modulator, modulator.mean_log(), modulator.var_log())?,
        };
        Ok(LogRecursion {
            floor: cfg.barrier.ln(),
            ceil: cfg.upper_barrier.map_or(f64::INFINITY, f64::ln),
            start: cfg.initial_value().ln(),
            steps,
        })
    }

    fn for_queue(modulator: &ModulatorSpec, cfg: &PathConfig) -> Result<Self> {
        cfg.validate()?;
        let steps = match cfg.upper_barrier {
            Some(u) => truncated_burn_in(cfg, modulator, modulator.mean_log(), modulator.var_log(), (u / cfg.barrier).ln()),
            None => resolve_burn_in(cfg, modulator, modulator.mean_log(), modulator.var_log())?,
        };
        Ok(LogRecursion {
            floor: 0.0,
            ceil: cfg.upper_barrier.map_or(f64::INFINITY, |u| (u / cfg.barrier).ln()),
            start: (cfg.initial_value() / cfg.barrier).ln(),
            steps,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, sampler: &mut ModulatorSampler<'_>, rng: &mut R) -> f64 {
        let mut x = self.start;
        for _ in 0..self.steps {
            x = reflect(x, sampler.next_log(rng), self.floor, self.ceil);
        }
        x
    }

    fn trajectory<R: Rng + ?Sized>(&self, sampler: &mut ModulatorSampler<'_>, horizon: u64, rng: &mut R) -> TrajectorySample {
        let mut values = Vec::with_capacity(horizon as usize + 1);
        let mut regen = Vec::new();
        let mut x = self.start;
        values.push(x);
        if x <= self.floor {
            regen.push(0);
        }
        for n in 1..=horizon as usize {
            x = reflect(x, sampler.next_log(rng), self.floor, self.ceil);
            debug_assert!(x >= self.floor);
            if x <= self.floor {
                regen.push(n);
            }
            values.push(x);
        }
        TrajectorySample {
            values,
            log_domain: true,
            regeneration_indices: regen,
            absorbed_at: None,
        }
    }
}

/// One stationary draw of `log M`: start at the configured initial value and
/// run the burn-in. From the barrier this is exactly the backward supremum
/// over the burn-in horizon.
pub fn run_rmp<R: Rng + ?Sized>(modulator: &ModulatorSpec, cfg: &PathConfig, rng: &mut R) -> Result<f64> {
    let rec = LogRecursion::for_rmp(modulator, cfg)?;
    Ok(rec.draw(&mut modulator.sampler(), rng))
}

/// `log M_0 .. log M_horizon`.
pub fn rmp_trajectory<R: Rng + ?Sized>(modulator: &ModulatorSpec, cfg: &PathConfig, rng: &mut R) -> Result<TrajectorySample> {
    cfg.validate()?;
    let rec = LogRecursion {
        floor: cfg.barrier.ln(),
        ceil: cfg.upper_barrier.map_or(f64::INFINITY, f64::ln),
        start: cfg.initial_value().ln(),
        steps: 0,
    };
    Ok(rec.trajectory(&mut modulator.sampler(), cfg.horizon, rng))
}

/// One stationary draw of the waiting time `Q` (queue normalised so the
/// barrier maps to 0).
pub fn run_queue<R: Rng + ?Sized>(modulator: &ModulatorSpec, cfg: &PathConfig, rng: &mut R) -> Result<f64> {
    let rec = LogRecursion::for_queue(modulator, cfg)?;
    Ok(rec.draw(&mut modulator.sampler(), rng))
}

/// `Q_0 .. Q_horizon`, consuming the same increments as [`rmp_trajectory`]
/// on the same generator.
pub fn queue_trajectory<R: Rng + ?Sized>(modulator: &ModulatorSpec, cfg: &PathConfig, rng: &mut R) -> Result<TrajectorySample> {
    cfg.validate()?;
    let rec = LogRecursion {
        floor: 0.0,
        ceil: cfg.upper_barrier.map_or(f64::INFINITY, |u| (u / cfg.barrier).ln()),
        start: (cfg.initial_value() / cfg.barrier).ln(),
        steps: 0,
    };
    Ok(rec.trajectory(&mut modulator.sampler(), cfg.horizon, rng))
}

/// Stationary draw of a two-barrier RMP, clamped into `[l, u]` every step.
pub fn run_truncated_rmp<R: Rng + ?Sized>(modulator: &ModulatorSpec, cfg: &PathConfig, rng: &mut R) -> Result<f64> {
    if cfg.upper_barrier.is_none() {
        return Err(Error::spec("truncated run needs an upper barrier"));
    }
    run_rmp(modulator, cfg, rng)
}

/// `n` independent stationary draws, one child stream each.
pub fn rmp_samples(modulator: &ModulatorSpec, cfg: &PathConfig, n: usize, stream: RngStream) -> Result<TailSampleSet> {
    let rec = LogRecursion::for_rmp(modulator, cfg)?;
    let logs = replicate(n, stream, |_, rng| Ok(rec.draw(&mut modulator.sampler(), rng)))?;
    let kind = if cfg.upper_barrier.is_some() {
        SampleKind::Truncated
    } else {
        SampleKind::Rmp
    };
    Ok(TailSampleSet::from_logs(
        logs,
        kind,
        SampleMeta::new(format!("rmp independent draws, burn-in {}", rec.steps), stream),
    ))
}

/// `n` samples read off `chains` long ergodic paths (after burn-in, every
/// `thin` steps). Cheaper than independent draws when burn-in is long;
/// consecutive samples are correlated.
pub fn rmp_path_samples(
    modulator: &ModulatorSpec,
    cfg: &PathConfig,
    n: usize,
    thin: u64,
    chains: usize,
    stream: RngStream,
) -> Result<TailSampleSet> {
    let rec = LogRecursion::for_rmp(modulator, cfg)?;
    let lengths = chain_lengths(n, chains);
    let thin = thin.max(1);
    let parts = replicate(lengths.len(), stream, |c, rng| {
        let mut sampler = modulator.sampler();
        let mut x = rec.draw(&mut sampler, rng);
        let mut out = Vec::with_capacity(lengths[c]);
        for _ in 0..lengths[c] {
            for _ in 0..thin {
                x = reflect(x, sampler.next_log(rng), rec.floor, rec.ceil);
            }
            out.push(x);
        }
        Ok(out)
    })?;
    Ok(TailSampleSet::from_logs(
        parts.concat(),
        SampleKind::Rmp,
        SampleMeta::new(format!("rmp ergodic path, {chains} chains, thin {thin}"), stream),
    ))
}

/// Draws of `log max_{0<=n<=N} Pi_n` with `Pi_n = prod_{i=-n}^{-1} J_i`.
/// Markov environments are run backwards through the time-reversed chain.
#[derive(Debug, Clone)]
pub struct BackwardSampler {
    reversed: ModulatorSpec,
    horizon: u64,
}

impl BackwardSampler {
    /// `horizon = None` picks [`stationary_horizon`] for `E log J` and `Var log J`.
    pub fn new(modulator: &ModulatorSpec, horizon: Option<u64>) -> Result<Self> {
        let m = modulator.mean_log();
        if m >= 0.0 {
            return Err(Error::NonNegativeDrift { drift: m });
        }
        Ok(BackwardSampler {
            reversed: modulator.reversed()?,
            horizon: horizon.unwrap_or_else(|| stationary_horizon(m, modulator.var_log(), HORIZON_EPS)),
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut sampler = self.reversed.sampler();
        let (mut s, mut sup) = (0.0f64, 0.0f64);
        for _ in 0..self.horizon {
            s += sampler.next_log(rng);
            sup = sup.max(s);
        }
        sup
    }
}

/// One draw of `log sup_{0<=n<=N} Pi_n`.
pub fn backward_sup<R: Rng + ?Sized>(modulator: &ModulatorSpec, horizon: Option<u64>, rng: &mut R) -> Result<f64> {
    Ok(BackwardSampler::new(modulator, horizon)?.draw(rng))
}

pub fn backward_sup_samples(modulator: &ModulatorSpec, horizon: Option<u64>, n: usize, stream: RngStream) -> Result<TailSampleSet> {
    let b = BackwardSampler::new(modulator, horizon)?;
    let logs = replicate(n, stream, |_, rng| Ok(b.draw(rng)))?;
    Ok(TailSampleSet::from_logs(
        logs,
        SampleKind::BackwardSup,
        SampleMeta::new(format!("backward supremum, horizon {}", b.horizon), stream),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    pub cap: u64,
    pub allow_near_critical: bool,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            cap: 1_000_000_000,
            allow_near_critical: false,
        }
    }
}

/// One excursion of `S_n = sum_{i<=n} log J_i` up to `tau = inf{n >= 1: S_n <= 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMax {
    /// `max_{1<=n<=tau} S_n`, i.e. `log M_tau`.
    pub log_max: f64,
    pub tau: u64,
    /// `S_tau <= 0`.
    pub overshoot: f64,
}

pub(crate) fn check_cycle_spec(modulator: &ModulatorSpec, opts: &CycleOptions) -> Result<()> {
    if !modulator.is_iid() {
        return Err(Error::spec("cycle simulation needs an i.i.d. environment"));
    }
    let m = modulator.mean_log();
    if m >= 0.0 && !opts.allow_near_critical {
        return Err(Error::NonNegativeDrift { drift: m });
    }
    if m.abs() < NEAR_CRITICAL_DRIFT && !opts.allow_near_critical {
        return Err(Error::Domain(format!("near-critical drift {m:e}; cycles refused by default")));
    }
    Ok(())
}

pub fn run_cycle_max<R: Rng + ?Sized>(modulator: &ModulatorSpec, opts: &CycleOptions, rng: &mut R) -> Result<CycleMax> {
    check_cycle_spec(modulator, opts)?;
    Ok(cycle(modulator, opts.cap, rng)?)
}

fn cycle<R: Rng + ?Sized>(modulator: &ModulatorSpec, cap: u64, rng: &mut R) -> Result<CycleMax> {
    let mut sampler = modulator.sampler();
    let (mut s, mut max) = (0.0f64, f64::NEG_INFINITY);
    let mut n = 0u64;
    loop {
        n += 1;
        s += sampler.next_log(rng);
        if s.abs() < ZERO_SNAP {
            s = 0.0;
        }
        max = max.max(s);
        if s <= 0.0 {
            return Ok(CycleMax {
                log_max: max,
                tau: n,
                overshoot: s,
            });
        }
        if n >= cap {
            return Err(Error::CycleCap { cap });
        }
    }
}

pub fn cycle_max_samples(modulator: &ModulatorSpec, opts: &CycleOptions, n: usize, stream: RngStream) -> Result<Vec<CycleMax>> {
    check_cycle_spec(modulator, opts)?;
    replicate(n, stream, |_, rng| cycle(modulator, opts.cap, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BurnIn;
    use crate::modulator::{LogLaw, TailFn};

    fn mm1() -> ModulatorSpec {
        ModulatorSpec::continuous(LogLaw::Lindley {
            service: TailFn::Exponential { rate: 2.0 },
            arrival_rate: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn always_reflected() {
        let m = ModulatorSpec::constant(0.5).unwrap();
        let cfg = PathConfig::new(1.0).with_horizon(50);
        let t = rmp_trajectory(&m, &cfg, &mut RngStream::new(0, 0).rng()).unwrap();
        assert!(t.values.iter().all(|v| *v == 0.0));
        assert_eq!(t.regeneration_indices.len(), 51);
    }

    #[test]
    fn queue_with_negative_increment_stays_empty() {
        let m = ModulatorSpec::constant((-1.0f64).exp()).unwrap();
        let t = queue_trajectory(&m, &PathConfig::new(1.0).with_horizon(20), &mut RngStream::new(0, 0).rng()).unwrap();
        assert!(t.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duality_is_bit_exact() {
        let m = mm1();
        let cfg = PathConfig::new(1.0).with_horizon(10_000).with_initial(3.0);
        for seed in 0..5 {
            let a = rmp_trajectory(&m, &cfg, &mut RngStream::new(seed, 0).rng()).unwrap();
            let b = queue_trajectory(&m, &cfg, &mut RngStream::new(seed, 0).rng()).unwrap();
            assert_eq!(a.values, b.values);
        }
        let a = run_rmp(&m, &cfg, &mut RngStream::new(9, 9).rng()).unwrap();
        let b = run_queue(&m, &cfg, &mut RngStream::new(9, 9).rng()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn refuses_positive_drift() {
        let m = ModulatorSpec::constant(2.0).unwrap();
        let cfg = PathConfig::new(1.0);
        assert!(matches!(run_rmp(&m, &cfg, &mut RngStream::new(0, 0).rng()), Err(Error::NonNegativeDrift { .. })));
        assert!(matches!(backward_sup(&m, None, &mut RngStream::new(0, 0).rng()), Err(Error::NonNegativeDrift { .. })));
        // forced with a fixed horizon runs
        let forced = cfg.forced().with_burn_in(BurnIn::Fixed(3));
        let x = run_rmp(&m, &forced, &mut RngStream::new(0, 0).rng()).unwrap();
        assert!((x - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn backward_sup_of_contraction_is_one() {
        let m = ModulatorSpec::constant(0.5).unwrap();
        assert_eq!(backward_sup(&m, None, &mut RngStream::new(0, 0).rng()).unwrap(), 0.0);
    }

    #[test]
    fn cycle_of_pure_contraction() {
        let m = ModulatorSpec::constant(0.5).unwrap();
        let c = run_cycle_max(&m, &CycleOptions::default(), &mut RngStream::new(0, 0).rng()).unwrap();
        assert_eq!(c.tau, 1);
        assert!((c.log_max - 0.5f64.ln()).abs() < 1e-15);
        assert!((c.overshoot - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cycle_cap_and_near_critical() {
        let m = ModulatorSpec::continuous(LogLaw::Normal { mean: -1e-5, sd: 1.0 }).unwrap();
        let mut rng = RngStream::new(0, 0).rng();
        assert!(matches!(run_cycle_max(&m, &CycleOptions::default(), &mut rng), Err(Error::Domain(_))));
        let opts = CycleOptions {
            cap: 1,
            allow_near_critical: true,
        };
        // a cap of one step fails whenever the first step goes up
        let fails = (0..100)
            .filter(|_| matches!(run_cycle_max(&m, &opts, &mut rng), Err(Error::CycleCap { cap: 1 })))
            .count();
        assert!(fails > 20);
    }

    #[test]
    fn truncation_clamps() {
        let m = mm1();
        let cfg = PathConfig::new(1.0).with_upper(1.0).with_horizon(100);
        let t = rmp_trajectory(&m, &cfg, &mut RngStream::new(1, 0).rng()).unwrap();
        assert!(t.values.iter().all(|v| *v == 0.0));
        let cfg = PathConfig::new(1.0).with_upper(20.0);
        let s = rmp_samples(&m, &cfg, 2000, RngStream::new(2, 0)).unwrap();
        assert!(s.logs.iter().all(|l| *l <= 20f64.ln() && *l >= 0.0));
        assert_eq!(s.kind, SampleKind::Truncated);
    }

    #[test]
    fn markov_backward_uses_reversal() {
        let m = ModulatorSpec::two_state_markov([2.0, 0.5], 0.3, 0.1).unwrap();
        let b = BackwardSampler::new(&m, Some(10)).unwrap();
        assert_eq!(b.horizon(), 10);
        let x = b.draw(&mut RngStream::new(3, 0).rng());
        assert!(x >= 0.0);
    }
}
