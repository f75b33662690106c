//! Modulated branching processes, free and reflected at a lower barrier.

use rand::Rng;

use super::{
    chain_lengths, replicate, resolve_burn_in, truncated_burn_in, PathConfig, SampleKind, SampleMeta, TailSampleSet,
    TrajectorySample,
};
use crate::error::{Error, Result};
use crate::modulator::{ModulatorSampler, ModulatorSpec};
use crate::offspring::{sample_offspring_sum, OffspringSpec};
use crate::rng::RngStream;

/// `E[log mu(J)]` and `Var[log mu(J)]` under the stationary law of `J`.
pub(crate) fn log_mean_moments(modulator: &ModulatorSpec, offspring: &OffspringSpec) -> (f64, f64) {
    let pi = modulator.stationary();
    let logs: Vec<f64> = offspring.means().iter().map(|m| m.ln()).collect();
    let mean: f64 = pi.iter().zip(&logs).map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 }).sum();
    let var = pi
        .iter()
        .zip(&logs)
        .map(|(p, l)| if *p > 0.0 { p * (l - mean).powi(2) } else { 0.0 })
        .sum();
    (mean, var)
}

struct Reflected<'a> {
    modulator: &'a ModulatorSpec,
    offspring: &'a OffspringSpec,
    floor: u64,
    ceil: u64,
    start: u64,
    steps: u64,
}

impl<'a> Reflected<'a> {
    fn new(modulator: &'a ModulatorSpec, offspring: &'a OffspringSpec, cfg: &PathConfig) -> Result<Self> {
        cfg.validate_integer()?;
        offspring.check_against(modulator)?;
        offspring.require_positive_means()?;
        let (m, var) = log_mean_moments(modulator, offspring);
        let steps = match cfg.upper_barrier {
            Some(u) => truncated_burn_in(cfg, modulator, m, var, (u / cfg.barrier).ln()),
            None => resolve_burn_in(cfg, modulator, m, var)?,
        };
        Ok(Reflected {
            modulator,
            offspring,
            floor: cfg.barrier as u64,
            ceil: cfg.upper_barrier.map_or(u64::MAX, |u| u as u64),
            start: cfg.initial_value() as u64,
            steps,
        })
    }

    #[inline]
    fn step<R: Rng + ?Sized>(&self, x: u64, env: &mut ModulatorSampler<'_>, rng: &mut R) -> Result<u64> {
        let state = env.next_step(rng).state;
        let s = sample_offspring_sum(self.offspring, state, x, rng)?;
        Ok(s.max(self.floor).min(self.ceil))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let mut env = self.modulator.sampler();
        let mut x = self.start;
        for n in 0..self.steps {
            x = self.step(x, &mut env, rng).map_err(|e| e.at_step(n + 1))?;
        }
        Ok(x)
    }
}

/// Unreflected path `Z_0 = initial, Z_{n+1} = sum_{i<=Z_n} B_n^i(J_n)`,
/// stopped at absorption.
pub fn run_mbp<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    initial: u64,
    horizon: u64,
    rng: &mut R,
) -> Result<TrajectorySample> {
    offspring.check_against(modulator)?;
    if initial == 0 {
        return Err(Error::spec("initial population must be at least 1"));
    }
    let mut env = modulator.sampler();
    let mut z = initial;
    let mut values = vec![z as f64];
    let mut absorbed_at = None;
    for n in 1..=horizon {
        let state = env.next_step(rng).state;
        z = sample_offspring_sum(offspring, state, z, rng).map_err(|e| e.at_step(n))?;
        values.push(z as f64);
        if z == 0 {
            absorbed_at = Some(n as usize);
            break;
        }
    }
    Ok(TrajectorySample {
        values,
        log_domain: false,
        regeneration_indices: Vec::new(),
        absorbed_at,
    })
}

/// One stationary draw of `Lambda`: start at the initial value (default
/// `l`) and run the burn-in of `Lambda_{n+1} = max(sum B_n^i(J_n), l)`.
pub fn run_rmbp<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<u64> {
    Reflected::new(modulator, offspring, cfg)?.draw(rng)
}

/// Two-barrier run, clamped into `[l, u]`.
pub fn run_truncated_rmbp<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<u64> {
    if cfg.upper_barrier.is_none() {
        return Err(Error::spec("truncated run needs an upper barrier"));
    }
    run_rmbp(modulator, offspring, cfg, rng)
}

/// `Lambda_0 .. Lambda_horizon` from the initial value, no burn-in.
pub fn rmbp_trajectory<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<TrajectorySample> {
    let cfg = cfg.clone().forced().with_burn_in(super::BurnIn::Fixed(0));
    let r = Reflected::new(modulator, offspring, &cfg)?;
    let mut env = modulator.sampler();
    let mut x = r.start;
    let mut values = Vec::with_capacity(cfg.horizon as usize + 1);
    let mut regen = Vec::new();
    values.push(x as f64);
    if x == r.floor {
        regen.push(0);
    }
    for n in 1..=cfg.horizon {
        x = r.step(x, &mut env, rng).map_err(|e| e.at_step(n))?;
        if x == r.floor {
            regen.push(n as usize);
        }
        values.push(x as f64);
    }
    Ok(TrajectorySample {
        values,
        log_domain: false,
        regeneration_indices: regen,
        absorbed_at: None,
    })
}

fn kind_of(cfg: &PathConfig) -> SampleKind {
    if cfg.upper_barrier.is_some() {
        SampleKind::Truncated
    } else {
        SampleKind::Rmbp
    }
}

/// `n` independent stationary draws.
pub fn rmbp_samples(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    cfg: &PathConfig,
    n: usize,
    stream: RngStream,
) -> Result<TailSampleSet> {
    let r = Reflected::new(modulator, offspring, cfg)?;
    let draws = replicate(n, stream, |_, rng| r.draw(rng))?;
    Ok(TailSampleSet::from_logs(
        draws.into_iter().map(|x| (x as f64).ln()).collect(),
        kind_of(cfg),
        SampleMeta::new(format!("rmbp independent draws, l={}, burn-in {}", r.floor, r.steps), stream),
    ))
}

/// `n` samples read every `thin` steps off `chains` ergodic paths, each
/// started with one burn-in.
pub fn rmbp_path_samples(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    cfg: &PathConfig,
    n: usize,
    thin: u64,
    chains: usize,
    stream: RngStream,
) -> Result<TailSampleSet> {
    let r = Reflected::new(modulator, offspring, cfg)?;
    let lengths = chain_lengths(n, chains);
    let thin = thin.max(1);
    let parts = replicate(lengths.len(), stream, |c, rng| {
        let mut env = modulator.sampler();
        let mut x = r.start;
        let mut step = 0u64;
        for _ in 0..r.steps {
            step += 1;
            x = r.step(x, &mut env, rng).map_err(|e| e.at_step(step))?;
        }
        let mut out = Vec::with_capacity(lengths[c]);
        for _ in 0..lengths[c] {
            for _ in 0..thin {
                step += 1;
                x = r.step(x, &mut env, rng).map_err(|e| e.at_step(step))?;
            }
            out.push((x as f64).ln());
        }
        Ok(out)
    })?;
    Ok(TailSampleSet::from_logs(
        parts.concat(),
        kind_of(cfg),
        SampleMeta::new(format!("rmbp ergodic path, l={}, {chains} chains, thin {thin}", r.floor), stream),
    ))
}

/// Reflected paths for several barriers driven by the same randomness: one
/// environment path (from `stream.child(0)`) and, at step `n`, individual
/// `i` draws the `i`-th offspring count from `stream.child(n)`. Every
/// barrier sees the same `B_n^i`, so the paths are ordered like the
/// barriers.
pub fn coupled_rmbp_paths(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    barriers: &[u64],
    horizon: u64,
    stream: RngStream,
) -> Result<Vec<Vec<u64>>> {
    offspring.check_against(modulator)?;
    offspring.require_positive_means()?;
    if barriers.iter().any(|l| *l == 0) {
        return Err(Error::spec("barriers must be at least 1"));
    }
    let mut env_rng = stream.child(0).rng();
    let mut env = modulator.sampler();
    let mut paths: Vec<Vec<u64>> = barriers.iter().map(|l| vec![*l]).collect();
    for n in 1..=horizon {
        let state = env.next_step(&mut env_rng).state;
        let dist = offspring.dist(state);
        let current: Vec<u64> = paths.iter().map(|p| *p.last().unwrap()).collect();
        let mut order: Vec<usize> = (0..current.len()).collect();
        order.sort_by_key(|&k| current[k]);
        let mut rng = stream.child(n).rng();
        let (mut drawn, mut sum) = (0u64, 0u64);
        for &k in &order {
            while drawn < current[k] {
                sum = sum.checked_add(dist.sample_one(&mut rng)).ok_or(Error::Saturation { step: n })?;
                drawn += 1;
            }
            paths[k].push(sum.max(barriers[k]));
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BurnIn;
    use crate::offspring::OffspringDist;

    fn figure2() -> (ModulatorSpec, OffspringSpec) {
        let m = ModulatorSpec::iid(vec![1.0, 2.0], vec![0.6, 0.4]).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Poisson(0.6), OffspringDist::Poisson(1.5)]).unwrap();
        (m, o)
    }

    #[test]
    fn identity_offspring_is_constant() {
        let m = ModulatorSpec::constant(1.0).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Deterministic(1)]).unwrap();
        let t = run_mbp(&m, &o, 7, 100, &mut RngStream::new(0, 0).rng()).unwrap();
        assert!(t.values.iter().all(|v| *v == 7.0));
        assert_eq!(t.absorbed_at, None);
    }

    #[test]
    fn zero_offspring_absorbs_at_once() {
        let m = ModulatorSpec::constant(1.0).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Deterministic(0)]).unwrap();
        let t = run_mbp(&m, &o, 3, 100, &mut RngStream::new(0, 0).rng()).unwrap();
        assert_eq!(t.absorbed_at, Some(1));
        assert_eq!(t.values, vec![3.0, 0.0]);
    }

    #[test]
    fn reflection_floor_holds() {
        // zero mean offspring are rejected for reflected runs
        let m = ModulatorSpec::constant(1.0).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Deterministic(0)]).unwrap();
        let cfg = PathConfig::new(5.0).with_horizon(20);
        assert!(rmbp_trajectory(&m, &o, &cfg, &mut RngStream::new(0, 0).rng()).is_err());

        let o = OffspringSpec::new(vec![OffspringDist::TwoPoint { a: 0, b: 1, p: 0.9 }]).unwrap();
        let t = rmbp_trajectory(&m, &o, &cfg.with_initial(9.0), &mut RngStream::new(0, 0).rng()).unwrap();
        assert!(t.values.iter().all(|v| *v >= 5.0));
        assert!(t.values[3..].iter().all(|v| *v == 5.0));
    }

    #[test]
    fn saturation_is_reported() {
        let m = ModulatorSpec::constant(1.0).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Deterministic(1000)]).unwrap();
        let cfg = PathConfig::new(1.0).forced().with_burn_in(BurnIn::Fixed(100));
        let e = run_rmbp(&m, &o, &cfg, &mut RngStream::new(0, 0).rng()).unwrap_err();
        assert!(matches!(e, Error::Saturation { step: 7 }), "{e:?}");
    }

    #[test]
    fn refuses_supercritical_without_force() {
        let m = ModulatorSpec::constant(1.0).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Poisson(1.1)]).unwrap();
        let e = run_rmbp(&m, &o, &PathConfig::new(1.0), &mut RngStream::new(0, 0).rng()).unwrap_err();
        assert!(matches!(e, Error::NonNegativeDrift { .. }));
    }

    #[test]
    fn coupled_paths_are_ordered() {
        let (m, o) = figure2();
        let paths = coupled_rmbp_paths(&m, &o, &[1, 5, 13], 300, RngStream::new(5, 0)).unwrap();
        for n in 0..=300 {
            assert!(paths[0][n] <= paths[1][n] && paths[1][n] <= paths[2][n]);
        }
    }

    #[test]
    fn truncated_samples_in_range() {
        let (m, o) = figure2();
        let cfg = PathConfig::new(2.0).with_upper(40.0);
        let s = rmbp_samples(&m, &o, &cfg, 500, RngStream::new(1, 1)).unwrap();
        assert!(s.values().all(|v| (2.0 - 1e-9..=40.0 + 1e-9).contains(&v)));
    }

    #[test]
    fn path_samples_are_reproducible() {
        let (m, o) = figure2();
        let cfg = PathConfig::new(1.0);
        let a = rmbp_path_samples(&m, &o, &cfg, 1000, 3, 4, RngStream::new(2, 0)).unwrap();
        let b = rmbp_path_samples(&m, &o, &cfg, 1000, 3, 4, RngStream::new(2, 0)).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.len(), 1000);
    }
}
