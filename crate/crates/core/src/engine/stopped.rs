//! Randomly stopped products and populations.
//!
//! `N` is drawn independently of the path. The product is over `N` factors,
//! so `N = 0` gives the empty product 1; under [`StopSpec::Geometric`]
//! `P[N >= n] = rho^n`.

use rand::Rng;

use super::{replicate, SampleKind, SampleMeta, TailSampleSet};
use crate::error::{Error, Result};
use crate::modulator::ModulatorSpec;
use crate::offspring::{sample_offspring_sum, OffspringSpec};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum StopSpec {
    /// `P[N >= n] = rho^n`, `0 < rho < 1`.
    Geometric { rho: f64 },
    /// `P[N = n] = probs[n]`.
    FiniteTable { probs: Vec<f64> },
}

impl StopSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StopSpec::Geometric { rho } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return Err(Error::spec(format!("geometric stop needs 0 < rho < 1, got {rho}")));
                }
            }
            StopSpec::FiniteTable { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::spec("stop table must be a non-empty list of probabilities"));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::spec(format!("stop table sums to {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// `E[N]`.
    pub fn mean(&self) -> f64 {
        match self {
            StopSpec::Geometric { rho } => rho / (1.0 - rho),
            StopSpec::FiniteTable { probs } => probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            StopSpec::Geometric { rho } => {
                // U in (0, 1]; floor(ln U / ln rho) has P[N >= n] = rho^n
                let u = 1.0 - rng.random::<f64>();
                (u.ln() / rho.ln()).floor() as u64
            }
            StopSpec::FiniteTable { probs } => {
                let mut u = rng.random::<f64>();
                for (n, p) in probs.iter().enumerate() {
                    if u < *p {
                        return n as u64;
                    }
                    u -= p;
                }
                (probs.len() - 1) as u64
            }
        }
    }
}

/// One draw of `log prod_{i<N} J_i`.
pub fn run_stopped_product<R: Rng + ?Sized>(modulator: &ModulatorSpec, stop: &StopSpec, rng: &mut R) -> Result<f64> {
    stop.validate()?;
    Ok(stopped_product(modulator, stop, rng))
}

fn stopped_product<R: Rng + ?Sized>(modulator: &ModulatorSpec, stop: &StopSpec, rng: &mut R) -> f64 {
    let n = stop.sample(rng);
    let mut env = modulator.sampler();
    (0..n).map(|_| env.next_log(rng)).sum()
}

pub fn stopped_product_samples(modulator: &ModulatorSpec, stop: &StopSpec, n: usize, stream: RngStream) -> Result<TailSampleSet> {
    stop.validate()?;
    let logs = replicate(n, stream, |_, rng| Ok(stopped_product(modulator, stop, rng)))?;
    Ok(TailSampleSet::from_logs(
        logs,
        SampleKind::StoppedProduct,
        SampleMeta::new(format!("stopped product, {stop:?}"), stream),
    ))
}

fn check_branching(modulator: &ModulatorSpec, offspring: &OffspringSpec, stop: &StopSpec, z0: u64) -> Result<()> {
    stop.validate()?;
    offspring.check_against(modulator)?;
    if let Some(j) = offspring.per_state().iter().position(|d| d.min_support() == 0) {
        return Err(Error::spec(format!("stopped branching needs offspring >= 1; state {j} can have none")));
    }
    if z0 == 0 {
        return Err(Error::spec("initial population must be at least 1"));
    }
    Ok(())
}

fn stopped_branching<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    stop: &StopSpec,
    z0: u64,
    rng: &mut R,
) -> Result<u64> {
    let n = stop.sample(rng);
    let mut env = modulator.sampler();
    let mut z = z0;
    for k in 1..=n {
        let state = env.next_step(rng).state;
        z = sample_offspring_sum(offspring, state, z, rng).map_err(|e| e.at_step(k))?;
    }
    Ok(z)
}

/// One draw of `Z_N` for an unreflected population with offspring `>= 1`.
pub fn run_stopped_branching<R: Rng + ?Sized>(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    stop: &StopSpec,
    z0: u64,
    rng: &mut R,
) -> Result<u64> {
    check_branching(modulator, offspring, stop, z0)?;
    stopped_branching(modulator, offspring, stop, z0, rng)
}

pub fn stopped_branching_samples(
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    stop: &StopSpec,
    z0: u64,
    n: usize,
    stream: RngStream,
) -> Result<TailSampleSet> {
    check_branching(modulator, offspring, stop, z0)?;
    let draws = replicate(n, stream, |_, rng| stopped_branching(modulator, offspring, stop, z0, rng))?;
    Ok(TailSampleSet::from_logs(
        draws.into_iter().map(|z| (z as f64).ln()).collect(),
        SampleKind::StoppedBranching,
        SampleMeta::new(format!("stopped branching, z0={z0}, {stop:?}"), stream),
    ))
}
