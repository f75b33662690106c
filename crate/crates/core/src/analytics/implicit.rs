//! The implicit-renewal constant of a reflected branching process,
//!
//! `C = E[(Lambda*)^a - (mu(J) Lambda)^a] / (a E[mu(J)^a log mu(J)])`,
//!
//! with `Lambda* = max(sum_{i<=Lambda} B^i(J), l)` and `Lambda` stationary.
//! The inner expectation over `J` and the offspring sum is computed exactly
//! from the offspring pmf for moderate populations and by a fourth-order
//! moment expansion beyond that. A sampled version is provided for
//! comparison.

use std::collections::HashMap;

use rayon::prelude::*;
use statrs::distribution::{Binomial, Discrete, Poisson};

use crate::engine::{replicate, TailSampleSet};
use crate::error::{Error, Result};
use crate::modulator::ModulatorSpec;
use crate::offspring::{sample_offspring_sum, OffspringDist, OffspringSpec};
use crate::rng::RngStream;

use super::ladder::Estimate;

/// Largest mean offspring sum evaluated from the exact pmf.
pub const EXACT_MEAN_LIMIT: f64 = 1e4;

/// Number of batches for the batch-means standard error.
pub const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitConstant {
    pub value: f64,
    pub stderr: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub n_samples: usize,
}

/// `a E[mu(J)^a log mu(J)]` for an i.i.d. environment.
pub fn implicit_denominator(modulator: &ModulatorSpec, offspring: &OffspringSpec, alpha: f64) -> Result<f64> {
    let probs = modulator
        .probs()
        .ok_or_else(|| Error::spec("implicit constant needs an i.i.d. discrete environment"))?;
    offspring.check_against(modulator)?;
    Ok(alpha
        * probs
            .iter()
            .zip(offspring.means())
            .filter(|(p, m)| **p > 0.0 && *m > 0.0)
            .map(|(p, m)| p * m.powf(alpha) * m.ln())
            .sum::<f64>())
}

/// Generalised binomial coefficient `C(a, k)`.
fn binom(a: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a - i as f64) / (i + 1) as f64)
}

/// `E[max(S, l)^a] - (E S)^a` for `S` a sum of `n` copies of `dist`.
pub fn conditional_gap(dist: &OffspringDist, n: u64, barrier: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    let target = nf * dist.mean();
    let l = barrier as f64;
    let pow = |x: f64| x.max(l).powf(alpha);
    let t_pow = target.powf(alpha);
    let window = |mean: f64, sd: f64| {
        let lo = (mean - 12.0 * sd - 12.0).max(0.0).floor() as u64;
        let hi = (mean + 12.0 * sd + 12.0).ceil() as u64;
        (lo, hi)
    };
    match dist {
        OffspringDist::Deterministic(_) => pow(target) - t_pow,
        OffspringDist::Poisson(mu) | OffspringDist::ShiftedPoisson { mean: mu, .. } if nf * mu <= EXACT_MEAN_LIMIT => {
            let base = match dist {
                OffspringDist::ShiftedPoisson { shift, .. } => nf * *shift as f64,
                _ => 0.0,
            };
            let m = nf * mu;
            if m == 0.0 {
                return pow(base) - t_pow;
            }
            let d = Poisson::new(m).unwrap();
            let (lo, hi) = window(m, m.sqrt());
            (lo..=hi).map(|k| d.pmf(k) * (pow(base + k as f64) - t_pow)).sum()
        }
        OffspringDist::TwoPoint { a, b, p } if nf * p * (1.0 - p) <= EXACT_MEAN_LIMIT => {
            let d = Binomial::new(*p, n).unwrap();
            let (lo, hi) = window(nf * p, (nf * p * (1.0 - p)).sqrt());
            (lo..=hi.min(n))
                .map(|k| d.pmf(k) * (pow(*a as f64 * k as f64 + *b as f64 * (n - k) as f64) - t_pow))
                .sum()
        }
        OffspringDist::GeneralDiscrete { support, probs } if n <= 64 && nf * *support.iter().max().unwrap() as f64 <= 1e5 => {
            let mut pmf = vec![1.0];
            for _ in 0..n {
                let mut next = vec![0.0; pmf.len() + *support.iter().max().unwrap() as usize];
                for (x, px) in pmf.iter().enumerate() {
                    if *px == 0.0 {
                        continue;
                    }
                    for (s, ps) in support.iter().zip(probs) {
                        next[x + *s as usize] += px * ps;
                    }
                }
                pmf = next;
            }
            pmf.iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(k, p)| p * (pow(k as f64) - t_pow))
                .sum()
        }
        _ => {
            // E[S^a] ~ m^a (1 + C(a,2) mu2/m^2 + C(a,3) mu3/m^3 + C(a,4) mu4/m^4)
            let [k2, k3, k4] = dist.cumulants();
            let m = target;
            let (m2, m3, m4) = (nf * k2, nf * k3, nf * k4 + 3.0 * (nf * k2).powi(2));
            t_pow * (binom(alpha, 2) * m2 / m.powi(2) + binom(alpha, 3) * m3 / m.powi(3) + binom(alpha, 4) * m4 / m.powi(4))
        }
    }
}

/// Mean and batch-means standard error of a (possibly correlated) series.
pub fn batch_means(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(2);
    let size = n / b;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let bm: Vec<f64> = (0..b)
        .map(|i| x[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mb = bm.iter().sum::<f64>() / b as f64;
    let var = bm.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

fn populations(samples: &TailSampleSet, barrier: u64) -> Result<Vec<u64>> {
    if samples.len() < 2 * BATCHES {
        return Err(Error::InsufficientData(format!("{} samples, need at least {}", samples.len(), 2 * BATCHES)));
    }
    let pops: Vec<u64> = samples.values().map(|v| v.round() as u64).collect();
    if pops.iter().any(|p| *p < barrier) {
        return Err(Error::spec("samples lie below the barrier"));
    }
    Ok(pops)
}

fn finish(terms: &[f64], denominator: f64) -> Result<ImplicitConstant> {
    if !(denominator > 0.0) {
        return Err(Error::Degenerate(format!("denominator {denominator} is not positive")));
    }
    let (num, se) = batch_means(terms, BATCHES);
    Ok(ImplicitConstant {
        value: num / denominator,
        stderr: se / denominator,
        numerator: num,
        denominator,
        n_samples: terms.len(),
    })
}

/// Constant from stationary `Lambda` samples, with the inner expectation
/// over `J` and the offspring sum evaluated analytically.
pub fn mbp_implicit_constant(
    samples: &TailSampleSet,
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    barrier: u64,
    alpha: f64,
) -> Result<ImplicitConstant> {
    let denominator = implicit_denominator(modulator, offspring, alpha)?;
    let probs = modulator.probs().unwrap().to_vec();
    let pops = populations(samples, barrier)?;
    let mut distinct: Vec<u64> = pops.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let gaps: HashMap<u64, f64> = distinct
        .par_iter()
        .map(|&n| {
            let g = probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(j, p)| p * conditional_gap(offspring.dist(j), n, barrier, alpha))
                .sum();
            (n, g)
        })
        .collect();
    let terms: Vec<f64> = pops.iter().map(|n| gaps[n]).collect();
    finish(&terms, denominator)
}

/// The same constant with one sampled `J` and offspring sum per `Lambda`.
pub fn mbp_implicit_constant_sampled(
    samples: &TailSampleSet,
    modulator: &ModulatorSpec,
    offspring: &OffspringSpec,
    barrier: u64,
    alpha: f64,
    stream: RngStream,
) -> Result<ImplicitConstant> {
    let denominator = implicit_denominator(modulator, offspring, alpha)?;
    let pops = populations(samples, barrier)?;
    let means = offspring.means();
    let terms = replicate(pops.len(), stream, |i, rng| {
        let state = modulator.sampler().next_step(rng).state;
        let s = sample_offspring_sum(offspring, state, pops[i], rng)?;
        let star = s.max(barrier) as f64;
        Ok(star.powf(alpha) - (means[state] * pops[i] as f64).powf(alpha))
    })?;
    finish(&terms, denominator)
}

impl From<ImplicitConstant> for Estimate {
    fn from(c: ImplicitConstant) -> Self {
        Estimate {
            value: c.value,
            stderr: c.stderr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure2_denominator() {
        let m = ModulatorSpec::iid(vec![1.0, 2.0], vec![0.6, 0.4]).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Poisson(0.6), OffspringDist::Poisson(1.5)]).unwrap();
        let d = implicit_denominator(&m, &o, 1.406_453_979_846_487_2).unwrap();
        assert!((d - 0.193_312_576_313_312_57).abs() < 1e-12, "{d}");
    }

    #[test]
    fn deterministic_gap_vanishes_above_barrier() {
        let d = OffspringDist::Deterministic(3);
        assert_eq!(conditional_gap(&d, 5, 1, 1.4), 0.0);
        // 0 children: max(0, l)^a - 0
        let z = OffspringDist::Deterministic(0);
        assert_eq!(conditional_gap(&z, 5, 2, 1.0), 2.0);
    }

    #[test]
    fn exact_and_expansion_agree() {
        // Poisson sum just below the exact limit vs the moment expansion
        let d = OffspringDist::Poisson(1.0);
        let n = 9_000;
        let exact = conditional_gap(&d, n, 1, 1.4);
        let [k2, k3, k4] = d.cumulants();
        let (m, nf) = (n as f64, n as f64);
        let approx = m.powf(1.4)
            * (binom(1.4, 2) * nf * k2 / m.powi(2)
                + binom(1.4, 3) * nf * k3 / m.powi(3)
                + binom(1.4, 4) * (nf * k4 + 3.0 * (nf * k2).powi(2)) / m.powi(4));
        assert!((exact - approx).abs() < 1e-3 * approx.abs(), "{exact} {approx}");
        // with a = 1 and no barrier effect the gap is exactly zero
        assert!(conditional_gap(&d, 200, 1, 1.0).abs() < 1e-9);
    }

    #[test]
    fn general_discrete_matches_two_point() {
        let a = OffspringDist::TwoPoint { a: 3, b: 0, p: 0.4 };
        let g = OffspringDist::GeneralDiscrete {
            support: vec![0, 3],
            probs: vec![0.6, 0.4],
        };
        for n in [1, 4, 20] {
            let x = conditional_gap(&a, n, 2, 1.3);
            let y = conditional_gap(&g, n, 2, 1.3);
            assert!((x - y).abs() < 1e-9, "{n}: {x} {y}");
        }
    }

    #[test]
    fn batch_means_of_constant() {
        let (m, se) = batch_means(&[2.0; 1000], 50);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }
}
