//! Offspring laws `B(j)` and fast sampling of `sum_{i=1}^n B^i(j)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::modulator::ModulatorSpec;

/// Default population size above which sums are drawn from the Normal
/// approximation `N(n mu, n Var B)`.
pub const DEFAULT_NORMAL_THRESHOLD: u64 = 1_000_000;

const U64_LIMIT: f64 = 18_446_744_073_709_551_615.0;

#[derive(Debug, Clone, PartialEq)]
pub enum OffspringDist {
    Deterministic(u64),
    Poisson(f64),
    /// `shift + Poisson(mean)`; `mean = 0` degenerates to `shift`.
    ShiftedPoisson { shift: u64, mean: f64 },
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: u64, b: u64, p: f64 },
    GeneralDiscrete { support: Vec<u64>, probs: Vec<f64> },
}

impl OffspringDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            OffspringDist::Deterministic(_) => Ok(()),
            OffspringDist::Poisson(m) => {
                if m.is_finite() && *m > 0.0 {
                    Ok(())
                } else {
                    Err(Error::spec(format!("Poisson mean must be positive, got {m}")))
                }
            }
            OffspringDist::ShiftedPoisson { mean, .. } => {
                if mean.is_finite() && *mean >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::spec(format!("shifted Poisson mean must be nonnegative, got {mean}")))
                }
            }
            OffspringDist::TwoPoint { p, .. } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::spec(format!("two-point probability out of range: {p}")))
                }
            }
            OffspringDist::GeneralDiscrete { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return Err(Error::spec("general discrete law needs matching support and probs"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::spec("general discrete probs must be nonnegative"));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::spec(format!("general discrete probs sum to {s}")));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            OffspringDist::Deterministic(k) => *k as f64,
            OffspringDist::Poisson(m) => *m,
            OffspringDist::ShiftedPoisson { shift, mean } => *shift as f64 + mean,
            OffspringDist::TwoPoint { a, b, p } => p * *a as f64 + (1.0 - p) * *b as f64,
            OffspringDist::GeneralDiscrete { support, probs } => {
                support.iter().zip(probs).map(|(s, p)| *s as f64 * p).sum()
            }
        }
    }

    /// Cumulants `kappa_2..kappa_4` of one individual's offspring count.
    pub fn cumulants(&self) -> [f64; 3] {
        match self {
            OffspringDist::Deterministic(_) => [0.0; 3],
            OffspringDist::Poisson(m) => [*m; 3],
            OffspringDist::ShiftedPoisson { mean, .. } => [*mean; 3],
            OffspringDist::TwoPoint { a, b, p } => {
                let d = *a as f64 - *b as f64;
                let q = 1.0 - p;
                [
                    p * q * d * d,
                    p * q * (q - p) * d.powi(3),
                    p * q * (1.0 - 6.0 * p * q) * d.powi(4),
                ]
            }
            OffspringDist::GeneralDiscrete { support, probs } => {
                let m = self.mean();
                let c = |r: i32| -> f64 {
                    support
                        .iter()
                        .zip(probs)
                        .map(|(s, p)| p * (*s as f64 - m).powi(r))
                        .sum()
                };
                let (m2, m3, m4) = (c(2), c(3), c(4));
                [m2, m3, m4 - 3.0 * m2 * m2]
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.cumulants()[0]
    }

    /// Smallest value in the support.
    pub fn min_support(&self) -> u64 {
        match self {
            OffspringDist::Deterministic(k) => *k,
            OffspringDist::Poisson(_) => 0,
            OffspringDist::ShiftedPoisson { shift, .. } => *shift,
            OffspringDist::TwoPoint { a, b, p } => {
                if *p == 0.0 {
                    *b
                } else if *p == 1.0 {
                    *a
                } else {
                    (*a).min(*b)
                }
            }
            OffspringDist::GeneralDiscrete { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(s, _)| *s)
                .min()
                .unwrap_or(0),
        }
    }

    /// One individual's offspring count.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            OffspringDist::Deterministic(k) => *k,
            OffspringDist::Poisson(m) => Poisson::new(*m).unwrap().sample(rng) as u64,
            OffspringDist::ShiftedPoisson { shift, mean } => {
                if *mean == 0.0 {
                    *shift
                } else {
                    shift + Poisson::new(*mean).unwrap().sample(rng) as u64
                }
            }
            OffspringDist::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < *p {
                    *a
                } else {
                    *b
                }
            }
            OffspringDist::GeneralDiscrete { support, probs } => {
                let mut u: f64 = rng.random();
                for (s, p) in support.iter().zip(probs) {
                    if u < *p {
                        return *s;
                    }
                    u -= p;
                }
                *support.last().unwrap()
            }
        }
    }

    /// A draw of `sum_{i=1}^n B^i`, exact for `n <= normal_threshold`.
    pub fn sample_sum<R: Rng + ?Sized>(&self, n: u64, normal_threshold: Option<u64>, rng: &mut R) -> Result<u64> {
        if n == 0 {
            return Ok(0);
        }
        if let OffspringDist::Deterministic(k) = self {
            return n.checked_mul(*k).ok_or(Error::Saturation { step: 0 });
        }
        if normal_threshold.is_some_and(|t| n > t) {
            let nf = n as f64;
            let mean = nf * self.mean();
            let sd = (nf * self.variance()).sqrt();
            let x = if sd > 0.0 {
                Normal::new(mean, sd).unwrap().sample(rng)
            } else {
                mean
            };
            return to_count(x.round().max(0.0));
        }
        match self {
            OffspringDist::Deterministic(_) => unreachable!(),
            OffspringDist::Poisson(m) => poisson_count(n as f64 * m, rng),
            OffspringDist::ShiftedPoisson { shift, mean } => {
                let base = n.checked_mul(*shift).ok_or(Error::Saturation { step: 0 })?;
                let extra = if *mean == 0.0 {
                    0
                } else {
                    poisson_count(n as f64 * mean, rng)?
                };
                base.checked_add(extra).ok_or(Error::Saturation { step: 0 })
            }
            OffspringDist::TwoPoint { a, b, p } => {
                let count_a = Binomial::new(n, *p).unwrap().sample(rng);
                let sa = count_a.checked_mul(*a);
                let sb = (n - count_a).checked_mul(*b);
                match (sa, sb) {
                    (Some(x), Some(y)) => x.checked_add(y).ok_or(Error::Saturation { step: 0 }),
                    _ => Err(Error::Saturation { step: 0 }),
                }
            }
            OffspringDist::GeneralDiscrete { support, probs } => {
                // Multinomial counts by sequential binomial splitting.
                let mut remaining = n;
                let mut mass = 1.0;
                let mut total: u64 = 0;
                for (i, (s, p)) in support.iter().zip(probs).enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let c = if i + 1 == support.len() || mass <= *p {
                        remaining
                    } else {
                        Binomial::new(remaining, (p / mass).clamp(0.0, 1.0)).unwrap().sample(rng)
                    };
                    remaining -= c;
                    mass -= p;
                    let add = c.checked_mul(*s).ok_or(Error::Saturation { step: 0 })?;
                    total = total.checked_add(add).ok_or(Error::Saturation { step: 0 })?;
                }
                Ok(total)
            }
        }
    }
}

fn to_count(x: f64) -> Result<u64> {
    if x >= U64_LIMIT || !x.is_finite() {
        Err(Error::Saturation { step: 0 })
    } else {
        Ok(x as u64)
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|_| Error::Saturation { step: 0 })?;
    to_count(d.sample(rng))
}

/// Offspring laws indexed by environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringSpec {
    per_state: Vec<OffspringDist>,
    normal_threshold: Option<u64>,
}

impl OffspringSpec {
    pub fn new(per_state: Vec<OffspringDist>) -> Result<Self> {
        if per_state.is_empty() {
            return Err(Error::spec("offspring spec needs at least one state"));
        }
        for (j, d) in per_state.iter().enumerate() {
            d.validate()
                .map_err(|e| Error::spec(format!("offspring state {j}: {e}")))?;
        }
        Ok(OffspringSpec {
            per_state,
            normal_threshold: Some(DEFAULT_NORMAL_THRESHOLD),
        })
    }

    /// The same law in every state.
    pub fn uniform(d: OffspringDist, n_states: usize) -> Result<Self> {
        Self::new(vec![d; n_states])
    }

    /// `None` disables the Normal approximation (exact sums only).
    pub fn with_normal_threshold(mut self, t: Option<u64>) -> Self {
        self.normal_threshold = t;
        self
    }

    pub fn normal_threshold(&self) -> Option<u64> {
        self.normal_threshold
    }

    pub fn per_state(&self) -> &[OffspringDist] {
        &self.per_state
    }

    pub fn n_states(&self) -> usize {
        self.per_state.len()
    }

    pub fn dist(&self, state: usize) -> &OffspringDist {
        &self.per_state[state]
    }

    /// `mu(j)` for every state.
    pub fn means(&self) -> Vec<f64> {
        self.per_state.iter().map(|d| d.mean()).collect()
    }

    /// Offspring states must match the environment's states.
    pub fn check_against(&self, m: &ModulatorSpec) -> Result<()> {
        if m.log_law().is_some() {
            return Err(Error::spec("branching needs a finite-state environment"));
        }
        if self.per_state.len() != m.n_states() {
            return Err(Error::spec(format!(
                "offspring defines {} states, environment has {}",
                self.per_state.len(),
                m.n_states()
            )));
        }
        Ok(())
    }

    /// Reflected runs need `inf_j mu(j) > 0`.
    pub fn require_positive_means(&self) -> Result<()> {
        match self.means().iter().position(|m| *m <= 0.0) {
            Some(j) => Err(Error::spec(format!("offspring mean of state {j} is zero; reflected runs need inf mu > 0"))),
            None => Ok(()),
        }
    }
}

/// `sum_{i=1}^n B^i(state)`.
pub fn sample_offspring_sum<R: Rng + ?Sized>(spec: &OffspringSpec, state: usize, n: u64, rng: &mut R) -> Result<u64> {
    spec.dist(state).sample_sum(n, spec.normal_threshold, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn deterministic_sum() {
        let s = OffspringSpec::new(vec![OffspringDist::Deterministic(2)]).unwrap();
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(sample_offspring_sum(&s, 0, 5, &mut rng).unwrap(), 10);
    }

    #[test]
    fn empty_sum_is_zero() {
        let laws = [
            OffspringDist::Deterministic(3),
            OffspringDist::Poisson(1.5),
            OffspringDist::TwoPoint { a: 0, b: 4, p: 0.3 },
            OffspringDist::GeneralDiscrete {
                support: vec![0, 1, 5],
                probs: vec![0.2, 0.5, 0.3],
            },
        ];
        let mut rng = RngStream::new(0, 1).rng();
        for d in laws {
            assert_eq!(d.sample_sum(0, Some(10), &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_sum_mean() {
        let s = OffspringSpec::new(vec![OffspringDist::Poisson(0.6), OffspringDist::Poisson(1.5)]).unwrap();
        let mut rng = RngStream::new(9, 0).rng();
        let draws = 1000;
        let mean = (0..draws)
            .map(|_| sample_offspring_sum(&s, 1, 10_000, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 15_000.0).abs() < 3.0 * 15_000f64.sqrt(), "mean {mean}");
    }

    #[test]
    fn saturation_detected() {
        let d = OffspringDist::Deterministic(u64::MAX / 2);
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(d.sample_sum(3, None, &mut rng), Err(Error::Saturation { step: 0 }));
        let p = OffspringDist::Poisson(1e10);
        assert!(matches!(
            p.sample_sum(u64::MAX / 2, Some(1_000_000), &mut rng),
            Err(Error::Saturation { .. })
        ));
    }

    #[test]
    fn normal_branch_moments() {
        let d = OffspringDist::TwoPoint { a: 1, b: 3, p: 0.5 };
        let mut rng = RngStream::new(4, 0).rng();
        let n = 2_000_000u64;
        let draws: Vec<f64> = (0..400).map(|_| d.sample_sum(n, Some(1_000_000), &mut rng).unwrap() as f64).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (n as f64 * d.variance()).sqrt();
        assert!((m - 4e6).abs() < 4.0 * sd / 20.0);
    }

    #[test]
    fn cumulants_of_general_match_two_point() {
        let tp = OffspringDist::TwoPoint { a: 0, b: 3, p: 0.25 };
        let gd = OffspringDist::GeneralDiscrete {
            support: vec![0, 3],
            probs: vec![0.25, 0.75],
        };
        for (x, y) in tp.cumulants().iter().zip(gd.cumulants()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert_eq!(tp.mean(), gd.mean());
    }

    #[test]
    fn state_count_checked() {
        let m = ModulatorSpec::iid(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let s = OffspringSpec::new(vec![OffspringDist::Poisson(1.0)]).unwrap();
        assert!(s.check_against(&m).is_err());
        let z = OffspringSpec::new(vec![OffspringDist::Deterministic(0), OffspringDist::Poisson(1.0)]).unwrap();
        assert!(z.require_positive_means().is_err());
    }
}
