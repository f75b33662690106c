//! Environment (modulating process) models.
//!
//! A [`ModulatorSpec`] is the law of the exogenous sequence `J_n`. Finite
//! state kinds carry one positive value per state: the multiplier `J` when the
//! spec drives a multiplicative process, or just a state label when it drives
//! a branching process (the offspring law then depends on the state index).
//! Continuous i.i.d. laws are described directly by the law of `log J`.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// A complementary distribution function `Gbar(y)`, `y >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum TailFn {
    /// `Gbar(y) = exp(-rate * y)`.
    Exponential { rate: f64 },
    /// `Gbar(y) = levels[k]` on `[breaks[k], breaks[k+1])`, zero beyond the
    /// last break. `breaks[0] = 0`, `levels` nonincreasing in `(0, 1]`.
    PiecewiseConstant { breaks: Vec<f64>, levels: Vec<f64> },
}

impl TailFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            TailFn::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::spec(format!("exponential tail rate must be positive, got {rate}")));
                }
            }
            TailFn::PiecewiseConstant { breaks, levels } => {
                if breaks.len() != levels.len() + 1 || levels.is_empty() {
                    return Err(Error::spec("piecewise tail needs len(breaks) = len(levels) + 1 >= 2"));
                }
                if breaks[0] != 0.0 {
                    return Err(Error::spec("piecewise tail must start at 0"));
                }
                if breaks.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                    return Err(Error::spec("piecewise tail breaks must be finite and increasing"));
                }
                if levels.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
                    return Err(Error::spec("piecewise tail levels must lie in (0, 1]"));
                }
                if levels.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::spec("piecewise tail levels must be nonincreasing"));
                }
            }
        }
        Ok(())
    }

    /// `Gbar(y)`.
    pub fn value(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 1.0;
        }
        match self {
            TailFn::Exponential { rate } => (-rate * y).exp(),
            TailFn::PiecewiseConstant { breaks, levels } => {
                let k = breaks.partition_point(|b| *b <= y);
                if k == 0 || k > levels.len() {
                    0.0
                } else {
                    levels[k - 1]
                }
            }
        }
    }

    /// Right end of the support (`inf` for unbounded tails).
    pub fn support_end(&self) -> f64 {
        match self {
            TailFn::Exponential { .. } => f64::INFINITY,
            TailFn::PiecewiseConstant { breaks, .. } => *breaks.last().unwrap(),
        }
    }

    /// Atoms `(position, mass)` of the variable `S` with `P[S > y] = Gbar(y)`
    /// for piecewise tails.
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            TailFn::Exponential { .. } => None,
            TailFn::PiecewiseConstant { breaks, levels } => {
                let mut out = Vec::with_capacity(levels.len() + 1);
                if levels[0] < 1.0 {
                    out.push((0.0, 1.0 - levels[0]));
                }
                for k in 0..levels.len() {
                    let next = levels.get(k + 1).copied().unwrap_or(0.0);
                    let mass = levels[k] - next;
                    if mass > 0.0 {
                        out.push((breaks[k + 1], mass));
                    }
                }
                Some(out)
            }
        }
    }

    /// `int_0^inf Gbar(y) dy`, the mean of `S`.
    pub fn integral(&self) -> f64 {
        match self {
            TailFn::Exponential { rate } => 1.0 / rate,
            TailFn::PiecewiseConstant { breaks, levels } => levels
                .iter()
                .enumerate()
                .map(|(k, g)| g * (breaks[k + 1] - breaks[k]))
                .sum(),
        }
    }

    /// `E[exp(a S)]` for the variable with tail `Gbar`.
    pub fn service_mgf(&self, a: f64) -> Option<f64> {
        match self {
            TailFn::Exponential { rate } => (a < *rate).then(|| rate / (rate - a)),
            TailFn::PiecewiseConstant { .. } => Some(
                self.atoms()
                    .unwrap()
                    .iter()
                    .map(|(x, m)| m * (a * x).exp())
                    .sum(),
            ),
        }
    }

    /// `int_0^inf exp(a y) Gbar(y) dy` in closed form.
    pub fn exp_integral(&self, a: f64) -> Option<f64> {
        match self {
            TailFn::Exponential { rate } => (a < *rate).then(|| 1.0 / (rate - a)),
            TailFn::PiecewiseConstant { breaks, levels } => Some(
                levels
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        let (lo, hi) = (breaks[k], breaks[k + 1]);
                        if a == 0.0 {
                            g * (hi - lo)
                        } else {
                            g * ((a * hi).exp() - (a * lo).exp()) / a
                        }
                    })
                    .sum(),
            ),
        }
    }

    fn service_moments(&self) -> (f64, f64) {
        match self {
            TailFn::Exponential { rate } => (1.0 / rate, 1.0 / (rate * rate)),
            TailFn::PiecewiseConstant { .. } => {
                let atoms = self.atoms().unwrap();
                let m: f64 = atoms.iter().map(|(x, p)| x * p).sum();
                let v: f64 = atoms.iter().map(|(x, p)| (x - m).powi(2) * p).sum();
                (m, v)
            }
        }
    }

    fn equilibrium_moments(&self) -> (f64, f64) {
        match self {
            TailFn::Exponential { rate } => (1.0 / rate, 1.0 / (rate * rate)),
            TailFn::PiecewiseConstant { breaks, levels } => {
                let total = self.integral();
                let (mut m1, mut m2) = (0.0, 0.0);
                for (k, g) in levels.iter().enumerate() {
                    let (lo, hi) = (breaks[k], breaks[k + 1]);
                    m1 += g * (hi * hi - lo * lo) / 2.0;
                    m2 += g * (hi.powi(3) - lo.powi(3)) / 3.0;
                }
                let mean = m1 / total;
                (mean, m2 / total - mean * mean)
            }
        }
    }

    fn sample_service<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TailFn::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            TailFn::PiecewiseConstant { .. } => {
                let atoms = self.atoms().unwrap();
                let mut u: f64 = rng.random();
                for (x, p) in &atoms {
                    if u < *p {
                        return *x;
                    }
                    u -= p;
                }
                atoms.last().unwrap().0
            }
        }
    }

    fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TailFn::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            TailFn::PiecewiseConstant { breaks, levels } => {
                let total = self.integral();
                let mut u = rng.random::<f64>() * total;
                for (k, g) in levels.iter().enumerate() {
                    let w = g * (breaks[k + 1] - breaks[k]);
                    if u < w {
                        return breaks[k] + u / g;
                    }
                    u -= w;
                }
                *breaks.last().unwrap()
            }
        }
    }
}

/// Law of `X = log J` for continuous i.i.d. environments.
#[derive(Debug, Clone, PartialEq)]
pub enum LogLaw {
    /// `X ~ Normal(mean, sd^2)`, i.e. lognormal `J`.
    Normal { mean: f64, sd: f64 },
    /// `X = S - T` with `P[S > y] = Gbar(y)` and `T ~ Exp(arrival_rate)`:
    /// the GI/M/1-style increment of a Lindley recursion (service minus
    /// interarrival).
    Lindley { service: TailFn, arrival_rate: f64 },
    /// `X >= 0` with density `Gbar(y) / int Gbar`.
    Equilibrium(TailFn),
}

impl LogLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            LogLaw::Normal { mean, sd } => {
                if !mean.is_finite() || !(sd.is_finite() && *sd > 0.0) {
                    return Err(Error::spec("normal log-law needs finite mean and positive sd"));
                }
            }
            LogLaw::Lindley {
                service,
                arrival_rate,
            } => {
                service.validate()?;
                if !(arrival_rate.is_finite() && *arrival_rate > 0.0) {
                    return Err(Error::spec("arrival rate must be positive"));
                }
            }
            LogLaw::Equilibrium(g) => g.validate()?,
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LogLaw::Normal { mean, sd } => Normal::new(*mean, *sd).unwrap().sample(rng),
            LogLaw::Lindley {
                service,
                arrival_rate,
            } => {
                let s = service.sample_service(rng);
                let t = Exp::new(*arrival_rate).unwrap().sample(rng);
                s - t
            }
            LogLaw::Equilibrium(g) => g.sample_equilibrium(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LogLaw::Normal { mean, .. } => *mean,
            LogLaw::Lindley {
                service,
                arrival_rate,
            } => service.service_moments().0 - 1.0 / arrival_rate,
            LogLaw::Equilibrium(g) => g.equilibrium_moments().0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            LogLaw::Normal { sd, .. } => sd * sd,
            LogLaw::Lindley {
                service,
                arrival_rate,
            } => service.service_moments().1 + 1.0 / (arrival_rate * arrival_rate),
            LogLaw::Equilibrium(g) => g.equilibrium_moments().1,
        }
    }

    /// `E[exp(a X)] = E[J^a]`, `None` where it diverges.
    pub fn mgf(&self, a: f64) -> Option<f64> {
        match self {
            LogLaw::Normal { mean, sd } => Some((a * mean + 0.5 * sd * sd * a * a).exp()),
            LogLaw::Lindley {
                service,
                arrival_rate,
            } => {
                if a <= -arrival_rate {
                    return None;
                }
                service
                    .service_mgf(a)
                    .map(|m| m * arrival_rate / (arrival_rate + a))
            }
            LogLaw::Equilibrium(g) => g.exp_integral(a).map(|v| v / g.integral()),
        }
    }

    /// Largest `a` for which [`mgf`](Self::mgf) may be finite (exclusive).
    pub fn mgf_upper_limit(&self) -> f64 {
        match self {
            LogLaw::Normal { .. } => f64::INFINITY,
            LogLaw::Lindley { service, .. } | LogLaw::Equilibrium(service) => match service {
                TailFn::Exponential { rate } => *rate,
                TailFn::PiecewiseConstant { .. } => f64::INFINITY,
            },
        }
    }

    /// The exponentially tilted law `exp(a x) P[X in dx] / E[exp(a X)]`,
    /// when it stays inside the family.
    pub fn tilted(&self, a: f64) -> Option<LogLaw> {
        match self {
            LogLaw::Normal { mean, sd } => Some(LogLaw::Normal {
                mean: mean + sd * sd * a,
                sd: *sd,
            }),
            LogLaw::Lindley {
                service: TailFn::Exponential { rate },
                arrival_rate,
            } if a < *rate && a > -arrival_rate => Some(LogLaw::Lindley {
                service: TailFn::Exponential { rate: rate - a },
                arrival_rate: arrival_rate + a,
            }),
            LogLaw::Equilibrium(TailFn::Exponential { rate }) if a < *rate => {
                Some(LogLaw::Equilibrium(TailFn::Exponential { rate: rate - a }))
            }
            _ => None,
        }
    }

    /// Whether `X` can be strictly positive.
    pub fn can_ascend(&self) -> bool {
        match self {
            LogLaw::Normal { .. } | LogLaw::Equilibrium(_) => true,
            LogLaw::Lindley { service, .. } => service.support_end() > 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulatorKind {
    IidDiscrete,
    FiniteMarkov,
    IidContinuous,
}

#[derive(Debug, Clone)]
enum Kind {
    IidDiscrete {
        values: Vec<f64>,
        probs: Vec<f64>,
        sampler: WeightedIndex<f64>,
    },
    FiniteMarkov {
        values: Vec<f64>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
        stationary: Vec<f64>,
        rows: Vec<WeightedIndex<f64>>,
        init_sampler: WeightedIndex<f64>,
    },
    IidContinuous(LogLaw),
}

/// The law of the environment `J_n`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModulatorSpec {
    kind: Kind,
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::spec(format!("{what}: empty probability vector")));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::spec(format!("{what}: entries must be nonnegative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::spec(format!("{what}: entries sum to {s}, not 1")));
    }
    Ok(())
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::spec("modulator needs at least one state"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::spec(format!("modulator values must be strictly positive, got {v}")));
    }
    Ok(())
}

fn weighted(p: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(p.iter().copied()).map_err(|e| Error::spec(format!("weights: {e}")))
}

/// Strong connectivity of the support graph of `m`: every state reaches
/// state 0 and is reached from it.
pub fn is_irreducible(m: &[Vec<f64>]) -> bool {
    let k = m.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let edge = if forward { m[i][j] > 0.0 } else { m[j][i] > 0.0 };
                if edge && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Stationary vector of an irreducible stochastic matrix, by power iteration
/// on the lazy chain `(I + P) / 2` (aperiodic, same stationary law).
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..10_000_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..k {
            let half = 0.5 * pi[i];
            next[i] += half;
            for j in 0..k {
                next[j] += half * p[i][j];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

impl ModulatorSpec {
    /// I.i.d. environment over finitely many states.
    pub fn iid(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        if values.len() != probs.len() {
            return Err(Error::spec("values and probs differ in length"));
        }
        check_prob_vector(&probs, "iid probs")?;
        let sampler = weighted(&probs)?;
        Ok(ModulatorSpec {
            kind: Kind::IidDiscrete {
                values,
                probs,
                sampler,
            },
        })
    }

    /// Finite irreducible Markov environment. `initial = None` starts from
    /// the stationary distribution.
    pub fn markov(values: Vec<f64>, transition: Vec<Vec<f64>>, initial: Option<Vec<f64>>) -> Result<Self> {
        check_values(&values)?;
        let k = values.len();
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(Error::spec(format!("transition matrix must be {k}x{k}")));
        }
        for (i, row) in transition.iter().enumerate() {
            check_prob_vector(row, &format!("transition row {i}"))?;
        }
        if !is_irreducible(&transition) {
            return Err(Error::spec("transition matrix is not irreducible"));
        }
        let stationary = stationary_distribution(&transition);
        let initial = match initial {
            Some(v) => {
                if v.len() != k {
                    return Err(Error::spec("initial distribution has wrong length"));
                }
                check_prob_vector(&v, "initial distribution")?;
                v
            }
            None => stationary.clone(),
        };
        let rows = transition.iter().map(|r| weighted(r)).collect::<Result<Vec<_>>>()?;
        let init_sampler = weighted(&initial)?;
        Ok(ModulatorSpec {
            kind: Kind::FiniteMarkov {
                values,
                transition,
                initial,
                stationary,
                rows,
                init_sampler,
            },
        })
    }

    /// Two-state Markov environment with switching probabilities `p01`
    /// (state 0 to 1) and `p10`.
    pub fn two_state_markov(values: [f64; 2], p01: f64, p10: f64) -> Result<Self> {
        Self::markov(
            values.to_vec(),
            vec![vec![1.0 - p01, p01], vec![p10, 1.0 - p10]],
            None,
        )
    }

    pub fn continuous(law: LogLaw) -> Result<Self> {
        law.validate()?;
        Ok(ModulatorSpec {
            kind: Kind::IidContinuous(law),
        })
    }

    /// A one-state environment `J = value`.
    pub fn constant(value: f64) -> Result<Self> {
        Self::iid(vec![value], vec![1.0])
    }

    pub fn kind(&self) -> ModulatorKind {
        match self.kind {
            Kind::IidDiscrete { .. } => ModulatorKind::IidDiscrete,
            Kind::FiniteMarkov { .. } => ModulatorKind::FiniteMarkov,
            Kind::IidContinuous(_) => ModulatorKind::IidContinuous,
        }
    }

    pub fn is_iid(&self) -> bool {
        self.kind() != ModulatorKind::FiniteMarkov
    }

    /// Number of states (1 for continuous laws).
    pub fn n_states(&self) -> usize {
        match &self.kind {
            Kind::IidDiscrete { values, .. } | Kind::FiniteMarkov { values, .. } => values.len(),
            Kind::IidContinuous(_) => 1,
        }
    }

    /// Per-state values; empty for continuous laws.
    pub fn values(&self) -> &[f64] {
        match &self.kind {
            Kind::IidDiscrete { values, .. } | Kind::FiniteMarkov { values, .. } => values,
            Kind::IidContinuous(_) => &[],
        }
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::IidDiscrete { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn transition(&self) -> Option<&[Vec<f64>]> {
        match &self.kind {
            Kind::FiniteMarkov { transition, .. } => Some(transition),
            _ => None,
        }
    }

    pub fn initial(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::FiniteMarkov { initial, .. } => Some(initial),
            _ => None,
        }
    }

    pub fn log_law(&self) -> Option<&LogLaw> {
        match &self.kind {
            Kind::IidContinuous(l) => Some(l),
            _ => None,
        }
    }

    /// Stationary state probabilities (`probs` for i.i.d. kinds).
    pub fn stationary(&self) -> Vec<f64> {
        match &self.kind {
            Kind::IidDiscrete { probs, .. } => probs.clone(),
            Kind::FiniteMarkov { stationary, .. } => stationary.clone(),
            Kind::IidContinuous(_) => vec![1.0],
        }
    }

    /// Stationary mean of `log v(J)` for per-state values `v`.
    pub fn mean_log_of(&self, v: &[f64]) -> f64 {
        self.stationary()
            .iter()
            .zip(v)
            .map(|(p, x)| if *p > 0.0 { p * x.ln() } else { 0.0 })
            .sum()
    }

    /// Stationary drift `E[log J]`.
    pub fn mean_log(&self) -> f64 {
        match &self.kind {
            Kind::IidContinuous(l) => l.mean(),
            _ => self.mean_log_of(self.values()),
        }
    }

    /// Variance of `log J` under the stationary marginal.
    pub fn var_log(&self) -> f64 {
        match &self.kind {
            Kind::IidContinuous(l) => l.variance(),
            _ => {
                let m = self.mean_log();
                self.stationary()
                    .iter()
                    .zip(self.values())
                    .map(|(p, x)| p * (x.ln() - m).powi(2))
                    .sum()
            }
        }
    }

    /// The time reversal of a Markov environment (`pi_j P(j,i) / pi_i`),
    /// started stationary; i.i.d. specs are their own reversal.
    pub fn reversed(&self) -> Result<ModulatorSpec> {
        match &self.kind {
            Kind::FiniteMarkov {
                values,
                transition,
                stationary,
                ..
            } => {
                let k = values.len();
                let mut rev = vec![vec![0.0; k]; k];
                for i in 0..k {
                    for j in 0..k {
                        rev[i][j] = stationary[j] * transition[j][i] / stationary[i];
                    }
                    let s: f64 = rev[i].iter().sum();
                    rev[i].iter_mut().for_each(|x| *x /= s);
                }
                ModulatorSpec::markov(values.clone(), rev, Some(stationary.clone()))
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn sampler(&self) -> ModulatorSampler<'_> {
        ModulatorSampler {
            spec: self,
            current: None,
        }
    }
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub state: usize,
    pub log_value: f64,
}

/// Sequential sampler over an environment path. Markov paths start from a
/// draw of the spec's initial distribution.
#[derive(Debug, Clone)]
pub struct ModulatorSampler<'a> {
    spec: &'a ModulatorSpec,
    current: Option<usize>,
}

impl ModulatorSampler<'_> {
    pub fn next_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvStep {
        match &self.spec.kind {
            Kind::IidDiscrete { values, sampler, .. } => {
                let s = if values.len() == 1 { 0 } else { sampler.sample(rng) };
                EnvStep {
                    state: s,
                    log_value: values[s].ln(),
                }
            }
            Kind::FiniteMarkov {
                values,
                rows,
                init_sampler,
                ..
            } => {
                let s = match self.current {
                    None => init_sampler.sample(rng),
                    Some(c) => rows[c].sample(rng),
                };
                self.current = Some(s);
                EnvStep {
                    state: s,
                    log_value: values[s].ln(),
                }
            }
            Kind::IidContinuous(law) => EnvStep {
                state: 0,
                log_value: law.sample(rng),
            },
        }
    }

    pub fn next_log<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.next_step(rng).log_value
    }
}

/// A state path of length `horizon`.
pub fn sample_state_path<R: Rng + ?Sized>(spec: &ModulatorSpec, horizon: usize, rng: &mut R) -> Result<Vec<usize>> {
    if horizon == 0 {
        return Err(Error::spec("horizon must be at least 1"));
    }
    let mut s = spec.sampler();
    Ok((0..horizon).map(|_| s.next_step(rng).state).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn one_state_path_is_constant() {
        let spec = ModulatorSpec::iid(vec![3.0], vec![1.0]).unwrap();
        let path = sample_state_path(&spec, 5, &mut RngStream::new(1, 0).rng()).unwrap();
        assert_eq!(path, vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn zero_horizon_rejected() {
        let spec = ModulatorSpec::constant(0.5).unwrap();
        assert!(sample_state_path(&spec, 0, &mut RngStream::new(1, 0).rng()).is_err());
    }

    #[test]
    fn bernoulli_frequency() {
        let spec = ModulatorSpec::iid(vec![1.0, 2.0], vec![0.4, 0.6]).unwrap();
        let path = sample_state_path(&spec, 1_000_000, &mut RngStream::new(2, 0).rng()).unwrap();
        let f0 = path.iter().filter(|s| **s == 0).count() as f64 / 1e6;
        assert!((f0 - 0.4).abs() < 0.005, "f0 = {f0}");
    }

    #[test]
    fn two_state_markov_occupation() {
        // pi_1 = p21 / (p12 + p21) with p12 = 1/5000, p21 = 1/10.
        let spec = ModulatorSpec::two_state_markov([1.0, 2.0], 1.0 / 5000.0, 0.1).unwrap();
        let expect = 0.1 / (0.1 + 1.0 / 5000.0);
        assert!((spec.stationary()[0] - expect).abs() < 1e-12);
        let path = sample_state_path(&spec, 1_000_000, &mut RngStream::new(3, 0).rng()).unwrap();
        let f = path.iter().filter(|s| **s == 0).count() as f64 / 1e6;
        // 0.1 / 0.1002 = 0.998004
        assert!((f - 0.998_004).abs() < 0.002, "f = {f}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ModulatorSpec::iid(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(ModulatorSpec::iid(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(ModulatorSpec::iid(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        // reducible: state 1 absorbing
        assert!(ModulatorSpec::markov(vec![1.0, 2.0], vec![vec![0.5, 0.5], vec![0.0, 1.0]], None).is_err());
        // non-stochastic row
        assert!(ModulatorSpec::markov(vec![1.0, 2.0], vec![vec![0.5, 0.6], vec![0.5, 0.5]], None).is_err());
        assert!(ModulatorSpec::continuous(LogLaw::Normal { mean: 0.0, sd: 0.0 }).is_err());
    }

    #[test]
    fn periodic_chain_stationary() {
        let spec = ModulatorSpec::markov(vec![1.0, 2.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        let pi = spec.stationary();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reversal_preserves_stationary_law() {
        let spec = ModulatorSpec::markov(
            vec![1.0, 2.0, 3.0],
            vec![vec![0.1, 0.9, 0.0], vec![0.0, 0.2, 0.8], vec![0.7, 0.0, 0.3]],
            None,
        )
        .unwrap();
        let rev = spec.reversed().unwrap();
        for (a, b) in spec.stationary().iter().zip(rev.stationary()) {
            assert!((a - b).abs() < 1e-12);
        }
        // detailed flux balance: pi_i P(i,j) = pi_j R(j,i)
        let (p, r, pi) = (spec.transition().unwrap(), rev.transition().unwrap(), spec.stationary());
        for i in 0..3 {
            for j in 0..3 {
                assert!((pi[i] * p[i][j] - pi[j] * r[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lindley_moments_and_mgf() {
        let law = LogLaw::Lindley {
            service: TailFn::Exponential { rate: 2.0 },
            arrival_rate: 1.0,
        };
        assert!((law.mean() + 0.5).abs() < 1e-15);
        assert!((law.variance() - 1.25).abs() < 1e-15);
        assert!((law.mgf(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(law.mgf(2.0).is_none());
        let mut rng = RngStream::new(5, 0).rng();
        let n = 400_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m + 0.5).abs() < 4.0 * (1.25f64 / n as f64).sqrt());
    }

    #[test]
    fn piecewise_tail_basics() {
        let g = TailFn::PiecewiseConstant {
            breaks: vec![0.0, 1.0, 3.0],
            levels: vec![0.8, 0.5],
        };
        g.validate().unwrap();
        assert_eq!(g.value(0.5), 0.8);
        assert_eq!(g.value(1.0), 0.5);
        assert_eq!(g.value(3.0), 0.0);
        assert!((g.integral() - 1.8).abs() < 1e-15);
        // service mean equals the tail integral
        let (m, _) = g.service_moments();
        assert!((m - 1.8).abs() < 1e-12);
        // closed-form exp integral at 0 equals the plain integral
        assert!((g.exp_integral(0.0).unwrap() - 1.8).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_sampler_mean() {
        let g = TailFn::PiecewiseConstant {
            breaks: vec![0.0, 1.0, 3.0],
            levels: vec![0.8, 0.5],
        };
        let law = LogLaw::Equilibrium(g);
        let mut rng = RngStream::new(6, 0).rng();
        let n = 400_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd = law.variance().sqrt();
        assert!((m - law.mean()).abs() < 4.0 * sd / (n as f64).sqrt());
    }
}
