//! The recursions: branching (MBP/RMBP), multiplicative (RMP), the Lindley
//! queue, the Loynes backward supremum, cycle maxima, randomly stopped
//! products and populations, the absorbing-barrier aggregate, and
//! two-barrier truncation.
//!
//! Every replication owns its generator. Bulk samplers derive one child
//! stream per replication (or per chain) from a parent [`RngStream`], run
//! them through rayon and collect in index order, so results do not depend
//! on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modulator::{ModulatorKind, ModulatorSpec};
use crate::rng::{RngStream, SimRng};

pub mod absorbing;
pub mod branching;
pub mod multiplicative;
pub mod stopped;

pub use absorbing::{run_absorbing_aggregate, AbsorbingSystem, AbsorbingSystemSpec, AggregateDraw, AggregatePath};
pub use branching::{coupled_rmbp_paths, rmbp_path_samples, rmbp_samples, rmbp_trajectory, run_mbp, run_rmbp, run_truncated_rmbp};
pub use multiplicative::{
    backward_sup, backward_sup_samples, cycle_max_samples, queue_trajectory, rmp_path_samples, rmp_samples,
    rmp_trajectory, run_cycle_max, run_queue, run_rmp, run_truncated_rmp, BackwardSampler, CycleMax, CycleOptions,
};
pub use stopped::{
    run_stopped_branching, run_stopped_product, stopped_branching_samples, stopped_product_samples, StopSpec,
};

/// Residual-supremum target used for drift-based horizons.
pub const HORIZON_EPS: f64 = 1e-3;

/// Partial sums within this distance of zero count as zero, so lattice
/// walks are not misclassified by rounding.
pub const ZERO_SNAP: f64 = 1e-9;

/// Drift magnitude below which cycle simulation refuses by default.
pub const NEAR_CRITICAL_DRIFT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BurnIn {
    /// Drift-based: [`stationary_horizon`] steps from the barrier for
    /// i.i.d. environments, `ceil(50 / |m|)` for Markov environments.
    Auto,
    Fixed(u64),
}

/// Barrier and horizon settings for a reflected run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Lower reflecting barrier `l`. Integer valued for branching runs.
    pub barrier: f64,
    /// Optional upper barrier `u > l` (truncation).
    pub upper_barrier: Option<f64>,
    /// Length of recorded trajectories.
    pub horizon: u64,
    pub burn_in: BurnIn,
    /// Starting value, at least `barrier`; defaults to the barrier.
    pub initial: Option<f64>,
    /// Run even when the stationarity hypothesis fails (needs a fixed
    /// burn-in).
    pub force: bool,
}

impl PathConfig {
    pub fn new(barrier: f64) -> Self {
        PathConfig {
            barrier,
            upper_barrier: None,
            horizon: 1000,
            burn_in: BurnIn::Auto,
            initial: None,
            force: false,
        }
    }

    pub fn with_upper(mut self, u: f64) -> Self {
        self.upper_barrier = Some(u);
        self
    }

    pub fn with_horizon(mut self, h: u64) -> Self {
        self.horizon = h;
        self
    }

    pub fn with_burn_in(mut self, b: BurnIn) -> Self {
        self.burn_in = b;
        self
    }

    pub fn with_initial(mut self, x: f64) -> Self {
        self.initial = Some(x);
        self
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    pub fn initial_value(&self) -> f64 {
        self.initial.unwrap_or(self.barrier)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.barrier.is_finite() && self.barrier > 0.0) {
            return Err(Error::spec(format!("barrier must be positive, got {}", self.barrier)));
        }
        if let Some(u) = self.upper_barrier {
            if !(u >= self.barrier) {
                return Err(Error::spec(format!("upper barrier {u} below lower barrier {}", self.barrier)));
            }
        }
        if let Some(x) = self.initial {
            if !(x >= self.barrier) || !x.is_finite() {
                return Err(Error::spec(format!("initial value {x} below barrier {}", self.barrier)));
            }
            if self.upper_barrier.is_some_and(|u| x > u) {
                return Err(Error::spec("initial value above upper barrier"));
            }
        }
        Ok(())
    }

    pub(crate) fn validate_integer(&self) -> Result<()> {
        self.validate()?;
        let int = |x: f64| x.fract() == 0.0 && x >= 1.0 && x < 1.8e19;
        if !int(self.barrier) {
            return Err(Error::spec(format!("branching barrier must be an integer >= 1, got {}", self.barrier)));
        }
        if self.upper_barrier.is_some_and(|u| !int(u)) || self.initial.is_some_and(|x| !int(x)) {
            return Err(Error::spec("branching barriers and initial value must be integers"));
        }
        Ok(())
    }
}

/// `ceil((40 - ln eps) / |drift|)`.
pub fn drift_horizon(drift: f64, eps: f64) -> u64 {
    ((40.0 - eps.ln()) / drift.abs()).ceil() as u64
}

/// Smallest `n` with `n |m| - 2 sigma sqrt(n) >= L`, where the depth
/// `L = (40 - ln eps) max(1, sigma^2 / (2|m|))` grows like the inverse of
/// the Gaussian-approximate tail exponent `2|m| / sigma^2`. Reduces to
/// [`drift_horizon`] when `var = 0`.
pub fn stationary_horizon(drift: f64, var: f64, eps: f64) -> u64 {
    let m = drift.abs();
    let sd = var.max(0.0).sqrt();
    let depth = (40.0 - eps.ln()) * (var / (2.0 * m)).max(1.0);
    let root = (2.0 * sd + (4.0 * var + 4.0 * m * depth).sqrt()) / (2.0 * m);
    ((root * root).ceil() as u64).max(drift_horizon(drift, eps))
}

/// Resolve the burn-in length for a reflected run with the given drift.
/// Refuses non-negative drift unless `force` is set with a fixed burn-in.
pub(crate) fn resolve_burn_in(cfg: &PathConfig, modulator: &ModulatorSpec, drift: f64, var: f64) -> Result<u64> {
    if drift >= 0.0 && !cfg.force {
        return Err(Error::NonNegativeDrift { drift });
    }
    match cfg.burn_in {
        BurnIn::Fixed(n) => Ok(n),
        BurnIn::Auto if drift >= 0.0 => Err(Error::spec("forced runs with non-negative drift need a fixed burn-in")),
        BurnIn::Auto => Ok(match modulator.kind() {
            ModulatorKind::FiniteMarkov => (50.0 / drift.abs()).ceil() as u64,
            _ => stationary_horizon(drift, var, HORIZON_EPS),
        }),
    }
}

/// Burn-in for a two-barrier run: drift-based when the drift is negative,
/// otherwise diffusive, `50 span^2 / sigma^2 + 50` with `span = ln(u/l)`.
pub(crate) fn truncated_burn_in(cfg: &PathConfig, modulator: &ModulatorSpec, drift: f64, var: f64, span: f64) -> u64 {
    if let BurnIn::Fixed(n) = cfg.burn_in {
        return n;
    }
    if drift < 0.0 {
        return match modulator.kind() {
            ModulatorKind::FiniteMarkov => (50.0 / drift.abs()).ceil() as u64,
            _ => stationary_horizon(drift, var, HORIZON_EPS),
        };
    }
    let span = span.max(1.0);
    (50.0 * span * span / var.max(1e-12) + 50.0).ceil() as u64
}

/// A simulated path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySample {
    /// `Z_n`, `Lambda_n`, `log M_n` or `Q_n`, starting with the initial value.
    pub values: Vec<f64>,
    pub log_domain: bool,
    /// Indices at which the path sat on the lower barrier (inclusive).
    pub regeneration_indices: Vec<usize>,
    /// Step at which an unreflected branching path hit zero.
    pub absorbed_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Rmp,
    Queue,
    Rmbp,
    BackwardSup,
    CycleMax,
    StoppedProduct,
    StoppedBranching,
    AbsorbingAggregate,
    Truncated,
}

/// Provenance of a sample set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleMeta {
    pub description: String,
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SampleMeta {
    pub fn new(description: impl Into<String>, stream: RngStream) -> Self {
        SampleMeta {
            description: description.into(),
            master_seed: stream.master_seed,
            stream_index: stream.stream_index,
        }
    }
}

/// A collection of positive draws, stored as natural logs.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSampleSet {
    pub logs: Vec<f64>,
    pub kind: SampleKind,
    pub meta: SampleMeta,
}

impl TailSampleSet {
    pub fn from_logs(logs: Vec<f64>, kind: SampleKind, meta: SampleMeta) -> Self {
        TailSampleSet { logs, kind, meta }
    }

    /// From positive values; zeros and negatives are rejected.
    pub fn from_values(values: &[f64], kind: SampleKind, meta: SampleMeta) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::spec(format!("tail samples must be positive, got {v}")));
        }
        Ok(TailSampleSet {
            logs: values.iter().map(|v| v.ln()).collect(),
            kind,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.logs.iter().map(|l| l.exp())
    }

    /// Logs in ascending order.
    pub fn sorted_logs(&self) -> Vec<f64> {
        let mut v = self.logs.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Samples divided by `c` (e.g. `Lambda / l`).
    pub fn scaled(&self, c: f64) -> TailSampleSet {
        let lc = c.ln();
        TailSampleSet {
            logs: self.logs.iter().map(|l| l - lc).collect(),
            kind: self.kind,
            meta: self.meta.clone(),
        }
    }

    /// Concatenate sets in the given (index) order.
    pub fn merge(parts: Vec<TailSampleSet>) -> Option<TailSampleSet> {
        let mut it = parts.into_iter();
        let mut first = it.next()?;
        for p in it {
            first.logs.extend(p.logs);
        }
        Some(first)
    }
}

/// Run `n` independent replications, replication `i` on `stream.child(i)`.
/// Output is in index order; the lowest-index error wins.
pub fn replicate<T, F>(n: usize, stream: RngStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync,
{
    let out: Vec<Result<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            f(i, &mut rng)
        })
        .collect();
    out.into_iter().collect()
}

/// Split `n` recorded samples over `chains` chains (first chains take the
/// remainder).
pub(crate) fn chain_lengths(n: usize, chains: usize) -> Vec<usize> {
    let chains = chains.max(1);
    (0..chains)
        .map(|c| n / chains + usize::from(c < n % chains))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_horizon_formula() {
        // (40 + ln 1000) / 0.5 = 93.8 -> 94
        assert_eq!(drift_horizon(-0.5, 1e-3), 94);
        assert_eq!(stationary_horizon(-0.5, 0.0, 1e-3), 94);
        let n = stationary_horizon(-0.01, 1.0, 1e-3) as f64;
        let depth = (40.0 - 1e-3f64.ln()) * 50.0;
        assert!(0.01 * n - 2.0 * n.sqrt() >= depth - 1e-9);
        assert!(0.01 * (n - 1.0) - 2.0 * (n - 1.0).sqrt() < depth);
    }

    #[test]
    fn chain_split_covers_all() {
        let l = chain_lengths(10, 3);
        assert_eq!(l, vec![4, 3, 3]);
        assert_eq!(chain_lengths(7, 1), vec![7]);
    }

    #[test]
    fn replicate_is_thread_count_independent() {
        use rand::Rng;
        let s = RngStream::new(11, 0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| replicate(257, s, |_, r| Ok(r.random::<u64>())).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn config_validation() {
        assert!(PathConfig::new(0.0).validate().is_err());
        assert!(PathConfig::new(2.0).with_upper(1.0).validate().is_err());
        assert!(PathConfig::new(2.0).with_initial(1.0).validate().is_err());
        assert!(PathConfig::new(2.5).validate_integer().is_err());
        assert!(PathConfig::new(3.0).with_upper(3.0).validate_integer().is_ok());
    }
}
