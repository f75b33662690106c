//! Running a configuration: sampling, tail analysis and artifacts.
//!
//! Barrier `k` of a run draws from `RngStream::new(seed, k)`; ladder
//! statistics use stream `LADDER_STREAM`. Draws are reduced in replication
//! order, so the artifacts depend only on the configuration and the seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rmbp_core::analytics::{
    cycle_max_constant, estimate_ladder_stats, goldie_constant_rmp, ladder_rmp_samples, mbp_implicit_constant,
    mg1_stop_constant, solve_alpha_at_level, solve_alpha_star, PsiFunction,
};
use rmbp_core::engine::{
    backward_sup_samples, cycle_max_samples, rmbp_path_samples, rmbp_samples, rmp_path_samples, rmp_samples,
    stopped_branching_samples, stopped_product_samples, AbsorbingSystem, AbsorbingSystemSpec, BurnIn, CycleOptions,
    SampleKind, SampleMeta, StopSpec, TailSampleSet,
};
use rmbp_core::tail::{
    ccdf_of_sorted, default_fit_range, double_pareto_fit, hill_sorted, lighter_than_power_probe, loglog_slope,
    CcdfCurve, HillEstimate, LighterProbe, PiecewiseFit, SlopeFit, SortedSample,
};
use rmbp_core::{Error, LogLaw, RngStream};

use crate::config::{ConstantKind, ExperimentConfig, ProcessKind, Sampling, Scale};
use crate::error::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const LADDER_STREAM: u64 = 1 << 32;

/// Lifetimes drawn to calibrate an absorbing system.
const ABSORBING_PILOT: usize = 1000;

/// Grid points of the plateau median.
const PLATEAU_POINTS: usize = 50;

/// Relative Little's-law error accepted for an absorbing run.
pub const LITTLE_TOL: f64 = 0.05;

/// A point estimate with a standard error, or exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// `None` for exact values.
    pub stderr: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: None }
    }

    pub fn with_se(value: f64, stderr: f64) -> Self {
        Estimate {
            value,
            stderr: Some(stderr),
        }
    }

    fn push(&self, key: &str, out: &mut Vec<(String, String)>) {
        out.push((key.to_string(), self.value.to_string()));
        let se = self.stderr.map_or_else(|| "exact".to_string(), |s| s.to_string());
        out.push((format!("{key}_stderr"), se));
    }
}

/// Outcome of a named consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Analysis of the draws at one barrier.
#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub barrier: f64,
    pub n_draws: usize,
    /// Draws equal to zero, left out of the tail analysis.
    pub n_zero: usize,
    /// Positive draws after scaling and powering, sorted.
    pub samples: SortedSample,
    pub curve: CcdfCurve,
    pub fit_window: (f64, f64),
    pub slope: std::result::Result<SlopeFit, String>,
    pub hill: std::result::Result<HillEstimate, String>,
    /// `C` in `P[X > x] ~ C x^-alpha*` for the unscaled draws.
    pub plateau: Option<Estimate>,
    pub probe: Option<LighterProbe>,
    pub piecewise: Option<PiecewiseFit>,
    pub constants: Vec<(ConstantKind, std::result::Result<Estimate, String>)>,
    pub extras: Vec<(String, String)>,
}

impl BarrierResult {
    /// `alpha^ = -slope` of the log-log fit.
    pub fn alpha_hat(&self) -> Option<Estimate> {
        self.slope.as_ref().ok().map(|f| Estimate::with_se(-f.slope, f.stderr))
    }

    pub fn constant(&self, kind: ConstantKind) -> Option<Estimate> {
        self.constants
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, c)| c.as_ref().ok().copied())
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.parse().ok())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub kind: ProcessKind,
    pub preset: Option<String>,
    pub n_replications: usize,
    /// Exponent of the unscaled process.
    pub alpha_star: std::result::Result<Estimate, String>,
    /// Exponent of the analysed variable (`alpha* / power`).
    pub tail_exponent: Option<Estimate>,
    pub barriers: Vec<BarrierResult>,
    pub checks: Vec<Check>,
    pub wall_time: f64,
    pub threads: usize,
}

impl RunSummary {
    pub fn barrier(&self, l: f64) -> Option<&BarrierResult> {
        self.barriers.iter().find(|b| b.barrier == l)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `key=value` lines in a fixed order. Per-barrier keys carry an
    /// `l{barrier}.` prefix when the run has several barriers.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("version", VERSION.to_string());
        put("config_hash", self.config_hash.clone());
        put("seed", self.seed.to_string());
        put("kind", self.kind.name().to_string());
        if let Some(p) = &self.preset {
            put("preset", p.clone());
        }
        put("n_replications", self.n_replications.to_string());
        put("threads", self.threads.to_string());
        put("wall_time_s", format!("{:.3}", self.wall_time));
        match &self.alpha_star {
            Ok(a) => a.push("alpha_star", &mut kv),
            Err(why) => {
                kv.push(("alpha_star".into(), "none".into()));
                kv.push(("alpha_star_note".into(), why.clone()));
            }
        }
        if let (Some(t), Ok(a)) = (&self.tail_exponent, &self.alpha_star) {
            if t.value != a.value {
                t.push("tail_exponent", &mut kv);
            }
        }
        let multi = self.barriers.len() > 1;
        for b in &self.barriers {
            let pre = if multi { format!("l{}.", b.barrier) } else { String::new() };
            let key = |k: &str| format!("{pre}{k}");
            kv.push((key("barrier"), b.barrier.to_string()));
            kv.push((key("n_draws"), b.n_draws.to_string()));
            kv.push((key("n_zero"), b.n_zero.to_string()));
            kv.push((key("fit_lo"), b.fit_window.0.to_string()));
            kv.push((key("fit_hi"), b.fit_window.1.to_string()));
            match &b.slope {
                Ok(f) => {
                    Estimate::with_se(f.slope, f.stderr).push(&key("slope"), &mut kv);
                    b.alpha_hat().unwrap().push(&key("alpha_hat"), &mut kv);
                    kv.push((key("r_squared"), f.r_squared.to_string()));
                    kv.push((key("fit_points"), f.n_points.to_string()));
                }
                Err(e) => kv.push((key("slope"), format!("unavailable: {e}"))),
            }
            match &b.hill {
                Ok(h) => {
                    Estimate::with_se(h.alpha, h.stderr).push(&key("hill_alpha"), &mut kv);
                    kv.push((key("hill_k"), h.k.to_string()));
                }
                Err(e) => kv.push((key("hill_alpha"), format!("unavailable: {e}"))),
            }
            if let Some(p) = &b.plateau {
                p.push(&key("plateau"), &mut kv);
            }
            for (c, v) in &b.constants {
                match v {
                    Ok(e) => e.push(&key(c.name()), &mut kv),
                    Err(why) => kv.push((key(c.name()), format!("unavailable: {why}"))),
                }
            }
            if let Some(p) = &b.probe {
                kv.push((key("lighter_than_power"), p.is_lighter.to_string()));
                let slopes: Vec<String> = p.windows.iter().map(|w| w.slope.to_string()).collect();
                kv.push((key("probe_slopes"), slopes.join(",")));
            }
            if let Some(p) = &b.piecewise {
                kv.push((key("knee"), p.knee.to_string()));
                Estimate::with_se(p.slope_left, p.left.stderr).push(&key("slope_left"), &mut kv);
                Estimate::with_se(p.slope_right, p.right.stderr).push(&key("slope_right"), &mut kv);
                kv.push((key("slope_ratio"), p.slope_ratio().to_string()));
                kv.push((key("double_pareto_degenerate"), p.degenerate.to_string()));
            }
            for (k, v) in &b.extras {
                kv.push((key(k), v.clone()));
            }
        }
        for c in &self.checks {
            kv.push((format!("check.{}", c.name), if c.passed { "pass" } else { "fail" }.to_string()));
            kv.push((format!("check.{}.detail", c.name), c.detail.clone()));
        }
        kv
    }
}

/// Exponent of the configured process, or why there is none.
pub fn alpha_star(cfg: &ExperimentConfig) -> std::result::Result<Estimate, Error> {
    let psi = match (&cfg.offspring, cfg.kind.is_branching()) {
        (Some(o), true) => PsiFunction::for_branching(&cfg.modulator, o)?,
        _ => PsiFunction::for_multiplicative(&cfg.modulator),
    };
    let root = match &cfg.stop {
        Some(StopSpec::Geometric { rho }) => solve_alpha_at_level(&psi, -rho.ln())?,
        Some(StopSpec::FiniteTable { .. }) => return Err(Error::NoPositiveRoot),
        None => solve_alpha_star(&psi)?,
    };
    Ok(Estimate::exact(root.value))
}

fn burn_in_or(cfg: &ExperimentConfig, auto: u64) -> u64 {
    match cfg.path.burn_in {
        BurnIn::Auto => auto,
        BurnIn::Fixed(n) => n,
    }
}

fn absorbing_draws(
    cfg: &ExperimentConfig,
    barrier: u64,
    stream: RngStream,
    extras: &mut Vec<(String, String)>,
) -> Result<Vec<u64>> {
    let spec = AbsorbingSystemSpec {
        arrival_rate: cfg.arrival_rate.unwrap_or(1.0),
        offspring: cfg.offspring.clone().expect("branching config has offspring"),
        modulator: cfg.modulator.clone(),
        barrier,
    };
    let n = cfg.n_replications;
    match cfg.sampling {
        Sampling::Independent => {
            let sys = AbsorbingSystem::new(spec, ABSORBING_PILOT, &mut stream.child(u64::MAX).rng())?;
            let horizon = burn_in_or(cfg, 10 * sys.min_horizon());
            let draws = rmbp_core::engine::replicate(n, stream, |_, rng| Ok(sys.draw(horizon, rng)?.total))?;
            extras.push(("mean_lifetime_pilot".into(), sys.mean_lifetime().to_string()));
            Ok(draws)
        }
        Sampling::Path { thin, chains } => {
            let lengths: Vec<usize> = (0..chains).map(|c| n / chains + usize::from(c < n % chains)).collect();
            let parts = rmbp_core::engine::replicate(chains, stream, |c, rng| {
                let sys = AbsorbingSystem::new(spec.clone(), ABSORBING_PILOT, rng)?;
                let burn = burn_in_or(cfg, 10 * sys.min_horizon());
                sys.path(burn, lengths[c] * thin as usize, rng)
            })?;
            let (mut objects, mut slots, mut life_sum, mut lives) = (0u64, 0usize, 0u64, 0usize);
            let mut totals = Vec::with_capacity(n);
            for p in &parts {
                objects += p.objects.iter().sum::<u64>();
                slots += p.objects.len();
                life_sum += p.lifetimes.iter().sum::<u64>();
                lives += p.lifetimes.len();
                totals.extend(p.totals.iter().step_by(thin as usize));
            }
            let mean_n = objects as f64 / slots.max(1) as f64;
            let mean_p = life_sum as f64 / lives.max(1) as f64;
            let q = cfg.arrival_rate.unwrap_or(1.0);
            let rel = (mean_n - q * mean_p).abs() / (q * mean_p);
            extras.push(("mean_objects".into(), mean_n.to_string()));
            extras.push(("mean_lifetime".into(), mean_p.to_string()));
            extras.push(("completed_lifetimes".into(), lives.to_string()));
            extras.push(("little_rel_err".into(), rel.to_string()));
            Ok(totals)
        }
    }
}

/// Draw the configured samples at one barrier: positive draws as logs,
/// plus the number of zero draws.
fn draw(
    cfg: &ExperimentConfig,
    barrier: f64,
    stream: RngStream,
    extras: &mut Vec<(String, String)>,
) -> Result<(TailSampleSet, usize)> {
    let m = &cfg.modulator;
    let n = cfg.n_replications;
    let path = cfg.path_for(barrier);
    let set = match cfg.kind {
        ProcessKind::Rmp | ProcessKind::Queue => match cfg.sampling {
            Sampling::Independent => rmp_samples(m, &path, n, stream)?,
            Sampling::Path { thin, chains } => rmp_path_samples(m, &path, n, thin, chains, stream)?,
        },
        ProcessKind::Rmbp => {
            let o = cfg.offspring.as_ref().expect("branching config has offspring");
            match cfg.sampling {
                Sampling::Independent => rmbp_samples(m, o, &path, n, stream)?,
                Sampling::Path { thin, chains } => rmbp_path_samples(m, o, &path, n, thin, chains, stream)?,
            }
        }
        ProcessKind::Backward => backward_sup_samples(m, None, n, stream)?,
        ProcessKind::Ladder => ladder_rmp_samples(m, n, stream)?,
        ProcessKind::Cycle => {
            let c = cycle_max_samples(m, &CycleOptions::default(), n, stream)?;
            TailSampleSet::from_logs(
                c.into_iter().map(|c| c.log_max).collect(),
                SampleKind::CycleMax,
                SampleMeta::new("cycle maxima", stream),
            )
        }
        ProcessKind::StoppedProduct => stopped_product_samples(m, cfg.stop.as_ref().unwrap(), n, stream)?,
        ProcessKind::StoppedBranching => stopped_branching_samples(
            m,
            cfg.offspring.as_ref().unwrap(),
            cfg.stop.as_ref().unwrap(),
            cfg.z0,
            n,
            stream,
        )?,
        ProcessKind::Absorbing => {
            let totals = absorbing_draws(cfg, barrier as u64, stream, extras)?;
            let zeros = totals.iter().filter(|z| **z == 0).count();
            let logs = totals.iter().filter(|z| **z > 0).map(|z| (*z as f64).ln()).collect();
            return Ok((
                TailSampleSet::from_logs(logs, SampleKind::AbsorbingAggregate, SampleMeta::new("absorbing system", stream)),
                zeros,
            ));
        }
    };
    if cfg.kind == ProcessKind::Queue {
        // Q = log M; the atom at zero is reported, not analysed.
        let zeros = set.logs.iter().filter(|q| **q <= 0.0).count();
        let logs = set.logs.iter().filter(|q| **q > 0.0).map(|q| q.ln()).collect();
        return Ok((TailSampleSet::from_logs(logs, SampleKind::Queue, set.meta), zeros));
    }
    Ok((set, 0))
}

/// Median over the window of `x^alpha P^[X > x]`, with the binomial
/// standard error at the median point.
pub fn plateau_estimate(s: &SortedSample, alpha: f64, lo: f64, hi: f64) -> Option<Estimate> {
    if !(0.0 < lo && lo < hi) || s.is_empty() {
        return None;
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut pts: Vec<(f64, f64)> = (0..PLATEAU_POINTS)
        .map(|i| {
            let x = (a + (b - a) * i as f64 / (PLATEAU_POINTS - 1) as f64).exp();
            let w = x.powf(alpha);
            (w * s.ccdf(x), w * s.ccdf_se(x))
        })
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let k = pts.len() / 2;
    let (v, se) = (0.5 * (pts[k - 1].0 + pts[k].0), 0.5 * (pts[k - 1].1 + pts[k].1));
    Some(Estimate::with_se(v, se))
}

fn analyse(
    cfg: &ExperimentConfig,
    barrier: f64,
    raw: TailSampleSet,
    n_zero: usize,
    alpha: Option<f64>,
    ladder: &Option<std::result::Result<rmbp_core::analytics::LadderStats, String>>,
    extras: Vec<(String, String)>,
) -> Result<BarrierResult> {
    let a = &cfg.analysis;
    let n_draws = raw.len() + n_zero;
    let mut constants = Vec::new();
    for c in &a.constants {
        let v: Option<std::result::Result<Estimate, String>> = match c {
            ConstantKind::Goldie | ConstantKind::CycleMax => {
                let l = ladder.as_ref().expect("ladder statistics requested");
                Some(match (l, alpha) {
                    (Ok(stats), Some(al)) => {
                        let e = if *c == ConstantKind::Goldie {
                            goldie_constant_rmp(stats, al)
                        } else {
                            cycle_max_constant(stats, al)
                        };
                        // M at barrier l is l times M at barrier 1
                        let f = barrier.powf(al);
                        e.map(|e| Estimate::with_se(e.value * f, e.stderr * f)).map_err(|e| e.to_string())
                    }
                    (Err(e), _) => Err(e.clone()),
                    (_, None) => Err("no exponent".into()),
                })
            }
            ConstantKind::Implicit => Some(match (&cfg.offspring, alpha, cfg.kind) {
                (Some(o), Some(al), ProcessKind::Rmbp) => {
                    mbp_implicit_constant(&raw, &cfg.modulator, o, barrier as u64, al)
                        .map(|c| Estimate::with_se(c.value, c.stderr))
                        .map_err(|e| e.to_string())
                }
                _ => Err("needs an RMBP with a positive exponent".into()),
            }),
            ConstantKind::Mg1Stop => Some(match (cfg.modulator.log_law(), &cfg.stop, alpha) {
                (Some(LogLaw::Equilibrium(g)), Some(StopSpec::Geometric { rho }), Some(al)) => {
                    mg1_stop_constant(g, *rho, al).map(Estimate::exact).map_err(|e| e.to_string())
                }
                _ => Err("needs an equilibrium-law environment and a geometric stop".into()),
            }),
            ConstantKind::Plateau => None,
        };
        if let Some(v) = v {
            constants.push((*c, v));
        }
    }

    let mut set = raw;
    if a.scale == Scale::Barrier {
        set = set.scaled(barrier);
    }
    if a.power != 1.0 {
        for l in &mut set.logs {
            *l *= a.power;
        }
    }
    let probe = lighter_than_power_probe(&set).ok();
    let samples = SortedSample::new(&set);
    drop(set);
    let curve = ccdf_of_sorted(&samples, a.n_grid)?;
    let (lo, hi) = default_fit_range(&samples);
    let fit_window = (a.fit_lo.unwrap_or(lo), a.fit_hi.unwrap_or(hi));
    let slope = loglog_slope(&curve, fit_window.0, fit_window.1).map_err(|e| e.to_string());
    let k = a.hill_k.unwrap_or(samples.len() / 100).max(10);
    let hill = hill_sorted(&samples, k).map_err(|e| e.to_string());
    let scale = if a.scale == Scale::Barrier { barrier } else { 1.0 };
    let plateau = match (alpha, cfg.kind) {
        (_, ProcessKind::Queue) | (None, _) => None,
        (Some(al), _) => plateau_estimate(&samples, al / a.power, fit_window.0, fit_window.1).map(|p| {
            let f = scale.powf(al);
            Estimate::with_se(p.value * f, p.stderr.unwrap_or(0.0) * f)
        }),
    };
    let piecewise = double_pareto_fit(&curve).ok();
    Ok(BarrierResult {
        barrier,
        n_draws,
        n_zero,
        samples,
        curve,
        fit_window,
        slope,
        hill,
        plateau,
        probe,
        piecewise,
        constants,
        extras,
    })
}

/// Run every barrier of the configuration and analyse the draws.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let alpha = alpha_star(cfg).map_err(|e| e.to_string());
    let alpha_v = alpha.as_ref().ok().map(|a| a.value);
    let ladder = cfg
        .analysis
        .constants
        .iter()
        .any(|c| matches!(c, ConstantKind::Goldie | ConstantKind::CycleMax))
        .then(|| {
            estimate_ladder_stats(
                &cfg.modulator,
                cfg.analysis.ladder_cycles,
                RngStream::new(cfg.master_seed, LADDER_STREAM),
            )
            .map_err(|e| e.to_string())
        });
    let mut barriers = Vec::with_capacity(cfg.barriers.len());
    let mut checks = Vec::new();
    for (k, &l) in cfg.barriers.iter().enumerate() {
        let stream = RngStream::new(cfg.master_seed, k as u64);
        let mut extras = Vec::new();
        let (raw, zeros) = draw(cfg, l, stream, &mut extras).map_err(|e| match e {
            HarnessError::Engine(source) => HarnessError::Run { index: k, source },
            other => other,
        })?;
        let r = analyse(cfg, l, raw, zeros, alpha_v, &ladder, extras)
            .map_err(|e| match e {
                HarnessError::Engine(source) => HarnessError::Run { index: k, source },
                other => other,
            })?;
        if let Some(rel) = r.extra("little_rel_err") {
            checks.push(Check::new(
                format!("little_law_l{l}"),
                rel < LITTLE_TOL,
                format!("relative error {rel:.4} (tolerance {LITTLE_TOL})"),
            ));
        }
        if let Some(a) = r.alpha_hat() {
            checks.push(Check::new(
                format!("exponent_sign_l{l}"),
                a.value > 0.0,
                format!("alpha_hat = {} = -slope", a.value),
            ));
        }
        barriers.push(r);
    }
    Ok(RunSummary {
        config_hash: cfg.hash(),
        seed: cfg.master_seed,
        kind: cfg.kind,
        preset: cfg.preset.clone(),
        n_replications: cfg.n_replications,
        tail_exponent: alpha.as_ref().ok().map(|a| Estimate::exact(a.value / cfg.analysis.power)),
        alpha_star: alpha,
        barriers,
        checks,
        wall_time: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}

/// CSV file name for barrier `l` of a run with `n_barriers` barriers.
pub fn ccdf_path(prefix: &str, l: f64, n_barriers: usize) -> PathBuf {
    if n_barriers > 1 {
        PathBuf::from(format!("{prefix}_l{l}_ccdf.csv"))
    } else {
        PathBuf::from(format!("{prefix}_ccdf.csv"))
    }
}

pub fn csv_header(summary: &RunSummary, barrier: f64) -> String {
    format!(
        "config_hash={} seed={} version={VERSION} barrier={barrier}",
        summary.config_hash, summary.seed
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

/// Write one CCDF file per barrier (with the fitted line as `fit`) and
/// `<prefix>_summary.txt`. Returns the written paths.
pub fn write_artifacts(summary: &RunSummary, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for b in &summary.barriers {
        let path = ccdf_path(prefix, b.barrier, summary.barriers.len());
        let fit: Option<Vec<f64>> = b.slope.as_ref().ok().map(|f| b.curve.grid.iter().map(|x| f.predict(*x)).collect());
        let mut w = create(&path)?;
        b.curve
            .write_csv(&mut w, &csv_header(summary, b.barrier), fit.as_deref())
            .and_then(|_| w.flush())
            .map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    let path = PathBuf::from(format!("{prefix}_summary.txt"));
    let mut w = create(&path)?;
    for (k, v) in summary.key_values() {
        writeln!(w, "{k}={v}").map_err(|e| HarnessError::io(&path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
