//! Line-based experiment configuration.
//!
//! One `section.key = value` pair per line; `#` starts a comment. Sections
//! are `process`, `modulator`, `offspring`, `stop`, `analysis` and `output`.
//! Unknown keys and repeated keys are errors. `process.preset = NAME` loads a
//! preset first; every other line overrides it.
//!
//! Numbers accept fractions (`1/5000`). Lists are comma separated, matrix
//! rows are separated by `;`. Offspring laws are written `family:args`:
//!
//! ```text
//! det:K  poisson:MEAN  shifted_poisson:SHIFT,MEAN  two_point:A,B,P
//! discrete:K1,K2,..|P1,P2,..
//! ```
//!
//! and service or tail functions `exp:RATE` or `piecewise:B0,B1,..|G0,G1,..`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rmbp_core::engine::{BurnIn, PathConfig, StopSpec};
use rmbp_core::{LogLaw, ModulatorSpec, OffspringDist, OffspringSpec, TailFn};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::presets;

const KEYS: &[&str] = &[
    "process.preset",
    "process.kind",
    "process.barrier",
    "process.upper",
    "process.burn_in",
    "process.initial",
    "process.samples",
    "process.sampling",
    "process.thin",
    "process.chains",
    "process.seed",
    "process.arrival_rate",
    "process.z0",
    "modulator.kind",
    "modulator.values",
    "modulator.probs",
    "modulator.transition",
    "modulator.initial",
    "modulator.value",
    "modulator.mean",
    "modulator.sd",
    "modulator.service",
    "modulator.arrival_rate",
    "modulator.tail",
    "offspring.dist",
    "offspring.normal_threshold",
    "stop.kind",
    "stop.rho",
    "stop.probs",
    "analysis.n_grid",
    "analysis.fit_lo",
    "analysis.fit_hi",
    "analysis.hill_k",
    "analysis.constants",
    "analysis.ladder_cycles",
    "analysis.scale",
    "analysis.power",
    "output.prefix",
];

/// Keys that do not enter the configuration hash.
const UNHASHED: &[&str] = &["process.seed", "output.prefix"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Rmp,
    Queue,
    Rmbp,
    /// Loynes backward supremum.
    Backward,
    /// Exact RMP draws by ladder decomposition.
    Ladder,
    /// Cycle maxima of the RMP.
    Cycle,
    StoppedProduct,
    StoppedBranching,
    Absorbing,
}

impl ProcessKind {
    pub fn name(self) -> &'static str {
        match self {
            ProcessKind::Rmp => "rmp",
            ProcessKind::Queue => "queue",
            ProcessKind::Rmbp => "rmbp",
            ProcessKind::Backward => "backward",
            ProcessKind::Ladder => "ladder",
            ProcessKind::Cycle => "cycle",
            ProcessKind::StoppedProduct => "stopped_product",
            ProcessKind::StoppedBranching => "stopped_branching",
            ProcessKind::Absorbing => "absorbing",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rmp" => ProcessKind::Rmp,
            "queue" => ProcessKind::Queue,
            "rmbp" => ProcessKind::Rmbp,
            "backward" => ProcessKind::Backward,
            "ladder" => ProcessKind::Ladder,
            "cycle" => ProcessKind::Cycle,
            "stopped_product" => ProcessKind::StoppedProduct,
            "stopped_branching" => ProcessKind::StoppedBranching,
            "absorbing" => ProcessKind::Absorbing,
            _ => return None,
        })
    }

    pub fn is_branching(self) -> bool {
        matches!(self, ProcessKind::Rmbp | ProcessKind::StoppedBranching | ProcessKind::Absorbing)
    }

    pub fn is_stopped(self) -> bool {
        matches!(self, ProcessKind::StoppedProduct | ProcessKind::StoppedBranching)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Independent,
    /// Every `thin`-th step of `chains` ergodic paths.
    Path { thin: u64, chains: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstantKind {
    /// Ladder-height constant of the RMP.
    Goldie,
    /// Cycle-maximum constant.
    CycleMax,
    /// Implicit-renewal constant of the RMBP.
    Implicit,
    /// Median of `x^alpha* P^[X > x]` over the fit window.
    Plateau,
    /// Exact constant of a geometrically stopped product with an
    /// equilibrium-law environment.
    Mg1Stop,
}

impl ConstantKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstantKind::Goldie => "goldie",
            ConstantKind::CycleMax => "cycle_max",
            ConstantKind::Implicit => "implicit",
            ConstantKind::Plateau => "plateau",
            ConstantKind::Mg1Stop => "mg1_stop",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "goldie" => ConstantKind::Goldie,
            "cycle_max" => ConstantKind::CycleMax,
            "implicit" => ConstantKind::Implicit,
            "plateau" => ConstantKind::Plateau,
            "mg1_stop" => ConstantKind::Mg1Stop,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    None,
    /// Divide samples by the barrier (`Lambda^l / l`).
    Barrier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub n_grid: usize,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
    pub hill_k: Option<usize>,
    pub constants: Vec<ConstantKind>,
    pub ladder_cycles: usize,
    pub scale: Scale,
    /// Samples are raised to this power before analysis.
    pub power: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            n_grid: 200,
            fit_lo: None,
            fit_hi: None,
            hill_k: None,
            constants: Vec::new(),
            ladder_cycles: 100_000,
            scale: Scale::None,
            power: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ProcessKind,
    pub modulator: ModulatorSpec,
    pub offspring: Option<OffspringSpec>,
    /// One run per barrier; `path.barrier` is the first.
    pub barriers: Vec<f64>,
    pub path: PathConfig,
    pub stop: Option<StopSpec>,
    pub sampling: Sampling,
    pub n_replications: usize,
    pub master_seed: u64,
    pub arrival_rate: Option<f64>,
    pub z0: u64,
    pub analysis: AnalysisSpec,
    pub output_prefix: String,
    /// Preset the config was expanded from.
    pub preset: Option<String>,
    canonical: String,
}

impl ExperimentConfig {
    /// Sorted `key = value` lines after preset expansion, without the seed
    /// and output prefix.
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Path configuration for one barrier.
    pub fn path_for(&self, barrier: f64) -> PathConfig {
        PathConfig {
            barrier,
            ..self.path.clone()
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

fn is_known(key: &str) -> bool {
    KEYS.contains(&key) || key.strip_prefix("offspring.state.").is_some_and(|s| s.parse::<usize>().is_ok())
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| HarnessError::Syntax {
            line,
            msg: format!("expected `section.key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !key.contains('.') || key.split('.').any(str::is_empty) {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("key `{key}` must have the form section.key"),
            });
        }
        if !is_known(key) {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("`{key}` has no value"),
            });
        }
        if let Some(prev) = out.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        ) {
            return Err(HarnessError::Syntax {
                line,
                msg: format!("`{key}` already set on line {}", prev.line),
            });
        }
    }
    Ok(out)
}

/// Parse a number, allowing a single fraction `a/b`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

fn parse_u64(s: &str) -> Option<u64> {
    let v = parse_number(s)?;
    (v >= 0.0 && v.fract() == 0.0 && v < 1.8e19).then_some(v as u64)
}

fn parse_tail(s: &str) -> Option<TailFn> {
    let (family, args) = s.split_once(':')?;
    match family.trim() {
        "exp" => Some(TailFn::Exponential {
            rate: parse_number(args)?,
        }),
        "piecewise" => {
            let (b, g) = args.split_once('|')?;
            Some(TailFn::PiecewiseConstant {
                breaks: parse_list(b)?,
                levels: parse_list(g)?,
            })
        }
        _ => None,
    }
}

fn parse_offspring(s: &str) -> Option<OffspringDist> {
    let (family, args) = s.split_once(':')?;
    let nums = || parse_list(args);
    Some(match family.trim() {
        "det" => OffspringDist::Deterministic(parse_u64(args)?),
        "poisson" => OffspringDist::Poisson(parse_number(args)?),
        "shifted_poisson" => {
            let v = nums()?;
            let [shift, mean] = v[..] else { return None };
            OffspringDist::ShiftedPoisson {
                shift: parse_u64(&shift.to_string())?,
                mean,
            }
        }
        "two_point" => {
            let v = nums()?;
            let [a, b, p] = v[..] else { return None };
            OffspringDist::TwoPoint {
                a: parse_u64(&a.to_string())?,
                b: parse_u64(&b.to_string())?,
                p,
            }
        }
        "discrete" => {
            let (k, p) = args.split_once('|')?;
            OffspringDist::GeneralDiscrete {
                support: k.split(',').map(parse_u64).collect::<Option<_>>()?,
                probs: parse_list(p)?,
            }
        }
        _ => return None,
    })
}

struct Reader {
    map: BTreeMap<String, Entry>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|e| e.value.as_str())
    }

    fn has_section(&self, section: &str) -> Option<&str> {
        self.map.keys().find(|k| k.starts_with(&format!("{section}."))).map(String::as_str)
    }

    fn parsed<T>(&self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => f(v)
                .map(Some)
                .ok_or_else(|| HarnessError::semantic(key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn required<T>(&self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T> {
        self.parsed(key, what, f)?
            .ok_or_else(|| HarnessError::semantic(key, "required key is missing"))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key, "a number", parse_number)
    }

    fn count(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, "a non-negative integer", parse_u64)
    }

    fn forbid(&self, key: &str, why: &str) -> Result<()> {
        match self.raw(key) {
            Some(_) => Err(HarnessError::semantic(key, why.to_string())),
            None => Ok(()),
        }
    }
}

fn engine(key: &str, e: rmbp_core::Error) -> HarnessError {
    HarnessError::semantic(key, e.to_string())
}

fn build_modulator(r: &Reader) -> Result<ModulatorSpec> {
    let kind = r.required("modulator.kind", "a modulator kind", |s| Some(s.to_string()))?;
    let allowed: &[&str] = match kind.as_str() {
        "iid" => &["modulator.values", "modulator.probs"],
        "markov" => &["modulator.values", "modulator.transition", "modulator.initial"],
        "constant" => &["modulator.value"],
        "lognormal" => &["modulator.mean", "modulator.sd"],
        "lindley" => &["modulator.service", "modulator.arrival_rate"],
        "equilibrium" => &["modulator.tail"],
        other => {
            return Err(HarnessError::semantic(
                "modulator.kind",
                format!("unknown kind `{other}` (iid, markov, constant, lognormal, lindley, equilibrium)"),
            ))
        }
    };
    for key in r.map.keys().filter(|k| k.starts_with("modulator.") && *k != "modulator.kind") {
        if !allowed.contains(&key.as_str()) {
            return Err(HarnessError::semantic(key, format!("not used by modulator kind `{kind}`")));
        }
    }
    let list = |k: &str| r.required(k, "a comma-separated list of numbers", parse_list);
    let spec = match kind.as_str() {
        "iid" => ModulatorSpec::iid(list("modulator.values")?, list("modulator.probs")?)
            .map_err(|e| engine("modulator", e))?,
        "markov" => {
            let rows = r.required("modulator.transition", "matrix rows separated by `;`", |s| {
                s.split(';').map(parse_list).collect::<Option<Vec<_>>>()
            })?;
            let initial = r.parsed("modulator.initial", "a list of probabilities", parse_list)?;
            ModulatorSpec::markov(list("modulator.values")?, rows, initial).map_err(|e| engine("modulator", e))?
        }
        "constant" => ModulatorSpec::constant(r.required("modulator.value", "a number", parse_number)?)
            .map_err(|e| engine("modulator.value", e))?,
        "lognormal" => ModulatorSpec::continuous(LogLaw::Normal {
            mean: r.required("modulator.mean", "a number", parse_number)?,
            sd: r.required("modulator.sd", "a number", parse_number)?,
        })
        .map_err(|e| engine("modulator", e))?,
        "lindley" => ModulatorSpec::continuous(LogLaw::Lindley {
            service: r.required("modulator.service", "exp:RATE or piecewise:..", parse_tail)?,
            arrival_rate: r.required("modulator.arrival_rate", "a number", parse_number)?,
        })
        .map_err(|e| engine("modulator", e))?,
        _ => ModulatorSpec::continuous(LogLaw::Equilibrium(r.required(
            "modulator.tail",
            "exp:RATE or piecewise:..",
            parse_tail,
        )?))
        .map_err(|e| engine("modulator", e))?,
    };
    Ok(spec)
}

fn build_offspring(r: &Reader, modulator: &ModulatorSpec) -> Result<OffspringSpec> {
    let n = modulator.n_states();
    if n == 0 {
        return Err(HarnessError::semantic(
            "offspring",
            "branching needs a finite-state modulator (iid, markov or constant)",
        ));
    }
    let what = "family:args, e.g. poisson:1.5";
    let mut per_state: Vec<Option<OffspringDist>> = vec![None; n];
    if let Some(v) = r.raw("offspring.dist") {
        let parts: Vec<&str> = v.split(';').collect();
        let dists = parts
            .iter()
            .map(|p| parse_offspring(p))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| HarnessError::semantic("offspring.dist", format!("expected {what}, got `{v}`")))?;
        match dists.len() {
            1 => per_state = vec![Some(dists[0].clone()); n],
            k if k == n => per_state = dists.into_iter().map(Some).collect(),
            k => {
                return Err(HarnessError::semantic(
                    "offspring.dist",
                    format!("{k} laws given but the modulator has {n} states"),
                ))
            }
        }
    }
    for (key, _) in r.map.iter().filter(|(k, _)| k.starts_with("offspring.state.")) {
        let j: usize = key["offspring.state.".len()..].parse().unwrap();
        if j >= n {
            return Err(HarnessError::semantic(
                key,
                format!("state {j} is not defined: the modulator has {n} states (0..{})", n - 1),
            ));
        }
        per_state[j] = Some(r.required(key, what, parse_offspring)?);
    }
    let per_state = per_state
        .into_iter()
        .enumerate()
        .map(|(j, d)| d.ok_or_else(|| HarnessError::semantic(format!("offspring.state.{j}"), "no offspring law for this state")))
        .collect::<Result<Vec<_>>>()?;
    let threshold = match r.raw("offspring.normal_threshold") {
        None => Some(rmbp_core::offspring::DEFAULT_NORMAL_THRESHOLD),
        Some("none") => None,
        Some(_) => r.count("offspring.normal_threshold")?,
    };
    Ok(OffspringSpec::new(per_state)
        .map_err(|e| engine("offspring", e))?
        .with_normal_threshold(threshold))
}

fn build_stop(r: &Reader) -> Result<StopSpec> {
    let kind = r.required("stop.kind", "geometric or table", |s| Some(s.to_string()))?;
    let stop = match kind.as_str() {
        "geometric" => {
            r.forbid("stop.probs", "not used by a geometric stop")?;
            StopSpec::Geometric {
                rho: r.required("stop.rho", "a number", parse_number)?,
            }
        }
        "table" => {
            r.forbid("stop.rho", "not used by a table stop")?;
            StopSpec::FiniteTable {
                probs: r.required("stop.probs", "a list of probabilities", parse_list)?,
            }
        }
        other => return Err(HarnessError::semantic("stop.kind", format!("unknown stop kind `{other}`"))),
    };
    stop.validate().map_err(|e| engine("stop", e))?;
    Ok(stop)
}

fn build_analysis(r: &Reader) -> Result<AnalysisSpec> {
    let mut a = AnalysisSpec::default();
    if let Some(n) = r.count("analysis.n_grid")? {
        if n < 2 {
            return Err(HarnessError::semantic("analysis.n_grid", "needs at least 2 points"));
        }
        a.n_grid = n as usize;
    }
    a.fit_lo = r.number("analysis.fit_lo")?;
    a.fit_hi = r.number("analysis.fit_hi")?;
    if let (Some(lo), Some(hi)) = (a.fit_lo, a.fit_hi) {
        if !(0.0 < lo && lo < hi) {
            return Err(HarnessError::semantic("analysis.fit_hi", "fit window needs 0 < fit_lo < fit_hi"));
        }
    }
    a.hill_k = r.count("analysis.hill_k")?.map(|k| k as usize);
    if let Some(v) = r.raw("analysis.constants") {
        let mut set = BTreeSet::new();
        for name in v.split(',').map(str::trim) {
            let c = ConstantKind::parse(name).ok_or_else(|| {
                HarnessError::semantic(
                    "analysis.constants",
                    format!("unknown constant `{name}` (goldie, cycle_max, implicit, plateau, mg1_stop)"),
                )
            })?;
            set.insert(c);
        }
        a.constants = set.into_iter().collect();
    }
    if let Some(n) = r.count("analysis.ladder_cycles")? {
        a.ladder_cycles = n as usize;
    }
    a.scale = match r.raw("analysis.scale") {
        None | Some("none") => Scale::None,
        Some("barrier") => Scale::Barrier,
        Some(other) => {
            return Err(HarnessError::semantic(
                "analysis.scale",
                format!("expected none or barrier, got `{other}`"),
            ))
        }
    };
    if let Some(p) = r.number("analysis.power")? {
        if !(p > 0.0) {
            return Err(HarnessError::semantic("analysis.power", "must be positive"));
        }
        a.power = p;
    }
    Ok(a)
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &[])
}

/// Parse with `key = value` overrides applied last (e.g. from the command
/// line). Override keys must be known keys.
pub fn parse_config_with(text: &str, overrides: &[(&str, String)]) -> Result<ExperimentConfig> {
    let user = parse_entries(text)?;
    let mut map = BTreeMap::new();
    let preset = user.get("process.preset").map(|e| e.value.clone());
    if let Some(name) = &preset {
        let base = presets::preset_config(name).ok_or_else(|| HarnessError::UnknownPreset(name.clone()))?;
        map = parse_entries(base)?;
    }
    for (k, v) in user {
        if k != "process.preset" {
            map.insert(k, v);
        }
    }
    for (k, v) in overrides {
        if !is_known(k) {
            return Err(HarnessError::semantic(*k, "unknown key"));
        }
        map.insert(
            k.to_string(),
            Entry {
                line: 0,
                value: v.clone(),
            },
        );
    }
    let r = Reader { map };

    let kind = r.required("process.kind", "a process kind", ProcessKind::parse)?;
    let modulator = build_modulator(&r)?;

    let offspring = if kind.is_branching() {
        Some(build_offspring(&r, &modulator)?)
    } else {
        if let Some(k) = r.has_section("offspring") {
            return Err(HarnessError::semantic(k, format!("process kind `{}` takes no offspring", kind.name())));
        }
        None
    };
    let stop = if kind.is_stopped() {
        Some(build_stop(&r)?)
    } else {
        if let Some(k) = r.has_section("stop") {
            return Err(HarnessError::semantic(k, format!("process kind `{}` is not stopped", kind.name())));
        }
        None
    };

    let barriers = r
        .parsed("process.barrier", "a barrier or list of barriers", parse_list)?
        .unwrap_or_else(|| vec![1.0]);
    if barriers.is_empty() || barriers.iter().any(|l| !(*l > 0.0)) {
        return Err(HarnessError::semantic("process.barrier", "barriers must be positive"));
    }
    if kind.is_branching() && barriers.iter().any(|l| l.fract() != 0.0) {
        return Err(HarnessError::semantic("process.barrier", "branching barriers must be integers"));
    }
    if !matches!(kind, ProcessKind::Rmp | ProcessKind::Rmbp | ProcessKind::Absorbing) && barriers != [1.0] {
        return Err(HarnessError::semantic(
            "process.barrier",
            format!("process kind `{}` runs at barrier 1 only", kind.name()),
        ));
    }
    let mut path = PathConfig::new(barriers[0]);
    if let Some(u) = r.number("process.upper")? {
        path.upper_barrier = Some(u);
    }
    path.burn_in = match r.raw("process.burn_in") {
        None | Some("auto") => BurnIn::Auto,
        Some(_) => BurnIn::Fixed(r.count("process.burn_in")?.unwrap()),
    };
    path.initial = r.number("process.initial")?;
    for l in &barriers {
        PathConfig { barrier: *l, ..path.clone() }
            .validate()
            .map_err(|e| engine("process", e))?;
    }

    let samples = r.count("process.samples")?.unwrap_or(10_000);
    if samples < 1 {
        return Err(HarnessError::semantic("process.samples", "n_replications must be at least 1"));
    }
    let sampling = match r.raw("process.sampling") {
        None | Some("independent") => {
            r.forbid("process.thin", "only used with sampling = path")?;
            r.forbid("process.chains", "only used with sampling = path")?;
            Sampling::Independent
        }
        Some("path") => {
            if !matches!(kind, ProcessKind::Rmp | ProcessKind::Rmbp | ProcessKind::Absorbing) {
                return Err(HarnessError::semantic(
                    "process.sampling",
                    format!("path sampling is not available for `{}`", kind.name()),
                ));
            }
            let thin = r.count("process.thin")?.unwrap_or(1).max(1);
            let chains = r.count("process.chains")?.unwrap_or(1).max(1) as usize;
            Sampling::Path { thin, chains }
        }
        Some(other) => {
            return Err(HarnessError::semantic(
                "process.sampling",
                format!("expected independent or path, got `{other}`"),
            ))
        }
    };

    let arrival_rate = if kind == ProcessKind::Absorbing {
        let q = r.required("process.arrival_rate", "a number", parse_number)?;
        if !(q > 0.0) {
            return Err(HarnessError::semantic("process.arrival_rate", "must be positive"));
        }
        Some(q)
    } else {
        r.forbid("process.arrival_rate", "only used by the absorbing process")?;
        None
    };
    let z0 = if kind == ProcessKind::StoppedBranching {
        r.count("process.z0")?.unwrap_or(1)
    } else {
        r.forbid("process.z0", "only used by stopped branching")?;
        1
    };

    let analysis = build_analysis(&r)?;
    let canonical: String = r
        .map
        .iter()
        .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
        .map(|(k, e)| format!("{k} = {}\n", e.value))
        .collect();

    Ok(ExperimentConfig {
        kind,
        modulator,
        offspring,
        barriers,
        path,
        stop,
        sampling,
        n_replications: samples as usize,
        master_seed: r.count("process.seed")?.unwrap_or(0),
        arrival_rate,
        z0,
        analysis,
        output_prefix: r.raw("output.prefix").unwrap_or("rmbp_run").to_string(),
        preset,
        canonical,
    })
}
