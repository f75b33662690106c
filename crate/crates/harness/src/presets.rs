//! Built-in experiment configurations.
//!
//! Presets run at desk scale (10^6 samples); `full_samples` is the count
//! used with `--full`. A preset with several runs is a sweep; a single run
//! is addressed in a config as `process.preset = NAME:LABEL`.

#[derive(Debug, Clone, Copy)]
pub struct PresetRun {
    pub label: &'static str,
    pub config: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub runs: &'static [PresetRun],
    pub full_samples: Option<usize>,
}

impl Preset {
    pub fn is_sweep(&self) -> bool {
        self.runs.len() > 1
    }
}

const EXAMPLE1: &str = "\
process.kind = rmp
process.samples = 1000000
modulator.kind = lindley
modulator.service = exp:2
modulator.arrival_rate = 1
analysis.fit_lo = 5
analysis.fit_hi = 100
analysis.constants = goldie, cycle_max, plateau
analysis.ladder_cycles = 1000000
";

// log J in {+1, -1, 0}: a Bernoulli(0.3) up-step against a Bernoulli(0.5)
// down-step.
const EXAMPLE2: &str = "\
process.kind = rmp
process.samples = 1000000
modulator.kind = iid
modulator.values = 2.718281828459045, 0.36787944117144233, 1
modulator.probs = 0.15, 0.35, 0.5
analysis.fit_lo = 2
analysis.fit_hi = 1000
";

const EXAMPLE3: &str = "\
process.kind = rmp
process.samples = 1000000
modulator.kind = markov
modulator.values = 2, 0.5
modulator.transition = 0.7, 0.3; 0.1, 0.9
";

// Two regimes, each an i.i.d. pair of values, flattened into one chain.
const FIGURE1: &str = "\
process.kind = rmp
process.samples = 1000000
modulator.kind = markov
modulator.values = 1.2, 0.6, 1.7, 0.25
modulator.transition = 0.4999, 0.4999, 0.00012, 0.00008; 0.4999, 0.4999, 0.00012, 0.00008; 0.05, 0.05, 0.54, 0.36; 0.05, 0.05, 0.54, 0.36
";

const FIGURE2: &str = "\
process.kind = rmbp
process.barrier = 1, 5, 13, 21
process.samples = 1000000
modulator.kind = iid
modulator.values = 1, 2
modulator.probs = 0.6, 0.4
offspring.dist = poisson:0.6; poisson:1.5
analysis.scale = barrier
analysis.constants = implicit, plateau
";

const STOPPED: &str = "\
process.kind = stopped_product
process.samples = 1000000
modulator.kind = equilibrium
modulator.tail = exp:1
stop.kind = geometric
stop.rho = 0.5
analysis.constants = mg1_stop, plateau
";

const HEAVY_01: &str = "\
process.kind = ladder
process.samples = 1000000
modulator.kind = lognormal
modulator.mean = -0.1
modulator.sd = 1
analysis.power = 0.1
";

const HEAVY_003: &str = "\
process.kind = ladder
process.samples = 1000000
modulator.kind = lognormal
modulator.mean = -0.03
modulator.sd = 1
analysis.power = 0.03
";

const HEAVY_001: &str = "\
process.kind = ladder
process.samples = 1000000
modulator.kind = lognormal
modulator.mean = -0.01
modulator.sd = 1
analysis.power = 0.01
";

const ABSORBING: &str = "\
process.kind = absorbing
process.arrival_rate = 1
process.samples = 1000000
process.sampling = path
modulator.kind = iid
modulator.values = 1, 2
modulator.probs = 0.6, 0.4
offspring.dist = poisson:0.6; poisson:1.5
";

// Every offspring mean below one. Barrier 10 gives the stationary law
// enough support points for a tail diagnosis.
const CONTRACTION: &str = "\
process.kind = rmbp
process.barrier = 10
process.samples = 1000000
modulator.kind = iid
modulator.values = 1, 2
modulator.probs = 0.5, 0.5
offspring.dist = poisson:0.5; poisson:0.9
";

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "example1",
        summary: "M/M/1 dual: exponential service (rate 2) against Poisson arrivals (rate 1)",
        runs: &[PresetRun { label: "", config: EXAMPLE1 }],
        full_samples: None,
    },
    Preset {
        name: "example2",
        summary: "RMP driven by two independent Bernoulli streams (p = 0.3, q = 0.5)",
        runs: &[PresetRun { label: "", config: EXAMPLE2 }],
        full_samples: None,
    },
    Preset {
        name: "example3",
        summary: "RMP with a two-state Markov environment (u = 2, d = 1/2, p = 0.3, q = 0.1)",
        runs: &[PresetRun { label: "", config: EXAMPLE3 }],
        full_samples: None,
    },
    Preset {
        name: "figure1",
        summary: "two-time-scale Markov environment with a double-Pareto tail",
        runs: &[PresetRun { label: "", config: FIGURE1 }],
        full_samples: Some(50_000_000),
    },
    Preset {
        name: "figure2",
        summary: "RMBP with Poisson(1.5)/Poisson(0.6) offspring at barriers 1, 5, 13, 21",
        runs: &[PresetRun { label: "", config: FIGURE2 }],
        full_samples: Some(10_000_000),
    },
    Preset {
        name: "stopped",
        summary: "geometrically stopped product with equilibrium-exponential increments",
        runs: &[PresetRun { label: "", config: STOPPED }],
        full_samples: None,
    },
    Preset {
        name: "heavy_traffic",
        summary: "rescaled RMP tails for Gaussian log increments as the drift goes to zero",
        runs: &[
            PresetRun { label: "m0.1", config: HEAVY_01 },
            PresetRun { label: "m0.03", config: HEAVY_003 },
            PresetRun { label: "m0.01", config: HEAVY_001 },
        ],
        full_samples: None,
    },
    Preset {
        name: "absorbing",
        summary: "open system of populations absorbed at the barrier, one arrival per slot on average",
        runs: &[PresetRun { label: "", config: ABSORBING }],
        full_samples: None,
    },
    Preset {
        name: "contraction",
        summary: "RMBP whose offspring means are all below one",
        runs: &[PresetRun { label: "", config: CONTRACTION }],
        full_samples: None,
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Config text for `NAME` (single-run presets) or `NAME:LABEL`.
pub fn preset_config(name: &str) -> Option<&'static str> {
    let (base, label) = name.split_once(':').unwrap_or((name, ""));
    let p = preset(base)?;
    if label.is_empty() && p.is_sweep() {
        return None;
    }
    p.runs.iter().find(|r| r.label == label).map(|r| r.config)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
