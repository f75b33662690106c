//! `rmbp`: simulate reflected branching and multiplicative processes and
//! fit their tails.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical or engine
//! error, 4 failed acceptance check in `reproduce`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rmbp_core::tail::{double_pareto_fit, loglog_slope, CcdfCurve};

use rmbp_harness::checks::{self, Context};
use rmbp_harness::config::{ConstantKind, ExperimentConfig, ProcessKind};
use rmbp_harness::experiment::{alpha_star, run_experiment, write_artifacts, RunSummary};
use rmbp_harness::{parse_config_with, presets, HarnessError, Result};

#[derive(Parser)]
#[command(name = "rmbp", version, about = "Power-law tails of reflected branching and multiplicative processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write `<prefix>_ccdf.csv` and `<prefix>_summary.txt`.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix (overrides `output.prefix`).
        #[arg(long)]
        out: Option<String>,
    },
    /// Print the tail exponent alpha* of a configuration.
    Alpha { config: PathBuf },
    /// Estimate the tail constants of a configuration.
    Constant {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a CCDF file written by `simulate`.
    Tailfit {
        csv: PathBuf,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
    },
    /// Run a preset and its acceptance checks.
    Reproduce {
        preset: String,
        /// Larger sample counts where the preset defines them.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::ReadInput {
        path: path.display().to_string(),
        source,
    })
}

fn load(path: &Path, seed: Option<u64>, out: Option<String>) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    if let Some(s) = seed {
        overrides.push(("process.seed", s.to_string()));
    }
    if let Some(o) = out {
        overrides.push(("output.prefix", o));
    }
    parse_config_with(&read(path)?, &overrides)
}

fn print_summary(s: &RunSummary) {
    for (k, v) in s.key_values() {
        println!("{k}={v}");
    }
}

fn simulate(config: &Path, seed: Option<u64>, out: Option<String>) -> Result<u8> {
    let cfg = load(config, seed, out)?;
    let s = run_experiment(&cfg)?;
    let files = write_artifacts(&s, &cfg.output_prefix)?;
    print_summary(&s);
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(0)
}

fn alpha(config: &Path) -> Result<u8> {
    let cfg = load(config, None, None)?;
    match alpha_star(&cfg) {
        Ok(a) => println!("alpha_star={}\nalpha_star_stderr=exact", a.value),
        Err(rmbp_core::Error::NoPositiveRoot) => {
            println!("alpha_star=none\nalpha_star_note=tail lighter than any power law")
        }
        Err(e) => return Err(e.into()),
    }
    Ok(0)
}

fn default_constants(kind: ProcessKind) -> Vec<ConstantKind> {
    match kind {
        ProcessKind::Rmp | ProcessKind::Queue | ProcessKind::Backward | ProcessKind::Ladder => {
            vec![ConstantKind::Goldie, ConstantKind::CycleMax, ConstantKind::Plateau]
        }
        ProcessKind::Rmbp => vec![ConstantKind::Implicit, ConstantKind::Plateau],
        ProcessKind::StoppedProduct => vec![ConstantKind::Mg1Stop, ConstantKind::Plateau],
        _ => vec![ConstantKind::Plateau],
    }
}

fn constant(config: &Path, seed: Option<u64>) -> Result<u8> {
    let mut cfg = load(config, seed, None)?;
    if cfg.analysis.constants.is_empty() {
        cfg.analysis.constants = default_constants(cfg.kind);
    }
    let s = run_experiment(&cfg)?;
    if let Ok(a) = &s.alpha_star {
        println!("alpha_star={}\nalpha_star_stderr=exact", a.value);
    }
    for (k, v) in s.key_values() {
        let keep = ["plateau", "goldie", "cycle_max", "implicit", "mg1_stop"]
            .iter()
            .any(|c| k.rsplit('.').next().is_some_and(|t| t == *c || t == format!("{c}_stderr")));
        if keep {
            println!("{k}={v}");
        }
    }
    Ok(0)
}

fn tailfit(csv: &Path, lo: Option<f64>, hi: Option<f64>) -> Result<u8> {
    let curve = CcdfCurve::read_csv(&read(csv)?)?;
    let positive: Vec<f64> = curve.grid.iter().zip(&curve.ccdf).filter(|(_, c)| **c > 0.0).map(|(x, _)| *x).collect();
    let (first, last) = match (positive.first(), positive.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(rmbp_core::Error::InsufficientData("no positive CCDF values".into()).into()),
    };
    let fit = loglog_slope(&curve, lo.unwrap_or(first), hi.unwrap_or(last))?;
    println!("points={}", curve.grid.len());
    println!("fit_lo={}\nfit_hi={}", fit.x_lo, fit.x_hi);
    println!("slope={}\nslope_stderr={}", fit.slope, fit.stderr);
    println!("alpha_hat={}\nalpha_hat_stderr={}", -fit.slope, fit.stderr);
    println!("intercept={}\nr_squared={}", fit.intercept, fit.r_squared);
    if let Ok(p) = double_pareto_fit(&curve) {
        println!("knee={}", p.knee);
        println!("slope_left={}\nslope_left_stderr={}", p.slope_left, p.left.stderr);
        println!("slope_right={}\nslope_right_stderr={}", p.slope_right, p.right.stderr);
        println!("slope_ratio={}\ndouble_pareto_degenerate={}", p.slope_ratio(), p.degenerate);
    }
    Ok(0)
}

fn reproduce(name: &str, full: bool, seed: u64, out: Option<String>) -> Result<u8> {
    let preset = presets::preset(name).ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?;
    let ctx = Context::new(seed, full);
    let prefix = out.unwrap_or_else(|| name.to_string());
    let mut results = Vec::new();
    for id in checks::preset_criteria(name) {
        results.push(checks::criterion(*id, &ctx)?);
    }
    let mut extra = checks::preset_extra_checks(name, &ctx)?;
    for r in &results {
        extra.push(r.as_check());
        extra.extend(r.diagnostics.iter().map(|d| {
            let mut d = d.clone();
            d.name = format!("criterion_{}.{}", r.id, d.name);
            d
        }));
    }
    let mut failed = false;
    for run in preset.runs {
        let key = if run.label.is_empty() { name.to_string() } else { format!("{name}:{}", run.label) };
        let mut s = (*ctx.run(&key)?).clone();
        s.checks.extend(extra.iter().cloned());
        failed |= !s.checks.iter().all(|c| c.passed);
        let p = if run.label.is_empty() { prefix.clone() } else { format!("{prefix}_{}", run.label) };
        for f in write_artifacts(&s, &p)? {
            eprintln!("wrote {}", f.display());
        }
    }
    for r in &results {
        println!("{}", r.line());
        for d in &r.diagnostics {
            println!("    {} {}: {}", if d.passed { "ok  " } else { "FAIL" }, d.name, d.detail);
        }
    }
    for c in extra.iter().filter(|c| !c.name.starts_with("criterion_")) {
        println!("check {} {}: {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    Ok(if failed { 4 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, out),
        Command::Alpha { config } => alpha(&config),
        Command::Constant { config, seed } => constant(&config, seed),
        Command::Tailfit { csv, lo, hi } => tailfit(&csv, lo, hi),
        Command::Reproduce { preset, full, seed, out } => reproduce(&preset, full, seed, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
