//! Ladder-height statistics of `S_n = sum log J_i` and the exact tail
//! constants of the RMP and of its cycle maximum.
//!
//! With `alpha*` the positive root of `Psi`, tilting the increments by
//! `e^{alpha* x}` gives a walk with positive drift that ascends almost
//! surely. Under the tilted law `P[ascend] = E[e^{-alpha* H}]` and
//! `int x e^{alpha* x} G+(dx) = E[H]`, both bounded-variance averages. A
//! plain-walk estimate of `P[ascend]` is kept alongside as a cross-check.

use rand::Rng;

use super::alpha::solve_alpha_star;
use super::psi::PsiFunction;
use crate::engine::multiplicative::check_cycle_spec;
use crate::engine::{replicate, CycleOptions, SampleKind, SampleMeta, TailSampleSet, HORIZON_EPS, ZERO_SNAP};
use crate::error::{Error, Result};
use crate::modulator::ModulatorSpec;
use crate::rng::RngStream;

/// An estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderStats {
    pub n_cycles: usize,
    /// Tilt used for the tilted samples (`None` without a positive root).
    pub alpha: Option<f64>,
    /// `P[S_n > 0 for some n >= 1]`.
    pub ascend_prob: f64,
    pub ascend_prob_se: f64,
    /// The same probability from plain walks stopped deep below zero.
    pub direct_ascend_prob: f64,
    pub direct_ascend_prob_se: f64,
    /// First strict ascending ladder heights of the ascending plain walks.
    pub ladder_heights: Vec<f64>,
    /// First ascending ladder heights under the tilted law.
    pub tilted_heights: Vec<f64>,
    /// `S_tau <= 0` at the first descending epoch of each cycle.
    pub overshoots: Vec<f64>,
    /// Common span of the ladder heights, if they sit on a lattice.
    pub lattice_span: Option<f64>,
}

impl LadderStats {
    pub fn is_lattice(&self) -> bool {
        self.lattice_span.is_some()
    }
}

/// The environment tilted by `e^{a x}`, when that law is available.
pub fn tilted_modulator(m: &ModulatorSpec, a: f64) -> Option<ModulatorSpec> {
    if let Some(law) = m.log_law() {
        return law.tilted(a).and_then(|l| ModulatorSpec::continuous(l).ok());
    }
    let probs = m.probs()?;
    let w: Vec<f64> = m.values().iter().zip(probs).map(|(v, p)| p * v.powf(a)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let w: Vec<f64> = w.iter().map(|x| x / total).collect();
    ModulatorSpec::iid(m.values().to_vec(), w).ok()
}

fn mean_se(x: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for v in x {
        n += 1;
        s += v;
        s2 += v * v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let m = s / n as f64;
    let var = if n > 1 {
        ((s2 - n as f64 * m * m) / (n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    (m, (var / n as f64).sqrt(), n)
}

/// Simulate `n_cycles` of each of: descending cycles (overshoots), plain
/// walks run until they ascend or sink below `-(40 - ln eps) / alpha*`,
/// and tilted walks run to their first ascent.
pub fn estimate_ladder_stats(modulator: &ModulatorSpec, n_cycles: usize, stream: RngStream) -> Result<LadderStats> {
    estimate_ladder_stats_with(modulator, n_cycles, &CycleOptions::default(), stream)
}

pub fn estimate_ladder_stats_with(
    modulator: &ModulatorSpec,
    n_cycles: usize,
    opts: &CycleOptions,
    stream: RngStream,
) -> Result<LadderStats> {
    check_cycle_spec(modulator, opts)?;
    if n_cycles < 2 {
        return Err(Error::InsufficientData("need at least two cycles".into()));
    }
    let alpha = match solve_alpha_star(&PsiFunction::for_multiplicative(modulator)) {
        Ok(a) => Some(a.value),
        Err(Error::NoPositiveRoot) => None,
        Err(e) => return Err(e),
    };
    let depth = match alpha {
        Some(a) => (40.0 - HORIZON_EPS.ln()) / a,
        None => (40.0 - HORIZON_EPS.ln()) * (1.0 + modulator.var_log().sqrt()),
    };
    let cap = opts.cap;

    let overshoots = replicate(n_cycles, stream.child(0), |_, rng| {
        let mut env = modulator.sampler();
        let mut s = 0.0;
        for _ in 0..cap {
            s += env.next_log(rng);
            if s.abs() < ZERO_SNAP {
                s = 0.0;
            }
            if s <= 0.0 {
                return Ok(s);
            }
        }
        Err(Error::CycleCap { cap })
    })?;

    let direct = replicate(n_cycles, stream.child(1), |_, rng| first_ascent(modulator, Some(depth), cap, rng))?;
    let ladder_heights: Vec<f64> = direct.iter().flatten().copied().collect();
    let (direct_p, direct_se, _) = mean_se(direct.iter().map(|h| if h.is_some() { 1.0 } else { 0.0 }));

    let tilted = alpha.and_then(|a| tilted_modulator(modulator, a).map(|t| (a, t)));
    let (tilted_heights, ascend_prob, ascend_prob_se) = match &tilted {
        Some((a, t)) => {
            let h = replicate(n_cycles, stream.child(2), |_, rng| {
                first_ascent(t, None, cap, rng)?.ok_or(Error::CycleCap { cap })
            })?;
            let (p, se, _) = mean_se(h.iter().map(|x| (-a * x).exp()));
            (h, p, se)
        }
        None => (Vec::new(), direct_p, direct_se),
    };

    let lattice_span = lattice_span(if ladder_heights.is_empty() { &tilted_heights } else { &ladder_heights });
    Ok(LadderStats {
        n_cycles,
        alpha,
        ascend_prob,
        ascend_prob_se,
        direct_ascend_prob: direct_p,
        direct_ascend_prob_se: direct_se,
        ladder_heights,
        tilted_heights,
        overshoots,
        lattice_span,
    })
}

/// First strictly positive value of the walk from 0, or `None` once it
/// falls below `-depth`.
fn first_ascent<R: Rng + ?Sized>(m: &ModulatorSpec, depth: Option<f64>, cap: u64, rng: &mut R) -> Result<Option<f64>> {
    let mut env = m.sampler();
    let floor = depth.map_or(f64::NEG_INFINITY, |d| -d);
    let mut s = 0.0;
    for _ in 0..cap {
        s += env.next_log(rng);
        if s.abs() < ZERO_SNAP {
            s = 0.0;
        }
        if s > 0.0 {
            return Ok(Some(s));
        }
        if s < floor {
            return Ok(None);
        }
    }
    Err(Error::CycleCap { cap })
}

/// Exact stationary draws of `log M` for the RMP with barrier 1 (the
/// Lindley queue), by ladder decomposition: `sup_n S_n` is a sum of strict
/// ascending ladder heights, one for each ascent, ending at the first walk
/// that never ascends. A height `h` drawn under the `alpha*`-tilted law and
/// accepted with probability `e^{-alpha* h}` has the law of an ascent, and
/// a rejection occurs with the probability of never ascending. No burn-in,
/// so this is the sampler of choice near criticality.
pub fn ladder_rmp_samples(modulator: &ModulatorSpec, n: usize, stream: RngStream) -> Result<TailSampleSet> {
    check_cycle_spec(modulator, &CycleOptions { allow_near_critical: true, ..CycleOptions::default() })?;
    let alpha = solve_alpha_star(&PsiFunction::for_multiplicative(modulator))?.value;
    let tilted = tilted_modulator(modulator, alpha)
        .ok_or_else(|| Error::Domain("tilted environment law unavailable".into()))?;
    let cap = CycleOptions::default().cap;
    let logs = replicate(n, stream, |_, rng| {
        let mut q = 0.0;
        loop {
            let h = first_ascent(&tilted, None, cap, rng)?.ok_or(Error::CycleCap { cap })?;
            if rng.random::<f64>() >= (-alpha * h).exp() {
                return Ok(q);
            }
            q += h;
        }
    })?;
    Ok(TailSampleSet::from_logs(
        logs,
        SampleKind::Rmp,
        SampleMeta::new(format!("rmp ladder decomposition, alpha*={alpha}"), stream),
    ))
}

/// Span `d > 0` with every height an integer multiple of `d` (to relative
/// tolerance 1e-9), found by a tolerant Euclid over the distinct heights.
pub fn lattice_span(heights: &[f64]) -> Option<f64> {
    if heights.is_empty() {
        return None;
    }
    let mut h: Vec<f64> = heights.iter().copied().filter(|x| *x > 0.0).collect();
    h.sort_by(f64::total_cmp);
    let top = *h.last()?;
    let tol = 1e-9 * top.max(1.0);
    h.dedup_by(|a, b| (*a - *b).abs() <= tol);
    h.truncate(2000);
    let gcd = |mut a: f64, mut b: f64| {
        if a < b {
            std::mem::swap(&mut a, &mut b);
        }
        while b > tol {
            let r = a % b;
            a = b;
            b = if b - r <= tol { 0.0 } else { r };
        }
        a
    };
    let mut g = h[0];
    for x in &h[1..] {
        g = gcd(g, *x);
        if g <= 1e-6 * top {
            return None;
        }
    }
    let ok = h.iter().all(|x| {
        let k = (x / g).round();
        (x - k * g).abs() <= 1e3 * tol
    });
    ok.then_some(g)
}

fn check_alpha(stats: &LadderStats, alpha_star: f64) -> Result<()> {
    match stats.alpha {
        Some(a) if (a - alpha_star).abs() <= 1e-8 * a.max(1.0) => Ok(()),
        Some(a) => Err(Error::spec(format!("ladder statistics were tilted at {a}, not {alpha_star}"))),
        None => Err(Error::Degenerate("no positive root; ladder constants undefined".into())),
    }
}

/// `(1 - P[ascend]) / (alpha* int x e^{alpha* x} G+(dx))` with a
/// delta-method standard error.
pub fn goldie_constant_rmp(stats: &LadderStats, alpha_star: f64) -> Result<Estimate> {
    check_alpha(stats, alpha_star)?;
    let a = alpha_star;
    let (p, i, var_p, var_i, cov, n) = if !stats.tilted_heights.is_empty() {
        let h = &stats.tilted_heights;
        let n = h.len() as f64;
        let x: Vec<f64> = h.iter().map(|v| (-a * v).exp()).collect();
        let (mx, my) = (x.iter().sum::<f64>() / n, h.iter().sum::<f64>() / n);
        let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = h.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
        let c = x.iter().zip(h).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / (n - 1.0);
        (mx, my, vx, vy, c, n)
    } else {
        // plain walks: 1{ascend} and 1{ascend} H e^{aH}
        let n = stats.n_cycles as f64;
        let w: Vec<f64> = stats.ladder_heights.iter().map(|h| h * (a * h).exp()).collect();
        let p = stats.direct_ascend_prob;
        let i = w.iter().sum::<f64>() / n;
        let e2 = w.iter().map(|v| v * v).sum::<f64>() / n;
        let vi = (e2 - i * i).max(0.0) * n / (n - 1.0);
        let c = (i - p * i) * n / (n - 1.0);
        (p, i, p * (1.0 - p) * n / (n - 1.0), vi, c, n)
    };
    if !(p > 0.0 && p < 1.0) || !(i > 0.0) {
        return Err(Error::Degenerate(format!("ascend probability {p} outside (0, 1)")));
    }
    let value = (1.0 - p) / (a * i);
    let gp = -1.0 / (a * i);
    let gi = -(1.0 - p) / (a * i * i);
    let var = (gp * gp * var_p + gi * gi * var_i + 2.0 * gp * gi * cov) / n;
    Ok(Estimate {
        value,
        stderr: var.max(0.0).sqrt(),
    })
}

/// The RMP constant times `1 - E[e^{alpha* S_tau}]`.
pub fn cycle_max_constant(stats: &LadderStats, alpha_star: f64) -> Result<Estimate> {
    let c = goldie_constant_rmp(stats, alpha_star)?;
    let (m, se, n) = mean_se(stats.overshoots.iter().map(|s| (alpha_star * s).exp()));
    if n < 2 {
        return Err(Error::InsufficientData("no overshoot samples".into()));
    }
    let f = 1.0 - m;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Degenerate(format!("cycle factor {f} outside (0, 1)")));
    }
    Ok(Estimate {
        value: c.value * f,
        stderr: ((c.stderr * f).powi(2) + (c.value * se).powi(2)).sqrt(),
    })
}
