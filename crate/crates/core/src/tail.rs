//! Tail estimation: empirical CCDFs on log grids, log-log slopes, Hill
//! estimates, two-segment (double-Pareto) fits, the lighter-than-power
//! probe, plateau constants and a two-sample Kolmogorov-Smirnov test.

use std::io::{self, Write};

use crate::engine::TailSampleSet;
use crate::error::{Error, Result};

/// Default number of grid points.
pub const DEFAULT_GRID: usize = 200;

/// A sample sorted ascending in the log domain, for repeated CCDF queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    logs: Vec<f64>,
}

impl SortedSample {
    pub fn new(set: &TailSampleSet) -> Self {
        SortedSample { logs: set.sorted_logs() }
    }

    pub fn from_logs(mut logs: Vec<f64>) -> Self {
        logs.sort_by(f64::total_cmp);
        SortedSample { logs }
    }

    pub fn from_values(values: &[f64]) -> Self {
        Self::from_logs(values.iter().map(|v| v.ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn logs(&self) -> &[f64] {
        &self.logs
    }

    /// Number of samples strictly above `x`.
    pub fn exceedances(&self, x: f64) -> usize {
        let lx = x.ln();
        self.logs.len() - self.logs.partition_point(|l| *l <= lx)
    }

    /// `P^[X > x]`.
    pub fn ccdf(&self, x: f64) -> f64 {
        self.exceedances(x) as f64 / self.logs.len() as f64
    }

    /// Binomial standard error of [`ccdf`](Self::ccdf).
    pub fn ccdf_se(&self, x: f64) -> f64 {
        let p = self.ccdf(x);
        (p * (1.0 - p) / self.logs.len() as f64).sqrt()
    }

    /// Empirical quantile (lower order statistic) as a value, `q` in [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.logs.len();
        let i = ((q * n as f64).floor() as usize).min(n - 1);
        self.logs[i].exp()
    }

    /// The `k`-th largest value (`k = 1` is the maximum).
    pub fn kth_largest(&self, k: usize) -> f64 {
        let n = self.logs.len();
        self.logs[n - k.clamp(1, n)].exp()
    }
}

/// `P^[X > x]` on an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfCurve {
    pub grid: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub n_samples: usize,
    /// The grid is log-spaced.
    pub log_domain: bool,
}

impl CcdfCurve {
    /// Points with `lo <= x <= hi` and positive CCDF, as `(ln x, ln ccdf)`.
    fn log_points(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.grid
            .iter()
            .zip(&self.ccdf)
            .filter(|(x, c)| **x >= lo && **x <= hi && **c > 0.0)
            .map(|(x, c)| (x.ln(), c.ln()))
            .unzip()
    }

    /// Write `x,ccdf[,fit]` rows after a `#` comment header line.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str, fit: Option<&[f64]>) -> io::Result<()> {
        writeln!(w, "# {header}")?;
        match fit {
            Some(f) => {
                writeln!(w, "x,ccdf,fit")?;
                for ((x, c), y) in self.grid.iter().zip(&self.ccdf).zip(f) {
                    writeln!(w, "{x},{c},{y}")?;
                }
            }
            None => {
                writeln!(w, "x,ccdf")?;
                for (x, c) in self.grid.iter().zip(&self.ccdf) {
                    writeln!(w, "{x},{c}")?;
                }
            }
        }
        Ok(())
    }

    /// Parse the format written by [`write_csv`](Self::write_csv); comment
    /// lines and a `fit` column are ignored.
    pub fn read_csv(text: &str) -> Result<CcdfCurve> {
        let mut grid = Vec::new();
        let mut ccdf = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let mut cols = line.split(',');
            let mut num = |name: &str| -> Result<f64> {
                cols.next()
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::spec(format!("line {}: bad {name} column", i + 1)))
            };
            let x = num("x")?;
            let c = num("ccdf")?;
            grid.push(x);
            ccdf.push(c);
        }
        if grid.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::spec("grid must be nondecreasing"));
        }
        Ok(CcdfCurve {
            n_samples: 0,
            log_domain: true,
            grid,
            ccdf,
        })
    }
}

/// CCDF on `n_grid` log-spaced points from the median to the
/// `(1 - 10/n)` quantile.
pub fn empirical_ccdf(samples: &TailSampleSet, n_grid: usize) -> Result<CcdfCurve> {
    ccdf_of_sorted(&SortedSample::new(samples), n_grid)
}

pub fn ccdf_of_sorted(s: &SortedSample, n_grid: usize) -> Result<CcdfCurve> {
    let n = s.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("{n} samples, need at least 100")));
    }
    if n_grid < 2 {
        return Err(Error::spec("grid needs at least two points"));
    }
    let lo = s.quantile(0.5).ln();
    let hi = s.quantile(1.0 - 10.0 / n as f64).ln().max(lo);
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| (lo + (hi - lo) * i as f64 / (n_grid - 1) as f64).exp())
        .collect();
    let ccdf = grid.iter().map(|x| s.ccdf(*x)).collect();
    Ok(CcdfCurve {
        grid,
        ccdf,
        n_samples: n,
        log_domain: true,
    })
}

/// `P^[X > x]` at arbitrary points.
pub fn ccdf_at(samples: &TailSampleSet, xs: &[f64]) -> Vec<f64> {
    let s = SortedSample::new(samples);
    xs.iter().map(|x| s.ccdf(*x)).collect()
}

/// Least-squares line `log ccdf = intercept + slope log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Residual sum of squares.
    pub sse: f64,
}

impl SlopeFit {
    /// Fitted `ccdf` at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some((slope, intercept, stderr, r2, sse))
}

fn fit_points(x: &[f64], y: &[f64], min_points: usize) -> Result<SlopeFit> {
    if x.len() < min_points {
        return Err(Error::InsufficientData(format!("{} points in range, need {min_points}", x.len())));
    }
    let (slope, intercept, stderr, r_squared, sse) =
        ols(x, y).ok_or_else(|| Error::InsufficientData("degenerate fit range".into()))?;
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        x_lo: x[0].exp(),
        x_hi: x[x.len() - 1].exp(),
        r_squared,
        n_points: x.len(),
        sse,
    })
}

/// OLS of `log ccdf` on `log x` over grid points in `[x_lo, x_hi]` with
/// positive CCDF; needs at least 10 such points.
pub fn loglog_slope(curve: &CcdfCurve, x_lo: f64, x_hi: f64) -> Result<SlopeFit> {
    let (x, y) = curve.log_points(x_lo, x_hi);
    fit_points(&x, &y, 10)
}

/// `(90th percentile, value with 50 exceedances)`.
pub fn default_fit_range(samples: &SortedSample) -> (f64, f64) {
    (samples.quantile(0.9), samples.kth_largest(51))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate {
    pub alpha: f64,
    pub stderr: f64,
    pub k: usize,
}

/// `k / sum_{i<=k} log(X_(i) / X_(k+1))` over the upper order statistics.
pub fn hill_estimator(samples: &TailSampleSet, k: usize) -> Result<HillEstimate> {
    hill_sorted(&SortedSample::new(samples), k)
}

pub fn hill_sorted(s: &SortedSample, k: usize) -> Result<HillEstimate> {
    let n = s.len();
    if k < 10 || k >= n {
        return Err(Error::spec(format!("Hill needs 10 <= k < n, got k={k}, n={n}")));
    }
    let logs = s.logs();
    let base = logs[n - k - 1];
    let denom: f64 = logs[n - k..].iter().map(|l| l - base).sum();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("tied upper order statistics".into()));
    }
    let alpha = k as f64 / denom;
    Ok(HillEstimate {
        alpha,
        stderr: alpha / (k as f64).sqrt(),
        k,
    })
}

/// Two independent power-law segments split at a knee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseFit {
    pub knee: f64,
    pub slope_left: f64,
    pub slope_right: f64,
    pub left: SlopeFit,
    pub right: SlopeFit,
    /// Total residual sum of squares of the two segments.
    pub sse: f64,
    /// Residual sum of squares of one line through all points.
    pub single_sse: f64,
    /// The slopes differ by less than two combined standard errors.
    pub degenerate: bool,
}

impl PiecewiseFit {
    /// Ratio of the steeper to the shallower slope.
    pub fn slope_ratio(&self) -> f64 {
        let (a, b) = (self.slope_left.abs(), self.slope_right.abs());
        a.max(b) / a.min(b)
    }
}

/// Best split over every interior grid point with at least 10 points on
/// each side; the knee is the first point of the right segment.
pub fn double_pareto_fit(curve: &CcdfCurve) -> Result<PiecewiseFit> {
    let (x, y) = curve.log_points(f64::NEG_INFINITY, f64::INFINITY);
    if x.len() < 30 {
        return Err(Error::InsufficientData(format!("{} usable grid points, need 30", x.len())));
    }
    let single = fit_points(&x, &y, 2)?;
    let mut best: Option<(SlopeFit, SlopeFit)> = None;
    for i in 10..=x.len() - 10 {
        let (Ok(l), Ok(r)) = (fit_points(&x[..i], &y[..i], 10), fit_points(&x[i..], &y[i..], 10)) else {
            continue;
        };
        if best.is_none_or(|(bl, br)| l.sse + r.sse < bl.sse + br.sse) {
            best = Some((l, r));
        }
    }
    let (left, right) = best.ok_or_else(|| Error::InsufficientData("no admissible knee".into()))?;
    let se = (left.stderr.powi(2) + right.stderr.powi(2)).sqrt();
    Ok(PiecewiseFit {
        knee: right.x_lo,
        slope_left: left.slope,
        slope_right: right.slope,
        left,
        right,
        sse: left.sse + right.sse,
        single_sse: single.sse,
        degenerate: (left.slope - right.slope).abs() < 2.0 * se,
    })
}

/// Tail slope above one threshold of the probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeWindow {
    pub x_lo: f64,
    /// `-alpha^` of the threshold maximum-likelihood fit.
    pub slope: f64,
    pub stderr: f64,
    pub exceedances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LighterProbe {
    pub is_lighter: bool,
    pub windows: Vec<ProbeWindow>,
}

/// Power-law slope `-k / sum_{X>u} log(X/u)` above threshold `u`, with
/// standard error `|slope| / sqrt(k)`.
pub fn threshold_slope(s: &SortedSample, u: f64) -> Result<ProbeWindow> {
    let lu = u.ln();
    let logs = s.logs();
    let i = logs.partition_point(|l| *l <= lu);
    let k = logs.len() - i;
    if k < 10 {
        return Err(Error::InsufficientData(format!("{k} exceedances above {u}")));
    }
    let sum: f64 = logs[i..].iter().map(|l| l - lu).sum();
    let alpha = k as f64 / sum;
    Ok(ProbeWindow {
        x_lo: u,
        slope: -alpha,
        stderr: alpha / (k as f64).sqrt(),
        exceedances: k,
    })
}

/// Tail slopes over five nested windows `[x_k, inf)` with `x_k` log-spaced
/// from the median halfway (in log scale) towards the value with 50
/// exceedances. The tail is lighter than any power when `|slope|` increases
/// strictly across the windows and by more than two pooled standard errors
/// from the first window to the last.
pub fn lighter_than_power_probe(samples: &TailSampleSet) -> Result<LighterProbe> {
    let s = SortedSample::new(samples);
    if s.len() < 10_000 {
        return Err(Error::InsufficientData(format!("{} samples, need 10^4", s.len())));
    }
    let lo = s.quantile(0.5).ln();
    let hi = s.kth_largest(51).ln();
    if !(hi > lo) {
        return Err(Error::InsufficientData("no tail mass above the median".into()));
    }
    let windows = (0..5)
        .map(|k| threshold_slope(&s, (lo + (hi - lo) * k as f64 / 8.0).exp()))
        .collect::<Result<Vec<_>>>()?;
    let increasing = windows.windows(2).all(|w| w[1].slope.abs() > w[0].slope.abs());
    let (first, last) = (windows[0], windows[4]);
    let pooled = (first.stderr.powi(2) + last.stderr.powi(2)).sqrt();
    let is_lighter = increasing && last.slope.abs() - first.slope.abs() > 2.0 * pooled;
    Ok(LighterProbe { is_lighter, windows })
}

/// Median of `x^alpha P^[X > x]` over `n_points` log-spaced `x` in
/// `[x_lo, x_hi]`.
pub fn plateau_median(samples: &SortedSample, alpha: f64, x_lo: f64, x_hi: f64, n_points: usize) -> Result<f64> {
    if !(x_hi > x_lo && x_lo > 0.0) || n_points < 1 {
        return Err(Error::spec("plateau range must satisfy 0 < x_lo < x_hi"));
    }
    let (a, b) = (x_lo.ln(), x_hi.ln());
    let mut v: Vec<f64> = (0..n_points)
        .map(|i| {
            let x = (a + (b - a) * i as f64 / (n_points - 1).max(1) as f64).exp();
            x.powf(alpha) * samples.ccdf(x)
        })
        .collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Ok(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

/// `sup |P^_a[X > x] - P^_b[X > x]|` over `x` in `[x_lo, x_hi]`.
pub fn sup_distance(a: &SortedSample, b: &SortedSample, x_lo: f64, x_hi: f64) -> f64 {
    let (llo, lhi) = (x_lo.ln(), x_hi.ln());
    // The CCDFs are right-continuous step functions; checking x_lo and every
    // jump inside the range finds the supremum.
    let mut pts: Vec<f64> = vec![llo];
    for s in [a, b] {
        let l = s.logs();
        let i = l.partition_point(|v| *v < llo);
        let j = l.partition_point(|v| *v <= lhi);
        pts.extend_from_slice(&l[i..j]);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let ccdf_log = |s: &SortedSample, lx: f64| {
        let l = s.logs();
        (l.len() - l.partition_point(|v| *v <= lx)) as f64 / l.len() as f64
    };
    pts.iter()
        .map(|lx| (ccdf_log(a, *lx) - ccdf_log(b, *lx)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(t) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 t^2}`.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction). Ties are handled exactly in the
/// statistic; with discrete data the p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SampleKind, SampleMeta};
    use crate::rng::RngStream;
    use rand::Rng;

    fn set(logs: Vec<f64>) -> TailSampleSet {
        TailSampleSet::from_logs(logs, SampleKind::Rmp, SampleMeta::default())
    }

    fn pareto(n: usize, alpha: f64, seed: u64) -> TailSampleSet {
        let mut rng = RngStream::new(seed, 0).rng();
        // X = U^{-1/alpha}
        set((0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / alpha).collect())
    }

    fn exponential(n: usize, seed: u64) -> TailSampleSet {
        let mut rng = RngStream::new(seed, 1).rng();
        set((0..n).map(|_| (1.0 - (1.0 - rng.random::<f64>()).ln()).ln()).collect())
    }

    #[test]
    fn constant_samples() {
        let c = empirical_ccdf(&set(vec![2f64.ln(); 500]), 50).unwrap();
        assert!(c.ccdf.iter().all(|v| *v == 0.0));
        assert!(empirical_ccdf(&set(vec![0.0; 99]), 50).is_err());
    }

    #[test]
    fn noiseless_power_law_slope() {
        let grid: Vec<f64> = (0..100).map(|i| 10f64.powf(i as f64 / 33.0)).collect();
        let curve = CcdfCurve {
            ccdf: grid.iter().map(|x| 0.3 * x.powf(-2.0)).collect(),
            grid,
            n_samples: 0,
            log_domain: true,
        };
        let f = loglog_slope(&curve, 1.0, 1e3).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 0.3f64.ln()).abs() < 1e-12);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn synthetic_two_segment() {
        // slopes -0.5 then -2 joined continuously at 10^3
        let grid: Vec<f64> = (0..200).map(|i| 10f64.powf(6.0 * i as f64 / 199.0)).collect();
        let ccdf = grid
            .iter()
            .map(|x| {
                if *x < 1e3 {
                    x.powf(-0.5)
                } else {
                    1e3f64.powf(-0.5) * (x / 1e3).powf(-2.0)
                }
            })
            .collect();
        let curve = CcdfCurve {
            grid: grid.clone(),
            ccdf,
            n_samples: 0,
            log_domain: true,
        };
        let f = double_pareto_fit(&curve).unwrap();
        assert!((f.slope_left + 0.5).abs() < 0.05 && (f.slope_right + 2.0).abs() < 0.05, "{f:?}");
        let cell = grid[1] / grid[0];
        assert!(f.knee / 1e3 < cell * 1.0001 && 1e3 / f.knee < cell * 1.0001);
        assert!(f.sse <= f.single_sse);
        assert!(!f.degenerate);
    }

    #[test]
    fn pareto_estimates() {
        let s = pareto(1_000_000, 1.0, 3);
        let curve = empirical_ccdf(&s, DEFAULT_GRID).unwrap();
        let sorted = SortedSample::new(&s);
        let (lo, hi) = default_fit_range(&sorted);
        let f = loglog_slope(&curve, lo, hi).unwrap();
        assert!((f.slope + 1.0).abs() < 0.02, "{f:?}");
        let h = hill_estimator(&s, 10_000).unwrap();
        assert!((h.alpha - 1.0).abs() < 0.03, "{h:?}");
        let h2 = hill_estimator(&s.scaled(0.01), 10_000).unwrap();
        assert_eq!(h.alpha, h2.alpha);
        let p = lighter_than_power_probe(&s).unwrap();
        assert!(!p.is_lighter, "{:?}", p.windows.iter().map(|s| s.slope).collect::<Vec<_>>());
        let d = double_pareto_fit(&curve).unwrap();
        assert!(d.sse <= d.single_sse);
    }

    #[test]
    fn exponential_is_lighter() {
        let s = exponential(200_000, 4);
        let p = lighter_than_power_probe(&s).unwrap();
        assert!(p.is_lighter, "{:?}", p.windows.iter().map(|s| s.slope).collect::<Vec<_>>());
    }

    #[test]
    fn ks_same_and_shifted() {
        let a = pareto(20_000, 1.0, 5).logs;
        let b = pareto(20_000, 1.0, 6).logs;
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        let c: Vec<f64> = b.iter().map(|x| x + 0.1).collect();
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn plateau_and_sup_distance() {
        let s = SortedSample::new(&pareto(200_000, 1.0, 7));
        let p = plateau_median(&s, 1.0, 2.0, 50.0, 30).unwrap();
        assert!((p - 1.0).abs() < 0.05);
        assert_eq!(sup_distance(&s, &s, 1.0, 100.0), 0.0);
        let t = SortedSample::new(&pareto(200_000, 1.0, 8));
        assert!(sup_distance(&s, &t, 1.0, 100.0) < 0.01);
    }

    #[test]
    fn csv_round_trip() {
        let curve = empirical_ccdf(&pareto(1000, 1.0, 9), 20).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf, "hash=abc seed=1", None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# hash=abc seed=1\nx,ccdf\n"));
        let back = CcdfCurve::read_csv(&text).unwrap();
        assert_eq!(back.grid, curve.grid);
        assert_eq!(back.ccdf, curve.ccdf);
    }
}
