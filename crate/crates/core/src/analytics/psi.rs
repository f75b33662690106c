//! The limiting cumulant `Psi(a) = lim n^-1 log E[Pi_n^a]`.
//!
//! For i.i.d. environments this is `log sum_j p_j v_j^a` (or `log E[e^{aX}]`
//! for continuous laws). For Markov environments it is the log of the
//! Perron-Frobenius eigenvalue of `Q_a(i, j) = q(i, j) v_j^a`.

use crate::error::{Error, Result};
use crate::modulator::{LogLaw, ModulatorSpec};
use crate::offspring::OffspringSpec;

/// Relative gap between the Collatz-Wielandt bounds at which power
/// iteration stops.
pub const EIGEN_TOL: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum PsiBacking {
    /// `log sum_j p_j exp(a log v_j)`.
    IidClosedForm { probs: Vec<f64>, log_values: Vec<f64> },
    /// `log E[exp(a X)]` for a continuous law of `X = log J`.
    IidLaw(LogLaw),
    /// Log Perron-Frobenius eigenvalue of `q(i, j) v_j^a`.
    MarkovEigen {
        transition: Vec<Vec<f64>>,
        log_values: Vec<f64>,
        stationary: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    pub backing: PsiBacking,
}

impl PsiFunction {
    /// `Psi` of the environment values themselves (`v = J`).
    pub fn for_multiplicative(m: &ModulatorSpec) -> Self {
        if let Some(law) = m.log_law() {
            return PsiFunction {
                backing: PsiBacking::IidLaw(law.clone()),
            };
        }
        Self::from_state_values(m, m.values().iter().map(|v| v.ln()).collect())
    }

    /// `Psi` of the mean offspring `v = mu(J)`.
    pub fn for_branching(m: &ModulatorSpec, offspring: &OffspringSpec) -> Result<Self> {
        offspring.check_against(m)?;
        Ok(Self::from_state_values(m, offspring.means().iter().map(|v| v.ln()).collect()))
    }

    /// i.i.d. closed form from raw values and probabilities.
    pub fn iid(values: &[f64], probs: &[f64]) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::spec("values and probabilities must have the same non-zero length"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::spec("values and probabilities must be non-negative"));
        }
        Ok(PsiFunction {
            backing: PsiBacking::IidClosedForm {
                probs: probs.to_vec(),
                log_values: values.iter().map(|v| v.ln()).collect(),
            },
        })
    }

    fn from_state_values(m: &ModulatorSpec, log_values: Vec<f64>) -> Self {
        let backing = match m.transition() {
            Some(t) => PsiBacking::MarkovEigen {
                transition: t.to_vec(),
                log_values,
                stationary: m.stationary(),
            },
            None => PsiBacking::IidClosedForm {
                probs: m.stationary(),
                log_values,
            },
        };
        PsiFunction { backing }
    }

    /// `Psi(a)`; exactly 0 at `a = 0`. Divergent moments give a domain error.
    pub fn eval(&self, a: f64) -> Result<f64> {
        if a == 0.0 {
            return Ok(0.0);
        }
        if !a.is_finite() {
            return Err(Error::Domain(format!("Psi at non-finite argument {a}")));
        }
        match &self.backing {
            PsiBacking::IidClosedForm { probs, log_values } => {
                let terms = exponents(probs.iter().map(|p| p.ln()), log_values, a)?;
                Ok(log_sum_exp(&terms))
            }
            PsiBacking::IidLaw(law) => match law.mgf(a) {
                Some(v) if v.is_finite() && v > 0.0 => Ok(v.ln()),
                _ => Err(Error::Domain(format!("E[J^{a}] diverges"))),
            },
            PsiBacking::MarkovEigen {
                transition,
                log_values,
                ..
            } => {
                let w = exponents(std::iter::repeat(0.0), log_values, a)?;
                log_perron_root(transition, &w)
            }
        }
    }

    /// `Psi'(0)`, the stationary drift of `log v(J)`.
    pub fn drift(&self) -> f64 {
        match &self.backing {
            PsiBacking::IidClosedForm { probs, log_values } => weighted_mean(probs, log_values),
            PsiBacking::IidLaw(law) => law.mean(),
            PsiBacking::MarkovEigen {
                stationary,
                log_values,
                ..
            } => weighted_mean(stationary, log_values),
        }
    }

    /// `Psi'(a)`: analytic for discrete i.i.d. environments, a central
    /// difference otherwise.
    pub fn derivative(&self, a: f64) -> Result<f64> {
        if let PsiBacking::IidClosedForm { probs, log_values } = &self.backing {
            if a == 0.0 {
                return Ok(self.drift());
            }
            let terms = exponents(probs.iter().map(|p| p.ln()), log_values, a)?;
            let lse = log_sum_exp(&terms);
            let mut d = 0.0;
            for (t, lv) in terms.iter().zip(log_values) {
                let w = (t - lse).exp();
                if w > 0.0 {
                    d += w * lv;
                }
            }
            return Ok(d);
        }
        let h = 1e-5 * a.abs().max(1.0);
        match (self.eval(a + h), self.eval(a - h)) {
            (Ok(up), Ok(down)) => Ok((up - down) / (2.0 * h)),
            (Err(_), Ok(down)) => Ok((self.eval(a)? - down) / h),
            (Ok(up), Err(_)) => Ok((up - self.eval(a)?) / h),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// Exclusive upper end of the moment domain (`inf` for finite-state
    /// environments).
    pub fn domain_upper(&self) -> f64 {
        match &self.backing {
            PsiBacking::IidLaw(law) => law.mgf_upper_limit(),
            _ => f64::INFINITY,
        }
    }
}

/// `Psi(a)`.
pub fn psi_eval(psi: &PsiFunction, a: f64) -> Result<f64> {
    psi.eval(a)
}

fn weighted_mean(p: &[f64], x: &[f64]) -> f64 {
    p.iter().zip(x).map(|(p, x)| if *p > 0.0 { p * x } else { 0.0 }).sum()
}

/// `base_j + a log v_j`, with `v_j = 0` handled as `0^a`.
fn exponents(base: impl Iterator<Item = f64>, log_values: &[f64], a: f64) -> Result<Vec<f64>> {
    base.zip(log_values)
        .map(|(b, lv)| {
            if b == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            if *lv == f64::NEG_INFINITY {
                return if a > 0.0 {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Err(Error::Domain(format!("0^{a} diverges")))
                };
            }
            let x = b + a * lv;
            if x.is_nan() || x == f64::INFINITY {
                Err(Error::Domain(format!("moment of order {a} overflows")))
            } else {
                Ok(x)
            }
        })
        .collect()
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log` of the Perron-Frobenius eigenvalue of `q(i, j) exp(w_j)` by power
/// iteration from the uniform vector, stopping when the Collatz-Wielandt
/// bounds agree to [`EIGEN_TOL`].
pub fn log_perron_root(q: &[Vec<f64>], w: &[f64]) -> Result<f64> {
    let k = q.len();
    let c = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if c == f64::NEG_INFINITY {
        return Ok(c);
    }
    let col: Vec<f64> = w.iter().map(|x| (x - c).exp()).collect();
    let a: Vec<Vec<f64>> = q
        .iter()
        .map(|row| row.iter().zip(&col).map(|(q, s)| q * s).collect())
        .collect();
    // Without a positive diagonal the chain may be periodic; a shift makes
    // the iteration converge without moving the eigenvector.
    let row_sums: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let shift = if (0..k).any(|i| a[i][i] > 0.0) {
        0.0
    } else {
        0.5 * row_sums.iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE)
    };
    let mut x = vec![1.0 / k as f64; k];
    let mut y = vec![0.0; k];
    for _ in 0..EIGEN_MAX_ITER {
        for i in 0..k {
            y[i] = a[i].iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() + shift * x[i];
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..k {
            if x[i] > 0.0 {
                let r = y[i] / x[i];
                lo = lo.min(r);
                hi = hi.max(r);
            } else if y[i] > 0.0 {
                hi = f64::INFINITY;
            }
        }
        if hi.is_finite() && hi - lo <= EIGEN_TOL * hi {
            let lambda = 0.5 * (lo + hi) - shift;
            if !(lambda > 0.0) {
                return Err(Error::Numerical(format!("non-positive Perron root {lambda}")));
            }
            return Ok(c + lambda.ln());
        }
        let norm: f64 = y.iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical("power iteration collapsed".into()));
        }
        for i in 0..k {
            x[i] = y[i] / norm;
        }
    }
    Err(Error::Numerical("power iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_origin() {
        let p = PsiFunction::iid(&[1.5, 0.6], &[0.4, 0.6]).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        let m = ModulatorSpec::two_state_markov([2.0, 0.5], 0.3, 0.1).unwrap();
        assert_eq!(PsiFunction::for_multiplicative(&m).eval(0.0).unwrap(), 0.0);
        // 0^0 = 1
        let z = PsiFunction::iid(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(z.eval(0.0).unwrap(), 0.0);
        assert!((z.eval(1.0).unwrap() - 0.0).abs() < 1e-15);
        assert!(z.eval(-1.0).is_err());
    }

    #[test]
    fn figure2_at_one() {
        let p = PsiFunction::iid(&[1.5, 0.6], &[0.4, 0.6]).unwrap();
        assert!((p.eval(1.0).unwrap() - (-0.04082199452025505)).abs() < 1e-14);
    }

    #[test]
    fn one_state_chain_matches_closed_form_exactly() {
        for v in [0.3, 1.0, 2.5] {
            let m = ModulatorSpec::markov(vec![v], vec![vec![1.0]], None).unwrap();
            let i = ModulatorSpec::constant(v).unwrap();
            for a in [-1.0, 0.5, 1.7, 10.0] {
                let e = PsiFunction::for_multiplicative(&m).eval(a).unwrap();
                let c = PsiFunction::for_multiplicative(&i).eval(a).unwrap();
                assert_eq!(e.to_bits(), c.to_bits());
            }
        }
    }

    #[test]
    fn periodic_chain_converges() {
        // deterministic alternation between 2 and 1/8: Psi(a) = a (ln 2 - 3 ln 2) / 2
        let m = ModulatorSpec::markov(vec![2.0, 0.125], vec![vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        let p = PsiFunction::for_multiplicative(&m);
        let expect = 0.5 * (2f64.ln() + 0.125f64.ln());
        assert!((p.eval(1.0).unwrap() - expect).abs() < 1e-11);
    }

    #[test]
    fn continuous_domain() {
        let law = LogLaw::Lindley {
            service: crate::modulator::TailFn::Exponential { rate: 2.0 },
            arrival_rate: 1.0,
        };
        let p = PsiFunction::for_multiplicative(&ModulatorSpec::continuous(law).unwrap());
        assert!(p.eval(2.5).is_err());
        assert!(p.eval(1.0).unwrap().abs() < 1e-15);
        assert!((p.drift() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_drift() {
        let m = ModulatorSpec::two_state_markov([2.0, 0.5], 0.3, 0.1).unwrap();
        let p = PsiFunction::for_multiplicative(&m);
        assert!((p.derivative(0.0).unwrap() - p.drift()).abs() < 1e-7);
    }
}
