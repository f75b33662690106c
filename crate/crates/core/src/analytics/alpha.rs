//! The positive root `alpha*` of `Psi(a) = level` by bracketing bisection.

use super::psi::PsiFunction;
use crate::error::{Error, Result};

/// Required `|Psi(alpha*) - level|`.
pub const ROOT_TOL: f64 = 1e-10;

const MAX_BRACKET: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    pub value: f64,
    pub psi_slope_at_root: f64,
    pub bracket: (f64, f64),
    /// Achieved `|Psi(value) - level|`.
    pub tolerance: f64,
    pub level: f64,
}

/// Positive root of `Psi`. Requires `Psi'(0) < 0`; reports
/// [`Error::NoPositiveRoot`] when `Psi` stays negative.
pub fn solve_alpha_star(psi: &PsiFunction) -> Result<AlphaStar> {
    let drift = psi.drift();
    if !(drift < 0.0) {
        return Err(Error::NonNegativeDrift { drift });
    }
    solve_alpha_at_level(psi, 0.0)
}

/// Smallest positive `a` with `Psi(a) = level`, `level >= 0`. Outside the
/// moment domain `Psi` counts as `+inf`.
pub fn solve_alpha_at_level(psi: &PsiFunction, level: f64) -> Result<AlphaStar> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::spec(format!("root level must be finite and non-negative, got {level}")));
    }
    let f = |a: f64| -> f64 {
        match psi.eval(a) {
            Ok(v) => v - level,
            Err(_) => f64::INFINITY,
        }
    };
    let mut hi = 1.0;
    while !(f(hi) > 0.0) {
        hi *= 2.0;
        if hi > MAX_BRACKET {
            return Err(Error::NoPositiveRoot);
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    let bracket = (lo, hi);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    let (root, err) = if flo.abs() <= fhi.abs() { (lo, flo.abs()) } else { (hi, fhi.abs()) };
    if !(err < ROOT_TOL) || root <= 0.0 {
        // Psi jumps to +inf at the domain edge without crossing the level.
        return Err(Error::NoPositiveRoot);
    }
    let slope = psi.derivative(root)?;
    if !(slope > 0.0) {
        return Err(Error::Degenerate(format!("Psi'(alpha*) = {slope} is not positive")));
    }
    Ok(AlphaStar {
        value: root,
        psi_slope_at_root: slope,
        bracket,
        tolerance: err,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulator::{LogLaw, ModulatorSpec, TailFn};

    #[test]
    fn figure2_root() {
        let p = PsiFunction::iid(&[1.5, 0.6], &[0.4, 0.6]).unwrap();
        let a = solve_alpha_star(&p).unwrap();
        assert!((a.value - 1.406_453_979_846_487).abs() < 1e-9, "{}", a.value);
        assert!(a.tolerance < ROOT_TOL);
        assert!(a.psi_slope_at_root > 0.0);
    }

    #[test]
    fn cycle_example_root() {
        let p = PsiFunction::iid(&[2.0, 0.5], &[0.25, 0.75]).unwrap();
        let a = solve_alpha_star(&p).unwrap();
        assert!((a.value - 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn mm1_root_is_one() {
        let law = LogLaw::Lindley {
            service: TailFn::Exponential { rate: 2.0 },
            arrival_rate: 1.0,
        };
        let p = PsiFunction::for_multiplicative(&ModulatorSpec::continuous(law).unwrap());
        let a = solve_alpha_star(&p).unwrap();
        assert!((a.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contraction_has_no_root() {
        let p = PsiFunction::iid(&[0.5, 0.9], &[0.5, 0.5]).unwrap();
        assert_eq!(solve_alpha_star(&p), Err(Error::NoPositiveRoot));
    }

    #[test]
    fn example3_closed_form() {
        let m = ModulatorSpec::two_state_markov([2.0, 0.5], 0.3, 0.1).unwrap();
        let a = solve_alpha_star(&PsiFunction::for_multiplicative(&m)).unwrap();
        assert!((a.value - 0.362_570_079_384_708_4).abs() < 1e-8, "{}", a.value);
    }

    #[test]
    fn stopped_level() {
        // equilibrium of Exp(1): E[J^a] = 1/(1-a); rho = 0.5 gives 1/(1-a) = 2
        let law = LogLaw::Equilibrium(TailFn::Exponential { rate: 1.0 });
        let p = PsiFunction::for_multiplicative(&ModulatorSpec::continuous(law).unwrap());
        let a = solve_alpha_at_level(&p, 2f64.ln()).unwrap();
        assert!((a.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn positive_drift_refused() {
        let p = PsiFunction::iid(&[2.0], &[1.0]).unwrap();
        assert!(matches!(solve_alpha_star(&p), Err(Error::NonNegativeDrift { .. })));
    }
}
