//! Closed-form tail laws: the heavy-traffic limit and the constant of a
//! geometrically stopped product.

use super::alpha::solve_alpha_at_level;
use super::psi::PsiFunction;
use super::quadrature::integrate;
use crate::error::{Error, Result};
use crate::modulator::{LogLaw, ModulatorSpec, TailFn};

/// Prediction for `M` with Gaussian-like increments of drift `m < 0` and
/// variance `sigma2`: `P[M^{-m/sigma2} > y] ~ y^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTrafficLaw {
    /// `-m / sigma2`.
    pub rescale_exponent: f64,
    /// Slope of the rescaled tail on log-log axes.
    pub reference_slope: f64,
    /// `-2m / sigma2`, the exponent of `M` itself.
    pub alpha: f64,
}

impl HeavyTrafficLaw {
    /// `P[Y > y]` for the rescaled variable.
    pub fn reference_tail(&self, y: f64) -> f64 {
        if y <= 1.0 {
            1.0
        } else {
            y.powi(-2)
        }
    }
}

pub fn heavy_traffic_prediction(m: f64, sigma2: f64) -> Result<HeavyTrafficLaw> {
    if !(m < 0.0) {
        return Err(Error::NonNegativeDrift { drift: m });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::spec("heavy-traffic prediction needs a positive variance"));
    }
    Ok(HeavyTrafficLaw {
        rescale_exponent: -m / sigma2,
        reference_slope: -2.0,
        alpha: -2.0 * m / sigma2,
    })
}

/// Smallest `rho` accepted by [`mg1_stop_constant`].
pub const MIN_RHO: f64 = 1e-6;

/// Relative tolerance of the `alpha*` consistency check.
pub const STOP_ROOT_TOL: f64 = 1e-8;

/// `int_0^inf f(y) Gbar(y) dy` by adaptive quadrature, piece by piece.
fn tail_integral<F: Fn(f64) -> f64>(g: &TailFn, f: F, decay: f64) -> Result<f64> {
    match g {
        TailFn::Exponential { rate } => {
            let r = rate - decay;
            if !(r > 0.0) {
                return Err(Error::Domain("tail integral diverges".into()));
            }
            // integrand ~ y e^{-r y}; beyond 80/r it is below 1e-30
            let end = 80.0 / r;
            let mut total = 0.0;
            let pieces = 16;
            for k in 0..pieces {
                let (a, b) = (end * k as f64 / pieces as f64, end * (k + 1) as f64 / pieces as f64);
                total += integrate(|y| f(y) * g.value(y), a, b, 1e-14)?;
            }
            Ok(total)
        }
        TailFn::PiecewiseConstant { breaks, levels } => {
            let mut total = 0.0;
            for (k, lvl) in levels.iter().enumerate() {
                total += lvl * integrate(&f, breaks[k], breaks[k + 1], 1e-14)?;
            }
            Ok(total)
        }
    }
}

/// Root `alpha*` of `int e^{a y} Gbar(y) dy = rho^{-1} int Gbar(y) dy`.
pub fn mg1_stop_alpha(gbar: &TailFn, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    gbar.validate()?;
    let psi = PsiFunction::for_multiplicative(&ModulatorSpec::continuous(LogLaw::Equilibrium(gbar.clone()))?);
    Ok(solve_alpha_at_level(&psi, -rho.ln())?.value)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= MIN_RHO && rho < 1.0) {
        return Err(Error::Domain(format!("rho = {rho} outside [{MIN_RHO}, 1)")));
    }
    Ok(())
}

/// `(1 - rho) int Gbar / (alpha* rho int y e^{alpha* y} Gbar(y) dy)`.
pub fn mg1_stop_constant(gbar: &TailFn, rho: f64, alpha_star: f64) -> Result<f64> {
    check_rho(rho)?;
    gbar.validate()?;
    let a = alpha_star;
    if !(a > 0.0) {
        return Err(Error::spec("alpha* must be positive"));
    }
    let mass = tail_integral(gbar, |_| 1.0, 0.0)?;
    let tilted = tail_integral(gbar, |y| (a * y).exp(), a)?;
    let lhs = tilted;
    let rhs = mass / rho;
    if (lhs - rhs).abs() > STOP_ROOT_TOL * rhs {
        return Err(Error::Numerical(format!(
            "alpha* = {a} is inconsistent: int e^(a y) Gbar = {lhs}, expected {rhs}"
        )));
    }
    let first = tail_integral(gbar, |y| y * (a * y).exp(), a)?;
    Ok((1.0 - rho) * mass / (a * rho * first))
}
