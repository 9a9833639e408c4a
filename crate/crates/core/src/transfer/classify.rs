use serde::{Deserialize, Serialize};

use crate::error::{AcimError, Result};
use crate::induction::{tail_exponent, TailFit, TailProfile};

use super::density::GridDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Finite,
    SigmaFinite,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub rho_hat: f64,
    pub stderr: f64,
    pub margin: f64,
    pub window: (usize, usize),
    /// 1 + sup h^ (K' - 1) sum_n nu(T_1^{-n} R); `None` when the sum diverges
    /// or no induced density was supplied.
    pub extended_mass_bound: Option<f64>,
    pub tail_sum: Option<f64>,
}

/// Decide finiteness of the extended measure from the tail exponent of
/// nu(T_1^{-n} R). The tail sum converges iff rho > 1, so
///
/// * Finite when rho - 2 stderr >= 1 + margin,
/// * SigmaFinite when rho + 2 stderr < 1 + margin,
/// * Indeterminate otherwise.
///
/// The upper threshold is shared: an exponent has to clear 1 by the margin
/// before the sum is trusted to converge.
pub fn classify_measure(
    profile: &TailProfile,
    window: (usize, usize),
    density_hat: Option<&GridDensity>,
    k_prime: usize,
    margin: f64,
) -> Result<Classification> {
    let fit = tail_exponent(profile, window)?;
    classify_fit(profile, &fit, density_hat, k_prime, margin)
}

pub fn classify_fit(
    profile: &TailProfile,
    fit: &TailFit,
    density_hat: Option<&GridDensity>,
    k_prime: usize,
    margin: f64,
) -> Result<Classification> {
    if !(fit.stderr < margin / 2.0) {
        return Err(AcimError::InsufficientFit(format!(
            "tail exponent stderr {:.4} is not below half the margin {margin}",
            fit.stderr
        )));
    }
    let threshold = 1.0 + margin;
    let verdict = if fit.rho_hat - 2.0 * fit.stderr >= threshold {
        Verdict::Finite
    } else if fit.rho_hat + 2.0 * fit.stderr < threshold {
        Verdict::SigmaFinite
    } else {
        Verdict::Indeterminate
    };
    let tail_sum = (verdict == Verdict::Finite).then(|| {
        // observed tails up to the window end, power-law continuation after
        let hi = fit.window.1;
        let observed: f64 = profile.tail_volumes[..hi].iter().sum();
        observed + profile.tail(hi) * hi as f64 / (fit.rho_hat - 1.0)
    });
    let extended_mass_bound = match (tail_sum, density_hat) {
        (Some(s), Some(h)) => Some(1.0 + h.sup_norm() * (k_prime.saturating_sub(1)) as f64 * s),
        _ => None,
    };
    Ok(Classification {
        verdict,
        rho_hat: fit.rho_hat,
        stderr: fit.stderr,
        margin,
        window: fit.window,
        extended_mass_bound,
        tail_sum,
    })
}
