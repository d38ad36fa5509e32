//! Dual form of the χ²-ball distributionally robust risk:
//!
//! ```text
//! L(θ, η) = C · sqrt( mean_i [ℓ_i(θ) − η]₊² ) + η,   C = sqrt(2·r_max + 1)
//! ```
//!
//! with `r_max = (1/α − 1)²` for a minimum subpopulation probability `α`.
//! The empirical mean runs over every record, so censored records enter as
//! exact zeros; with `η < 0` their `(0 − η)₊` terms are active.
//!
//! For fixed losses `L` is convex in `η`. [`solve_eta`] finds its minimizer
//! by bisection on the sign of the derivative
//! `g(η) = 1 − C · mean[(ℓ−η)₊] / sqrt(mean[(ℓ−η)₊²])`, which is
//! nondecreasing, tends to `1 − C` as `η → −∞` and jumps to `1` at `max ℓ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance on `η`, scaled by `max(1, range of losses)`.
pub const DEFAULT_ETA_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_BRACKET_EXPANSIONS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroConfig {
    pub alpha: f64,
    pub r_max: f64,
    pub c: f64,
    pub eta_tolerance: f64,
    pub max_bracket_expansions: u32,
}

impl DroConfig {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        let (r_max, c) = dro_constants(alpha)?;
        Ok(DroConfig {
            alpha,
            r_max,
            c,
            eta_tolerance: DEFAULT_ETA_TOLERANCE,
            max_bracket_expansions: DEFAULT_MAX_BRACKET_EXPANSIONS,
        })
    }

    pub fn solve(&self, losses: &[f64]) -> Result<EtaSolution> {
        solve_eta_with(losses, self.c, self.eta_tolerance, self.max_bracket_expansions)
    }
}

/// `(r_max, C)` for `α ∈ (0, 1]`.
pub fn dro_constants(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let r_max = (1.0 / alpha - 1.0).powi(2);
    Ok((r_max, (2.0 * r_max + 1.0).sqrt()))
}

/// The empirical dual objective at a fixed `η`.
pub fn dro_loss(losses: &[f64], eta: f64, c: f64) -> f64 {
    let n = losses.len() as f64;
    let sq: f64 = losses
        .iter()
        .map(|l| {
            let a = (l - eta).max(0.0);
            a * a
        })
        .sum();
    c * (sq / n).sqrt() + eta
}

/// The dual objective on split losses of the records in `D1`; the average
/// runs over `|D1|`.
pub fn split_dro_loss(d1_losses: &[f64], eta: f64, c: f64) -> Result<f64> {
    if d1_losses.is_empty() {
        return Err(Error::Contract("D1 must be nonempty".into()));
    }
    Ok(dro_loss(d1_losses, eta, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSolution {
    /// Minimizing `η`; `-∞` when the infimum is not attained (`C = 1`).
    pub eta: f64,
    pub objective: f64,
    pub attained: bool,
}

/// Subgradient of the dual in `η`, taking the left limit at `max ℓ`.
fn eta_slope(losses: &[f64], eta: f64, c: f64) -> f64 {
    let (s1, s2) = losses.iter().fold((0.0, 0.0), |(s1, s2), l| {
        let a = (l - eta).max(0.0);
        (s1 + a, s2 + a * a)
    });
    if s2 == 0.0 {
        return 1.0;
    }
    1.0 - c * s1 / (losses.len() as f64 * s2).sqrt()
}

pub fn solve_eta(losses: &[f64], c: f64) -> Result<EtaSolution> {
    solve_eta_with(losses, c, DEFAULT_ETA_TOLERANCE, DEFAULT_MAX_BRACKET_EXPANSIONS)
}

/// Minimizes [`dro_loss`] over `η`. `tolerance` is relative to
/// `max(1, max ℓ − min ℓ)`.
pub fn solve_eta_with(losses: &[f64], c: f64, tolerance: f64, max_bracket_expansions: u32) -> Result<EtaSolution> {
    if losses.is_empty() {
        return Err(Error::Contract("cannot solve for eta on an empty loss vector".into()));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    if !(c >= 1.0) || !c.is_finite() {
        return Err(Error::Config(format!("C must be finite and >= 1, got {c}")));
    }
    let n = losses.len() as f64;
    if c == 1.0 {
        return Ok(EtaSolution {
            eta: f64::NEG_INFINITY,
            objective: losses.iter().sum::<f64>() / n,
            attained: false,
        });
    }

    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let n_max = losses.iter().filter(|&&l| l == max).count() as f64;
    // Left derivative at the kink: only the maximal losses are active.
    if 1.0 - c * (n_max / n).sqrt() <= 0.0 {
        return Ok(EtaSolution {
            eta: max,
            objective: dro_loss(losses, max, c),
            attained: true,
        });
    }

    let range = max - min;
    let tol = tolerance * range.max(1.0);
    let mut step = range.max(1.0);
    let mut lo = min - step;
    let mut expansions = 0;
    while eta_slope(losses, lo, c) >= 0.0 {
        expansions += 1;
        if expansions > max_bracket_expansions {
            return Err(Error::Solver(format!(
                "no negative slope found below {lo} after {max_bracket_expansions} expansions"
            )));
        }
        step *= 2.0;
        lo = min - step;
    }
    let mut hi = max;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eta_slope(losses, mid, c) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidates = [lo, 0.5 * (lo + hi), hi];
    let (eta, objective) =
        candidates
            .iter()
            .map(|&e| (e, dro_loss(losses, e, c)))
            .fold(
                (f64::NAN, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
    Ok(EtaSolution {
        eta,
        objective,
        attained: true,
    })
}

/// `∂L/∂ℓ_i` at a solved `η`. For an unattained solution (`C = 1`) the dual
/// equals the mean loss and every weight is `1/n`. When `η` sits at the
/// kink `max ℓ` the dual equals `max ℓ`, and the weight is split evenly
/// over the maximal losses.
pub fn dual_loss_weights(losses: &[f64], solution: &EtaSolution, c: f64) -> Vec<f64> {
    let n = losses.len() as f64;
    if !solution.attained {
        return vec![1.0 / n; losses.len()];
    }
    let active: Vec<f64> = losses.iter().map(|l| (l - solution.eta).max(0.0)).collect();
    let root = (active.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    if root == 0.0 {
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n_max = losses.iter().filter(|&&l| l == max).count() as f64;
        return losses
            .iter()
            .map(|&l| if l == max { 1.0 / n_max } else { 0.0 })
            .collect();
    }
    active.into_iter().map(|a| c * a / (n * root)).collect()
}

/// Diagnostic reweighting `w_i ∝ (ℓ_i − η*)₊`: the records the dual is
/// currently focused on.
pub fn worst_case_weights(losses: &[f64], eta: f64) -> Result<Vec<f64>> {
    let active: Vec<f64> = losses.iter().map(|l| (l - eta).max(0.0)).collect();
    let total: f64 = active.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(active.into_iter().map(|a| a / total).collect())
}
