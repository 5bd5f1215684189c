//! Model parameters shared by every subsystem.

use crate::error::{Error, Result};

/// Saturation guard: closures are evaluated at `min(M, 1 - DELTA_CAP)` so
/// that powers of `1 - M` stay representable. Valid states keep the total
/// biomass at or below this cap; `M >= 1` is a domain error.
pub const DELTA_CAP: f64 = 1e-12;

/// Exponents and mobilities of the cross-diffusion model.
///
/// The single-species diffusivity is `M^a (1-M)^(-b)` and the saturation
/// closure is `p(M) = exp(-(1-M)^(-kappa))`. Hypotheses: `a > 1`, `b > 1`,
/// `kappa > 0`; `a = 1` is admitted but sits on the boundary of the
/// hypotheses and is flagged by [`ModelParams::boundary_note`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Degeneracy exponent at vanishing biomass.
    pub a: f64,
    /// Singularity exponent at saturation.
    pub b: f64,
    /// Decay exponent of `p`.
    pub kappa: f64,
    /// Per-species mobilities `alpha_i > 0`; the length sets the species count.
    pub alpha: Vec<f64>,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, kappa: f64, alpha: Vec<f64>) -> Result<Self> {
        if !a.is_finite() || a < 1.0 {
            return Err(Error::Domain(format!("exponent a must satisfy a >= 1, got {a}")));
        }
        if !b.is_finite() || b <= 1.0 {
            return Err(Error::Domain(format!("exponent b must satisfy b > 1, got {b}")));
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::Domain(format!("exponent kappa must be positive, got {kappa}")));
        }
        if alpha.is_empty() {
            return Err(Error::Domain("at least one species is required".into()));
        }
        if let Some(bad) = alpha.iter().find(|&&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::Domain(format!("mobilities must be positive, got {bad}")));
        }
        Ok(Self { a, b, kappa, alpha })
    }

    /// Equal mobilities `alpha_i = alpha` for `n` species.
    pub fn uniform(a: f64, b: f64, kappa: f64, alpha: f64, n: usize) -> Result<Self> {
        Self::new(a, b, kappa, vec![alpha; n])
    }

    /// Number of species.
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Warning text when the parameters sit on the boundary of the model
    /// hypotheses (currently `a = 1`). Closures and solver remain well
    /// defined there; only the decay theory needs `a > 1`.
    pub fn boundary_note(&self) -> Option<String> {
        if self.a == 1.0 {
            Some("a = 1 lies on the boundary of the hypotheses (a > 1); proceeding".into())
        } else {
            None
        }
    }
}
