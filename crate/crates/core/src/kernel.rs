//! Kernel functions of the two-node game.
//!
//! For an adversarial report at distance `z` from the truth, with
//! `(eta - 1) * delta <= z <= (eta + 1) * delta`:
//!
//! * `k(z)  = P[n_h >= z - eta*delta]`, the acceptance probability;
//! * `nu(z) = E[(n_h + z)^2 ; n_h >= z - eta*delta]`, the accepted squared
//!   error mass (four times the accepted squared midrange error);
//! * `h(q)  = nu(k^-1(q))` on `[0, 1]`.

use crate::error::{Error, Result};
use crate::noise::HonestNoiseModel;
use crate::quad::{adaptive_simpson, bisect_monotone};
use alloc::format;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Bisection tolerance on `z` for [`KernelContext::k_inv`].
pub const K_INV_TOL: f64 = 1e-12;
pub const K_INV_MAX_ITER: u32 = 200;

/// How `k` and `nu` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integration {
    /// Closed forms for uniform noise, quadrature otherwise.
    #[default]
    Auto,
    /// Adaptive Simpson over `[z - eta*delta, delta]` for every kind.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelContext {
    eta: f64,
    noise: HonestNoiseModel,
    quad_tol: f64,
    integration: Integration,
}

impl KernelContext {
    /// `eta` must be at least 2. The noise model must pass validation.
    pub fn new(eta: f64, noise: HonestNoiseModel) -> Result<Self> {
        if !(eta.is_finite() && eta >= 2.0) {
            return Err(Error::domain("eta", eta, "[2, inf)"));
        }
        noise.ensure_valid()?;
        Ok(KernelContext {
            eta,
            noise,
            quad_tol: DEFAULT_QUAD_TOL,
            integration: Integration::Auto,
        })
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn with_integration(mut self, integration: Integration) -> Self {
        self.integration = integration;
        self
    }

    /// Same noise and tolerances at another threshold.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 2.0) {
            return Err(Error::domain("eta", eta, "[2, inf)"));
        }
        Ok(KernelContext { eta, ..self.clone() })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn delta(&self) -> f64 {
        self.noise.delta()
    }

    pub fn noise(&self) -> &HonestNoiseModel {
        &self.noise
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    /// Acceptance threshold `eta * delta`.
    pub fn threshold(&self) -> f64 {
        self.eta * self.noise.delta()
    }

    /// `[(eta - 1) delta, (eta + 1) delta]`.
    pub fn z_domain(&self) -> (f64, f64) {
        let d = self.noise.delta();
        ((self.eta - 1.0) * d, (self.eta + 1.0) * d)
    }

    fn check_z(&self, z: f64) -> Result<()> {
        let (lo, hi) = self.z_domain();
        if z >= lo && z <= hi {
            Ok(())
        } else {
            Err(Error::domain("z", z, "[(eta-1)delta, (eta+1)delta]"))
        }
    }

    fn closed_form(&self) -> bool {
        self.integration == Integration::Auto && self.noise.is_uniform()
    }

    pub fn k_eta(&self, z: f64) -> Result<f64> {
        self.check_z(z)?;
        let d = self.noise.delta();
        let lower = z - self.threshold();
        if self.closed_form() {
            return Ok(((d - lower) / (2.0 * d)).clamp(0.0, 1.0));
        }
        match self.integration {
            Integration::Auto => Ok(1.0 - self.noise.cdf(lower)),
            Integration::Quadrature => {
                adaptive_simpson(|x| self.noise.pdf(x), lower, d, self.quad_tol).map(|v| v.clamp(0.0, 1.0))
            }
        }
    }

    pub fn nu_eta(&self, z: f64) -> Result<f64> {
        self.check_z(z)?;
        let d = self.noise.delta();
        let lower = z - self.threshold();
        if self.closed_form() {
            let a = d + z;
            let b = lower + z;
            return Ok(((a * a * a - b * b * b) / (6.0 * d)).max(0.0));
        }
        adaptive_simpson(
            |x| {
                let e = x + z;
                e * e * self.noise.pdf(x)
            },
            lower,
            d,
            self.quad_tol,
        )
        .map(|v| v.max(0.0))
    }

    /// Inverse of the strictly decreasing map `k`.
    pub fn k_inv(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain("q", q, "[0, 1]"));
        }
        let (lo, hi) = self.z_domain();
        if q == 1.0 {
            return Ok(lo);
        }
        if q == 0.0 {
            return Ok(hi);
        }
        if self.closed_form() {
            return Ok((hi - 2.0 * self.noise.delta() * q).clamp(lo, hi));
        }
        // k(z) = 1 - F(z - eta*delta); solve F(z - eta*delta) = 1 - q on the CDF
        // directly so that the quadrature path does not integrate 200 times.
        let t = self.threshold();
        let z = bisect_monotone(
            |z| self.noise.cdf(z - t),
            1.0 - q,
            lo,
            hi,
            true,
            K_INV_TOL,
            K_INV_MAX_ITER,
        );
        Ok(z.clamp(lo, hi))
    }

    /// `h(q) = nu(k^-1(q))`.
    pub fn h_eta(&self, q: f64) -> Result<f64> {
        let z = self.k_inv(q)?;
        let v = self.nu_eta(z)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("h({q}) is not finite")))
        }
    }

    /// Conditional MSE of a single atom at `z`: `nu(z) / (4 k(z))`.
    pub fn conditional_mse_atom(&self, z: f64) -> Result<f64> {
        let k = self.k_eta(z)?;
        if !(k > 0.0) {
            return Err(Error::UndefinedConditional("atom is never accepted (k = 0)"));
        }
        Ok(self.nu_eta(z)? / (4.0 * k))
    }
}
