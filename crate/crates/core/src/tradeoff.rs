//! The adversary's optimal MSE / acceptance trade-off.
//!
//! `c(alpha)` is the largest MSE an adversary can force while keeping the
//! acceptance probability at least `alpha`. It equals `h*(alpha) / (4 alpha)`
//! for the concave envelope `h*`, whatever the number of adversarial nodes;
//! [`oracle_c2`] recomputes it for the two-node game by exhaustive search
//! over atomic adversaries without going through the envelope.

use crate::envelope::{Envelope, EnvelopeOptions};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernel::KernelContext;
use crate::math::{abs, exp};
use crate::quad::adaptive_simpson;
use alloc::format;
use alloc::vec::Vec;

/// Smallest `alpha` reported on a curve.
pub const ALPHA_MIN: f64 = 1e-3;
pub const DEFAULT_ORACLE_GRID: usize = 2048;
pub const MIN_ORACLE_GRID: usize = 64;

/// `c(alpha) = h*(alpha) / (4 alpha)`.
///
/// The sampled hull and `h` itself both lie below the true envelope, so
/// their maximum is used: exact where the envelope touches `h`, and free of
/// the interpolation sag that dividing by a small `alpha` would amplify.
pub fn c_alpha(env: &Envelope, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    let h_star = env.eval(alpha)?.max(env.context().h_eta(alpha)?);
    Ok(h_star / (4.0 * alpha))
}

/// `lim c(alpha)` as `alpha -> 0`. Diagnostic only, never a curve point.
pub fn c_limit_at_zero(env: &Envelope) -> f64 {
    env.slope_at_zero() / 4.0
}

/// `c` sampled on an `alpha` grid. Carries no node count: the curve is the
/// same for every `N >= 2`.
#[derive(Debug, Clone)]
pub struct TradeoffCurve {
    pub eta: f64,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub envelope: Envelope,
}

impl TradeoffCurve {
    pub fn build(ctx: &KernelContext, alpha_grid: &GridSpec, opts: EnvelopeOptions) -> Result<Self> {
        let alphas = alpha_grid.points()?;
        if let Some(a) = alphas.iter().find(|a| !(**a >= ALPHA_MIN && **a <= 1.0)) {
            return Err(Error::domain("alpha", *a, "[1e-3, 1]"));
        }
        let envelope = Envelope::build_with(ctx, opts)?;
        Self::from_envelope(envelope, alphas)
    }

    pub fn from_envelope(envelope: Envelope, alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyGrid("alpha grid"));
        }
        let values = alphas
            .iter()
            .map(|&a| c_alpha(&envelope, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(TradeoffCurve {
            eta: envelope.context().eta(),
            alphas,
            values,
            envelope,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.alphas.iter().copied().zip(self.values.iter().copied())
    }
}

/// Acceptance probability of a single adversarial report at offset `z`
/// (any real) in the two-node game: `P[|z - n_h| <= eta * delta]`.
///
/// Equals `k(z)` on the kernel domain, `1` for `|z| <= (eta - 1) delta` and
/// `0` beyond `(eta + 1) delta`. Computed by quadrature of the density.
pub fn accept_mass(ctx: &KernelContext, z: f64) -> Result<f64> {
    let (lo, hi) = accept_interval(ctx, z);
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive_simpson(|x| ctx.noise().pdf(x), lo, hi, ctx.quad_tol()).map(|v| v.clamp(0.0, 1.0))
}

/// `E[(n_h + z)^2 ; accepted]` for a single report at offset `z`; four times
/// the accepted squared midrange error. Equals `nu(z)` on the kernel domain.
pub fn error_mass(ctx: &KernelContext, z: f64) -> Result<f64> {
    let (lo, hi) = accept_interval(ctx, z);
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive_simpson(
        |x| {
            let e = x + z;
            e * e * ctx.noise().pdf(x)
        },
        lo,
        hi,
        ctx.quad_tol(),
    )
    .map(|v| v.max(0.0))
}

fn accept_interval(ctx: &KernelContext, z: f64) -> (f64, f64) {
    let d = ctx.delta();
    let t = ctx.threshold();
    ((z - t).max(-d), (z + t).min(d))
}

/// Acceptance and error masses of candidate atom locations.
#[derive(Debug, Clone)]
pub struct OracleTable {
    pub zs: Vec<f64>,
    pub accept: Vec<f64>,
    pub error: Vec<f64>,
}

/// Best atomic adversary found by the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    /// Maximum conditional MSE subject to acceptance probability `>= alpha`.
    pub value: f64,
    /// Achieved acceptance probability.
    pub pa: f64,
    /// `(z, weight)` of the one or two atoms attaining it.
    pub atoms: Vec<(f64, f64)>,
}

impl OracleTable {
    /// `grid_size` atom locations spaced uniformly over `[0, (eta + 1) delta]`.
    /// Negative locations are not needed: both masses are even in `z`.
    pub fn new(ctx: &KernelContext, grid_size: usize) -> Result<Self> {
        if grid_size < MIN_ORACLE_GRID {
            return Err(Error::InvalidParameter(format!(
                "oracle grid_size must be >= {MIN_ORACLE_GRID}, got {grid_size}"
            )));
        }
        let top = (ctx.eta() + 1.0) * ctx.delta();
        let zs = (0..grid_size)
            .map(|i| top * i as f64 / (grid_size - 1) as f64)
            .collect();
        Self::from_points(ctx, zs)
    }

    pub fn from_points(ctx: &KernelContext, zs: Vec<f64>) -> Result<Self> {
        let accept = zs.iter().map(|&z| accept_mass(ctx, z)).collect::<Result<Vec<_>>>()?;
        let error = zs.iter().map(|&z| error_mass(ctx, z)).collect::<Result<Vec<_>>>()?;
        Ok(OracleTable { zs, accept, error })
    }

    /// Keeps only the locations satisfying `keep`.
    pub fn filtered(&self, keep: impl Fn(f64) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.zs.len()).filter(|&i| keep(self.zs[i])).collect();
        OracleTable {
            zs: idx.iter().map(|&i| self.zs[i]).collect(),
            accept: idx.iter().map(|&i| self.accept[i]).collect(),
            error: idx.iter().map(|&i| self.error[i]).collect(),
        }
    }

    /// Conditional MSE `sum w e / (4 sum w k)` and acceptance `sum w k` of a
    /// mixture over table indices.
    pub fn mixture(&self, atoms: &[(usize, f64)]) -> (f64, f64) {
        let pa: f64 = atoms.iter().map(|&(i, w)| w * self.accept[i]).sum();
        let num: f64 = atoms.iter().map(|&(i, w)| w * self.error[i]).sum();
        (if pa > 0.0 { num / (4.0 * pa) } else { f64::NAN }, pa)
    }

    /// Maximizes the conditional MSE over all single atoms and all atom
    /// pairs subject to acceptance `>= alpha`.
    ///
    /// The objective is a ratio of linear forms in the weights, so over any
    /// segment of mixtures it is monotone and its constrained maximum sits at
    /// a single atom or at the pair mixture where the constraint binds.
    pub fn best(&self, alpha: f64) -> Result<OracleOptimum> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain("alpha", alpha, "(0, 1]"));
        }
        let n = self.zs.len();
        let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
        for i in 0..n {
            let k = self.accept[i];
            if k >= alpha && k > 0.0 {
                let v = self.error[i] / (4.0 * k);
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, alloc::vec![(i, 1.0)]));
                }
            }
        }
        let low: Vec<usize> = (0..n).filter(|&i| self.accept[i] < alpha).collect();
        let high: Vec<usize> = (0..n).filter(|&i| self.accept[i] > alpha).collect();
        let pair = best_pair(self, &low, &high, alpha);
        if let Some((v, i, j, t)) = pair {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, alloc::vec![(i, t), (j, 1.0 - t)]));
            }
        }
        let (value, atoms) = best.ok_or(Error::UndefinedConditional("no atom is ever accepted"))?;
        let (_, pa) = self.mixture(&atoms);
        Ok(OracleOptimum {
            value,
            pa,
            atoms: atoms.into_iter().map(|(i, w)| (self.zs[i], w)).collect(),
        })
    }
}

/// `(value, low index, high index, weight on low)` of the best binding pair.
fn best_pair(t: &OracleTable, low: &[usize], high: &[usize], alpha: f64) -> Option<(f64, usize, usize, f64)> {
    let scan = |&j: &usize| -> Option<(f64, usize, usize, f64)> {
        let (kj, ej) = (t.accept[j], t.error[j]);
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for &i in low {
            let (ki, ei) = (t.accept[i], t.error[i]);
            let w = (kj - alpha) / (kj - ki);
            let v = (w * ei + (1.0 - w) * ej) / (4.0 * alpha);
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, i, j, w));
            }
        }
        best
    };
    // Ties resolve to the earliest high index, so the reduction is order-free.
    let pick = |a: Option<(f64, usize, usize, f64)>, b: Option<(f64, usize, usize, f64)>| match (a, b) {
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.2 < x.2) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        high.par_iter().map(scan).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        high.iter().map(scan).fold(None, pick)
    }
}

/// Brute-force `c(alpha)` for the two-node game on a `grid_size`-point atom grid.
pub fn oracle_c2(ctx: &KernelContext, alpha: f64, grid_size: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    Ok(OracleTable::new(ctx, grid_size)?.best(alpha)?.value)
}

/// Random-restart local search over three-atom mixtures. Used to spot-check
/// that allowing a third atom never beats [`OracleTable::best`].
pub fn three_atom_search<R: rand::RngCore + ?Sized>(
    table: &OracleTable,
    alpha: f64,
    restarts: usize,
    steps: usize,
    rng: &mut R,
) -> Option<f64> {
    use rand::Rng;
    let n = table.zs.len();
    let score = |atoms: &[(usize, f64); 3]| -> Option<f64> {
        let (mse, pa) = table.mixture(atoms);
        (pa >= alpha && mse.is_finite()).then_some(mse)
    };
    let weights = |rng: &mut R| -> [f64; 3] {
        let e: [f64; 3] = core::array::from_fn(|_| -libm::log(1.0 - rng.random::<f64>()));
        let s = e[0] + e[1] + e[2];
        [e[0] / s, e[1] / s, e[2] / s]
    };
    let mut overall: Option<f64> = None;
    for _ in 0..restarts {
        let mut cur = None;
        for _ in 0..1000 {
            let w = weights(rng);
            let cand = [
                (rng.random_range(0..n), w[0]),
                (rng.random_range(0..n), w[1]),
                (rng.random_range(0..n), w[2]),
            ];
            if let Some(v) = score(&cand) {
                cur = Some((v, cand));
                break;
            }
        }
        let Some((mut val, mut atoms)) = cur else { continue };
        for s in 0..steps {
            let mut cand = atoms;
            let slot = rng.random_range(0..3);
            let span = ((n as f64) * exp(-(s as f64) / (steps as f64) * 4.0)).max(1.0) as i64;
            let shift = rng.random_range(-span..=span);
            cand[slot].0 = (cand[slot].0 as i64 + shift).clamp(0, n as i64 - 1) as usize;
            let other = (slot + 1 + rng.random_range(0..2)) % 3;
            let dw = rng.random_range(-0.1..0.1) * cand[slot].1.max(cand[other].1);
            cand[slot].1 = (cand[slot].1 + dw).max(0.0);
            cand[other].1 = (cand[other].1 - dw).max(0.0);
            let total = cand[0].1 + cand[1].1 + cand[2].1;
            if !(total > 0.0) {
                continue;
            }
            cand.iter_mut().for_each(|a| a.1 /= total);
            if let Some(v) = score(&cand) {
                if v > val {
                    val = v;
                    atoms = cand;
                }
            }
        }
        if overall.is_none_or(|o| val > o) {
            overall = Some(val);
        }
    }
    overall
}

/// Largest `|c(alpha) - oracle(alpha)| / max(1, c(alpha))` over `alphas`.
pub fn max_relative_deviation(env: &Envelope, table: &OracleTable, alphas: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &a in alphas {
        let c = c_alpha(env, a)?;
        let o = table.best(a)?.value;
        worst = worst.max(abs(c - o) / c.max(1.0));
    }
    Ok(worst)
}
