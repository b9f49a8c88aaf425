//! Utilities of both players, the DC's optimal threshold and the adversary's
//! optimal atomic noise.

use crate::envelope::{Envelope, EnvelopeOptions, Support};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernel::KernelContext;
use crate::math::{abs, exp};
use crate::simulator::{AdversaryStrategy, DiscreteNoise};
use crate::tradeoff::{c_alpha, TradeoffCurve};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance for ties in every argmax / argmin.
pub const TIE_REL_TOL: f64 = 1e-9;
/// Pairs drawn by the utility monotonicity self-test.
pub const SELF_TEST_PAIRS: usize = 10_000;
const SELF_TEST_STEP: f64 = 1e-3;
const SELF_TEST_SEED: u64 = 0x005e_ed0f_ca11;

/// Adversary utility `Q_AD(mse, pa)`, strictly increasing in both arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum AdversaryUtility {
    /// `a * mse + b * pa`.
    WeightedSum { a: f64, b: f64 },
    /// `pa * (mse + c)`.
    ScaledProduct { c: f64 },
}

impl AdversaryUtility {
    pub fn eval(&self, mse: f64, pa: f64) -> f64 {
        match *self {
            AdversaryUtility::WeightedSum { a, b } => a * mse + b * pa,
            AdversaryUtility::ScaledProduct { c } => pa * (mse + c),
        }
    }

    /// Gradient `(dQ/dmse, dQ/dpa)`.
    pub fn gradient(&self, mse: f64, pa: f64) -> (f64, f64) {
        match *self {
            AdversaryUtility::WeightedSum { a, b } => (a, b),
            AdversaryUtility::ScaledProduct { c } => (pa, mse + c),
        }
    }

    fn check_params(&self) -> Result<()> {
        let ok = match *self {
            AdversaryUtility::WeightedSum { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            AdversaryUtility::ScaledProduct { c } => c > 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "adversary utility parameters must be > 0: {self:?}"
            )))
        }
    }
}

/// DC utility `Q_DC(mse, pa)`, non-increasing in `mse`, non-decreasing in `pa`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum DcUtility {
    /// `pa - gamma * mse`.
    Linear { gamma: f64 },
    /// `pa * exp(-mse / s)`.
    Exponential { s: f64 },
}

impl DcUtility {
    pub fn eval(&self, mse: f64, pa: f64) -> f64 {
        match *self {
            DcUtility::Linear { gamma } => pa - gamma * mse,
            DcUtility::Exponential { s } => pa * exp(-mse / s),
        }
    }

    fn check_params(&self) -> Result<()> {
        let ok = match *self {
            DcUtility::Linear { gamma } => gamma > 0.0 && gamma.is_finite(),
            DcUtility::Exponential { s } => s > 0.0 && s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "dc utility parameters must be > 0: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    pub adversary: AdversaryUtility,
    pub dc: DcUtility,
}

impl UtilitySpec {
    /// Validates parameters and runs the monotonicity self-test on
    /// `[0, m_max] x [0, 1]`.
    pub fn new(adversary: AdversaryUtility, dc: DcUtility, m_max: f64) -> Result<Self> {
        adversary.check_params()?;
        dc.check_params()?;
        if !(m_max > 0.0 && m_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("m_max must be > 0, got {m_max}")));
        }
        let spec = UtilitySpec { adversary, dc };
        spec.self_test(m_max)?;
        Ok(spec)
    }

    fn self_test(&self, m_max: f64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(SELF_TEST_SEED);
        let eps = SELF_TEST_STEP;
        for _ in 0..SELF_TEST_PAIRS {
            let m = rng.random_range(0.0..m_max);
            let p = rng.random_range(0.0..1.0);
            let q = self.adversary.eval(m, p);
            let q_m = self.adversary.eval(m + eps, p);
            let q_p = self.adversary.eval(m, p + eps);
            if !(q_m > q && q_p > q) {
                return Err(Error::InvalidParameter(format!(
                    "adversary utility is not strictly increasing at (mse, pa) = ({m}, {p})"
                )));
            }
            let d = self.dc.eval(m, p);
            let d_m = self.dc.eval(m + eps, p);
            let d_p = self.dc.eval(m, p + eps);
            if d_m - d > 1e-12 || d - d_p > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "dc utility violates monotonicity at (mse, pa) = ({m}, {p})"
                )));
            }
        }
        Ok(())
    }

    pub fn adversary_utility(&self, mse: f64, pa: f64) -> Result<f64> {
        check_point(mse, pa)?;
        Ok(self.adversary.eval(mse, pa))
    }

    pub fn dc_utility(&self, mse: f64, pa: f64) -> Result<f64> {
        check_point(mse, pa)?;
        Ok(self.dc.eval(mse, pa))
    }
}

fn check_point(mse: f64, pa: f64) -> Result<()> {
    if !(mse >= 0.0) {
        return Err(Error::domain("mse", mse, "[0, inf)"));
    }
    if !(0.0..=1.0).contains(&pa) {
        return Err(Error::domain("pa", pa, "[0, 1]"));
    }
    Ok(())
}

/// `Q_AD(mse, pa)` for a validated spec.
pub fn eval_adversary_utility(spec: &UtilitySpec, mse: f64, pa: f64) -> Result<f64> {
    spec.adversary_utility(mse, pa)
}

fn within_tie(v: f64, best: f64) -> bool {
    abs(v - best) <= TIE_REL_TOL * abs(best).max(1.0)
}

/// Grid `alpha`s whose adversary utility `Q_AD(c(alpha), alpha)` ties the maximum.
pub fn best_alpha_set(env: &Envelope, spec: &UtilitySpec, alpha_grid: &GridSpec) -> Result<Vec<f64>> {
    let curve = TradeoffCurve::from_envelope(env.clone(), alpha_grid.points()?)?;
    best_alpha_set_on_curve(&curve, spec)
}

pub fn best_alpha_set_on_curve(curve: &TradeoffCurve, spec: &UtilitySpec) -> Result<Vec<f64>> {
    if let Some(a) = curve.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::domain("alpha", *a, "(0, 1]"));
    }
    let utils: Vec<f64> = curve.points().map(|(a, c)| spec.adversary.eval(c, a)).collect();
    let best = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Numerical(format!("adversary utility maximum is {best}")));
    }
    Ok(curve
        .alphas
        .iter()
        .zip(&utils)
        .filter(|(_, u)| within_tie(**u, best))
        .map(|(a, _)| *a)
        .collect())
}

/// Per-threshold summary of the follower's problem.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EtaRow {
    pub eta: f64,
    /// Best-response `alpha` set.
    pub best_alphas: Vec<f64>,
    /// Worst DC utility over the best-response set.
    pub dc_guaranteed_utility: f64,
    /// Adversary's maximal utility at this threshold.
    pub adversary_utility: f64,
    /// The `(mse, pa)` pair attaining `dc_guaranteed_utility`.
    pub mse: f64,
    pub pa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EquilibriumPoint {
    pub mse: f64,
    pub pa: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EquilibriumReport {
    pub eta_star: f64,
    pub equilibrium: EquilibriumPoint,
    pub dc_utility_at_eq: f64,
    pub adversary_utility_at_eq: f64,
    /// `eta_star` is the first or last grid point, so the true optimum may lie
    /// outside the searched range.
    pub on_grid_boundary: bool,
    pub per_eta: Vec<EtaRow>,
}

impl EquilibriumReport {
    pub fn row(&self, eta: f64) -> Option<&EtaRow> {
        self.per_eta.iter().find(|r| r.eta == eta)
    }
}

fn eta_row(ctx: &KernelContext, spec: &UtilitySpec, alphas: &[f64], opts: EnvelopeOptions) -> Result<EtaRow> {
    let env = Envelope::build_with(ctx, opts)?;
    let curve = TradeoffCurve::from_envelope(env, alphas.to_vec())?;
    let best_alphas = best_alpha_set_on_curve(&curve, spec)?;
    let mut worst: Option<(f64, f64, f64)> = None;
    for &a in &best_alphas {
        let c = c_alpha(&curve.envelope, a)?;
        let u = spec.dc.eval(c, a);
        if worst.is_none_or(|w| u < w.0) {
            worst = Some((u, c, a));
        }
    }
    let (dc, mse, pa) = worst.ok_or(Error::EmptyGrid("best-response set"))?;
    Ok(EtaRow {
        eta: ctx.eta(),
        best_alphas,
        dc_guaranteed_utility: dc,
        adversary_utility: spec.adversary.eval(mse, pa),
        mse,
        pa,
    })
}

/// Optimal DC threshold over the contexts' `eta` values.
///
/// For each `eta` the adversary's best-response set is computed on the
/// `alpha` grid; the DC's guaranteed utility is the worst `Q_DC` over that
/// set; `eta_star` maximizes it, with ties going to the smaller `eta`.
pub fn solve_equilibrium(
    ctxs: &[KernelContext],
    spec: &UtilitySpec,
    alpha_grid: &GridSpec,
    opts: EnvelopeOptions,
) -> Result<EquilibriumReport> {
    if ctxs.is_empty() {
        return Err(Error::EmptyGrid("eta grid"));
    }
    let alphas = alpha_grid.points()?;

    #[cfg(feature = "parallel")]
    let rows: Vec<EtaRow> = {
        use rayon::prelude::*;
        ctxs.par_iter()
            .map(|c| eta_row(c, spec, &alphas, opts))
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<EtaRow> = ctxs
        .iter()
        .map(|c| eta_row(c, spec, &alphas, opts))
        .collect::<Result<Vec<_>>>()?;

    let best = rows
        .iter()
        .map(|r| r.dc_guaranteed_utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let star = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| within_tie(r.dc_guaranteed_utility, best))
        .min_by(|a, b| a.1.eta.total_cmp(&b.1.eta))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical(format!("no finite DC utility (max {best})")))?;
    let r = &rows[star];
    let eta_min = rows.iter().map(|r| r.eta).fold(f64::INFINITY, f64::min);
    let eta_max = rows.iter().map(|r| r.eta).fold(f64::NEG_INFINITY, f64::max);
    Ok(EquilibriumReport {
        eta_star: r.eta,
        equilibrium: EquilibriumPoint { mse: r.mse, pa: r.pa },
        dc_utility_at_eq: r.dc_guaranteed_utility,
        adversary_utility_at_eq: r.adversary_utility,
        on_grid_boundary: rows.len() > 1 && (r.eta == eta_min || r.eta == eta_max),
        per_eta: rows,
    })
}

/// [`solve_equilibrium`] over `eta_grid` with the noise and tolerances of `base`.
pub fn solve_on_grid(
    base: &KernelContext,
    eta_grid: &GridSpec,
    spec: &UtilitySpec,
    alpha_grid: &GridSpec,
    opts: EnvelopeOptions,
) -> Result<EquilibriumReport> {
    let ctxs = eta_grid
        .points()?
        .into_iter()
        .map(|e| base.with_eta(e))
        .collect::<Result<Vec<_>>>()?;
    solve_equilibrium(&ctxs, spec, alpha_grid, opts)
}

/// Optimal single-node adversarial noise: two or four symmetric atoms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AtomicAdversary {
    /// `(location, weight)` pairs.
    pub atoms: Vec<(f64, f64)>,
    pub alpha: f64,
    pub eta: f64,
    /// Envelope touch points backing the atoms: `[alpha]` or `[q1, q2]`.
    pub touch_points: Vec<f64>,
}

impl AtomicAdversary {
    pub fn is_touch(&self) -> bool {
        self.atoms.len() == 2
    }

    /// `sum w k(|z|)`.
    pub fn achieved_pa(&self, ctx: &KernelContext) -> Result<f64> {
        self.atoms.iter().map(|&(z, w)| ctx.k_eta(abs(z)).map(|k| w * k)).sum()
    }

    /// `sum w nu(|z|) / (4 sum w k(|z|))`.
    pub fn achieved_mse(&self, ctx: &KernelContext) -> Result<f64> {
        let pa = self.achieved_pa(ctx)?;
        if !(pa > 0.0) {
            return Err(Error::UndefinedConditional("adversary is never accepted"));
        }
        let num: Result<f64> = self.atoms.iter().map(|&(z, w)| ctx.nu_eta(abs(z)).map(|v| w * v)).sum();
        Ok(num? / (4.0 * pa))
    }

    pub fn noise(&self) -> DiscreteNoise {
        // Atom weights are validated at construction.
        DiscreteNoise::new(self.atoms.clone()).expect("valid atomic adversary")
    }
}

/// Builds the adversary that attains `c(alpha)`.
///
/// Where the envelope touches `h` at `alpha` the atoms are `+-k^-1(alpha)`
/// with weight 1/2. Otherwise `alpha` lies on a chord `[q1, q2]` and the atoms
/// are `+-k^-1(q1)` with weight `(q2 - alpha) / (2 (q2 - q1))` and
/// `+-k^-1(q2)` with weight `(alpha - q1) / (2 (q2 - q1))`.
pub fn build_adversary(env: &Envelope, alpha: f64) -> Result<AtomicAdversary> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    let ctx = env.context();
    let (atoms, touch_points) = match env.supporting_chord(alpha)? {
        Support::Touch(q) => {
            let z = ctx.k_inv(q)?;
            (vec![(-z, 0.5), (z, 0.5)], vec![q])
        }
        Support::Chord(q1, q2) => {
            let z1 = ctx.k_inv(q1)?;
            let z2 = ctx.k_inv(q2)?;
            let b1 = (q2 - alpha) / (2.0 * (q2 - q1));
            let b2 = (alpha - q1) / (2.0 * (q2 - q1));
            (vec![(-z1, b1), (-z2, b2), (z1, b1), (z2, b2)], vec![q1, q2])
        }
    };
    Ok(AtomicAdversary {
        atoms,
        alpha,
        eta: ctx.eta(),
        touch_points,
    })
}

/// Every adversarial node reports the same draw from `fstar`.
pub fn replicate_gstar(fstar: &AtomicAdversary, n_nodes: usize) -> Result<AdversaryStrategy> {
    if n_nodes < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 nodes, got {n_nodes}")));
    }
    Ok(AdversaryStrategy::replicated(fstar.noise(), n_nodes - 1))
}
