//! Monte Carlo simulation of the N-node game, plus per-realization checks
//! of the reductions that make the adversary's node count irrelevant.
//!
//! Node 0 is honest; nodes `1..N` report `u + n_a` with adversarial noise
//! drawn jointly from an [`AdversaryStrategy`]. The DC accepts iff the
//! reports' spread is at most `eta * delta` and then outputs their midrange.

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};
use crate::noise::{DataModel, HonestNoiseModel};
use crate::strategy::UtilitySpec;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trials per random substream. Part of the reproducibility contract: results
/// are a function of `(seed, trials, CHUNK_TRIALS)` only.
pub const CHUNK_TRIALS: u64 = 1 << 14;
/// Pilot draws used by [`condition_noncancelling`].
pub const PILOT_DRAWS: usize = 10_000;
/// Smallest pilot estimate of the conditioning event accepted.
pub const MIN_CONDITION_PROB: f64 = 1e-4;
/// Width of every statistical acceptance gate, in standard errors.
pub const SIGMA_GATE: f64 = 4.0;

/// DC accept rule: `max(y) - min(y) <= eta * delta`.
pub fn accept(y: &[f64], eta: f64, delta: f64) -> bool {
    spread(y) <= eta * delta
}

/// Midrange estimate `(max(y) + min(y)) / 2`.
pub fn estimate(y: &[f64]) -> f64 {
    let (lo, hi) = min_max(y);
    0.5 * (lo + hi)
}

fn min_max(y: &[f64]) -> (f64, f64) {
    y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn spread(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let (lo, hi) = min_max(y);
    hi - lo
}

/// Finitely supported noise law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiscreteNoise {
    atoms: Vec<(f64, f64)>,
    #[cfg_attr(feature = "serde", serde(skip))]
    cumulative: Vec<f64>,
}

impl DiscreteNoise {
    /// `(location, weight)` pairs; weights must be non-negative and sum to 1.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("discrete noise needs at least one atom".into()));
        }
        if atoms.iter().any(|&(z, w)| !z.is_finite() || !(w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("bad atom in {atoms:?}")));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if abs(total - 1.0) > 1e-9 {
            return Err(Error::InvalidParameter(format!("atom weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("non-empty") = f64::INFINITY;
        Ok(DiscreteNoise { atoms, cumulative })
    }

    pub fn point(z: f64) -> Self {
        Self::new(vec![(z, 1.0)]).expect("single unit atom")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn sample_one<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= p);
        self.atoms[i.min(self.atoms.len() - 1)].0
    }
}

/// Joint law of the `arity` adversarial noises.
pub trait JointSampler: fmt::Debug + Send + Sync {
    fn arity(&self) -> usize;

    /// Whether draws read the true value `u`. Such strategies fall outside the
    /// model (adversarial noise independent of `u`) and only run in
    /// exploratory mode.
    fn u_dependent(&self) -> bool {
        false
    }

    /// Fills `out` (length `arity`) with one joint draw.
    fn draw(&self, rng: &mut dyn RngCore, u: f64, out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub enum AdversaryStrategy {
    /// One draw from `noise` shared by all `arity` adversarial nodes.
    Replicated {
        noise: DiscreteNoise,
        arity: usize,
    },
    Custom(Arc<dyn JointSampler>),
}

impl AdversaryStrategy {
    pub fn replicated(noise: DiscreteNoise, arity: usize) -> Self {
        AdversaryStrategy::Replicated { noise, arity }
    }

    pub fn custom(sampler: impl JointSampler + 'static) -> Self {
        AdversaryStrategy::Custom(Arc::new(sampler))
    }

    /// Each adversarial node draws independently from `noise`.
    pub fn iid(noise: DiscreteNoise, arity: usize) -> Self {
        Self::custom(IidAtomic { noise, arity })
    }

    pub fn arity(&self) -> usize {
        match self {
            AdversaryStrategy::Replicated { arity, .. } => *arity,
            AdversaryStrategy::Custom(s) => s.arity(),
        }
    }

    pub fn u_dependent(&self) -> bool {
        match self {
            AdversaryStrategy::Replicated { .. } => false,
            AdversaryStrategy::Custom(s) => s.u_dependent(),
        }
    }

    pub fn draw(&self, rng: &mut dyn RngCore, u: f64, out: &mut [f64]) {
        match self {
            AdversaryStrategy::Replicated { noise, .. } => {
                let z = noise.sample_one(rng);
                out.iter_mut().for_each(|o| *o = z);
            }
            AdversaryStrategy::Custom(s) => s.draw(rng, u, out),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IidAtomic {
    pub noise: DiscreteNoise,
    pub arity: usize,
}

impl JointSampler for IidAtomic {
    fn arity(&self) -> usize {
        self.arity
    }

    fn draw(&self, rng: &mut dyn RngCore, _u: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = self.noise.sample_one(rng));
    }
}

/// I.i.d. `Unif[-half_width, half_width]` noises.
#[derive(Debug, Clone)]
pub struct IidUniform {
    pub half_width: f64,
    pub arity: usize,
}

impl JointSampler for IidUniform {
    fn arity(&self) -> usize {
        self.arity
    }

    fn draw(&self, rng: &mut dyn RngCore, _u: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            let p: f64 = rng.random();
            *o = self.half_width * (2.0 * p - 1.0);
        }
    }
}

/// Rejection sampler for `inner` conditioned on all pairwise spreads being
/// at most `limit`.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub inner: AdversaryStrategy,
    pub limit: f64,
}

impl JointSampler for Conditioned {
    fn arity(&self) -> usize {
        self.inner.arity()
    }

    fn u_dependent(&self) -> bool {
        self.inner.u_dependent()
    }

    fn draw(&self, rng: &mut dyn RngCore, u: f64, out: &mut [f64]) {
        loop {
            self.inner.draw(rng, u, out);
            if spread(out) <= self.limit {
                return;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub n_nodes: usize,
    pub eta: f64,
    pub data: DataModel,
    pub noise: HonestNoiseModel,
    pub trials: u64,
    pub seed: u64,
    /// Admit strategies that read `u`. Off for every invariant check.
    pub exploratory: bool,
}

impl GameConfig {
    pub fn new(n_nodes: usize, eta: f64, noise: HonestNoiseModel, trials: u64, seed: u64) -> Result<Self> {
        let data = DataModel::new(1000.0 * noise.delta(), noise.delta())?;
        let cfg = GameConfig {
            n_nodes,
            eta,
            data,
            noise,
            trials,
            seed,
            exploratory: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need N >= 2 nodes, got {}",
                self.n_nodes
            )));
        }
        if self.trials < 1 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 2.0) {
            return Err(Error::domain("eta", self.eta, "[2, inf)"));
        }
        Ok(())
    }

    pub fn with_nodes(&self, n_nodes: usize) -> Self {
        GameConfig {
            n_nodes,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GameConfig { seed, ..self.clone() }
    }

    pub fn with_trials(&self, trials: u64) -> Self {
        GameConfig { trials, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimulationResult {
    pub trials: u64,
    pub accepted_count: u64,
    pub pa_hat: f64,
    pub pa_stderr: f64,
    /// Mean squared midrange error over accepted trials; `None` when no
    /// trial was accepted.
    pub mse_hat: Option<f64>,
    pub mse_stderr: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ChunkStats {
    trials: u64,
    accepted: u64,
    mean: f64,
    m2: f64,
}

impl ChunkStats {
    fn push(&mut self, sq: f64) {
        self.accepted += 1;
        let d = sq - self.mean;
        self.mean += d / self.accepted as f64;
        self.m2 += d * (sq - self.mean);
    }

    fn merge(self, other: ChunkStats) -> ChunkStats {
        let n = self.accepted + other.accepted;
        let (mean, m2) = if n == 0 {
            (0.0, 0.0)
        } else {
            let d = other.mean - self.mean;
            let (na, nb) = (self.accepted as f64, other.accepted as f64);
            (
                self.mean + d * nb / n as f64,
                self.m2 + other.m2 + d * d * na * nb / n as f64,
            )
        };
        ChunkStats {
            trials: self.trials + other.trials,
            accepted: n,
            mean,
            m2,
        }
    }
}

/// RNG of substream `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_chunk(cfg: &GameConfig, adv: &AdversaryStrategy, index: u64, trials: u64) -> ChunkStats {
    let mut rng = substream(cfg.seed, index);
    let mut noises = vec![0.0; cfg.n_nodes];
    let mut y = vec![0.0; cfg.n_nodes];
    let threshold = cfg.eta * cfg.noise.delta();
    let mut stats = ChunkStats {
        trials,
        ..ChunkStats::default()
    };
    for _ in 0..trials {
        let u = cfg.data.sample_one(&mut rng);
        noises[0] = cfg.noise.sample_one(&mut rng);
        adv.draw(&mut rng, u, &mut noises[1..]);
        for (yi, n) in y.iter_mut().zip(&noises) {
            *yi = u + n;
        }
        if spread(&y) <= threshold {
            let err = estimate(&y) - u;
            debug_assert!({
                let (lo, hi) = min_max(&noises);
                abs(err - 0.5 * (lo + hi)) <= 1e-9 * (1.0 + abs(u))
            });
            stats.push(err * err);
        }
    }
    stats
}

/// Empirical acceptance probability and conditional MSE of `adv`.
///
/// Trials are split into [`CHUNK_TRIALS`]-sized chunks, each driven by its own
/// substream of `cfg.seed` and merged in chunk order, so the result is
/// bitwise identical for any number of worker threads.
pub fn run_monte_carlo(cfg: &GameConfig, adv: &AdversaryStrategy) -> Result<SimulationResult> {
    cfg.validate()?;
    if adv.arity() != cfg.n_nodes - 1 {
        return Err(Error::InvalidParameter(format!(
            "strategy drives {} nodes but the game has {} adversarial nodes",
            adv.arity(),
            cfg.n_nodes - 1
        )));
    }
    if adv.u_dependent() && !cfg.exploratory {
        return Err(Error::Refused(
            "strategy reads u; enable exploratory mode to simulate it".into(),
        ));
    }
    let chunks = cfg.trials.div_ceil(CHUNK_TRIALS);
    let size = |c: u64| CHUNK_TRIALS.min(cfg.trials - c * CHUNK_TRIALS);

    #[cfg(feature = "parallel")]
    let parts: Vec<ChunkStats> = {
        use rayon::prelude::*;
        (0..chunks)
            .into_par_iter()
            .map(|c| run_chunk(cfg, adv, c, size(c)))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<ChunkStats> = (0..chunks).map(|c| run_chunk(cfg, adv, c, size(c))).collect();

    let total = parts.into_iter().fold(ChunkStats::default(), ChunkStats::merge);
    let t = total.trials as f64;
    let pa = total.accepted as f64 / t;
    let (mse, mse_se) = match total.accepted {
        0 => (None, None),
        1 => (Some(total.mean), None),
        n => {
            let var = total.m2 / (n - 1) as f64;
            (Some(total.mean), Some(sqrt(var / n as f64)))
        }
    };
    Ok(SimulationResult {
        trials: total.trials,
        accepted_count: total.accepted,
        pa_hat: pa,
        pa_stderr: sqrt(pa * (1.0 - pa) / t),
        mse_hat: mse,
        mse_stderr: mse_se,
    })
}

/// Scenario 2 and 3 built from one realization of scenario 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReduction {
    /// Adversarial noise of largest magnitude, sign kept; first in index
    /// order on ties.
    pub n_abs: f64,
    /// Every adversarial noise replaced by `n_abs`.
    pub scenario2: Vec<f64>,
    /// Two-node game `(honest, n_abs)`.
    pub scenario3: (f64, f64),
}

pub fn scenario_reduce(honest_noise: f64, adv_noises: &[f64]) -> Result<ScenarioReduction> {
    let mut n_abs = *adv_noises
        .first()
        .ok_or_else(|| Error::InvalidParameter("no adversarial noises".into()))?;
    for &n in &adv_noises[1..] {
        if abs(n) > abs(n_abs) {
            n_abs = n;
        }
    }
    Ok(ScenarioReduction {
        n_abs,
        scenario2: vec![n_abs; adv_noises.len()],
        scenario3: (honest_noise, n_abs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioCheck {
    /// Adversarial spread exceeds `eta * delta`: outside the reduction's
    /// precondition.
    Skipped {
        adversarial_spread: f64,
    },
    Checked(ScenarioOutcome),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub accept1: bool,
    pub accept2: bool,
    pub accept3: bool,
    /// `|n_min + n_max|` of scenario 1 and scenario 2.
    pub error_sum1: f64,
    pub error_sum2: f64,
    /// Midrange errors of scenarios 2 and 3.
    pub error2: f64,
    pub error3: f64,
}

impl ScenarioOutcome {
    pub fn acceptance_equivalent(&self) -> bool {
        self.accept1 == self.accept2
    }

    pub fn ordering_holds(&self) -> bool {
        !self.accept1 || self.error_sum1 <= self.error_sum2
    }

    pub fn reduction_identical(&self) -> bool {
        self.accept2 == self.accept3 && self.error2 == self.error3
    }

    pub fn holds(&self) -> bool {
        self.acceptance_equivalent() && self.ordering_holds() && self.reduction_identical()
    }
}

impl ScenarioCheck {
    pub fn is_skipped(&self) -> bool {
        matches!(self, ScenarioCheck::Skipped { .. })
    }
}

/// Compares one realization against its replicated and two-node reductions.
pub fn check_scenario_equivalence(
    honest_noise: f64,
    adv_noises: &[f64],
    eta: f64,
    delta: f64,
) -> Result<ScenarioCheck> {
    let s = spread(adv_noises);
    if s > eta * delta {
        return Ok(ScenarioCheck::Skipped { adversarial_spread: s });
    }
    let red = scenario_reduce(honest_noise, adv_noises)?;
    let mut s1 = Vec::with_capacity(adv_noises.len() + 1);
    s1.push(honest_noise);
    s1.extend_from_slice(adv_noises);
    let mut s2 = Vec::with_capacity(s1.len());
    s2.push(honest_noise);
    s2.extend_from_slice(&red.scenario2);
    let s3 = [red.scenario3.0, red.scenario3.1];
    let sum = |v: &[f64]| {
        let (lo, hi) = min_max(v);
        abs(lo + hi)
    };
    Ok(ScenarioCheck::Checked(ScenarioOutcome {
        accept1: accept(&s1, eta, delta),
        accept2: accept(&s2, eta, delta),
        accept3: accept(&s3, eta, delta),
        error_sum1: sum(&s1),
        error_sum2: sum(&s2),
        error2: estimate(&s2),
        error3: estimate(&s3),
    }))
}

/// Restricts `adv` to draws whose pairwise spread is at most `eta * delta`.
///
/// Replicated strategies already satisfy this and are returned unchanged.
/// The conditioning event is estimated from [`PILOT_DRAWS`] draws (with
/// `u = 0`); below [`MIN_CONDITION_PROB`] the request is refused.
pub fn condition_noncancelling<R: RngCore + ?Sized>(
    adv: &AdversaryStrategy,
    eta: f64,
    delta: f64,
    rng: &mut R,
) -> Result<AdversaryStrategy> {
    if let AdversaryStrategy::Replicated { .. } = adv {
        return Ok(adv.clone());
    }
    let limit = eta * delta;
    let mut buf = vec![0.0; adv.arity()];
    let mut rng = rng;
    let mut hits = 0usize;
    for _ in 0..PILOT_DRAWS {
        adv.draw(&mut rng, 0.0, &mut buf);
        if spread(&buf) <= limit {
            hits += 1;
        }
    }
    let p = hits as f64 / PILOT_DRAWS as f64;
    if p < MIN_CONDITION_PROB {
        return Err(Error::Refused(format!(
            "pilot estimate of the non-cancelling event is {p:e} (< {MIN_CONDITION_PROB:e})"
        )));
    }
    Ok(AdversaryStrategy::custom(Conditioned {
        inner: adv.clone(),
        limit,
    }))
}

/// Adversary utility of one simulated strategy with its delta-method error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct UtilityEstimate {
    pub result: SimulationResult,
    pub utility: Option<f64>,
    pub utility_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DominanceReport {
    pub optimum: UtilityEstimate,
    pub candidates: Vec<UtilityEstimate>,
    /// Indices of candidates whose utility beats the optimum by more than the
    /// gate.
    pub violations: Vec<usize>,
    /// Indices of candidates never accepted (utility undefined).
    pub skipped: Vec<usize>,
}

fn estimate_utility(cfg: &GameConfig, spec: &UtilitySpec, adv: &AdversaryStrategy) -> Result<UtilityEstimate> {
    let result = run_monte_carlo(cfg, adv)?;
    let (utility, utility_stderr) = match (result.mse_hat, result.mse_stderr) {
        (Some(m), se) => {
            let (gm, gp) = spec.adversary.gradient(m, result.pa_hat);
            let sm = se.unwrap_or(0.0);
            (
                Some(spec.adversary.eval(m, result.pa_hat)),
                Some(sqrt(gm * gm * sm * sm + gp * gp * result.pa_stderr * result.pa_stderr)),
            )
        }
        (None, _) => (None, None),
    };
    Ok(UtilityEstimate {
        result,
        utility,
        utility_stderr,
    })
}

/// Simulates each candidate and the optimum (candidate `i` on seed
/// `cfg.seed + i + 1`) and flags any candidate whose empirical adversary
/// utility exceeds the optimum's by more than [`SIGMA_GATE`] combined
/// standard errors.
pub fn dominance_check(
    cfg: &GameConfig,
    spec: &UtilitySpec,
    candidates: &[AdversaryStrategy],
    optimum: &AdversaryStrategy,
) -> Result<DominanceReport> {
    let opt = estimate_utility(cfg, spec, optimum)?;
    let (ou, ose) = match (opt.utility, opt.utility_stderr) {
        (Some(u), se) => (u, se.unwrap_or(0.0)),
        _ => return Err(Error::UndefinedConditional("optimum is never accepted")),
    };
    let mut report = DominanceReport {
        optimum: opt,
        candidates: Vec::with_capacity(candidates.len()),
        violations: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, cand) in candidates.iter().enumerate() {
        let c = cfg.with_seed(cfg.seed.wrapping_add(i as u64 + 1));
        let est = estimate_utility(&c, spec, cand)?;
        match (est.utility, est.utility_stderr) {
            (Some(u), se) => {
                let cse = se.unwrap_or(0.0);
                let gate = SIGMA_GATE * sqrt(ose * ose + cse * cse);
                if u > ou + gate {
                    report.violations.push(i);
                }
            }
            _ => report.skipped.push(i),
        }
        report.candidates.push(est);
    }
    Ok(report)
}
