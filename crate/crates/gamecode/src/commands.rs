//! One function per CLI command. Each writes its artifacts plus
//! `resolved_config.json` and reports whether every check it ran passed.

use crate::config::Run;
use crate::error::{CliError, Result};
use crate::output::{Output, Stamp};
use gamecode_core::envelope::Envelope;
use gamecode_core::simulator::{run_monte_carlo, IidAtomic, SimulationResult};
use gamecode_core::strategy::{best_alpha_set, build_adversary, replicate_gstar, solve_equilibrium};
use gamecode_core::tradeoff::{c_alpha, c_limit_at_zero, OracleTable, ALPHA_MIN};
use gamecode_core::{AdversaryStrategy, AtomicAdversary, DiscreteNoise, EquilibriumReport, GridSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Largest accepted `|c_formula - c_oracle| / max(1, c_formula)`.
pub const ORACLE_REL_TOL: f64 = 5e-3;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const NOISE_VALIDATION: &str = "noise_validation.json";
pub const TRADEOFF_CSV: &str = "tradeoff.csv";
pub const ENVELOPE_CSV: &str = "envelope.csv";
pub const TRADEOFF_SUMMARY: &str = "tradeoff_summary.json";
pub const EQUILIBRIUM_JSON: &str = "equilibrium.json";
pub const DC_UTILITY_CSV: &str = "dc_utility.csv";
pub const ADVERSARY_JSON: &str = "adversary.json";
pub const SIMULATION_JSON: &str = "simulation.json";
pub const SIMULATIONS_CSV: &str = "simulations.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_REPORT: &str = "sweep_report.json";
pub const VERIFY_REPORT: &str = "verify_report.json";

/// Result of a command: `ok` is false when a check it ran failed.
#[derive(Debug)]
pub struct Outcome {
    pub ok: bool,
    pub output: Output,
}

pub(crate) fn stamp(run: &Run) -> Stamp {
    Stamp {
        config_hash: run.hash.clone(),
        seed: run.seed(),
    }
}

fn open(run: &Run, dir: &Path) -> Result<Output> {
    let mut out = Output::create(dir)?;
    out.json(RESOLVED_CONFIG, &run.config)?;
    Ok(out)
}

fn flag_error(flag: &str, message: String) -> CliError {
    CliError::input("command line", format!("/{flag}"), message)
}

fn check_eta_flag(eta: f64) -> Result<f64> {
    if eta.is_finite() && eta >= crate::config::ETA_MIN {
        Ok(eta)
    } else {
        Err(flag_error(
            "eta",
            format!("eta = {eta} violates the model constraint eta >= 2"),
        ))
    }
}

fn check_alpha_flag(alpha: f64) -> Result<f64> {
    if (ALPHA_MIN..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(flag_error("alpha", format!("alpha = {alpha} outside [{ALPHA_MIN}, 1]")))
    }
}

pub fn validate_noise(run: &Run, dir: &Path) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        stamp: Stamp,
        passed: bool,
        #[serde(flatten)]
        report: &'a gamecode_core::ValidationReport,
    }
    let mut out = open(run, dir)?;
    let report = run.noise.validate();
    let passed = report.passed();
    out.json(
        NOISE_VALIDATION,
        &Doc {
            stamp: stamp(run),
            passed,
            report: &report,
        },
    )?;
    Ok(Outcome {
        ok: passed,
        output: out,
    })
}

#[derive(Debug, Serialize)]
struct TradeoffRow {
    alpha: f64,
    c_formula: f64,
    c_oracle: f64,
    abs_diff: f64,
}

#[derive(Debug, Serialize)]
struct EnvelopeRow {
    q: f64,
    h: f64,
    h_star: f64,
    is_touch: bool,
}

#[derive(Debug, Serialize)]
struct TradeoffSummary {
    #[serde(flatten)]
    stamp: Stamp,
    eta: f64,
    noise: &'static str,
    alpha_count: usize,
    oracle_grid_size: usize,
    max_abs_diff: f64,
    max_relative_deviation: f64,
    tolerance: f64,
    within_tolerance: bool,
    c_limit_at_zero: f64,
    chords: Vec<(f64, f64)>,
}

fn write_tradeoff(run: &Run, out: &mut Output, env: &Envelope, alphas: &[f64]) -> Result<bool> {
    let ctx = env.context();
    let table = OracleTable::new(ctx, run.config.oracle.grid_size)?;
    let mut rows = Vec::with_capacity(alphas.len());
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for &a in alphas {
        let c = c_alpha(env, a)?;
        let o = table.best(a)?.value;
        let d = (c - o).abs();
        max_abs = max_abs.max(d);
        max_rel = max_rel.max(d / c.max(1.0));
        rows.push(TradeoffRow {
            alpha: a,
            c_formula: c,
            c_oracle: o,
            abs_diff: d,
        });
    }
    out.csv(TRADEOFF_CSV, rows)?;
    let env_rows: Vec<EnvelopeRow> = env
        .source()
        .iter()
        .map(|&(q, h)| {
            Ok(EnvelopeRow {
                q,
                h,
                h_star: env.eval(q)?,
                is_touch: env.touches(q, h),
            })
        })
        .collect::<Result<_>>()?;
    out.csv(ENVELOPE_CSV, env_rows)?;
    let within = max_rel <= ORACLE_REL_TOL;
    out.json(
        TRADEOFF_SUMMARY,
        &TradeoffSummary {
            stamp: stamp(run),
            eta: ctx.eta(),
            noise: ctx.noise().kind().name(),
            alpha_count: alphas.len(),
            oracle_grid_size: run.config.oracle.grid_size,
            max_abs_diff: max_abs,
            max_relative_deviation: max_rel,
            tolerance: ORACLE_REL_TOL,
            within_tolerance: within,
            c_limit_at_zero: c_limit_at_zero(env),
            chords: env.chords(),
        },
    )?;
    Ok(within)
}

pub fn tradeoff(run: &Run, dir: &Path, eta: Option<f64>, alphas: Option<&GridSpec>) -> Result<Outcome> {
    let eta = match eta {
        Some(e) => check_eta_flag(e)?,
        None => run.eta_points[0],
    };
    let alphas = match alphas {
        Some(g) => {
            let pts = g.points().map_err(|e| flag_error("alphas", e.to_string()))?;
            for &a in &pts {
                check_alpha_flag(a)
                    .map_err(|_| flag_error("alphas", format!("alpha = {a} outside [{ALPHA_MIN}, 1]")))?;
            }
            pts
        }
        None => run.alpha_points.clone(),
    };
    let mut out = open(run, dir)?;
    let env = Envelope::build_with(&run.kernel(eta)?, run.config.envelope)?;
    let ok = write_tradeoff(run, &mut out, &env, &alphas)?;
    Ok(Outcome { ok, output: out })
}

fn equilibrium(run: &Run) -> Result<EquilibriumReport> {
    let ctxs = run
        .eta_points
        .iter()
        .map(|&e| run.kernel(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(solve_equilibrium(
        &ctxs,
        &run.spec,
        &GridSpec::values(run.alpha_points.clone()),
        run.config.envelope,
    )?)
}

#[derive(Debug, Serialize)]
struct DcUtilityRow {
    eta: f64,
    dc_guaranteed_utility: f64,
}

fn write_equilibrium(run: &Run, out: &mut Output, report: &EquilibriumReport) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        stamp: Stamp,
        #[serde(flatten)]
        report: &'a EquilibriumReport,
    }
    out.json(
        EQUILIBRIUM_JSON,
        &Doc {
            stamp: stamp(run),
            report,
        },
    )?;
    out.csv(
        DC_UTILITY_CSV,
        report.per_eta.iter().map(|r| DcUtilityRow {
            eta: r.eta,
            dc_guaranteed_utility: r.dc_guaranteed_utility,
        }),
    )?;
    Ok(())
}

pub fn solve(run: &Run, dir: &Path) -> Result<Outcome> {
    let mut out = open(run, dir)?;
    let report = equilibrium(run)?;
    write_equilibrium(run, &mut out, &report)?;
    Ok(Outcome { ok: true, output: out })
}

/// Threshold, envelope and target acceptances a command operates at.
struct OperatingPoint {
    eta: f64,
    alphas: Vec<f64>,
    envelope: Envelope,
    equilibrium: Option<EquilibriumReport>,
}

/// `eta` is the flag, else `simulation.eta`, else the equilibrium threshold.
/// The targets are the flag, else `simulation.alpha`, else the adversary's
/// best-response set at that threshold.
fn operating_point(run: &Run, eta: Option<f64>, alpha: Option<f64>) -> Result<OperatingPoint> {
    let eta = eta.map(check_eta_flag).transpose()?;
    let alpha = alpha.map(check_alpha_flag).transpose()?;
    let (eta, equilibrium) = match eta.or(run.config.simulation.eta) {
        Some(e) => (e, None),
        None => {
            let r = equilibrium(run)?;
            (r.eta_star, Some(r))
        }
    };
    let envelope = Envelope::build_with(&run.kernel(eta)?, run.config.envelope)?;
    let alphas = match alpha.or(run.config.simulation.alpha) {
        Some(a) => vec![a],
        None => match equilibrium.as_ref().and_then(|r| r.row(eta)) {
            Some(row) => row.best_alphas.clone(),
            None => best_alpha_set(&envelope, &run.spec, &GridSpec::values(run.alpha_points.clone()))?,
        },
    };
    Ok(OperatingPoint {
        eta,
        alphas,
        envelope,
        equilibrium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: f64,
    pub weight: f64,
}

#[derive(Debug, Serialize)]
struct AdversaryDoc {
    #[serde(flatten)]
    stamp: Stamp,
    eta: f64,
    alpha: f64,
    regime: &'static str,
    atoms: Vec<Atom>,
    touch_points: Vec<f64>,
    achieved_pa: f64,
    achieved_mse: f64,
    c_alpha: f64,
}

fn adversary_doc(run: &Run, env: &Envelope, adv: &AtomicAdversary) -> Result<AdversaryDoc> {
    let ctx = env.context();
    Ok(AdversaryDoc {
        stamp: stamp(run),
        eta: adv.eta,
        alpha: adv.alpha,
        regime: if adv.is_touch() { "touch" } else { "chord" },
        atoms: adv.atoms.iter().map(|&(z, weight)| Atom { z, weight }).collect(),
        touch_points: adv.touch_points.clone(),
        achieved_pa: adv.achieved_pa(ctx)?,
        achieved_mse: adv.achieved_mse(ctx)?,
        c_alpha: c_alpha(env, adv.alpha)?,
    })
}

pub fn adversary(run: &Run, dir: &Path, eta: Option<f64>, alpha: Option<f64>) -> Result<Outcome> {
    let op = operating_point(run, eta, alpha)?;
    let mut out = open(run, dir)?;
    let adv = build_adversary(&op.envelope, op.alphas[0])?;
    out.json(ADVERSARY_JSON, &adversary_doc(run, &op.envelope, &adv)?)?;
    Ok(Outcome { ok: true, output: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One draw shared by all adversarial nodes.
    #[default]
    Replicated,
    /// Independent draws per adversarial node.
    Iid,
}

/// Adversary file accepted by `simulate --adversary`. The output of the
/// `adversary` command is a valid instance; extra keys are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct AdversaryFile {
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
}

pub fn read_adversary(path: &Path) -> Result<(AdversaryFile, DiscreteNoise)> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let file: AdversaryFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let pointer = crate::config::json_pointer(e.path());
        CliError::input(&label, pointer, e.into_inner().to_string())
    })?;
    let noise = DiscreteNoise::new(file.atoms.iter().map(|a| (a.z, a.weight)).collect())
        .map_err(|e| CliError::input(&label, "/atoms", e.to_string()))?;
    if let Some(e) = file.eta {
        if !(e.is_finite() && e >= crate::config::ETA_MIN) {
            return Err(CliError::input(
                &label,
                "/eta",
                format!("eta = {e} violates the model constraint eta >= 2"),
            ));
        }
    }
    Ok((file, noise))
}

fn strategy(noise: DiscreteNoise, mode: Mode, n_nodes: usize) -> AdversaryStrategy {
    match mode {
        Mode::Replicated => AdversaryStrategy::replicated(noise, n_nodes - 1),
        Mode::Iid => AdversaryStrategy::custom(IidAtomic {
            noise,
            arity: n_nodes - 1,
        }),
    }
}

/// One simulated game. Also the row format of `simulations.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub eta: f64,
    pub alpha: Option<f64>,
    pub pa_hat: f64,
    pub mse_hat: Option<f64>,
    pub pa_stderr: f64,
    pub mse_stderr: Option<f64>,
    pub seed: u64,
}

impl SimRow {
    fn new(n_nodes: usize, eta: f64, alpha: Option<f64>, seed: u64, r: &SimulationResult) -> Self {
        SimRow {
            n_nodes,
            eta,
            alpha,
            pa_hat: r.pa_hat,
            mse_hat: r.mse_hat,
            pa_stderr: r.pa_stderr,
            mse_stderr: r.mse_stderr,
            seed,
        }
    }
}

pub struct SimulateArgs<'a> {
    pub adversary: Option<&'a Path>,
    pub nodes: Option<usize>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
}

pub fn simulate(run: &Run, dir: &Path, args: SimulateArgs<'_>) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Doc {
        #[serde(flatten)]
        stamp: Stamp,
        n_nodes: usize,
        eta: f64,
        alpha: Option<f64>,
        adversary: String,
        mode: Mode,
        result: SimulationResult,
    }
    let n = args.nodes.unwrap_or(run.config.simulation.n_nodes[0]);
    if n < 2 {
        return Err(flag_error("nodes", "every game needs N >= 2 nodes".into()));
    }
    let (eta, alpha, source, mode, adv) = match args.adversary {
        Some(path) => {
            let (file, noise) = read_adversary(path)?;
            let eta = match args
                .eta
                .map(check_eta_flag)
                .transpose()?
                .or(run.config.simulation.eta)
                .or(file.eta)
            {
                Some(e) => e,
                None => operating_point(run, None, None)?.eta,
            };
            let alpha = args.alpha.or(file.alpha);
            (
                eta,
                alpha,
                format!("file:{}", path.display()),
                file.mode,
                strategy(noise, file.mode, n),
            )
        }
        None => {
            let op = operating_point(run, args.eta, args.alpha)?;
            let fstar = build_adversary(&op.envelope, op.alphas[0])?;
            let g = replicate_gstar(&fstar, n)?;
            (op.eta, Some(op.alphas[0]), "optimal".to_string(), Mode::Replicated, g)
        }
    };
    let mut out = open(run, dir)?;
    let seed = run.seed();
    let result = run_monte_carlo(&run.game(n, eta, run.config.simulation.trials, seed)?, &adv)?;
    out.json(
        SIMULATION_JSON,
        &Doc {
            stamp: stamp(run),
            n_nodes: n,
            eta,
            alpha,
            adversary: source,
            mode,
            result,
        },
    )?;
    out.append_csv(SIMULATIONS_CSV, SimRow::new(n, eta, alpha, seed, &result))?;
    Ok(Outcome { ok: true, output: out })
}

pub fn verify(run: &Run, dir: &Path) -> Result<Outcome> {
    let mut out = open(run, dir)?;
    let report = crate::verify::run_suites(run)?;
    out.json(VERIFY_REPORT, &report)?;
    Ok(Outcome {
        ok: report.exact_passed,
        output: out,
    })
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    alpha: f64,
    c_alpha: f64,
    /// Largest pairwise `|difference| / combined stderr` across node counts.
    max_pa_z: f64,
    max_mse_z: Option<f64>,
    /// Both maxima are within 4 combined standard errors.
    node_invariant: bool,
    rows: Vec<SimRow>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    #[serde(flatten)]
    stamp: Stamp,
    eta: f64,
    eta_star: Option<f64>,
    equilibrium: Option<gamecode_core::strategy::EquilibriumPoint>,
    alphas: Vec<f64>,
    n_nodes: Vec<usize>,
    trials: u64,
    tradeoff_within_tolerance: bool,
    points: Vec<SweepPoint>,
}

fn max_z(rows: &[(f64, f64)]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let se = a.1.hypot(b.1);
            let d = (a.0 - b.0).abs();
            worst = worst.max(if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }
    worst
}

/// Tradeoff, equilibrium, adversary and one simulation per `(N, alpha)`.
/// Row `i` (alpha-major, then node count) uses seed `simulation.seed + i`.
pub fn sweep(run: &Run, dir: &Path) -> Result<Outcome> {
    let op = operating_point(run, None, None)?;
    let mut out = open(run, dir)?;
    let tradeoff_ok = write_tradeoff(run, &mut out, &op.envelope, &run.alpha_points)?;
    if let Some(r) = &op.equilibrium {
        write_equilibrium(run, &mut out, r)?;
    }
    let first = build_adversary(&op.envelope, op.alphas[0])?;
    out.json(ADVERSARY_JSON, &adversary_doc(run, &op.envelope, &first)?)?;

    let sim = &run.config.simulation;
    let mut all_rows = Vec::new();
    let mut points = Vec::new();
    let mut index = 0u64;
    for &alpha in &op.alphas {
        let fstar = build_adversary(&op.envelope, alpha)?;
        let mut rows = Vec::new();
        let mut results = Vec::new();
        for &n in &sim.n_nodes {
            let seed = sim.seed.wrapping_add(index);
            index += 1;
            let r = run_monte_carlo(&run.game(n, op.eta, sim.trials, seed)?, &replicate_gstar(&fstar, n)?)?;
            rows.push(SimRow::new(n, op.eta, Some(alpha), seed, &r));
            results.push(r);
        }
        let pa: Vec<(f64, f64)> = results.iter().map(|r| (r.pa_hat, r.pa_stderr)).collect();
        let mse: Option<Vec<(f64, f64)>> = results.iter().map(|r| Some((r.mse_hat?, r.mse_stderr?))).collect();
        let max_pa_z = max_z(&pa);
        let max_mse_z = mse.map(|m| max_z(&m));
        all_rows.extend(rows.iter().cloned());
        points.push(SweepPoint {
            alpha,
            c_alpha: c_alpha(&op.envelope, alpha)?,
            max_pa_z,
            max_mse_z,
            node_invariant: max_pa_z <= 4.0 && max_mse_z.is_some_and(|z| z <= 4.0),
            rows,
        });
    }
    out.csv(SWEEP_CSV, all_rows)?;
    let ok = tradeoff_ok && points.iter().all(|p| p.node_invariant);
    out.json(
        SWEEP_REPORT,
        &SweepReport {
            stamp: stamp(run),
            eta: op.eta,
            eta_star: op.equilibrium.as_ref().map(|r| r.eta_star),
            equilibrium: op.equilibrium.as_ref().map(|r| r.equilibrium),
            alphas: op.alphas.clone(),
            n_nodes: sim.n_nodes.clone(),
            trials: sim.trials,
            tradeoff_within_tolerance: tradeoff_ok,
            points,
        },
    )?;
    Ok(Outcome { ok, output: out })
}

/// Parses `start:stop:step` or a comma-separated list into a grid.
pub fn parse_grid(spec: &str) -> std::result::Result<GridSpec, String> {
    let s = spec.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got {spec:?}"));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        Ok(GridSpec::range(num(parts[0])?, num(parts[1])?, num(parts[2])?))
    } else {
        let values = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(GridSpec::values(values))
    }
}
