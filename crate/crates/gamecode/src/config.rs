//! Run configuration: JSON schema, defaults, validation and resolution.
//!
//! Every command works from a [`Run`], which holds the resolved
//! [`RunConfig`] together with the objects built from it. Validation errors
//! carry a JSON pointer into the input document.

use crate::error::{CliError, Result};
use gamecode_core::envelope::MIN_GRID_SIZE;
use gamecode_core::tradeoff::{ALPHA_MIN, DEFAULT_ORACLE_GRID, MIN_ORACLE_GRID};
use gamecode_core::{
    AdversaryUtility, DcUtility, EnvelopeOptions, GameConfig, GridSpec, HonestNoiseModel, KernelContext, UtilitySpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Keys a config file must contain.
pub const REQUIRED_KEYS: [&str; 2] = ["honest_noise", "utility"];
/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GAMECODE_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "gamecode-out";
/// Smallest admissible acceptance threshold multiplier.
pub const ETA_MIN: f64 = 2.0;
pub const BUILTIN_LABEL: &str = "<built-in default>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    Uniform,
    TruncatedNormal,
    Triangular,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindName,
    pub delta: f64,
    #[serde(default)]
    pub params: NoiseParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Standard deviation before truncation (`truncated_normal`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Two-column `x,pdf` CSV, relative to the config file (`tabulated`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Half-width of the uniform data prior. Defaults to `1000 * delta`.
    #[serde(default)]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub adversary: AdversaryUtility,
    pub dc: DcUtility,
    /// Upper MSE bound of the utility monotonicity self-test.
    #[serde(default = "default_m_max")]
    pub m_max: f64,
}

fn default_m_max() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub grid_size: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_size: DEFAULT_ORACLE_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_nodes: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    /// Threshold to simulate at. `None` uses the equilibrium threshold.
    pub eta: Option<f64>,
    /// Target acceptance. `None` uses the adversary's best responses.
    pub alpha: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_nodes: vec![2, 3, 5],
            trials: 200_000,
            seed: 1,
            eta: None,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub eta: f64,
    pub n_nodes: usize,
    pub trials: u64,
    pub scenario_realizations: usize,
    pub replicated_candidates: usize,
    pub iid_candidates: usize,
    pub achievability_alphas: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            eta: 2.0,
            n_nodes: 3,
            trials: 100_000,
            scenario_realizations: 100_000,
            replicated_candidates: 100,
            iid_candidates: 10,
            achievability_alphas: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub honest_noise: NoiseConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Shorthand for a one-point `eta_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub eta_grid: Option<GridSpec>,
    #[serde(default)]
    pub alpha_grid: Option<GridSpec>,
    pub utility: UtilityConfig,
    #[serde(default)]
    pub envelope: EnvelopeOptions,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_quad_tol() -> f64 {
    gamecode_core::kernel::DEFAULT_QUAD_TOL
}

/// Uniform noise with `delta = 1`, scaled-product adversary and linear DC.
pub fn builtin_default() -> Value {
    serde_json::json!({
        "honest_noise": { "kind": "uniform", "delta": 1.0 },
        "utility": {
            "adversary": { "family": "scaled_product", "c": 1.0 },
            "dc": { "family": "linear", "gamma": 0.5 }
        }
    })
}

/// A validated configuration and the model objects derived from it.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub label: String,
    pub noise: HonestNoiseModel,
    pub spec: UtilitySpec,
    pub eta_points: Vec<f64>,
    pub alpha_points: Vec<f64>,
    /// Hex SHA-256 of the resolved config without `output_dir`.
    pub hash: String,
}

impl Run {
    /// Threshold context at `eta` with the configured quadrature tolerance.
    pub fn kernel(&self, eta: f64) -> Result<KernelContext> {
        Ok(KernelContext::new(eta, self.noise.clone())?.with_quad_tol(self.config.quad_tol))
    }

    pub fn seed(&self) -> u64 {
        self.config.simulation.seed
    }

    pub fn game(&self, n_nodes: usize, eta: f64, trials: u64, seed: u64) -> Result<GameConfig> {
        let mut g = GameConfig::new(n_nodes, eta, self.noise.clone(), trials, seed)?;
        if let Some(m) = self.config.data.m {
            g.data = gamecode_core::DataModel::new(m, self.noise.delta())?;
        }
        Ok(g)
    }

    /// Output directory: `flag`, then the config's `output_dir`, then
    /// [`OUTPUT_DIR_ENV`], then [`DEFAULT_OUTPUT_DIR`].
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.config.output_dir {
            return PathBuf::from(p);
        }
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

/// Reads and validates the config at `path`.
pub fn parse_config(path: &Path) -> Result<Run> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::input(&label, "", format!("invalid JSON: {e}")))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    from_value(value, &label, &base)
}

/// Validates an already-parsed config document. Relative table paths are
/// resolved against `base_dir`.
pub fn from_value(value: Value, label: &str, base_dir: &Path) -> Result<Run> {
    let Some(obj) = value.as_object() else {
        return Err(CliError::input(label, "", "config must be a JSON object"));
    };
    let missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|k| !obj.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::input(
            label,
            "",
            format!(
                "missing required keys: {}; a config must contain {}",
                missing.join(", "),
                REQUIRED_KEYS.join(", ")
            ),
        ));
    }
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = json_pointer(e.path());
        CliError::input(label, pointer, e.into_inner().to_string())
    })?;
    resolve(config, label, base_dir)
}

pub(crate) fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn resolve(mut config: RunConfig, label: &str, base_dir: &Path) -> Result<Run> {
    let err = |pointer: &str, message: String| CliError::input(label, pointer, message);

    let noise = build_noise(&config.honest_noise, base_dir).map_err(|(p, m)| err(p, m))?;
    let delta = noise.delta();

    let m = config.data.m.unwrap_or(1000.0 * delta);
    gamecode_core::DataModel::new(m, delta).map_err(|e| err("/data/m", e.to_string()))?;
    config.data.m = Some(m);

    if let Some(eta) = config.eta {
        if config.eta_grid.is_some() {
            return Err(err("/eta", "give either eta or eta_grid, not both".into()));
        }
        check_eta(eta).map_err(|m| err("/eta", m))?;
        config.eta_grid = Some(GridSpec::values([eta]));
    }
    let eta_grid = config.eta_grid.get_or_insert_with(GridSpec::default_eta);
    let eta_points = eta_grid.points().map_err(|e| err("/eta_grid", e.to_string()))?;
    for (i, &e) in eta_points.iter().enumerate() {
        let pointer = match eta_grid {
            GridSpec::Range { .. } => "/eta_grid/start".to_string(),
            GridSpec::Values { .. } => format!("/eta_grid/values/{i}"),
        };
        check_eta(e).map_err(|m| err(&pointer, m))?;
    }

    let alpha_grid = config.alpha_grid.get_or_insert_with(GridSpec::default_alpha);
    let alpha_points = alpha_grid.points().map_err(|e| err("/alpha_grid", e.to_string()))?;
    if let Some(a) = alpha_points.iter().find(|a| !(**a >= ALPHA_MIN && **a <= 1.0)) {
        return Err(err("/alpha_grid", format!("alpha = {a} outside [{ALPHA_MIN}, 1]")));
    }

    let u = &config.utility;
    let spec = UtilitySpec::new(u.adversary, u.dc, u.m_max).map_err(|e| err("/utility", e.to_string()))?;

    if config.envelope.grid_size < MIN_GRID_SIZE {
        return Err(err("/envelope/grid_size", format!("must be >= {MIN_GRID_SIZE}")));
    }
    if config.envelope.touch_rel_tol.is_nan() || config.envelope.touch_rel_tol <= 0.0 {
        return Err(err("/envelope/touch_rel_tol", "must be > 0".into()));
    }
    if config.oracle.grid_size < MIN_ORACLE_GRID {
        return Err(err("/oracle/grid_size", format!("must be >= {MIN_ORACLE_GRID}")));
    }
    if !(config.quad_tol > 0.0 && config.quad_tol.is_finite()) {
        return Err(err("/quad_tol", "must be finite and > 0".into()));
    }

    let sim = &config.simulation;
    if sim.n_nodes.is_empty() {
        return Err(err("/simulation/n_nodes", "node list is empty".into()));
    }
    if let Some(i) = sim.n_nodes.iter().position(|&n| n < 2) {
        return Err(err(
            &format!("/simulation/n_nodes/{i}"),
            "every game needs N >= 2 nodes".into(),
        ));
    }
    if sim.trials < 1 {
        return Err(err("/simulation/trials", "must be >= 1".into()));
    }
    if let Some(e) = sim.eta {
        check_eta(e).map_err(|m| err("/simulation/eta", m))?;
    }
    if let Some(a) = sim.alpha {
        if !(ALPHA_MIN..=1.0).contains(&a) {
            return Err(err(
                "/simulation/alpha",
                format!("alpha = {a} outside [{ALPHA_MIN}, 1]"),
            ));
        }
    }
    let v = &config.verify;
    check_eta(v.eta).map_err(|m| err("/verify/eta", m))?;
    if v.n_nodes < 2 {
        return Err(err("/verify/n_nodes", "every game needs N >= 2 nodes".into()));
    }
    if v.trials < 1 {
        return Err(err("/verify/trials", "must be >= 1".into()));
    }

    let hash = config_hash(&config)?;
    Ok(Run {
        config,
        label: label.to_string(),
        noise,
        spec,
        eta_points,
        alpha_points,
        hash,
    })
}

fn check_eta(eta: f64) -> std::result::Result<(), String> {
    if eta.is_finite() && eta >= ETA_MIN {
        Ok(())
    } else {
        Err(format!("eta = {eta} violates the model constraint eta >= {ETA_MIN}"))
    }
}

type Located<T> = std::result::Result<T, (&'static str, String)>;

fn build_noise(cfg: &NoiseConfig, base_dir: &Path) -> Located<HonestNoiseModel> {
    let delta = cfg.delta;
    if !(delta.is_finite() && delta > 0.0) {
        return Err((
            "/honest_noise/delta",
            format!("delta must be finite and > 0, got {delta}"),
        ));
    }
    let p = &cfg.params;
    let unexpected = |key: &str| format!("parameter {key} does not apply to {:?} noise", cfg.kind);
    let built = match cfg.kind {
        NoiseKindName::Uniform | NoiseKindName::Triangular => {
            if p.sigma.is_some() {
                return Err(("/honest_noise/params/sigma", unexpected("sigma")));
            }
            if p.table.is_some() {
                return Err(("/honest_noise/params/table", unexpected("table")));
            }
            if cfg.kind == NoiseKindName::Uniform {
                HonestNoiseModel::uniform(delta)
            } else {
                HonestNoiseModel::triangular(delta)
            }
        }
        NoiseKindName::TruncatedNormal => {
            if p.table.is_some() {
                return Err(("/honest_noise/params/table", unexpected("table")));
            }
            let sigma = p.sigma.ok_or((
                "/honest_noise/params",
                "truncated_normal requires params.sigma".to_string(),
            ))?;
            HonestNoiseModel::truncated_normal(delta, sigma)
        }
        NoiseKindName::Tabulated => {
            if p.sigma.is_some() {
                return Err(("/honest_noise/params/sigma", unexpected("sigma")));
            }
            let file = p
                .table
                .as_ref()
                .ok_or(("/honest_noise/params", "tabulated requires params.table".to_string()))?;
            let (xs, pdf) = read_table(&base_dir.join(file)).map_err(|m| ("/honest_noise/params/table", m))?;
            HonestNoiseModel::tabulated(xs, pdf, delta)
        }
    };
    built.map_err(|e| ("/honest_noise", e.to_string()))
}

/// Reads a two-column `x,pdf` CSV. A non-numeric first row is a header.
pub fn read_table(path: &Path) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let (mut xs, mut pdf) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        if rec.len() != 2 {
            return Err(format!(
                "{} row {}: expected 2 columns, got {}",
                path.display(),
                i + 1,
                rec.len()
            ));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(p)) => {
                xs.push(x);
                pdf.push(p);
            }
            _ if i == 0 => continue,
            _ => return Err(format!("{} row {}: non-numeric value", path.display(), i + 1)),
        }
    }
    Ok((xs, pdf))
}

fn config_hash(config: &RunConfig) -> Result<String> {
    let mut v = serde_json::to_value(config)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
    }
    let digest = Sha256::digest(serde_json::to_vec(&v)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: Value) -> Result<Run> {
        from_value(v, "test.json", Path::new("."))
    }

    fn pointer_of(e: CliError) -> (String, String) {
        match e {
            CliError::Input { pointer, message, .. } => (pointer, message),
            other => panic!("expected an input error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let run = parse(builtin_default()).unwrap();
        let c = &run.config;
        assert_eq!(c.data.m, Some(1000.0));
        assert_eq!(c.eta_grid, Some(GridSpec::default_eta()));
        assert_eq!(c.alpha_grid, Some(GridSpec::default_alpha()));
        assert_eq!(run.eta_points.len(), 601);
        assert_eq!(run.alpha_points.len(), 1000);
        assert_eq!(c.envelope, EnvelopeOptions::default());
        assert_eq!(c.simulation, SimulationConfig::default());
        assert_eq!(run.hash.len(), 64);
    }

    #[test]
    fn eta_below_two_names_the_constraint() {
        let mut v = builtin_default();
        v["eta"] = json!(1.5);
        let (p, m) = pointer_of(parse(v).unwrap_err());
        assert_eq!(p, "/eta");
        assert!(m.contains("eta >= 2"), "{m}");

        let mut v = builtin_default();
        v["eta_grid"] = json!({ "values": [2.0, 1.9] });
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/eta_grid/values/1");

        let mut v = builtin_default();
        v["simulation"] = json!({ "eta": 1.0 });
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/simulation/eta");
    }

    #[test]
    fn missing_utility_lists_required_keys() {
        let v = json!({ "honest_noise": { "kind": "uniform", "delta": 1.0 } });
        let (p, m) = pointer_of(parse(v).unwrap_err());
        assert_eq!(p, "");
        assert!(m.contains("utility") && m.contains("honest_noise"), "{m}");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let mut v = builtin_default();
        v["utility"]["adversary"] = json!({ "family": "scaled_product", "c": "one" });
        // Tagged enums are buffered, so the pointer stops at the enum itself.
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/utility/adversary");

        let mut v = builtin_default();
        v["simulation"] = json!({ "n_nodes": [2, 1] });
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/simulation/n_nodes/1");

        let mut v = builtin_default();
        v["honest_noise"]["kind"] = json!("cauchy");
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/honest_noise/kind");

        let mut v = builtin_default();
        v["surprise"] = json!(true);
        assert!(parse(v).is_err());

        let mut v = builtin_default();
        v["honest_noise"] = json!({ "kind": "truncated_normal", "delta": 1.0 });
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/honest_noise/params");

        let mut v = builtin_default();
        v["utility"]["dc"] = json!({ "family": "linear", "gamma": -1.0 });
        assert_eq!(pointer_of(parse(v).unwrap_err()).0, "/utility");
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = parse(builtin_default()).unwrap();
        let mut v = builtin_default();
        v["output_dir"] = json!("elsewhere");
        let b = parse(v).unwrap();
        assert_eq!(a.hash, b.hash);
        let mut v = builtin_default();
        v["simulation"] = json!({ "seed": 2 });
        assert_ne!(a.hash, parse(v).unwrap().hash);
    }

    #[test]
    fn tabulated_table_is_read_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "x,pdf\n-1,0.25\n0,0.75\n1,0.25\n").unwrap();
        let mut v = builtin_default();
        v["honest_noise"] = json!({ "kind": "tabulated", "delta": 1.0, "params": { "table": "t.csv" } });
        let run = from_value(v, "cfg", dir.path()).unwrap();
        assert!(run.noise.validate().passed());
    }
}
