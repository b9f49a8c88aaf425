//! The honest node's noise law and the prior on the estimated value.
//!
//! Every model has support `[-delta, delta]`, a symmetric density and a CDF
//! that is strictly increasing on the support. Construction only rejects
//! malformed input; whether a model actually satisfies those assumptions is
//! reported by [`HonestNoiseModel::validate`].

use crate::error::{Error, Result};
use crate::math::{abs, erf, exp, sqrt};
use crate::quad::{adaptive_simpson, bisect_monotone};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};
use rand::{Rng, RngCore};

/// Number of points on the validation grid over `[-delta, delta]`.
pub const VALIDATION_GRID: usize = 1025;
/// Minimum CDF increment between adjacent validation grid points.
pub const STRICT_CDF_TOL: f64 = 1e-12;
/// Absolute tolerance of the bisection behind [`HonestNoiseModel::inv_cdf`].
pub const INV_CDF_X_TOL: f64 = 1e-12;

/// A density given on a grid, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    pdf: Vec<f64>,
    /// Cumulative mass at each node, already divided by the total.
    cum: Vec<f64>,
}

impl Table {
    /// Builds a table from `(x, pdf)` samples covering exactly `[-delta, delta]`.
    /// The density is renormalized to unit mass by trapezoidal accumulation.
    pub fn new(xs: Vec<f64>, pdf: Vec<f64>, delta: f64) -> Result<Self> {
        if xs.len() != pdf.len() {
            return Err(Error::InvalidModel(format!(
                "table has {} x values but {} pdf values",
                xs.len(),
                pdf.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidModel("table needs at least two rows".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("table x values must be strictly increasing".into()));
        }
        if pdf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("table pdf values must be finite and >= 0".into()));
        }
        let tol = 1e-9 * delta.max(1.0);
        if abs(xs[0] + delta) > tol || abs(xs[xs.len() - 1] - delta) > tol {
            return Err(Error::InvalidModel(format!(
                "table must span [-{delta}, {delta}], got [{}, {}]",
                xs[0],
                xs[xs.len() - 1]
            )));
        }
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 1..xs.len() {
            acc += 0.5 * (pdf[i - 1] + pdf[i]) * (xs[i] - xs[i - 1]);
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidModel("table has zero total mass".into()));
        }
        let mut xs = xs;
        xs[0] = -delta;
        let last = xs.len() - 1;
        xs[last] = delta;
        let pdf = pdf.into_iter().map(|p| p / acc).collect();
        cum.iter_mut().for_each(|c| *c /= acc);
        cum[last] = 1.0;
        Ok(Table { xs, pdf, cum })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Normalized density values at the nodes.
    pub fn pdf_values(&self) -> &[f64] {
        &self.pdf
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let t = (x - x0) / (x1 - x0);
        self.pdf[i] + t * (self.pdf[i + 1] - self.pdf[i])
    }

    fn cdf(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = x - self.xs[i];
        let slope = (self.pdf[i + 1] - self.pdf[i]) / h;
        (self.cum[i] + self.pdf[i] * t + 0.5 * slope * t * t).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Uniform on `[-delta, delta]`.
    Uniform,
    /// Centered normal with standard deviation `sigma`, truncated to the support.
    TruncatedNormal { sigma: f64 },
    /// Symmetric triangle peaking at zero.
    Triangular,
    /// User-supplied density grid.
    Tabulated(Table),
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::TruncatedNormal { .. } => "truncated-normal",
            NoiseKind::Triangular => "triangular",
            NoiseKind::Tabulated(_) => "tabulated",
        }
    }
}

/// Bounded symmetric noise added by the honest node.
#[derive(Debug, Clone, PartialEq)]
pub struct HonestNoiseModel {
    kind: NoiseKind,
    delta: f64,
    /// Mass of the untruncated normal inside the support (truncated-normal only).
    normal_mass: f64,
}

impl HonestNoiseModel {
    pub fn new(kind: NoiseKind, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidModel(format!(
                "delta must be finite and > 0, got {delta}"
            )));
        }
        let mut normal_mass = 1.0;
        if let NoiseKind::TruncatedNormal { sigma } = kind {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "sigma must be finite and > 0, got {sigma}"
                )));
            }
            normal_mass = erf(delta / sigma * FRAC_1_SQRT_2);
            if !(normal_mass > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "sigma={sigma} leaves no mass inside [-{delta}, {delta}]"
                )));
            }
        }
        Ok(HonestNoiseModel {
            kind,
            delta,
            normal_mass,
        })
    }

    pub fn uniform(delta: f64) -> Result<Self> {
        Self::new(NoiseKind::Uniform, delta)
    }

    pub fn truncated_normal(delta: f64, sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::TruncatedNormal { sigma }, delta)
    }

    pub fn triangular(delta: f64) -> Result<Self> {
        Self::new(NoiseKind::Triangular, delta)
    }

    /// Tabulated density from `(x, pdf)` rows spanning `[-delta, delta]`.
    pub fn tabulated(xs: Vec<f64>, pdf: Vec<f64>, delta: f64) -> Result<Self> {
        let table = Table::new(xs, pdf, delta)?;
        Self::new(NoiseKind::Tabulated(table), delta)
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, NoiseKind::Uniform)
    }

    /// Density at `x`; exactly zero outside `[-delta, delta]`.
    pub fn pdf(&self, x: f64) -> f64 {
        let d = self.delta;
        if !(abs(x) <= d) {
            return 0.0;
        }
        match &self.kind {
            NoiseKind::Uniform => 0.5 / d,
            NoiseKind::TruncatedNormal { sigma } => {
                let t = x / sigma;
                exp(-0.5 * t * t) / (sigma * sqrt(2.0 * PI) * self.normal_mass)
            }
            NoiseKind::Triangular => (d - abs(x)) / (d * d),
            NoiseKind::Tabulated(t) => t.pdf(x),
        }
    }

    /// Distribution function; `0` at and below `-delta`, `1` at and above `delta`.
    pub fn cdf(&self, x: f64) -> f64 {
        let d = self.delta;
        if x <= -d {
            return 0.0;
        }
        if x >= d {
            return 1.0;
        }
        match &self.kind {
            NoiseKind::Uniform => (x + d) / (2.0 * d),
            NoiseKind::TruncatedNormal { sigma } => {
                0.5 * (erf(x / sigma * FRAC_1_SQRT_2) + self.normal_mass) / self.normal_mass
            }
            NoiseKind::Triangular => {
                if x <= 0.0 {
                    let r = d + x;
                    r * r / (2.0 * d * d)
                } else {
                    let r = d - x;
                    1.0 - r * r / (2.0 * d * d)
                }
            }
            NoiseKind::Tabulated(t) => t.cdf(x),
        }
    }

    /// Quantile function. Closed form for uniform and triangular noise,
    /// bisection to `1e-12` in `x` otherwise.
    pub fn inv_cdf(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "[0, 1]"));
        }
        let d = self.delta;
        Ok(match &self.kind {
            NoiseKind::Uniform => (-d + 2.0 * d * p).clamp(-d, d),
            NoiseKind::Triangular => {
                if p <= 0.5 {
                    -d + d * sqrt(2.0 * p)
                } else {
                    d - d * sqrt(2.0 * (1.0 - p))
                }
            }
            _ => {
                if p == 0.0 {
                    -d
                } else if p == 1.0 {
                    d
                } else {
                    bisect_monotone(|x| self.cdf(x), p, -d, d, true, INV_CDF_X_TOL, 200)
                }
            }
        })
    }

    /// One draw by the inverse-CDF transform.
    pub fn sample_one<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        // p is in [0, 1), always inside the domain.
        self.inv_cdf(p).unwrap_or(0.0)
    }

    /// `count` i.i.d. draws.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// Second moment `E[n^2]`.
    pub fn second_moment(&self, tol: f64) -> Result<f64> {
        let d = self.delta;
        match self.kind {
            NoiseKind::Uniform => Ok(d * d / 3.0),
            NoiseKind::Triangular => Ok(d * d / 6.0),
            _ => adaptive_simpson(|x| x * x * self.pdf(x), -d, d, tol),
        }
    }

    /// Checks the modelling assumptions on a [`VALIDATION_GRID`]-point grid.
    pub fn validate(&self) -> ValidationReport {
        let d = self.delta;
        let n = VALIDATION_GRID;
        let grid: Vec<f64> = (0..n).map(|i| -d + 2.0 * d * i as f64 / (n - 1) as f64).collect();
        let mut checks = Vec::new();

        let outside = [1.0 + 1e-9, 1.01, 1.5, 2.0, 10.0];
        let leak = outside
            .iter()
            .flat_map(|s| [self.pdf(s * d), self.pdf(-s * d)])
            .fold(0.0_f64, f64::max);
        let negative = grid.iter().map(|&x| self.pdf(x)).fold(0.0_f64, f64::min);
        checks.push(Check::new(
            "support",
            leak == 0.0 && negative >= 0.0,
            format!("max pdf outside support {leak:e}, min pdf on grid {negative:e}"),
        ));

        let asym = grid
            .iter()
            .map(|&x| abs(self.pdf(x) - self.pdf(-x)))
            .fold(0.0_f64, f64::max);
        let scale = grid.iter().map(|&x| self.pdf(x)).fold(1.0_f64, f64::max);
        checks.push(Check::new(
            "symmetry",
            asym <= 1e-10 * scale,
            format!("max |pdf(x) - pdf(-x)| = {asym:e}"),
        ));

        let mass = match &self.kind {
            NoiseKind::Tabulated(t) => {
                t.xs.windows(2)
                    .map(|w| adaptive_simpson(|x| self.pdf(x), w[0], w[1], 1e-13))
                    .sum::<Result<f64>>()
            }
            _ => adaptive_simpson(|x| self.pdf(x), -d, d, 1e-12),
        };
        let (mass_ok, mass_detail) = match mass {
            Ok(m) => ((m - 1.0).abs() <= 1e-8, format!("integral of pdf = {m:.12}")),
            Err(e) => (false, format!("{e}")),
        };
        checks.push(Check::new("normalization", mass_ok, mass_detail));

        let (c0, c1) = (self.cdf(-d), self.cdf(d));
        checks.push(Check::new(
            "cdf_endpoints",
            c0 == 0.0 && c1 == 1.0,
            format!("cdf(-delta) = {c0}, cdf(delta) = {c1}"),
        ));

        let cdfs: Vec<f64> = grid.iter().map(|&x| self.cdf(x)).collect();
        let worst = cdfs
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1] - w[0]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 1.0));
        checks.push(Check::new(
            "strict_cdf_increase",
            worst.1 > STRICT_CDF_TOL,
            format!(
                "smallest cdf increment {:e} between x = {} and x = {}",
                worst.1,
                grid[worst.0],
                grid[worst.0 + 1]
            ),
        ));

        ValidationReport {
            kind: self.kind.name(),
            delta: d,
            checks,
        }
    }

    /// Validates and converts a failure into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.passed() {
            Ok(())
        } else {
            let names: Vec<&str> = report.violations().map(|c| c.name).collect();
            Err(Error::InvalidModel(format!(
                "violated assumptions: {}",
                names.join(", ")
            )))
        }
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub kind: &'static str,
    pub delta: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Uniform prior of the estimated value on `[-m, m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataModel {
    pub m: f64,
}

impl DataModel {
    /// `m` must be at least `100 * delta` for the given noise half-width.
    pub fn new(m: f64, delta: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "data half-width M must be > 0, got {m}"
            )));
        }
        if m < 100.0 * delta {
            return Err(Error::InvalidParameter(format!(
                "data half-width M = {m} must be at least 100 * delta = {}",
                100.0 * delta
            )));
        }
        Ok(DataModel { m })
    }

    pub fn sample_one<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        -self.m + 2.0 * self.m * p
    }
}
