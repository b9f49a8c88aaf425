//! One-dimensional search grids for `alpha` and `eta`.

use crate::error::{Error, Result};
use crate::math::round;
use alloc::format;
use alloc::vec::Vec;

/// A finite grid, either an arithmetic range or an explicit list.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged, deny_unknown_fields))]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    Values { values: Vec<f64> },
}

impl GridSpec {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        GridSpec::Range { start, stop, step }
    }

    pub fn values(values: impl Into<Vec<f64>>) -> Self {
        GridSpec::Values { values: values.into() }
    }

    /// Default `alpha` grid `{0.001, 0.002, ..., 1}`.
    pub fn default_alpha() -> Self {
        GridSpec::range(1e-3, 1.0, 1e-3)
    }

    /// Default `eta` grid `[2, 8]` in steps of `0.01`.
    pub fn default_eta() -> Self {
        GridSpec::range(2.0, 8.0, 0.01)
    }

    /// Materializes the grid. Range points are `start + i * step`, so they do
    /// not accumulate rounding; the last point is `stop` when it lies on the
    /// lattice to within `1e-9` steps.
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            GridSpec::Values { values } => values.clone(),
            GridSpec::Range { start, stop, step } => {
                if !(start.is_finite() && stop.is_finite() && step.is_finite()) || *step <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "grid range start={start} stop={stop} step={step}"
                    )));
                }
                if stop < start {
                    return Err(Error::EmptyGrid("range stop below start"));
                }
                let n = round((stop - start) / step * 1e9) / 1e9;
                let count = n as usize + 1;
                (0..count)
                    .map(|i| {
                        // Snapped to 12 decimals so decimal steps land on the
                        // nearest double to the written value.
                        let raw = start + i as f64 * step;
                        let x = if raw.abs() < 1e3 { round(raw * 1e12) / 1e12 } else { raw };
                        if i + 1 == count && (x - stop).abs() < step * 1e-6 {
                            *stop
                        } else {
                            x
                        }
                    })
                    .collect()
            }
        };
        if pts.is_empty() {
            return Err(Error::EmptyGrid("no grid points"));
        }
        if pts.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite grid point in {pts:?}")));
        }
        Ok(pts)
    }
}
