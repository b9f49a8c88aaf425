//! Least concave majorant of `h` on `[0, 1]`.
//!
//! `h` is sampled on a uniform grid `q_i = i / grid_size` (both endpoints
//! included), the upper hull of the samples is taken with a monotone chain,
//! and the samples next to every chord endpoint are refined once so that
//! tangency points land within a fraction of a grid cell.

use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::math::abs;
use alloc::format;
use alloc::vec::Vec;

pub const MIN_GRID_SIZE: usize = 33;
pub const DEFAULT_GRID_SIZE: usize = 4096;
pub const DEFAULT_TOUCH_REL_TOL: f64 = 1e-8;
/// Extra samples inserted around each chord endpoint during refinement.
pub const REFINE_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnvelopeOptions {
    /// Number of grid intervals on `[0, 1]`.
    pub grid_size: usize,
    /// Touch tolerance relative to `max(1, max |h|)`.
    pub touch_rel_tol: f64,
    pub refine: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            grid_size: DEFAULT_GRID_SIZE,
            touch_rel_tol: DEFAULT_TOUCH_REL_TOL,
            refine: true,
        }
    }
}

/// Where the envelope meets `h` around a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// The envelope equals `h` at the point.
    Touch(f64),
    /// The envelope is the chord of `h` between the two points.
    Chord(f64, f64),
}

#[derive(Debug, Clone)]
pub struct Envelope {
    ctx: KernelContext,
    breakpoints: Vec<(f64, f64)>,
    source: Vec<(f64, f64)>,
    touch_tol: f64,
}

impl Envelope {
    pub fn build(ctx: &KernelContext, grid_size: usize) -> Result<Self> {
        Self::build_with(
            ctx,
            EnvelopeOptions {
                grid_size,
                ..EnvelopeOptions::default()
            },
        )
    }

    pub fn build_with(ctx: &KernelContext, opts: EnvelopeOptions) -> Result<Self> {
        if opts.grid_size < MIN_GRID_SIZE {
            return Err(Error::InvalidParameter(format!(
                "envelope grid_size must be >= {MIN_GRID_SIZE}, got {}",
                opts.grid_size
            )));
        }
        if !(opts.touch_rel_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "touch tolerance must be >= 0, got {}",
                opts.touch_rel_tol
            )));
        }
        let n = opts.grid_size;
        let mut source = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let q = i as f64 / n as f64;
            source.push((q, sample(ctx, q)?));
        }
        let mut hull = upper_hull(&source);
        if opts.refine {
            let extra = refinement_points(&source, &hull);
            if !extra.is_empty() {
                for q in extra {
                    source.push((q, sample(ctx, q)?));
                }
                source.sort_by(|a, b| a.0.total_cmp(&b.0));
                source.dedup_by(|a, b| a.0 == b.0);
                hull = upper_hull(&source);
            }
        }
        let hmax = source.iter().map(|p| abs(p.1)).fold(1.0_f64, f64::max);
        Ok(Envelope {
            ctx: ctx.clone(),
            breakpoints: hull,
            source,
            touch_tol: opts.touch_rel_tol * hmax,
        })
    }

    /// Envelope of explicit samples; `source` must be sorted by `q`, start at
    /// `0` and end at `1`.
    pub fn from_samples(ctx: &KernelContext, source: Vec<(f64, f64)>, touch_rel_tol: f64) -> Result<Self> {
        if source.len() < 2
            || source[0].0 != 0.0
            || source[source.len() - 1].0 != 1.0
            || source.windows(2).any(|w| !(w[1].0 > w[0].0))
        {
            return Err(Error::InvalidParameter(
                "samples must be strictly increasing in q from 0 to 1".into(),
            ));
        }
        if source.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::Numerical("non-finite sample value".into()));
        }
        let hmax = source.iter().map(|p| abs(p.1)).fold(1.0_f64, f64::max);
        Ok(Envelope {
            ctx: ctx.clone(),
            breakpoints: upper_hull(&source),
            source,
            touch_tol: touch_rel_tol * hmax,
        })
    }

    pub fn context(&self) -> &KernelContext {
        &self.ctx
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// The `(q, h(q))` samples the envelope majorizes, refinement included.
    pub fn source(&self) -> &[(f64, f64)] {
        &self.source
    }

    /// Absolute touch tolerance.
    pub fn touch_tolerance(&self) -> f64 {
        self.touch_tol
    }

    fn segment(&self, q: f64) -> usize {
        let bp = &self.breakpoints;
        let idx = bp.partition_point(|p| p.0 <= q);
        idx.clamp(1, bp.len() - 1) - 1
    }

    pub fn eval(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain("q", q, "[0, 1]"));
        }
        let i = self.segment(q);
        let (q0, v0) = self.breakpoints[i];
        let (q1, v1) = self.breakpoints[i + 1];
        if q == q0 {
            return Ok(v0);
        }
        if q == q1 {
            return Ok(v1);
        }
        Ok(v0 + (v1 - v0) * (q - q0) / (q1 - q0))
    }

    /// Right derivative of the envelope at `0`; `c(alpha)` tends to a quarter
    /// of this as `alpha -> 0`.
    pub fn slope_at_zero(&self) -> f64 {
        let (q0, v0) = self.breakpoints[0];
        let (q1, v1) = self.breakpoints[1];
        (v1 - v0) / (q1 - q0)
    }

    pub fn supporting_chord(&self, q: f64) -> Result<Support> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::domain("q", q, "(0, 1]"));
        }
        let env = self.eval(q)?;
        let h = self.ctx.h_eta(q)?;
        if env - h <= self.touch_tol {
            return Ok(Support::Touch(q));
        }
        let i = self.segment(q);
        Ok(Support::Chord(self.breakpoints[i].0, self.breakpoints[i + 1].0))
    }

    /// Whether the envelope touches `h` at the source sample `(q, h)`.
    pub fn touches(&self, q: f64, h: f64) -> bool {
        self.eval(q).map(|e| e - h <= self.touch_tol).unwrap_or(false)
    }

    /// Chord segments: consecutive breakpoints that skip over source samples
    /// lying strictly below the envelope by more than the touch tolerance.
    pub fn chords(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut seg = 0;
        for &(q, h) in &self.source {
            while seg + 1 < self.breakpoints.len() - 1 && q >= self.breakpoints[seg + 1].0 {
                seg += 1;
            }
            let (q0, v0) = self.breakpoints[seg];
            let (q1, v1) = self.breakpoints[seg + 1];
            if q <= q0 || q >= q1 {
                continue;
            }
            let env = v0 + (v1 - v0) * (q - q0) / (q1 - q0);
            if env - h > self.touch_tol && out.last() != Some(&(q0, q1)) {
                out.push((q0, q1));
            }
        }
        out
    }
}

fn sample(ctx: &KernelContext, q: f64) -> Result<f64> {
    let v = ctx.h_eta(q)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("h({q}) = {v}")))
    }
}

/// `b` lies strictly below the line through `a` and `c` (with `a.q < b.q < c.q`).
fn below(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    (b.1 - a.1) * (c.0 - a.0) < (c.1 - a.1) * (b.0 - a.0)
}

/// Monotone-chain upper hull of points sorted by increasing `q`.
/// Collinear points are kept.
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 && below(hull[hull.len() - 2], hull[hull.len() - 1], p) {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Points around hull vertices that start or end a chord, i.e. whose hull
/// neighbour is not the adjacent source sample.
fn refinement_points(source: &[(f64, f64)], hull: &[(f64, f64)]) -> Vec<f64> {
    let index_of = |q: f64| source.partition_point(|p| p.0 < q);
    let mut anchors = Vec::new();
    for w in hull.windows(2) {
        let (i, j) = (index_of(w[0].0), index_of(w[1].0));
        if j > i + 1 {
            anchors.push(i);
            anchors.push(j);
        }
    }
    anchors.sort_unstable();
    anchors.dedup();
    let mut out = Vec::new();
    for i in anchors {
        let lo = source[i.saturating_sub(1)].0;
        let hi = source[(i + 1).min(source.len() - 1)].0;
        for s in 1..=REFINE_SAMPLES {
            let q = lo + (hi - lo) * s as f64 / (REFINE_SAMPLES + 1) as f64;
            if q != source[i].0 {
                out.push(q);
            }
        }
    }
    out
}
