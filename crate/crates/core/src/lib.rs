//! Equilibrium computation for the game of coding.
//!
//! A data collector (DC) receives `N` noisy copies of a value `u`. One node is
//! honest and adds bounded symmetric noise; the other `N - 1` are controlled by
//! a single adversary. The DC accepts iff the reports' spread is at most
//! `eta * delta` and then outputs the midrange. This crate computes the
//! adversary's optimal MSE / acceptance-probability trade-off, the DC's
//! optimal threshold `eta`, the adversary's optimal atomic noise, and
//! simulates the full game to check all of it.
//!
//! The crate is `no_std` (with `alloc`) when built without the `std` feature.
//! The `parallel` feature spreads Monte Carlo chunks and oracle searches over
//! rayon without changing any result bit.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod envelope;
pub mod error;
pub mod grid;
pub mod kernel;
mod math;
pub mod noise;
pub mod quad;
pub mod simulator;
pub mod strategy;
pub mod tradeoff;

pub use envelope::{Envelope, EnvelopeOptions, Support};
pub use error::{Error, Result};
pub use grid::GridSpec;
pub use kernel::{Integration, KernelContext};
pub use noise::{DataModel, HonestNoiseModel, NoiseKind, ValidationReport};
pub use simulator::{AdversaryStrategy, DiscreteNoise, GameConfig, SimulationResult};
pub use strategy::{AdversaryUtility, AtomicAdversary, DcUtility, EquilibriumReport, UtilitySpec};
pub use tradeoff::TradeoffCurve;
