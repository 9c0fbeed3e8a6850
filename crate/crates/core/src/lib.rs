//! Ordinal ranking for staged classification of paired volumetric regions.
//!
//! The crate covers the whole pipeline: volume handling and augmentation
//! ([`volume`]), a synthetic severity phantom generator ([`synthgen`]),
//! hand-crafted shape and texture features ([`features`]), the ordinal
//! binary decomposition itself ([`ordinal`]), a random forest baseline
//! ([`forest`]), a small 3D CNN engine ([`neural`]) and evaluation metrics
//! ([`eval`]).

pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod neural;
pub mod ordinal;
pub mod rng;
pub mod synthgen;
pub mod volume;

pub use error::{Error, Result};
