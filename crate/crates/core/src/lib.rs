//! Conformal aggregation models built from slit maps of the exterior disc.
//!
//! The crate covers the single-slit map and its derivatives ([`slit`]),
//! compositions of attachment events ([`chain`]), exact tip dynamics and the
//! multinomial model ([`tips`]), the ALE sampler and driver ([`ale`]), the
//! Laplacian path model integrator ([`lpm`]), cylinder measures with the
//! bounded-Lipschitz distance ([`measures`]) and experiment orchestration
//! ([`experiments`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ale;
pub mod angle;
pub mod chain;
pub mod error;
pub mod experiments;
pub mod lpm;
pub mod measures;
pub mod rng;
pub mod slit;
pub mod tips;

pub use ale::{ale_run, aux_run, AleParams, AleTrajectory};
pub use chain::{build_initial, ArmSpec, AttachmentEvent, ConformalChain, InitialConfig};
pub use error::{Error, Result};
pub use slit::{RotatedSlit, SlitGeometry};
pub use tips::{Tip, TipState};
