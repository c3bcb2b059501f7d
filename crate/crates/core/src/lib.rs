//! Simulator for personalized federated learning with Bregman-divergence
//! priors (pFedBreD), plus FedAvg and first-order Per-FedAvg baselines.
//!
//! Algorithm variants are trait objects selected by name at runtime:
//! [`model::model_by_name`], [`mirror::mirror_map_by_name`],
//! [`fl::strategy_by_name`] and [`fl::method_by_name`].

pub mod data;
pub mod error;
pub mod fl;
pub mod metrics;
pub mod mirror;
pub mod model;
pub mod params;
pub mod rng;

pub use error::{Error, Result};
pub use params::ParamVector;
