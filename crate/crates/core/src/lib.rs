//! Modules of influence over per-instance feature attributions.
//!
//! The crate turns an attribution matrix into a feature co-influence graph,
//! finds feature modules with Louvain/Leiden, and scores those modules:
//! stability under resampling, redundancy, group bias exposure, ablation
//! drops and cross-module synergy. A synthetic lab with planted modules and
//! exact Shapley attributions makes every stage checkable.
//!
//! Everything here is `no_std + alloc`. File formats, configuration, the CLI
//! and the HTTP service live in the `moi` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod affinity;
pub mod attribution;
pub mod community;
pub mod error;
pub mod graph;
pub mod interventions;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
