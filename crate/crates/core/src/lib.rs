//! Invariant densities for expanding maps with an indifferent fixed point.
//!
//! The pipeline induces on the complement of a neighbourhood `R` of the
//! neutral point, discretizes the induced transfer operator by Ulam's
//! method, and pulls the induced density back into `R`. Escape-time tails
//! from `R` decide whether the resulting measure is finite.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod assumption_audit;
pub mod asymptotics;
pub mod config;
pub mod error;
pub mod example_maps;
pub mod experiments;
pub mod fit;
pub mod geometry;
pub mod induction;
pub mod map_model;
pub mod quasi_holder;
pub mod replication;
pub mod rng;
pub mod transfer;

pub use error::{AcimError, Result};
pub use example_maps::{build_map, Component, ExampleId, ExampleSpec};
pub use geometry::{Mat, Point, Shape};
pub use map_model::{Branch, PiecewiseMap, Region, ToleranceConfig};
