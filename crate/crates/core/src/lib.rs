//! Socio-technical structure clash detection.
//!
//! The pipeline reads chat logs into [`model::CommEvent`]s, slices them into
//! windows, builds a weighted communication graph per window, measures
//! degree and betweenness centrality, and compares the result with the
//! coordination an [`model::ArchitectureModel`] requires.
//!
//! ```text
//! ingest -> windows -> graphs -> metrics -> detect -> export
//! ```

pub mod cli;
pub mod detect;
pub mod duration;
pub mod export;
pub mod ingest;
pub mod metrics;
pub mod model;

pub use detect::{run_all, DetectConfig};
pub use model::{ArchitectureModel, CommGraph, Finding, Pattern, Severity};
