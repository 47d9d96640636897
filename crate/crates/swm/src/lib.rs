//! Syntax Window Model: nested Chinese phrase recognition via anchor
//! windows with offset regression.
//!
//! The pipeline: parse the 7-type bracket annotation, enumerate all
//! sentence sub-windows as anchors, score each with a proposal head and
//! correct its boundaries, type the survivors with a 7-way head, then
//! decode into a crossing-free nested phrase forest and score with
//! phrase-level exact-match metrics.

pub mod annotation;
pub mod baseline;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;
pub mod windowing;
