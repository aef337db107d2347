//! Zero-shot legal judgment prediction harness.
//!
//! The pipeline is: load a binarized corpus ([`corpus`]), render one prompt per
//! document under a token budget ([`template`]), obtain a greedy completion from a
//! pluggable backend with a content-addressed cache ([`backend`]), map the
//! completion to a label through an ordered rule cascade ([`parser`]), and score
//! the predictions against analytic baselines ([`metrics`]). [`runner`] ties the
//! stages together and [`report`] renders the results.

pub mod backend;
pub mod corpus;
pub mod error;
pub mod label;
pub mod metrics;
pub mod parser;
pub mod report;
pub mod runner;
pub mod template;

pub use error::{Error, Result};
pub use label::{Label, LabelNames, Language, Outcome, Split};
