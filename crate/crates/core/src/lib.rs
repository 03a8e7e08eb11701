//! Probing harness for GUI-operating agents: replay recorded episodes under
//! controlled visual/textual/structural perturbations and measure how far the
//! agent's behaviour moves — separating rote spatial memory from grounded
//! reasoning.
//!
//! Pipeline: [`ingest`] loads an episode corpus → [`perturb`] derives probed
//! variants of each step → [`gateway`] obtains agent responses (HTTP service
//! or built-in reference policies) → [`codec`] parses raw output into
//! canonical actions → [`metrics`] scores and aggregates → [`run`]
//! orchestrates and writes reports.

pub mod codec;
pub mod fixture;
pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod run;

pub use model::{Action, ActionKind, Episode, Point, Region, Screen, ScrollDirection, Step};
pub use perturb::{PerturbKind, PerturbationSpec, PerturbedStep};
