//! Deadline-driven operator scheduling for stream dataflows, with a
//! deterministic virtual-time simulator and a multi-tenant workload harness.

pub mod context;
pub mod error;
pub mod harness;
pub mod model;
pub mod par;
pub mod policy;
pub mod presets;
pub mod progress;
pub mod runtime;
pub mod scenario;
pub mod scheduler;
pub mod workload;

pub use error::{Error, Result};
