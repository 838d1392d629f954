//! Continuous homodyne detection of a single two-level atom.
//!
//! The atom lives on the `s_y = 0` great circle of the Bloch sphere. Each
//! measurement interval produces a photon-number difference `delta_n` which
//! rotates the state about the y-axis; feedback adds a record-proportional
//! counter-rotation. Ensembles of such trajectories are run in parallel with
//! per-trajectory counter-based random streams, and the record statistics are
//! cross-checked against an exact Fock-space model of the beamsplitter.
//!
//! Parallel execution uses rayon and is enabled by the default `parallel`
//! feature; without it every ensemble runs sequentially with identical
//! results.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod measurement;
pub mod numeric;
pub mod oracle;
pub mod state;
pub mod validation;

pub use analysis::{DiffusionEstimate, DriftField, EnsembleResult};
pub use engine::{Parallelism, RunConfig, StepRecord};
pub use error::{Error, Result};
pub use feedback::FeedbackPolicy;
pub use measurement::SamplingMode;
pub use oracle::{Pmf, SourceSpec};
pub use state::{BlochState, SimParams};
