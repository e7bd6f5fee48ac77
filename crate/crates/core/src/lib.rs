//! Intelligence bounds and learning-aided pre-service control for
//! Markov-demand systems.
//!
//! [`oracle`] computes the best achievable reward rate under a cost budget,
//! [`control`] and [`sim`] run the online controllers against a scenario, and
//! [`learning`] estimates demand statistics for the learning-aided variant.

pub mod control;
pub mod learning;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod sim;

pub use model::{AppMask, DemandChain, ModelError, Scenario};
pub use oracle::{intelligence_bound, BoundSolution, OracleError};
pub use sim::{run, Policy, RunTrace};
