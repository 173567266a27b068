//! Sessions, agents and the turn loop that drives them.

pub mod agents;
pub mod orchestrator;
pub mod scenario;
pub mod session;

pub use session::*;
