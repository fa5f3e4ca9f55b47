//! Box-sorting simulation for reconfigurable behavior trees: a kinematic
//! world with pick and place actions, the two case-study scenarios, static
//! baseline trees, and a runner that reports node counts and tick time.

pub mod actions;
pub mod baseline;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod world;

pub use runner::{run_scenario, EngineKind, NodeCount, RunOutcome, RunReport};
pub use scenario::{build_case, bundled_ltm, Scenario};
pub use world::{ActionMode, World};
