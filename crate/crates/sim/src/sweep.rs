//! Batch runs over many scenarios. With the `parallel` feature the batch is
//! spread over a rayon pool; each run stays single-threaded.

use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rbt_core::Ltm;

use crate::runner::{run_scenario, EngineKind, RunError, RunReport};
use crate::scenario::Scenario;

pub fn run_batch(
    scenarios: &[Scenario],
    kind: EngineKind,
    ltm: &Arc<Ltm>,
    max_ticks: u64,
) -> Vec<Result<RunReport, RunError>> {
    let one = |s: &Scenario| {
        run_scenario(s, kind, Arc::clone(ltm), max_ticks, None).map(|o| o.report)
    };
    #[cfg(feature = "parallel")]
    {
        scenarios.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scenarios.iter().map(one).collect()
    }
}

/// Same as [`run_batch`] but always on the calling thread.
pub fn run_batch_sequential(
    scenarios: &[Scenario],
    kind: EngineKind,
    ltm: &Arc<Ltm>,
    max_ticks: u64,
) -> Vec<Result<RunReport, RunError>> {
    scenarios
        .iter()
        .map(|s| run_scenario(s, kind, Arc::clone(ltm), max_ticks, None).map(|o| o.report))
        .collect()
}

/// `count` seeded random scenarios starting at `seed`.
pub fn random_scenarios(case: u8, seed: u64, count: usize) -> Vec<Scenario> {
    (0..count as u64)
        .map(|i| Scenario::random(case, seed + i).expect("case is 1 or 2"))
        .collect()
}
