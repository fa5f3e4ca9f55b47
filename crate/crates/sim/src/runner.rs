//! Runs a scenario under either engine and summarizes the run.

use std::sync::Arc;

use parking_lot::Mutex;
use rbt_core::runtime::{build_engine, EngineError, RunLog, TickEngine, TickTrace, ROOT_TASK};
use rbt_core::{Blackboard, Ltm};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{sorting_handlers, SharedWorld};
use crate::baseline::{build_baseline_bt, BaselineError, BtEngine};
use crate::scenario::{Scenario, ScenarioError};
use crate::world::{ActionMode, World};

/// Skeleton size with an empty placeholder.
pub const SKELETON_NODES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Rbt,
    Bt,
}

impl std::str::FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rbt" => Ok(EngineKind::Rbt),
            "bt" => Ok(EngineKind::Bt),
            other => Err(format!("unknown mode `{other}`, expected rbt or bt")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCount {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: EngineKind,
    pub case_id: u8,
    pub node_count: NodeCount,
    pub goal_reached: bool,
    /// Sum of tick durations in nanoseconds.
    pub total_tick_time: u64,
    pub ticks: u64,
    pub sort_order: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub log: RunLog,
}

/// Applies due perturbations, advances a stepped world and publishes the
/// distances, once before every tick.
pub fn stepper(world: SharedWorld, scenario: &Scenario) -> impl FnMut(&Blackboard, u64) {
    let perturbations = scenario.perturbations.clone();
    move |bb: &Blackboard, tick: u64| {
        let mut w = world.lock();
        for p in perturbations.iter().filter(|p| p.tick == tick) {
            w.perturb(&p.name, p.position).expect("validated box name");
        }
        if w.mode == ActionMode::Stepped {
            w.advance();
        }
        w.emit_stimuli(bb);
    }
}

/// A ready-to-run engine with its world.
pub struct Prepared {
    pub engine: Box<dyn TickEngine>,
    pub world: SharedWorld,
}

pub fn prepare(scenario: &Scenario, kind: EngineKind, ltm: Arc<Ltm>) -> Result<Prepared, RunError> {
    scenario.validate()?;
    let world: SharedWorld = Arc::new(Mutex::new(scenario.world()));
    let registry = sorting_handlers(&world);
    let subtasks = scenario.subtasks()?;
    let bb = Blackboard::new();
    let engine: Box<dyn TickEngine> = match kind {
        EngineKind::Rbt => Box::new(build_engine(ltm, ROOT_TASK, subtasks, registry, bb)?),
        EngineKind::Bt => {
            let tree = build_baseline_bt(scenario.case, &ltm, &registry, &subtasks)?;
            Box::new(BtEngine::new(tree, bb, subtasks))
        }
    };
    Ok(Prepared { engine, world })
}

/// Runs to the goal or `max_ticks`. An exhausted budget is reported with
/// `goal_reached = false`, not as an error.
pub fn run_scenario(
    scenario: &Scenario,
    kind: EngineKind,
    ltm: Arc<Ltm>,
    max_ticks: u64,
    mut on_tick: Option<&mut dyn FnMut(&TickTrace)>,
) -> Result<RunOutcome, RunError> {
    let Prepared { mut engine, world } = prepare(scenario, kind, ltm)?;
    let mut step = stepper(Arc::clone(&world), scenario);
    let mut log = RunLog::default();
    // ticks one at a time so traces can be streamed
    for tick in 1..=max_ticks {
        step(engine.blackboard(), tick);
        let t = engine.tick_once()?;
        if let Some(f) = on_tick.as_deref_mut() {
            f(&t);
        }
        let done = t.root_status == rbt_core::NodeStatus::Success;
        log.traces.push(t);
        if done {
            log.goal_reached = true;
            break;
        }
    }
    let report = summarize(scenario, kind, &log, engine.node_count(), &world.lock());
    Ok(RunOutcome { report, log })
}

fn summarize(scenario: &Scenario, kind: EngineKind, log: &RunLog, final_count: usize, world: &World) -> RunReport {
    let node_count = match kind {
        EngineKind::Bt => NodeCount {
            min: final_count,
            max: final_count,
        },
        EngineKind::Rbt => {
            let attached = log
                .traces
                .iter()
                .filter(|t| t.current.is_some())
                .map(|t| t.node_count);
            match (attached.clone().min(), attached.max()) {
                (Some(min), Some(max)) => NodeCount { min, max },
                _ => NodeCount {
                    min: SKELETON_NODES,
                    max: SKELETON_NODES,
                },
            }
        }
    };
    RunReport {
        mode: kind,
        case_id: scenario.case,
        node_count,
        goal_reached: log.goal_reached,
        total_tick_time: log.total_tick_ns(),
        ticks: log.traces.len() as u64,
        sort_order: world.placed_order().to_vec(),
    }
}
