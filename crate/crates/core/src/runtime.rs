//! The generic reconfigurable tree and its tick loop.
//!
//! The skeleton comes from the `rbt_root` task: a goal-gated sequence that
//! initializes the blackboard and then runs, in parallel, the `handle
//! priority` emphasizer and a fallback that either reloads the dynamic
//! subtree (when `priority changed` holds) or executes it.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackboard::{Blackboard, BlackboardError, GOAL_FLAG, PRIORITY_CHANGED_FLAG};
use crate::bt::{BtError, HandlerRegistry, NodeId, NodeStatus, Tree, PLACEHOLDER_ACTION};
use crate::emphasizer::{goal_reached, Emphasizer, SubtaskRecord};
use crate::instantiator::{build_tree, with_preconditions, InstantiateError, InstantiationContext};
use crate::ltm::{Ltm, LtmError};

pub const ROOT_TASK: &str = "rbt_root";
pub const INITIALIZE_ACTION: &str = "initialize blackboard";
pub const HANDLE_PRIORITY_ACTION: &str = "handle priority";
pub const LOAD_ACTION: &str = "load subtree";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Tree(#[from] BtError),
    #[error(transparent)]
    Blackboard(#[from] BlackboardError),
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
    #[error("engine already reached its goal")]
    EngineHalted,
    #[error("goal not reached within {} ticks", .0.traces.len())]
    TickBudgetExhausted(Box<RunLog>),
}

impl From<LtmError> for EngineError {
    fn from(e: LtmError) -> Self {
        EngineError::Instantiate(e.into())
    }
}

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTrace {
    pub tick: u64,
    pub root_status: NodeStatus,
    pub current: Option<String>,
    pub priorities: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub tick_ns: u64,
    #[serde(skip)]
    pub node_count: usize,
}

impl TickTrace {
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub traces: Vec<TickTrace>,
    pub goal_reached: bool,
}

impl RunLog {
    /// Sum of per-tick times, world stepping excluded.
    pub fn total_tick_ns(&self) -> u64 {
        self.traces.iter().map(|t| t.tick_ns).sum()
    }
}

/// Advances the environment between ticks.
pub trait WorldStepper {
    fn step(&mut self, bb: &Blackboard, tick: u64);
}

impl<F: FnMut(&Blackboard, u64)> WorldStepper for F {
    fn step(&mut self, bb: &Blackboard, tick: u64) {
        self(bb, tick)
    }
}

/// Anything that can be ticked towards a goal.
pub trait TickEngine {
    fn tick_once(&mut self) -> Result<TickTrace, EngineError>;

    fn blackboard(&self) -> &Blackboard;

    fn node_count(&self) -> usize;

    /// Steps the world, then ticks, until the root succeeds.
    fn run_to_goal(
        &mut self,
        world: &mut dyn WorldStepper,
        max_ticks: u64,
    ) -> Result<RunLog, EngineError> {
        let mut log = RunLog::default();
        for tick in 1..=max_ticks {
            world.step(self.blackboard(), tick);
            let trace = self.tick_once()?;
            let success = trace.root_status == NodeStatus::Success;
            log.traces.push(trace);
            if success {
                log.goal_reached = true;
                return Ok(log);
            }
        }
        Err(EngineError::TickBudgetExhausted(Box::new(log)))
    }
}

struct Shared {
    emphasizer: Emphasizer,
    current: Option<String>,
    reload: bool,
    error: Option<BlackboardError>,
}

pub struct RbtEngine {
    tree: Tree,
    bb: Blackboard,
    ctx: InstantiationContext,
    shared: Arc<Mutex<Shared>>,
    subtasks: Vec<SubtaskRecord>,
    placeholder: NodeId,
    branch: NodeId,
    ticks: u64,
    done: bool,
}

impl std::fmt::Debug for RbtEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RbtEngine")
            .field("ticks", &self.ticks)
            .field("current", &self.current())
            .field("nodes", &self.tree.count_nodes())
            .finish()
    }
}

/// Builds the skeleton from `root_task` with the engine's own handlers
/// added to `registry`.
pub fn build_engine(
    ltm: Arc<Ltm>,
    root_task: &str,
    subtasks: Vec<SubtaskRecord>,
    registry: HandlerRegistry,
    bb: Blackboard,
) -> Result<RbtEngine, EngineError> {
    for s in &subtasks {
        ltm.task(s.task_name())?;
    }
    let shared = Arc::new(Mutex::new(Shared {
        emphasizer: Emphasizer::new(subtasks.clone()),
        current: None,
        reload: false,
        error: None,
    }));

    let mut skeleton_handlers = registry.clone();
    {
        let bb = bb.clone();
        let shared = Arc::clone(&shared);
        let records = subtasks.clone();
        skeleton_handlers.register(INITIALIZE_ACTION, move || {
            let bb = bb.clone();
            let shared = Arc::clone(&shared);
            let records = records.clone();
            Box::new(move |_: &Blackboard| {
                let extra = [GOAL_FLAG.to_string(), PRIORITY_CHANGED_FLAG.to_string()];
                match bb.initialize(&records, &extra) {
                    Ok(_) => NodeStatus::Success,
                    Err(e) => {
                        shared.lock().error = Some(e);
                        NodeStatus::Failure
                    }
                }
            })
        });
    }
    {
        let shared = Arc::clone(&shared);
        skeleton_handlers.register(HANDLE_PRIORITY_ACTION, move || {
            let shared = Arc::clone(&shared);
            Box::new(move |bb: &Blackboard| {
                let mut s = shared.lock();
                let Shared {
                    emphasizer,
                    current,
                    error,
                    ..
                } = &mut *s;
                match emphasizer.handle_priority(bb, current.as_deref()) {
                    Ok(status) => status,
                    Err(e) => {
                        *error = Some(e);
                        NodeStatus::Failure
                    }
                }
            })
        });
    }
    {
        let shared = Arc::clone(&shared);
        skeleton_handlers.register(LOAD_ACTION, move || {
            let shared = Arc::clone(&shared);
            Box::new(move |_: &Blackboard| {
                // the swap itself waits for the tick boundary
                shared.lock().reload = true;
                NodeStatus::Success
            })
        });
    }
    skeleton_handlers.register(PLACEHOLDER_ACTION, || {
        Box::new(|_: &Blackboard| NodeStatus::Running)
    });

    let tree = build_tree(ltm.get_task_from_ltm(root_task)?, Some(&skeleton_handlers))?;
    let placeholders: Vec<NodeId> = match tree.root() {
        Some(r) => tree
            .descendants(r)?
            .into_iter()
            .filter(|&n| tree.is_placeholder(n))
            .collect(),
        None => Vec::new(),
    };
    let [placeholder] = placeholders[..] else {
        return Err(BtError::MalformedTree(format!(
            "root task must hold exactly one `{PLACEHOLDER_ACTION}` action, found {}",
            placeholders.len()
        ))
        .into());
    };
    let branch = tree.parent(placeholder)?.ok_or_else(|| {
        BtError::MalformedTree(format!("`{PLACEHOLDER_ACTION}` cannot be the root"))
    })?;
    Ok(RbtEngine {
        tree,
        bb,
        ctx: InstantiationContext::new(ltm, registry),
        shared,
        subtasks,
        placeholder,
        branch,
        ticks: 0,
        done: false,
    })
}

impl RbtEngine {
    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn current(&self) -> Option<String> {
        self.shared.lock().current.clone()
    }

    pub fn priorities(&self) -> BTreeMap<String, f64> {
        self.shared.lock().emphasizer.priorities()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Halts and removes the attached subtree. Postconditions are left as
    /// they are.
    pub fn preempt(&mut self) -> Result<(), EngineError> {
        self.tree.detach_dynamic(self.placeholder, &self.bb)?;
        self.shared.lock().current = None;
        Ok(())
    }

    /// Swaps in the subtree of the current argmax, or leaves the
    /// placeholder empty when nothing is active.
    fn reload(&mut self) -> Result<(), EngineError> {
        if self.tree.attached_at(self.placeholder).is_some() {
            self.preempt()?;
        }
        let snap = self.bb.snapshot();
        let choice = self.shared.lock().emphasizer.selected(&snap).cloned();
        if let Some(rec) = choice {
            let binding = rec
                .template
                .as_ref()
                .map(|t| t.binding.clone())
                .unwrap_or_default();
            let subtree = self.ctx.instantiate_subtree(rec.task_name(), &binding)?;
            let subtree = with_preconditions(subtree, &format!("{}.pre", rec.name), &rec.preconditions)?;
            self.tree.attach_dynamic(self.placeholder, subtree)?;
            log::debug!("attached `{}`", rec.name);
            self.shared.lock().current = Some(rec.name);
        }
        self.bb.set_flag(PRIORITY_CHANGED_FLAG, false)?;
        Ok(())
    }
}

impl TickEngine for RbtEngine {
    fn tick_once(&mut self) -> Result<TickTrace, EngineError> {
        if self.done {
            return Err(EngineError::EngineHalted);
        }
        let start = Instant::now();
        let goal = goal_reached(&self.subtasks, &self.bb.snapshot());
        self.bb.set_flag(GOAL_FLAG, goal)?;
        let root_status = self.tree.tick(&self.bb)?;
        if let Some(e) = self.shared.lock().error.take() {
            return Err(e.into());
        }
        let flags = self.bb.snapshot().flags();
        let reload = std::mem::take(&mut self.shared.lock().reload);
        if reload {
            self.reload()?;
        } else {
            match self.tree.status(self.branch)? {
                NodeStatus::Success | NodeStatus::Failure => {
                    self.tree.reset_subtree(self.branch, &self.bb)?;
                }
                _ => {}
            }
        }
        match root_status {
            NodeStatus::Success => self.done = true,
            NodeStatus::Failure => log::warn!("tick {}: root failed, retrying", self.ticks + 1),
            _ => {}
        }
        let tick_ns = start.elapsed().as_nanos() as u64;
        self.ticks += 1;
        let s = self.shared.lock();
        Ok(TickTrace {
            tick: self.ticks,
            root_status,
            current: s.current.clone(),
            priorities: s.emphasizer.priorities(),
            flags,
            tick_ns,
            node_count: self.tree.count_nodes(),
        })
    }

    fn blackboard(&self) -> &Blackboard {
        &self.bb
    }

    fn node_count(&self) -> usize {
        self.tree.count_nodes()
    }
}
