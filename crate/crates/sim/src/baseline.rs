//! Static sorting trees without reconfiguration.
//!
//! Case 1 runs the three sort subtrees in a fixed b, g, r sequence. Case 2
//! enumerates every box ordering as a stump guarded by two distance
//! comparisons; the first stump whose comparisons hold sorts the boxes.

use std::collections::BTreeMap;
use std::time::Instant;

use rbt_core::blackboard::{stimulus_key, GOAL_FLAG, INITIALIZED_FLAG};
use rbt_core::instantiator::{build_tree, specialize};
use rbt_core::runtime::{EngineError, TickEngine, TickTrace, INITIALIZE_ACTION};
use rbt_core::{Blackboard, HandlerRegistry, Ltm, NodeId, NodeStatus, NodeType, SubtaskRecord, Tree};

use crate::scenario::{ScenarioError, SORT_TASK};
use crate::world::{subtask_name, BOX_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Lexicographic permutations of b, g, r.
pub fn orderings() -> Vec<[&'static str; 3]> {
    let [b, g, r] = BOX_NAMES;
    vec![[b, g, r], [b, r, g], [g, b, r], [g, r, b], [r, b, g], [r, g, b]]
}

fn grow(tree: &mut Tree, parent: NodeId, subtree: Tree) -> Result<(), EngineError> {
    let id = tree.graft(subtree)?;
    tree.add_child(parent, id)?;
    Ok(())
}

fn sort_subtree(ltm: &Ltm, b: &str, registry: &HandlerRegistry) -> Result<Tree, EngineError> {
    let binding = BTreeMap::from([("box".to_string(), b.to_string())]);
    let schemas = specialize(ltm.get_task_from_ltm(SORT_TASK)?, &binding)
        .map_err(EngineError::from)?;
    build_tree(&schemas, Some(registry)).map_err(EngineError::from)
}

fn closer_or_equal(a: &str, b: &str) -> rbt_core::bt::Predicate {
    let (ka, kb) = (stimulus_key(&subtask_name(a)), stimulus_key(&subtask_name(b)));
    Box::new(move |bb: &Blackboard| {
        match (bb.get(&ka).and_then(|v| v.as_f64()), bb.get(&kb).and_then(|v| v.as_f64())) {
            (Some(x), Some(y)) => x <= y,
            _ => false,
        }
    })
}

/// Builds the static tree for `case` with handlers from `registry` plus an
/// `initialize blackboard` action over `subtasks`.
pub fn build_baseline_bt(
    case: u8,
    ltm: &Ltm,
    registry: &HandlerRegistry,
    subtasks: &[SubtaskRecord],
) -> Result<Tree, BaselineError> {
    if !matches!(case, 1 | 2) {
        return Err(ScenarioError::UnknownCase(case).into());
    }
    let mut tree = Tree::new();
    let root = tree.add_node("bt_root", NodeType::Fallback);
    let goal = tree.add_condition(GOAL_FLAG);
    let seq = tree.add_node("sequence_1", NodeType::Sequence);
    let init_fb = tree.add_node("init", NodeType::Fallback);
    let init_cond = tree.add_condition(INITIALIZED_FLAG);
    let records = subtasks.to_vec();
    let init = tree.add_action(
        INITIALIZE_ACTION,
        Some(Box::new(move |bb: &Blackboard| {
            match bb.initialize(&records, &[GOAL_FLAG.to_string()]) {
                Ok(_) => NodeStatus::Success,
                Err(_) => NodeStatus::Failure,
            }
        })),
    );
    for (p, c) in [(root, goal), (root, seq), (seq, init_fb), (init_fb, init_cond), (init_fb, init)] {
        tree.add_child(p, c).map_err(EngineError::from)?;
    }
    tree.set_root(root).map_err(EngineError::from)?;
    if case == 1 {
        for b in BOX_NAMES {
            let sub = sort_subtree(ltm, b, registry)?;
            grow(&mut tree, seq, sub)?;
        }
    } else {
        let choose = tree.add_node("orderings", NodeType::Fallback);
        tree.add_child(seq, choose).map_err(EngineError::from)?;
        for order in orderings() {
            let stump = tree.add_node(format!("order {}", order.join(" ")), NodeType::Sequence);
            tree.add_child(choose, stump).map_err(EngineError::from)?;
            for w in order.windows(2) {
                let c = tree.add_predicate(
                    format!("d({}) <= d({})", w[0], w[1]),
                    closer_or_equal(w[0], w[1]),
                );
                tree.add_child(stump, c).map_err(EngineError::from)?;
            }
            for b in order {
                let sub = sort_subtree(ltm, b, registry)?;
                grow(&mut tree, stump, sub)?;
            }
        }
    }
    Ok(tree)
}

/// Ticks a static tree with the same goal bookkeeping as the reconfigurable
/// engine.
pub struct BtEngine {
    tree: Tree,
    bb: Blackboard,
    subtasks: Vec<SubtaskRecord>,
    ticks: u64,
    done: bool,
}

impl BtEngine {
    pub fn new(tree: Tree, bb: Blackboard, subtasks: Vec<SubtaskRecord>) -> Self {
        Self {
            tree,
            bb,
            subtasks,
            ticks: 0,
            done: false,
        }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }
}

impl TickEngine for BtEngine {
    fn tick_once(&mut self) -> Result<TickTrace, EngineError> {
        if self.done {
            return Err(EngineError::EngineHalted);
        }
        let start = Instant::now();
        let goal = rbt_core::emphasizer::goal_reached(&self.subtasks, &self.bb.snapshot());
        self.bb.set_flag(GOAL_FLAG, goal)?;
        let root_status = self.tree.tick(&self.bb)?;
        let flags = self.bb.snapshot().flags();
        if root_status == NodeStatus::Success {
            self.done = true;
        }
        let tick_ns = start.elapsed().as_nanos() as u64;
        self.ticks += 1;
        Ok(TickTrace {
            tick: self.ticks,
            root_status,
            current: None,
            priorities: BTreeMap::new(),
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
