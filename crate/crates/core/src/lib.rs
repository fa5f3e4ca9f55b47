//! Reconfigurable behavior trees.
//!
//! A fixed skeleton tree runs a priority emphasizer next to a placeholder
//! that is swapped, tick by tick, for the subtree of the most urgent active
//! subtask. Subtrees are loaded from JSON schemas held in long-term memory.

pub mod blackboard;
pub mod bt;
pub mod emphasizer;
pub mod instantiator;
pub mod ltm;
pub mod runtime;

pub use blackboard::{Blackboard, Snapshot, Unit, Value};
pub use bt::{ActionHandler, BtError, HandlerRegistry, NodeId, NodeStatus, NodeType, Outline, Tree};
pub use emphasizer::{Emphasizer, PriorityParams, SubtaskRecord};
pub use instantiator::{build_tree, specialize, InstantiateError, InstantiationContext};
pub use ltm::{parse_task, serialize_task, Ltm, LtmError, SchemaError, SchemaNode, TaskRecord};
pub use runtime::{EngineError, RbtEngine, TickEngine, TickTrace};
