//! Behavior tree nodes, arena storage and tick semantics.
//!
//! A [`Tree`] is an arena of nodes addressed by dense [`NodeId`]s. Control
//! flow nodes (Fallback, Sequence, Parallel, Decorator) combine the statuses
//! of their children; execution nodes either read a flag from the
//! [`Blackboard`] (Condition) or delegate to an [`ActionHandler`] (Action).
//!
//! Ticks are stateless at the control-flow level: every visited node has its
//! status recomputed, and memory across ticks lives only in action handlers
//! and on the blackboard.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackboard::Blackboard;

/// Handler name of the action node that hosts dynamically attached subtrees.
pub const PLACEHOLDER_ACTION: &str = "execute subtree";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    /// Not ticked since the last reset.
    Fresh,
    Running,
    Success,
    Failure,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeStatus::Fresh => "Fresh",
            NodeStatus::Running => "Running",
            NodeStatus::Success => "Success",
            NodeStatus::Failure => "Failure",
        };
        f.write_str(s)
    }
}

/// Status transformations available to decorator nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoratorPolicy {
    Identity,
    /// Swaps Success and Failure, leaves Running untouched.
    Inverter,
    /// Turns Failure into Success.
    ForceSuccess,
}

impl DecoratorPolicy {
    pub fn apply(self, status: NodeStatus) -> NodeStatus {
        match (self, status) {
            (DecoratorPolicy::Identity, s) => s,
            (DecoratorPolicy::Inverter, NodeStatus::Success) => NodeStatus::Failure,
            (DecoratorPolicy::Inverter, NodeStatus::Failure) => NodeStatus::Success,
            (DecoratorPolicy::Inverter, s) => s,
            (DecoratorPolicy::ForceSuccess, NodeStatus::Failure) => NodeStatus::Success,
            (DecoratorPolicy::ForceSuccess, s) => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecoratorPolicy::Identity => "identity",
            DecoratorPolicy::Inverter => "inverter",
            DecoratorPolicy::ForceSuccess => "force_success",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(DecoratorPolicy::Identity),
            "inverter" => Some(DecoratorPolicy::Inverter),
            "force_success" => Some(DecoratorPolicy::ForceSuccess),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeType {
    Fallback,
    Sequence,
    /// Succeeds once `threshold` children succeed.
    Parallel {
        threshold: usize,
    },
    Decorator(DecoratorPolicy),
    /// Leaf running the handler registered under this name.
    Action(String),
    /// Leaf reading the named blackboard flag.
    Condition(String),
}

impl NodeType {
    pub fn is_control(&self) -> bool {
        !matches!(self, NodeType::Action(_) | NodeType::Condition(_))
    }

    /// Short tag used by [`Outline`] and the text renderer.
    pub fn tag(&self) -> String {
        match self {
            NodeType::Fallback => "Fallback".to_string(),
            NodeType::Sequence => "Sequence".to_string(),
            NodeType::Parallel { threshold } => format!("Parallel({threshold})"),
            NodeType::Decorator(p) => format!("Decorator({})", p.name()),
            NodeType::Action(_) => "Action".to_string(),
            NodeType::Condition(_) => "Condition".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BtError {
    #[error("no handler registered for action `{0}`")]
    UnresolvedHandler(String),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("parallel node `{label}` has threshold {threshold} outside [1, {children}]")]
    InvalidThreshold {
        label: String,
        threshold: usize,
        children: usize,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a replaceable placeholder")]
    NotReplaceable(NodeId),
    #[error("no dynamic subtree attached at node {0}")]
    NothingAttached(NodeId),
    #[error("tree has no root")]
    EmptyTree,
    #[error("action `{0}` reported Fresh from a tick")]
    InvalidHandlerStatus(String),
}

/// Body of an Action node.
///
/// `step` is called at most once per node per tick. After `halt`, the next
/// `step` must begin a fresh attempt.
pub trait ActionHandler: Send {
    fn step(&mut self, bb: &Blackboard) -> NodeStatus;

    fn halt(&mut self, _bb: &Blackboard) {}
}

impl<F> ActionHandler for F
where
    F: FnMut(&Blackboard) -> NodeStatus + Send,
{
    fn step(&mut self, bb: &Blackboard) -> NodeStatus {
        self(bb)
    }
}

/// Custom test for a Condition node that is not a plain blackboard flag.
pub type Predicate = Box<dyn Fn(&Blackboard) -> bool + Send>;

type Factory = Arc<dyn Fn() -> Box<dyn ActionHandler> + Send + Sync>;

/// Maps action names to handler factories. Every Action node gets its own
/// handler instance.
#[derive(Clone, Default)]
pub struct HandlerRegistry {
    factories: HashMap<String, Factory>,
}

impl HandlerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn() -> Box<dyn ActionHandler> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Arc::new(factory));
    }

    pub fn create(&self, name: &str) -> Option<Box<dyn ActionHandler>> {
        self.factories.get(name).map(|f| f())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Copies every factory of `other` into `self`, replacing duplicates.
    pub fn extend(&mut self, other: &HandlerRegistry) {
        for (name, f) in &other.factories {
            self.factories.insert(name.clone(), Arc::clone(f));
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl fmt::Debug for HandlerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.factories.keys().collect();
        names.sort();
        f.debug_struct("HandlerRegistry").field("names", &names).finish()
    }
}

/// Ticks up to `n` children left to right; Success or Running from a child
/// ends the loop, Failure moves on.
pub fn tick_fallback<E>(
    n: usize,
    mut tick_child: impl FnMut(usize) -> Result<NodeStatus, E>,
) -> Result<NodeStatus, E> {
    for i in 0..n {
        match tick_child(i)? {
            NodeStatus::Failure => continue,
            other => return Ok(other),
        }
    }
    Ok(NodeStatus::Failure)
}

/// Ticks up to `n` children left to right; Failure or Running from a child
/// ends the loop, Success moves on.
pub fn tick_sequence<E>(
    n: usize,
    mut tick_child: impl FnMut(usize) -> Result<NodeStatus, E>,
) -> Result<NodeStatus, E> {
    for i in 0..n {
        match tick_child(i)? {
            NodeStatus::Success => continue,
            other => return Ok(other),
        }
    }
    Ok(NodeStatus::Success)
}

/// Ticks all `n` children, then applies the M-of-N rule: Success with at
/// least `threshold` successes, Failure with more than `n - threshold`
/// failures, Running otherwise.
pub fn tick_parallel<E: From<BtError>>(
    threshold: usize,
    n: usize,
    mut tick_child: impl FnMut(usize) -> Result<NodeStatus, E>,
) -> Result<NodeStatus, E> {
    if threshold == 0 || threshold > n {
        return Err(BtError::InvalidThreshold {
            label: String::new(),
            threshold,
            children: n,
        }
        .into());
    }
    let mut successes = 0;
    let mut failures = 0;
    for i in 0..n {
        match tick_child(i)? {
            NodeStatus::Success => successes += 1,
            NodeStatus::Failure => failures += 1,
            _ => {}
        }
    }
    Ok(if successes >= threshold {
        NodeStatus::Success
    } else if failures > n - threshold {
        NodeStatus::Failure
    } else {
        NodeStatus::Running
    })
}

struct Node {
    label: String,
    kind: NodeType,
    children: Vec<NodeId>,
    parent: Option<NodeId>,
    status: NodeStatus,
    handler: Option<Box<dyn ActionHandler>>,
    predicate: Option<Predicate>,
}

#[derive(Debug, Clone, Copy)]
struct DynamicSlot {
    placeholder: NodeId,
    attached: NodeId,
}

/// Structural view of a tree: node kind, label and ordered children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outline {
    pub kind: String,
    pub label: String,
    pub children: Vec<Outline>,
}

impl Outline {
    pub fn leaf(kind: &str, label: &str) -> Self {
        Outline {
            kind: kind.to_string(),
            label: label.to_string(),
            children: Vec::new(),
        }
    }

    pub fn node(kind: &str, label: &str, children: Vec<Outline>) -> Self {
        Outline {
            kind: kind.to_string(),
            label: label.to_string(),
            children,
        }
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(Outline::count).sum::<usize>()
    }
}

/// Arena-backed behavior tree.
#[derive(Default)]
pub struct Tree {
    nodes: Vec<Option<Node>>,
    free: Vec<usize>,
    root: Option<NodeId>,
    dynamic: Vec<DynamicSlot>,
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tree")
            .field("root", &self.root)
            .field("nodes", &self.count_nodes())
            .finish()
    }
}

impl Tree {
    pub fn new() -> Self {
        Self::default()
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        if let Some(slot) = self.free.pop() {
            self.nodes[slot] = Some(node);
            NodeId(slot)
        } else {
            self.nodes.push(Some(node));
            NodeId(self.nodes.len() - 1)
        }
    }

    /// Adds a detached node. Link it with [`Tree::add_child`] or
    /// [`Tree::set_root`].
    pub fn add_node(&mut self, label: impl Into<String>, kind: NodeType) -> NodeId {
        self.alloc(Node {
            label: label.into(),
            kind,
            children: Vec::new(),
            parent: None,
            status: NodeStatus::Fresh,
            handler: None,
            predicate: None,
        })
    }

    pub fn add_condition(&mut self, name: impl Into<String>) -> NodeId {
        let name = name.into();
        self.add_node(name.clone(), NodeType::Condition(name))
    }

    /// Adds a Condition leaf evaluated by `predicate` instead of a flag read.
    pub fn add_predicate(&mut self, name: impl Into<String>, predicate: Predicate) -> NodeId {
        let id = self.add_condition(name);
        self.node_mut(id).predicate = Some(predicate);
        id
    }

    /// Adds an action leaf. A missing handler makes ticking it fail with
    /// [`BtError::UnresolvedHandler`], which is fine for trees that are only
    /// inspected or counted.
    pub fn add_action(
        &mut self,
        name: impl Into<String>,
        handler: Option<Box<dyn ActionHandler>>,
    ) -> NodeId {
        let name = name.into();
        let id = self.add_node(name.clone(), NodeType::Action(name));
        self.node_mut(id).handler = handler;
        id
    }

    pub fn set_handler(&mut self, id: NodeId, handler: Box<dyn ActionHandler>) -> Result<(), BtError> {
        let node = self.get_mut(id)?;
        match node.kind {
            NodeType::Action(_) => {
                node.handler = Some(handler);
                Ok(())
            }
            _ => Err(BtError::MalformedTree(format!(
                "node {id} (`{}`) is not an action",
                node.label
            ))),
        }
    }

    pub fn set_root(&mut self, id: NodeId) -> Result<(), BtError> {
        let node = self.get(id)?;
        if node.parent.is_some() {
            return Err(BtError::MalformedTree(format!(
                "node {id} already has a parent and cannot be the root"
            )));
        }
        self.root = Some(id);
        Ok(())
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    /// Appends `child` to the children of `parent`, rejecting anything that
    /// would break the single-root, single-parent, acyclic shape.
    pub fn add_child(&mut self, parent: NodeId, child: NodeId) -> Result<(), BtError> {
        if !self.get(parent)?.kind.is_control() {
            return Err(BtError::MalformedTree(format!(
                "leaf node {parent} cannot have children"
            )));
        }
        let c = self.get(child)?;
        if c.parent.is_some() {
            return Err(BtError::MalformedTree(format!(
                "node {child} (`{}`) already has a parent",
                c.label
            )));
        }
        if Some(child) == self.root {
            return Err(BtError::MalformedTree(format!("root {child} cannot become a child")));
        }
        let mut cursor = Some(parent);
        while let Some(id) = cursor {
            if id == child {
                return Err(BtError::MalformedTree(format!(
                    "attaching {child} under {parent} would create a cycle"
                )));
            }
            cursor = self.node(id).parent;
        }
        self.node_mut(child).parent = Some(parent);
        self.node_mut(parent).children.push(child);
        Ok(())
    }

    fn get(&self, id: NodeId) -> Result<&Node, BtError> {
        self.nodes
            .get(id.0)
            .and_then(Option::as_ref)
            .ok_or(BtError::UnknownNode(id))
    }

    fn get_mut(&mut self, id: NodeId) -> Result<&mut Node, BtError> {
        self.nodes
            .get_mut(id.0)
            .and_then(Option::as_mut)
            .ok_or(BtError::UnknownNode(id))
    }

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id.0].as_ref().expect("live node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id.0].as_mut().expect("live node id")
    }

    /// Frees an unlinked node and returns its former children, now detached.
    pub fn dissolve(&mut self, id: NodeId) -> Result<Vec<NodeId>, BtError> {
        let node = self.get(id)?;
        if node.parent.is_some() || self.root == Some(id) {
            return Err(BtError::MalformedTree(format!("node {id} is still linked")));
        }
        let children = std::mem::take(&mut self.node_mut(id).children);
        for &c in &children {
            self.node_mut(c).parent = None;
        }
        self.nodes[id.0] = None;
        self.free.push(id.0);
        Ok(children)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_ok()
    }

    pub fn label(&self, id: NodeId) -> Result<&str, BtError> {
        Ok(&self.get(id)?.label)
    }

    pub fn kind(&self, id: NodeId) -> Result<&NodeType, BtError> {
        Ok(&self.get(id)?.kind)
    }

    pub fn children(&self, id: NodeId) -> Result<&[NodeId], BtError> {
        Ok(&self.get(id)?.children)
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>, BtError> {
        Ok(self.get(id)?.parent)
    }

    pub fn status(&self, id: NodeId) -> Result<NodeStatus, BtError> {
        Ok(self.get(id)?.status)
    }

    /// Pre-order list of the nodes reachable from `id`.
    pub fn descendants(&self, id: NodeId) -> Result<Vec<NodeId>, BtError> {
        self.get(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.node(n).children.iter().rev().copied());
        }
        Ok(out)
    }

    /// First reachable node (pre-order) matching `pred`.
    pub fn find(&self, mut pred: impl FnMut(&str, &NodeType) -> bool) -> Option<NodeId> {
        let root = self.root?;
        self.descendants(root)
            .ok()?
            .into_iter()
            .find(|&id| {
                let n = self.node(id);
                pred(&n.label, &n.kind)
            })
    }

    /// Number of nodes reachable from the root. Placeholders hidden behind an
    /// attached subtree are not counted.
    pub fn count_nodes(&self) -> usize {
        match self.root {
            Some(root) => self.count_from(root),
            None => 0,
        }
    }

    fn count_from(&self, id: NodeId) -> usize {
        1 + self
            .node(id)
            .children
            .iter()
            .map(|&c| self.count_from(c))
            .sum::<usize>()
    }

    /// Checks that the reachable nodes form a rooted tree with consistent
    /// parent links.
    pub fn validate(&self) -> Result<(), BtError> {
        let root = self.root.ok_or(BtError::EmptyTree)?;
        if self.get(root)?.parent.is_some() {
            return Err(BtError::MalformedTree("root has a parent".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let node = self.get(id)?;
            if std::mem::replace(&mut seen[id.0], true) {
                return Err(BtError::MalformedTree(format!(
                    "node {id} reachable twice (cycle or shared child)"
                )));
            }
            if !node.kind.is_control() && !node.children.is_empty() {
                return Err(BtError::MalformedTree(format!("leaf {id} has children")));
            }
            for &c in &node.children {
                if self.get(c)?.parent != Some(id) {
                    return Err(BtError::MalformedTree(format!(
                        "child {c} of {id} has an inconsistent parent link"
                    )));
                }
                stack.push(c);
            }
        }
        Ok(())
    }

    /// Ticks the root once.
    pub fn tick(&mut self, bb: &Blackboard) -> Result<NodeStatus, BtError> {
        let root = self.root.ok_or(BtError::EmptyTree)?;
        self.tick_node(root, bb)
    }

    /// Ticks the subtree under `id` once and records the result on every
    /// visited node.
    pub fn tick_node(&mut self, id: NodeId, bb: &Blackboard) -> Result<NodeStatus, BtError> {
        enum Step {
            Fallback,
            Sequence,
            Parallel(usize),
            Decorator(DecoratorPolicy),
            Condition,
            Action,
        }
        let node = self.get(id)?;
        let n = node.children.len();
        if node.kind.is_control() && n == 0 {
            return Err(BtError::MalformedTree(format!(
                "control node `{}` has no children",
                node.label
            )));
        }
        let step = match node.kind {
            NodeType::Fallback => Step::Fallback,
            NodeType::Sequence => Step::Sequence,
            NodeType::Parallel { threshold } => {
                if threshold == 0 || threshold > n {
                    return Err(BtError::InvalidThreshold {
                        label: node.label.clone(),
                        threshold,
                        children: n,
                    });
                }
                Step::Parallel(threshold)
            }
            NodeType::Decorator(policy) => {
                if n != 1 {
                    return Err(BtError::MalformedTree(format!(
                        "decorator `{}` must have exactly one child, found {n}",
                        node.label
                    )));
                }
                Step::Decorator(policy)
            }
            NodeType::Condition(_) => Step::Condition,
            NodeType::Action(_) => Step::Action,
        };
        let status = match step {
            Step::Fallback => tick_fallback(n, |i| {
                let c = self.node(id).children[i];
                self.tick_node(c, bb)
            })?,
            Step::Sequence => tick_sequence(n, |i| {
                let c = self.node(id).children[i];
                self.tick_node(c, bb)
            })?,
            Step::Parallel(threshold) => tick_parallel(threshold, n, |i| {
                let c = self.node(id).children[i];
                self.tick_node(c, bb)
            })?,
            Step::Decorator(policy) => {
                let c = self.node(id).children[0];
                policy.apply(self.tick_node(c, bb)?)
            }
            Step::Condition => {
                let node = self.node(id);
                let NodeType::Condition(name) = &node.kind else {
                    unreachable!()
                };
                let holds = match &node.predicate {
                    Some(p) => p(bb),
                    None => bb.read_condition(name),
                };
                if holds {
                    NodeStatus::Success
                } else {
                    NodeStatus::Failure
                }
            }
            Step::Action => {
                let node = self.node_mut(id);
                let Some(handler) = node.handler.as_mut() else {
                    return Err(BtError::UnresolvedHandler(node.label.clone()));
                };
                match handler.step(bb) {
                    NodeStatus::Fresh => {
                        return Err(BtError::InvalidHandlerStatus(node.label.clone()))
                    }
                    s => s,
                }
            }
        };
        self.node_mut(id).status = status;
        Ok(status)
    }

    /// Sets every node under `id` back to Fresh, halting running actions
    /// first.
    pub fn reset_subtree(&mut self, id: NodeId, bb: &Blackboard) -> Result<(), BtError> {
        for n in self.descendants(id)? {
            let node = self.node_mut(n);
            if node.status == NodeStatus::Running {
                if let Some(h) = node.handler.as_mut() {
                    h.halt(bb);
                }
            }
            node.status = NodeStatus::Fresh;
        }
        Ok(())
    }

    /// Moves the reachable part of `other` into this arena and returns the
    /// new id of its root, not yet linked to anything.
    pub fn graft(&mut self, mut other: Tree) -> Result<NodeId, BtError> {
        let other_root = other.root.ok_or(BtError::EmptyTree)?;
        let order = other.descendants(other_root)?;
        let mut remap: HashMap<NodeId, NodeId> = HashMap::with_capacity(order.len());
        for &old in &order {
            let mut node = other.nodes[old.0].take().expect("reachable node");
            node.parent = None;
            let children = std::mem::take(&mut node.children);
            let new = self.alloc(node);
            remap.insert(old, new);
            // children are remapped once allocated; stash the old ids
            self.node_mut(new).children = children;
        }
        for &old in &order {
            let new = remap[&old];
            let children: Vec<NodeId> =
                self.node(new).children.iter().map(|c| remap[c]).collect();
            for &c in &children {
                self.node_mut(c).parent = Some(new);
            }
            self.node_mut(new).children = children;
        }
        Ok(remap[&other_root])
    }

    pub fn is_placeholder(&self, id: NodeId) -> bool {
        matches!(self.get(id), Ok(Node { kind: NodeType::Action(name), .. }) if name == PLACEHOLDER_ACTION)
    }

    /// Root of the subtree currently attached in place of `placeholder`.
    pub fn attached_at(&self, placeholder: NodeId) -> Option<NodeId> {
        self.dynamic
            .iter()
            .find(|s| s.placeholder == placeholder)
            .map(|s| s.attached)
    }

    /// Replaces the placeholder action `at` by the root of `subtree`. The
    /// placeholder is kept aside and restored by [`Tree::detach_dynamic`].
    pub fn attach_dynamic(&mut self, at: NodeId, subtree: Tree) -> Result<NodeId, BtError> {
        if !self.is_placeholder(at) || self.attached_at(at).is_some() {
            return Err(BtError::NotReplaceable(at));
        }
        let new_root = self.graft(subtree)?;
        for n in self.descendants(new_root)? {
            self.node_mut(n).status = NodeStatus::Fresh;
        }
        self.swap_in_place(at, new_root);
        self.dynamic.push(DynamicSlot {
            placeholder: at,
            attached: new_root,
        });
        Ok(new_root)
    }

    /// Removes the subtree attached at `at`, halting its running actions,
    /// and puts the placeholder back with a Fresh status.
    pub fn detach_dynamic(&mut self, at: NodeId, bb: &Blackboard) -> Result<(), BtError> {
        let pos = self
            .dynamic
            .iter()
            .position(|s| s.placeholder == at)
            .ok_or(BtError::NothingAttached(at))?;
        let slot = self.dynamic.remove(pos);
        self.reset_subtree(slot.attached, bb)?;
        self.swap_in_place(slot.attached, slot.placeholder);
        for n in self.descendants(slot.attached)? {
            // nested dynamic slots die with their host
            self.dynamic.retain(|s| s.placeholder != n);
            self.nodes[n.0] = None;
            self.free.push(n.0);
        }
        self.node_mut(at).status = NodeStatus::Fresh;
        Ok(())
    }

    /// Puts `incoming` where `outgoing` sits (child slot or root) and
    /// unlinks `outgoing`.
    fn swap_in_place(&mut self, outgoing: NodeId, incoming: NodeId) {
        let parent = self.node(outgoing).parent;
        match parent {
            Some(p) => {
                let slot = self
                    .node(p)
                    .children
                    .iter()
                    .position(|&c| c == outgoing)
                    .expect("child listed under its parent");
                self.node_mut(p).children[slot] = incoming;
            }
            None => {
                if self.root == Some(outgoing) {
                    self.root = Some(incoming);
                }
            }
        }
        self.node_mut(incoming).parent = parent;
        self.node_mut(outgoing).parent = None;
    }

    pub fn outline(&self) -> Option<Outline> {
        self.root.map(|r| self.outline_from(r))
    }

    pub fn outline_from(&self, id: NodeId) -> Outline {
        let n = self.node(id);
        Outline {
            kind: n.kind.tag(),
            label: n.label.clone(),
            children: n.children.iter().map(|&c| self.outline_from(c)).collect(),
        }
    }

    /// Indented text rendering, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.root {
            self.render_into(root, 0, &mut out);
        }
        out
    }

    fn render_into(&self, id: NodeId, depth: usize, out: &mut String) {
        let n = self.node(id);
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(&n.kind.tag());
        out.push_str(": ");
        out.push_str(&n.label);
        out.push('\n');
        for &c in &n.children {
            self.render_into(c, depth + 1, out);
        }
    }
}
