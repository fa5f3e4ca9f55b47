//! Turns schema lists from the LTM into executable trees.
//!
//! Conditions declared on a schema wrap the referenced child:
//!
//! * postconditions `G_i*` give `Fallback(Condition, child)`, or
//!   `Fallback(Sequence(Conditions..), child)` when there are several;
//! * preconditions `C_i*` give `Sequence(Conditions.., child)`;
//! * both together give `Fallback(post, Sequence(pre.., child))`.
//!
//! A wrapper of the same kind as its host is spliced into the host instead
//! of nesting, since `Fallback(a, Fallback(b, c))` and `Fallback(a, b, c)`
//! tick identically.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::blackboard::Blackboard;
use crate::bt::{BtError, DecoratorPolicy, HandlerRegistry, NodeId, NodeType, Tree};
use crate::ltm::{validate, ChildRef, ConditionRole, Ltm, LtmError, SchemaError, SchemaKind, SchemaNode};

#[derive(Debug, Error)]
pub enum InstantiateError {
    #[error(transparent)]
    Ltm(#[from] LtmError),
    #[error(transparent)]
    Tree(#[from] BtError),
    #[error("placeholder `{{{0}}}` does not occur in the task")]
    UnboundPlaceholder(String),
}

impl From<SchemaError> for InstantiateError {
    fn from(e: SchemaError) -> Self {
        InstantiateError::Ltm(LtmError::Schema(e))
    }
}

/// Builds a tree from validated schemas in file order.
///
/// With a registry, every action gets a handler instance and unknown action
/// names fail with [`BtError::UnresolvedHandler`]. Without one, actions are
/// left bare, which is enough for counting and rendering.
pub fn build_tree(
    schemas: &[SchemaNode],
    registry: Option<&HandlerRegistry>,
) -> Result<Tree, InstantiateError> {
    validate(schemas)?;
    let mut tree = Tree::new();
    let mut ids: HashMap<&str, NodeId> = HashMap::with_capacity(schemas.len());
    for s in schemas {
        let kind = match s.kind {
            SchemaKind::Fallback => NodeType::Fallback,
            SchemaKind::Sequence => NodeType::Sequence,
            SchemaKind::Parallel => NodeType::Parallel {
                threshold: s.children.len(),
            },
            SchemaKind::Decorator => {
                if s.children.len() != 1 {
                    return Err(BtError::MalformedTree(format!(
                        "decorator schema `{}` must have exactly one child",
                        s.name
                    ))
                    .into());
                }
                NodeType::Decorator(DecoratorPolicy::Identity)
            }
        };
        ids.insert(&s.name, tree.add_node(s.name.clone(), kind));
    }
    for s in schemas {
        let host = ids[s.name.as_str()];
        for (pos, child) in s.children.iter().enumerate() {
            let i = pos + 1;
            let child_id = match child {
                ChildRef::Node(name) => ids[name.as_str()],
                ChildRef::Action(name) => {
                    let handler = match registry {
                        Some(r) => Some(
                            r.create(name)
                                .ok_or_else(|| BtError::UnresolvedHandler(name.clone()))?,
                        ),
                        None => None,
                    };
                    tree.add_action(name.clone(), handler)
                }
            };
            let post = s.conditions(ConditionRole::Post, i);
            let pre = s.conditions(ConditionRole::Pre, i);
            let mut gated = child_id;
            if !pre.is_empty() {
                let seq = tree.add_node(format!("{}.C{i}", s.name), NodeType::Sequence);
                for c in &pre {
                    let cond = tree.add_condition(*c);
                    tree.add_child(seq, cond)?;
                }
                tree.add_child(seq, gated)?;
                gated = seq;
            }
            if !post.is_empty() {
                let fb = tree.add_node(format!("{}.G{i}", s.name), NodeType::Fallback);
                let check = if post.len() == 1 {
                    tree.add_condition(post[0])
                } else {
                    let all = tree.add_node(format!("{}.G{i}.all", s.name), NodeType::Sequence);
                    for c in &post {
                        let cond = tree.add_condition(*c);
                        tree.add_child(all, cond)?;
                    }
                    all
                };
                tree.add_child(fb, check)?;
                tree.add_child(fb, gated)?;
                gated = fb;
            }
            attach(&mut tree, host, gated, child_id)?;
        }
    }
    let root = schemas.iter().find(|s| s.is_root()).expect("validated");
    tree.set_root(ids[root.name.as_str()])?;
    Ok(tree)
}

/// Adds `wrapper` under `host`, splicing its children in when both are the
/// same kind of composite and the wrapper was generated (not the original
/// child itself).
fn attach(tree: &mut Tree, host: NodeId, wrapper: NodeId, original: NodeId) -> Result<(), BtError> {
    let same = matches!(
        (tree.kind(host)?, tree.kind(wrapper)?),
        (NodeType::Fallback, NodeType::Fallback) | (NodeType::Sequence, NodeType::Sequence)
    );
    if wrapper == original || !same {
        return tree.add_child(host, wrapper);
    }
    for c in tree.dissolve(wrapper)? {
        tree.add_child(host, c)?;
    }
    Ok(())
}

/// Replaces every `{key}` token with the bound value in node names, action
/// literals and condition names.
pub fn specialize(
    schemas: &[SchemaNode],
    binding: &BTreeMap<String, String>,
) -> Result<Vec<SchemaNode>, InstantiateError> {
    for key in binding.keys() {
        let token = format!("{{{key}}}");
        let used = schemas.iter().any(|s| {
            s.name.contains(&token)
                || s.children.iter().any(|c| match c {
                    ChildRef::Node(n) | ChildRef::Action(n) => n.contains(&token),
                })
                || s.params.iter().any(|p| p.name.contains(&token))
        });
        if !used {
            return Err(InstantiateError::UnboundPlaceholder(key.clone()));
        }
    }
    let sub = |text: &str| {
        binding
            .iter()
            .fold(text.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
    };
    let out: Vec<SchemaNode> = schemas
        .iter()
        .map(|s| SchemaNode {
            name: sub(&s.name),
            kind: s.kind,
            children: s
                .children
                .iter()
                .map(|c| match c {
                    ChildRef::Node(n) => ChildRef::Node(sub(n)),
                    ChildRef::Action(a) => ChildRef::Action(sub(a)),
                })
                .collect(),
            params: s
                .params
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p.name = sub(&p.name);
                    p
                })
                .collect(),
        })
        .collect();
    validate(&out)?;
    Ok(out)
}

/// Puts `tree` behind `Sequence(Conditions.., root)`; no-op without
/// conditions.
pub fn with_preconditions(
    mut tree: Tree,
    label: &str,
    preconditions: &[String],
) -> Result<Tree, BtError> {
    if preconditions.is_empty() {
        return Ok(tree);
    }
    let old_root = tree.root().ok_or(BtError::EmptyTree)?;
    let seq = tree.add_node(label.to_string(), NodeType::Sequence);
    tree.set_root(seq)?;
    for c in preconditions {
        let cond = tree.add_condition(c.clone());
        tree.add_child(seq, cond)?;
    }
    tree.add_child(seq, old_root)?;
    Ok(tree)
}

/// LTM and handlers needed to instantiate tasks at run time.
#[derive(Debug, Clone)]
pub struct InstantiationContext {
    pub ltm: Arc<Ltm>,
    pub registry: HandlerRegistry,
}

impl InstantiationContext {
    pub fn new(ltm: Arc<Ltm>, registry: HandlerRegistry) -> Self {
        Self { ltm, registry }
    }

    /// Loads `task`, specializes it and builds it with handlers.
    pub fn instantiate_subtree(
        &self,
        task: &str,
        binding: &BTreeMap<String, String>,
    ) -> Result<Tree, InstantiateError> {
        let schemas = self.ltm.get_task_from_ltm(task)?;
        let schemas = specialize(schemas, binding)?;
        build_tree(&schemas, Some(&self.registry))
    }
}

/// Attaches `subtree` at the placeholder `at`.
pub fn attach_dynamic(tree: &mut Tree, at: NodeId, subtree: Tree) -> Result<NodeId, BtError> {
    tree.attach_dynamic(at, subtree)
}

/// Removes the subtree at `at`, halting its running actions first.
pub fn detach_dynamic(tree: &mut Tree, at: NodeId, bb: &Blackboard) -> Result<(), BtError> {
    tree.detach_dynamic(at, bb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::Outline;
    use crate::ltm::parse_task;

    const SORT_BOX: &str = r#"[
  {"name": "sort_{box}_root", "type": "fallback", "children": ["sequence_{box}"],
   "params": ["G_11", "{box} placed"]},
  {"name": "sequence_{box}", "type": "sequence",
   "children": ["A(pick {box})", "A(place {box})"],
   "params": ["G_11", "{box} picked"]}
]"#;

    fn bind(v: &str) -> BTreeMap<String, String> {
        BTreeMap::from([("box".to_string(), v.to_string())])
    }

    fn sort_tree(b: &str) -> Tree {
        let t = parse_task(SORT_BOX).unwrap();
        build_tree(&specialize(&t.schemas, &bind(b)).unwrap(), None).unwrap()
    }

    #[test]
    fn sort_box_is_seven_nodes() {
        let tree = sort_tree("b_box");
        assert_eq!(tree.count_nodes(), 7);
        let expected = Outline::node(
            "Fallback",
            "sort_b_box_root",
            vec![
                Outline::leaf("Condition", "b_box placed"),
                Outline::node(
                    "Sequence",
                    "sequence_b_box",
                    vec![
                        Outline::node(
                            "Fallback",
                            "sequence_b_box.G1",
                            vec![
                                Outline::leaf("Condition", "b_box picked"),
                                Outline::leaf("Action", "pick b_box"),
                            ],
                        ),
                        Outline::leaf("Action", "place b_box"),
                    ],
                ),
            ],
        );
        assert_eq!(tree.outline().unwrap(), expected);
    }

    #[test]
    fn preconditions_wrap_root() {
        for (pre, n) in [(vec![], 7), (vec!["a".to_string()], 9), (vec!["a".into(), "b".into()], 10)] {
            let t = with_preconditions(sort_tree("g_box"), "pre", &pre).unwrap();
            assert_eq!(t.count_nodes(), n);
            t.validate().unwrap();
        }
    }

    #[test]
    fn multiple_postconditions_use_sequence() {
        let t = parse_task(
            r#"[{"name": "x_root", "type": "sequence", "children": ["A(a)", "A(b)"],
                 "params": ["G_21", "p", "G_22", "q", "C_21", "r"]}]"#,
        )
        .unwrap();
        let tree = build_tree(&t.schemas, None).unwrap();
        let expected = Outline::node(
            "Sequence",
            "x_root",
            vec![
                Outline::leaf("Action", "a"),
                Outline::node(
                    "Fallback",
                    "x_root.G2",
                    vec![
                        Outline::node(
                            "Sequence",
                            "x_root.G2.all",
                            vec![Outline::leaf("Condition", "p"), Outline::leaf("Condition", "q")],
                        ),
                        Outline::node(
                            "Sequence",
                            "x_root.C2",
                            vec![Outline::leaf("Condition", "r"), Outline::leaf("Action", "b")],
                        ),
                    ],
                ),
            ],
        );
        assert_eq!(tree.outline().unwrap(), expected);
    }

    #[test]
    fn precondition_sequence_splices_into_sequence_host() {
        let t = parse_task(
            r#"[{"name": "x_root", "type": "sequence", "children": ["A(a)"],
                 "params": ["C_11", "ready"]}]"#,
        )
        .unwrap();
        let tree = build_tree(&t.schemas, None).unwrap();
        assert_eq!(
            tree.outline().unwrap(),
            Outline::node(
                "Sequence",
                "x_root",
                vec![Outline::leaf("Condition", "ready"), Outline::leaf("Action", "a")]
            )
        );
    }

    #[test]
    fn specialize_cases() {
        let t = parse_task(SORT_BOX).unwrap();
        let s = specialize(&t.schemas, &bind("b_box")).unwrap();
        assert_eq!(s[1].children[0], ChildRef::Action("pick b_box".into()));
        assert_eq!(s[0].params[0].name, "b_box placed");

        let plain = parse_task(r#"[{"name": "r_root", "type": "sequence", "children": ["A(a)"], "params": [""]}]"#)
            .unwrap();
        assert_eq!(specialize(&plain.schemas, &BTreeMap::new()).unwrap(), plain.schemas);
        assert!(matches!(
            specialize(&plain.schemas, &bind("x")),
            Err(InstantiateError::UnboundPlaceholder(k)) if k == "box"
        ));
    }

    #[test]
    fn registry_must_cover_actions() {
        let t = parse_task(SORT_BOX).unwrap();
        let s = specialize(&t.schemas, &bind("r_box")).unwrap();
        let mut reg = HandlerRegistry::new();
        reg.register("pick r_box", || Box::new(|_: &Blackboard| crate::bt::NodeStatus::Success));
        assert!(matches!(
            build_tree(&s, Some(&reg)),
            Err(InstantiateError::Tree(BtError::UnresolvedHandler(n))) if n == "place r_box"
        ));
    }

    #[test]
    fn parallel_schema_requires_all_children() {
        let t = parse_task(
            r#"[{"name": "p_root", "type": "parallel", "children": ["A(a)", "A(b)", "A(c)"], "params": [""]}]"#,
        )
        .unwrap();
        let tree = build_tree(&t.schemas, None).unwrap();
        assert_eq!(
            tree.kind(tree.root().unwrap()).unwrap(),
            &NodeType::Parallel { threshold: 3 }
        );
    }
}
