//! Trees built from the bundled schema files, compared node by node.

use std::collections::BTreeMap;

use rbt_core::instantiator::{build_tree, specialize, with_preconditions};
use rbt_core::{parse_task, Outline, Tree};

const ROOT: &str = include_str!("../../sim/fixtures/ltm/rbt_root.json");
const SORT_BOX: &str = include_str!("../../sim/fixtures/ltm/sort box.json");

fn leaf(kind: &str, label: &str) -> Outline {
    Outline::leaf(kind, label)
}

fn node(kind: &str, label: &str, children: Vec<Outline>) -> Outline {
    Outline::node(kind, label, children)
}

fn sort_tree(b: &str, pre: &[&str]) -> Tree {
    let t = parse_task(SORT_BOX).unwrap();
    let binding = BTreeMap::from([("box".to_string(), b.to_string())]);
    let tree = build_tree(&specialize(&t.schemas, &binding).unwrap(), None).unwrap();
    let pre: Vec<String> = pre.iter().map(|s| s.to_string()).collect();
    with_preconditions(tree, &format!("sort {b}.pre"), &pre).unwrap()
}

fn sort_outline(b: &str) -> Outline {
    node(
        "Fallback",
        &format!("sort_{b}_root"),
        vec![
            leaf("Condition", &format!("{b} placed")),
            node(
                "Sequence",
                &format!("sequence_{b}"),
                vec![
                    node(
                        "Fallback",
                        &format!("sequence_{b}.G1"),
                        vec![
                            leaf("Condition", &format!("{b} picked")),
                            leaf("Action", &format!("pick {b}")),
                        ],
                    ),
                    leaf("Action", &format!("place {b}")),
                ],
            ),
        ],
    )
}

#[test]
fn generic_skeleton() {
    let t = parse_task(ROOT).unwrap();
    let tree = build_tree(&t.schemas, None).unwrap();
    let expected = node(
        "Fallback",
        "rbt_root",
        vec![
            leaf("Condition", "goal reached"),
            node(
                "Sequence",
                "sequence_1",
                vec![
                    node(
                        "Fallback",
                        "sequence_1.G1",
                        vec![
                            leaf("Condition", "blackboard initialized"),
                            leaf("Action", "initialize blackboard"),
                        ],
                    ),
                    node(
                        "Parallel(2)",
                        "parallel_1",
                        vec![
                            leaf("Action", "handle priority"),
                            node(
                                "Fallback",
                                "fallback_1",
                                vec![
                                    node(
                                        "Sequence",
                                        "fallback_1.C1",
                                        vec![
                                            leaf("Condition", "priority changed"),
                                            leaf("Action", "load subtree"),
                                        ],
                                    ),
                                    leaf("Action", "execute subtree"),
                                ],
                            ),
                        ],
                    ),
                ],
            ),
        ],
    );
    assert_eq!(tree.outline().unwrap(), expected);
    assert_eq!(tree.count_nodes(), 13);
}

#[test]
fn sort_subtree_without_preconditions() {
    let tree = sort_tree("b_box", &[]);
    assert_eq!(tree.outline().unwrap(), sort_outline("b_box"));
    assert_eq!(tree.count_nodes(), 7);
}

#[test]
fn sort_subtree_with_one_precondition() {
    let tree = sort_tree("g_box", &["b_box placed"]);
    let expected = node(
        "Sequence",
        "sort g_box.pre",
        vec![leaf("Condition", "b_box placed"), sort_outline("g_box")],
    );
    assert_eq!(tree.outline().unwrap(), expected);
    assert_eq!(tree.count_nodes(), 9);
}

#[test]
fn sort_subtree_with_two_preconditions() {
    let tree = sort_tree("r_box", &["b_box placed", "g_box placed"]);
    let expected = node(
        "Sequence",
        "sort r_box.pre",
        vec![
            leaf("Condition", "b_box placed"),
            leaf("Condition", "g_box placed"),
            sort_outline("r_box"),
        ],
    );
    assert_eq!(tree.outline().unwrap(), expected);
    assert_eq!(tree.count_nodes(), 10);
}

#[test]
fn construction_is_deterministic() {
    let a = sort_tree("r_box", &["x"]).render();
    for _ in 0..10 {
        assert_eq!(sort_tree("r_box", &["x"]).render(), a);
    }
}

#[test]
fn attach_into_skeleton_gives_table_counts() {
    let t = parse_task(ROOT).unwrap();
    let mut skeleton = build_tree(&t.schemas, None).unwrap();
    let at = skeleton
        .find(|label, _| label == "execute subtree")
        .unwrap();
    let before = skeleton.outline();
    for (pre, total) in [(vec![], 19), (vec!["b_box placed"], 21), (vec!["b_box placed", "g_box placed"], 22)] {
        skeleton.attach_dynamic(at, sort_tree("r_box", &pre)).unwrap();
        assert_eq!(skeleton.count_nodes(), total);
        skeleton.detach_dynamic(at, &rbt_core::Blackboard::new()).unwrap();
        assert_eq!(skeleton.count_nodes(), 13);
        assert_eq!(skeleton.outline(), before);
    }
}
