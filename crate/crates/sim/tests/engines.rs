use std::sync::Arc;
use std::thread;

use parking_lot::Mutex;
use rbt_core::runtime::{build_engine, RbtEngine, TickEngine, ROOT_TASK};
use rbt_core::{Blackboard, NodeStatus, Value};
use sorting_sim::actions::{sorting_handlers, SharedWorld};
use sorting_sim::runner::{run_scenario, stepper, EngineKind};
use sorting_sim::scenario::{bundled_ltm, permutations, Scenario};
use sorting_sim::world::ActionMode;

fn stepped_engine(case: u8) -> (RbtEngine, SharedWorld, Scenario) {
    let mut s = Scenario::fixture(case).unwrap();
    s.mode = ActionMode::Stepped;
    let world: SharedWorld = Arc::new(Mutex::new(s.world()));
    let engine = build_engine(
        Arc::new(bundled_ltm()),
        ROOT_TASK,
        s.subtasks().unwrap(),
        sorting_handlers(&world),
        Blackboard::new(),
    )
    .unwrap();
    (engine, world, s)
}

#[test]
fn preempt_mid_pick_leaves_flags_alone() {
    let (mut e, world, s) = stepped_engine(2);
    let mut step = stepper(Arc::clone(&world), &s);
    for tick in 1..=3 {
        step(e.blackboard(), tick);
        e.tick_once().unwrap();
    }
    assert_eq!(e.current().as_deref(), Some("sort b_box"));
    assert!(world.lock().intent().is_some());
    e.preempt().unwrap();
    assert_eq!(e.current(), None);
    assert_eq!(e.node_count(), 13);
    assert!(world.lock().intent().is_none());
    assert!(!e.blackboard().read_condition("b_box picked"));
    assert!(!world.lock().boxes["b_box"].held);

    // same argmax comes back as a fresh subtree
    step(e.blackboard(), 4);
    let t = e.tick_once().unwrap();
    assert_eq!(t.flags.get("priority changed"), Some(&true));
    assert_eq!(t.current.as_deref(), Some("sort b_box"));
    assert_eq!(t.node_count, 19);
}

#[test]
fn root_only_succeeds_with_goal_in_stepped_mode() {
    for case in [1, 2] {
        let (mut e, world, s) = stepped_engine(case);
        let mut step = stepper(Arc::clone(&world), &s);
        let log = e.run_to_goal(&mut step, 5000).unwrap();
        for t in &log.traces {
            let placed = ["b_box", "g_box", "r_box"]
                .iter()
                .all(|b| t.flags.get(&format!("{b} placed")) == Some(&true));
            assert_eq!(t.root_status == NodeStatus::Success, placed && t.flags["goal reached"]);
        }
        assert!(world.lock().all_placed());
    }
}

#[test]
fn both_engines_reach_goal_for_every_permutation() {
    let ltm = Arc::new(bundled_ltm());
    for case in [1, 2] {
        for d in permutations() {
            let s = Scenario::with_distances(case, d).unwrap();
            for kind in [EngineKind::Rbt, EngineKind::Bt] {
                let r = run_scenario(&s, kind, Arc::clone(&ltm), 1000, None).unwrap().report;
                assert!(r.goal_reached, "{case} {d:?} {kind:?}");
                let mut sorted = r.sort_order.clone();
                sorted.sort();
                assert_eq!(sorted, ["b_box", "g_box", "r_box"]);
            }
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let ltm = Arc::new(bundled_ltm());
    let mut s = Scenario::fixture(2).unwrap();
    s.mode = ActionMode::Stepped;
    let strip = |s: &Scenario| {
        run_scenario(s, EngineKind::Rbt, Arc::clone(&ltm), 5000, None)
            .unwrap()
            .log
            .traces
            .into_iter()
            .map(|mut t| {
                t.tick_ns = 0;
                t
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&s), strip(&s));
}

#[test]
fn concurrent_sensor_thread() {
    let (mut e, world, s) = stepped_engine(2);
    let bb = e.blackboard().clone();
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let sensor = {
        let (world, bb, stop) = (Arc::clone(&world), bb.clone(), Arc::clone(&stop));
        thread::spawn(move || {
            let mut samples = 0u64;
            while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                world.lock().emit_stimuli(&bb);
                samples += 1;
                thread::yield_now();
            }
            samples
        })
    };
    let mut advance = |_: &Blackboard, _: u64| world.lock().advance();
    let log = e.run_to_goal(&mut advance, 5000).unwrap();
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    assert!(sensor.join().unwrap() > 0);
    assert!(log.goal_reached);
    assert_eq!(s.distance_order(), ["b_box", "g_box", "r_box"]);
    assert!(matches!(bb.get("priority/sort b_box"), Some(Value::Priority(_))));
}
