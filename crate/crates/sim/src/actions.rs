//! `pick <box>` and `place <box>` handlers over a shared [`World`].

use std::sync::Arc;

use parking_lot::Mutex;
use rbt_core::{ActionHandler, Blackboard, HandlerRegistry, NodeStatus};

use crate::world::{picked_flag, placed_flag, ActionMode, Intent, World};

pub type SharedWorld = Arc<Mutex<World>>;

struct Pick {
    world: SharedWorld,
    name: String,
}

struct Place {
    world: SharedWorld,
    name: String,
}

fn commit(bb: &Blackboard, flag: &str) -> NodeStatus {
    match bb.set_flag(flag, true) {
        Ok(_) => NodeStatus::Success,
        Err(_) => NodeStatus::Failure,
    }
}

impl ActionHandler for Pick {
    fn step(&mut self, bb: &Blackboard) -> NodeStatus {
        let mut w = self.world.lock();
        if w.boxes.get(&self.name).is_some_and(|s| s.held) {
            return commit(bb, &picked_flag(&self.name));
        }
        let intent = Intent::Pick(self.name.clone());
        let res = match w.mode {
            ActionMode::Instant => w.pick(&self.name).map(|_| NodeStatus::Success),
            ActionMode::Stepped if w.intent() == Some(&intent) => Ok(NodeStatus::Running),
            ActionMode::Stepped => w.begin(intent).map(|_| NodeStatus::Running),
        };
        match res {
            Ok(NodeStatus::Success) => commit(bb, &picked_flag(&self.name)),
            Ok(s) => s,
            Err(e) => {
                log::debug!("pick {}: {e}", self.name);
                NodeStatus::Failure
            }
        }
    }

    fn halt(&mut self, _bb: &Blackboard) {
        self.world.lock().cancel(&Intent::Pick(self.name.clone()));
    }
}

impl ActionHandler for Place {
    fn step(&mut self, bb: &Blackboard) -> NodeStatus {
        let mut w = self.world.lock();
        if w.boxes.get(&self.name).is_some_and(|s| s.placed) {
            return commit(bb, &placed_flag(&self.name));
        }
        let intent = Intent::Place(self.name.clone());
        let res = match w.mode {
            ActionMode::Instant => w.place(&self.name).map(|_| NodeStatus::Success),
            ActionMode::Stepped if w.intent() == Some(&intent) => Ok(NodeStatus::Running),
            ActionMode::Stepped => w.begin(intent).map(|_| NodeStatus::Running),
        };
        match res {
            Ok(NodeStatus::Success) => commit(bb, &placed_flag(&self.name)),
            Ok(s) => s,
            Err(e) => {
                log::debug!("place {}: {e}", self.name);
                NodeStatus::Failure
            }
        }
    }

    fn halt(&mut self, _bb: &Blackboard) {
        self.world.lock().cancel(&Intent::Place(self.name.clone()));
    }
}

/// Registers `pick <box>` and `place <box>` for every box of the world.
pub fn sorting_handlers(world: &SharedWorld) -> HandlerRegistry {
    let mut reg = HandlerRegistry::new();
    let names: Vec<String> = world.lock().boxes.keys().cloned().collect();
    for name in names {
        let (w, n) = (Arc::clone(world), name.clone());
        reg.register(format!("pick {name}"), move || {
            Box::new(Pick {
                world: Arc::clone(&w),
                name: n.clone(),
            })
        });
        let (w, n) = (Arc::clone(world), name.clone());
        reg.register(format!("place {name}"), move || {
            Box::new(Place {
                world: Arc::clone(&w),
                name: n.clone(),
            })
        });
    }
    reg
}
