//! Kinematic box-sorting world: a gripper, three boxes and a storage slot
//! per box. No physics; positions only.

use std::collections::BTreeMap;

use rbt_core::blackboard::stimulus_key;
use rbt_core::{Blackboard, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

pub const BOX_NAMES: [&str; 3] = ["b_box", "g_box", "r_box"];

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn subtask_name(b: &str) -> String {
    format!("sort {b}")
}

pub fn picked_flag(b: &str) -> String {
    format!("{b} picked")
}

pub fn placed_flag(b: &str) -> String {
    format!("{b} placed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    /// Actions complete within the tick that issues them.
    #[default]
    Instant,
    /// The gripper travels `step_size` per world step; actions report
    /// Running until it arrives.
    Stepped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub position: Vec3,
    pub held: bool,
    pub placed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Intent {
    Pick(String),
    Place(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("{name} is {distance:.3} m away, beyond reach {reach} m")]
    OutOfReach {
        name: String,
        distance: f64,
        reach: f64,
    },
    #[error("gripper already holds {0}")]
    GripperOccupied(String),
    #[error("{0} is not held")]
    NotHeld(String),
    #[error("unknown box `{0}`")]
    UnknownBox(String),
    #[error("{0} is already placed")]
    AlreadyPlaced(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub gripper: Vec3,
    pub boxes: BTreeMap<String, BoxState>,
    pub slots: BTreeMap<String, Vec3>,
    pub step_size: f64,
    pub mode: ActionMode,
    /// Grasp limit in instant mode, where the gripper never moves.
    pub reach: f64,
    intent: Option<Intent>,
    placed_order: Vec<String>,
}

impl World {
    pub fn new(
        gripper: Vec3,
        boxes: BTreeMap<String, Vec3>,
        slots: BTreeMap<String, Vec3>,
        mode: ActionMode,
        step_size: f64,
        reach: f64,
    ) -> Self {
        Self {
            gripper,
            boxes: boxes
                .into_iter()
                .map(|(k, position)| {
                    (
                        k,
                        BoxState {
                            position,
                            held: false,
                            placed: false,
                        },
                    )
                })
                .collect(),
            slots,
            step_size,
            mode,
            reach,
            intent: None,
            placed_order: Vec::new(),
        }
    }

    fn state(&self, name: &str) -> Result<&BoxState, WorldError> {
        self.boxes
            .get(name)
            .ok_or_else(|| WorldError::UnknownBox(name.to_string()))
    }

    pub fn distance_to(&self, name: &str) -> Result<f64, WorldError> {
        Ok(distance(self.gripper, self.state(name)?.position))
    }

    pub fn held(&self) -> Option<&str> {
        self.boxes
            .iter()
            .find(|(_, s)| s.held)
            .map(|(k, _)| k.as_str())
    }

    pub fn intent(&self) -> Option<&Intent> {
        self.intent.as_ref()
    }

    /// Boxes in the order they reached their slots.
    pub fn placed_order(&self) -> &[String] {
        &self.placed_order
    }

    pub fn all_placed(&self) -> bool {
        self.boxes.values().all(|s| s.placed)
    }

    fn check_pick(&self, name: &str) -> Result<(), WorldError> {
        let s = self.state(name)?;
        if s.placed {
            return Err(WorldError::AlreadyPlaced(name.to_string()));
        }
        if let Some(h) = self.held() {
            return Err(WorldError::GripperOccupied(h.to_string()));
        }
        if self.mode == ActionMode::Instant {
            let d = self.distance_to(name)?;
            if d > self.reach {
                return Err(WorldError::OutOfReach {
                    name: name.to_string(),
                    distance: d,
                    reach: self.reach,
                });
            }
        }
        Ok(())
    }

    fn check_place(&self, name: &str) -> Result<(), WorldError> {
        if !self.state(name)?.held {
            return Err(WorldError::NotHeld(name.to_string()));
        }
        Ok(())
    }

    /// Grasps `name` at once.
    pub fn pick(&mut self, name: &str) -> Result<(), WorldError> {
        self.check_pick(name)?;
        let g = self.gripper;
        let s = self.boxes.get_mut(name).expect("checked");
        s.held = true;
        if self.mode == ActionMode::Stepped {
            s.position = g;
        }
        Ok(())
    }

    /// Puts the held box `name` on its slot at once.
    pub fn place(&mut self, name: &str) -> Result<(), WorldError> {
        self.check_place(name)?;
        let slot = self.slots.get(name).copied().unwrap_or(self.gripper);
        let s = self.boxes.get_mut(name).expect("checked");
        s.held = false;
        s.placed = true;
        s.position = slot;
        self.placed_order.push(name.to_string());
        Ok(())
    }

    /// Starts travelling towards the target of `intent`. Stepped mode only;
    /// replaces any previous intent.
    pub fn begin(&mut self, intent: Intent) -> Result<(), WorldError> {
        match &intent {
            Intent::Pick(b) => self.check_pick(b)?,
            Intent::Place(b) => self.check_place(b)?,
        }
        self.intent = Some(intent);
        Ok(())
    }

    pub fn cancel(&mut self, intent: &Intent) {
        if self.intent.as_ref() == Some(intent) {
            self.intent = None;
        }
    }

    /// One simulation step: moves the gripper (and any held box) towards
    /// the pending target and completes the intent on arrival.
    pub fn advance(&mut self) {
        let Some(intent) = self.intent.clone() else {
            return;
        };
        let target = match &intent {
            Intent::Pick(b) => self.boxes[b].position,
            Intent::Place(b) => self.slots.get(b).copied().unwrap_or(self.gripper),
        };
        let d = distance(self.gripper, target);
        if d <= self.step_size {
            self.gripper = target;
        } else {
            let k = self.step_size / d;
            for (g, t) in self.gripper.iter_mut().zip(target) {
                *g += (t - *g) * k;
            }
        }
        let g = self.gripper;
        for s in self.boxes.values_mut() {
            if s.held {
                s.position = g;
            }
        }
        if d <= self.step_size {
            self.intent = None;
            // arrival checks cannot fail: begin() validated and nothing else
            // touches the world while an intent is pending
            let _ = match &intent {
                Intent::Pick(b) => self.pick(b),
                Intent::Place(b) => self.place(b),
            };
        }
    }

    /// Moves a box that is neither held nor placed.
    pub fn perturb(&mut self, name: &str, position: Vec3) -> Result<(), WorldError> {
        let s = self
            .boxes
            .get_mut(name)
            .ok_or_else(|| WorldError::UnknownBox(name.to_string()))?;
        if !s.held && !s.placed {
            s.position = position;
        }
        Ok(())
    }

    /// Writes the gripper-to-box distance of every unplaced box.
    pub fn emit_stimuli(&self, bb: &Blackboard) {
        let batch: Vec<(String, Value)> = self
            .boxes
            .iter()
            .filter(|(_, s)| !s.placed)
            .map(|(k, s)| {
                (
                    stimulus_key(&subtask_name(k)),
                    Value::meters(distance(self.gripper, s.position)),
                )
            })
            .collect();
        if !batch.is_empty() {
            bb.write_batch(batch).expect("stimuli are always scalars");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(mode: ActionMode) -> World {
        let boxes = BTreeMap::from([
            ("b_box".to_string(), [0.3, 0.0, 0.0]),
            ("g_box".to_string(), [0.0, 1.2, 0.0]),
        ]);
        let slots = BTreeMap::from([
            ("b_box".to_string(), [-0.5, 0.0, 0.0]),
            ("g_box".to_string(), [-0.5, 0.2, 0.0]),
        ]);
        World::new([0.0; 3], boxes, slots, mode, 0.1, 1.0)
    }

    #[test]
    fn instant_pick_and_place() {
        let mut w = world(ActionMode::Instant);
        w.pick("b_box").unwrap();
        assert!(w.boxes["b_box"].held);
        assert_eq!(w.pick("b_box"), Err(WorldError::GripperOccupied("b_box".into())));
        w.place("b_box").unwrap();
        assert!(w.boxes["b_box"].placed);
        assert_eq!(w.boxes["b_box"].position, w.slots["b_box"]);
        assert_eq!(w.placed_order(), ["b_box"]);
    }

    #[test]
    fn errors() {
        let mut w = world(ActionMode::Instant);
        assert!(matches!(w.pick("g_box"), Err(WorldError::OutOfReach { .. })));
        assert_eq!(w.place("b_box"), Err(WorldError::NotHeld("b_box".into())));
        assert_eq!(w.pick("x"), Err(WorldError::UnknownBox("x".into())));
    }

    #[test]
    fn stimulus_is_euclidean() {
        let mut w = world(ActionMode::Instant);
        w.perturb("b_box", [0.3, 0.4, 0.0]).unwrap();
        let bb = Blackboard::new();
        w.emit_stimuli(&bb);
        assert_eq!(bb.get("stimulus/sort b_box"), Some(Value::meters(0.5)));
        w.pick("b_box").unwrap();
        w.place("b_box").unwrap();
        let before = bb.get("stimulus/sort b_box");
        w.emit_stimuli(&bb);
        assert_eq!(bb.get("stimulus/sort b_box"), before);
    }

    #[test]
    fn stepped_travel() {
        let mut w = world(ActionMode::Stepped);
        w.begin(Intent::Pick("b_box".into())).unwrap();
        w.advance();
        w.advance();
        assert!(!w.boxes["b_box"].held);
        assert!((w.gripper[0] - 0.2).abs() < 1e-12);
        w.advance();
        assert!(w.boxes["b_box"].held);
        assert_eq!(w.intent(), None);
        w.begin(Intent::Place("b_box".into())).unwrap();
        for _ in 0..20 {
            w.advance();
            let b = &w.boxes["b_box"];
            if !b.placed {
                assert_eq!(b.position, w.gripper);
            }
        }
        assert!(w.boxes["b_box"].placed);
        assert!(distance(w.boxes["b_box"].position, w.slots["b_box"]) < 1e-9);
    }

    #[test]
    fn cancel_only_matching_intent() {
        let mut w = world(ActionMode::Stepped);
        w.begin(Intent::Pick("b_box".into())).unwrap();
        w.cancel(&Intent::Pick("g_box".into()));
        assert!(w.intent().is_some());
        w.cancel(&Intent::Pick("b_box".into()));
        assert!(w.intent().is_none());
    }
}
