//! Stimulus-driven priorities and the active-subtask set.
//!
//! Each subtask watches one scalar stimulus. Its priority is a clamped linear
//! ramp of that stimulus: 1 at or below `theta_min`, 0 at or above
//! `theta_max`. A subtask is active while its preconditions all hold and its
//! postconditions do not; the emphasizer picks the active subtask with the
//! highest priority and raises `priority changed` when that choice differs
//! from what is currently instantiated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackboard::{
    priority_key, stimulus_key, Blackboard, BlackboardError, Snapshot, Value,
    PRIORITY_CHANGED_FLAG,
};
use crate::bt::NodeStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmphasizerError {
    #[error("theta_min ({theta_min}) must be strictly below theta_max ({theta_max})")]
    InvalidParams { theta_min: f64, theta_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PriorityParams {
    theta_min: f64,
    theta_max: f64,
}

#[derive(Deserialize)]
struct RawParams {
    theta_min: f64,
    theta_max: f64,
}

impl TryFrom<RawParams> for PriorityParams {
    type Error = EmphasizerError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        PriorityParams::new(raw.theta_min, raw.theta_max)
    }
}

impl PriorityParams {
    /// Thresholds used for the box-sorting task: the box side length and the
    /// largest distance at which a box can still be grasped, in meters.
    pub const SORTING: PriorityParams = PriorityParams {
        theta_min: 0.05,
        theta_max: 1.0,
    };

    pub fn new(theta_min: f64, theta_max: f64) -> Result<Self, EmphasizerError> {
        // written so that NaN thresholds are rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(theta_min < theta_max) {
            return Err(EmphasizerError::InvalidParams {
                theta_min,
                theta_max,
            });
        }
        Ok(Self {
            theta_min,
            theta_max,
        })
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn priority(&self, theta: f64) -> f64 {
        priority(theta, self)
    }
}

/// Priority of a stimulus `theta`, in [0, 1]. A NaN stimulus counts as no
/// evidence and yields 0.
pub fn priority(theta: f64, params: &PriorityParams) -> f64 {
    if theta.is_nan() || theta >= params.theta_max {
        0.0
    } else if theta <= params.theta_min {
        1.0
    } else {
        (theta - params.theta_max) / (params.theta_min - params.theta_max)
    }
}

/// Which LTM task to instantiate for a subtask, and how to specialize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub task: String,
    pub binding: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskRecord {
    pub name: String,
    pub preconditions: Vec<String>,
    pub postconditions: Vec<String>,
    pub stimulus_key: String,
    pub params: PriorityParams,
    pub epsilon: f64,
    /// Defaults to an LTM task of the same name with no specialization.
    pub template: Option<TaskTemplate>,
    priority_key: String,
}

impl SubtaskRecord {
    pub fn new(
        name: impl Into<String>,
        preconditions: Vec<String>,
        postconditions: Vec<String>,
        params: PriorityParams,
    ) -> Self {
        let name = name.into();
        Self {
            stimulus_key: stimulus_key(&name),
            priority_key: priority_key(&name),
            name,
            preconditions,
            postconditions,
            params,
            epsilon: 0.0,
            template: None,
        }
    }

    pub fn with_template(mut self, task: impl Into<String>, binding: BTreeMap<String, String>) -> Self {
        self.template = Some(TaskTemplate {
            task: task.into(),
            binding,
        });
        self
    }

    pub fn priority_key(&self) -> &str {
        &self.priority_key
    }

    pub fn task_name(&self) -> &str {
        self.template.as_ref().map_or(&self.name, |t| &t.task)
    }

    pub fn is_done(&self, snap: &Snapshot) -> bool {
        self.postconditions.iter().all(|c| snap.condition(c))
    }

    /// All preconditions hold and not every postcondition does.
    pub fn is_active(&self, snap: &Snapshot) -> bool {
        self.preconditions.iter().all(|c| snap.condition(c)) && !self.is_done(snap)
    }

    /// Priority from the latest stimulus sample; unobserved or missing
    /// stimuli give 0.
    pub fn stimulus_priority(&self, snap: &Snapshot) -> f64 {
        match snap.get(&self.stimulus_key) {
            Some(Value::Scalar { value, .. }) => self.params.priority(*value),
            _ => 0.0,
        }
    }
}

pub fn active_set<'a>(subtasks: &'a [SubtaskRecord], snap: &Snapshot) -> Vec<&'a SubtaskRecord> {
    subtasks.iter().filter(|s| s.is_active(snap)).collect()
}

/// Highest-priority subtask; ties go to the lexicographically smallest name.
pub fn select<'a>(active: &[&'a SubtaskRecord]) -> Option<&'a SubtaskRecord> {
    let mut best: Option<&'a SubtaskRecord> = None;
    for &s in active {
        best = match best {
            None => Some(s),
            Some(b) if s.epsilon > b.epsilon || (s.epsilon == b.epsilon && s.name < b.name) => {
                Some(s)
            }
            keep => keep,
        };
    }
    best
}

/// True when every postcondition of every subtask holds.
pub fn goal_reached(subtasks: &[SubtaskRecord], snap: &Snapshot) -> bool {
    subtasks.iter().all(|s| s.is_done(snap))
}

/// Owns the subtask records and keeps their priorities current.
#[derive(Debug, Clone)]
pub struct Emphasizer {
    subtasks: Vec<SubtaskRecord>,
}

impl Emphasizer {
    pub fn new(subtasks: Vec<SubtaskRecord>) -> Self {
        Self { subtasks }
    }

    pub fn subtasks(&self) -> &[SubtaskRecord] {
        &self.subtasks
    }

    pub fn get(&self, name: &str) -> Option<&SubtaskRecord> {
        self.subtasks.iter().find(|s| s.name == name)
    }

    /// Recomputes every epsilon; inactive subtasks are pinned to 0.
    pub fn update(&mut self, snap: &Snapshot) {
        for s in &mut self.subtasks {
            s.epsilon = if s.is_active(snap) {
                s.stimulus_priority(snap)
            } else {
                0.0
            };
        }
    }

    /// Current choice over the active set, using the stored epsilons.
    pub fn selected(&self, snap: &Snapshot) -> Option<&SubtaskRecord> {
        select(&active_set(&self.subtasks, snap))
    }

    pub fn priorities(&self) -> BTreeMap<String, f64> {
        self.subtasks
            .iter()
            .map(|s| (s.name.clone(), s.epsilon))
            .collect()
    }

    /// Body of the `handle priority` action: refresh priorities from the
    /// latest stimuli, publish them, and set `priority changed` iff the
    /// selection differs from `current`. Never finishes.
    pub fn handle_priority(
        &mut self,
        bb: &Blackboard,
        current: Option<&str>,
    ) -> Result<NodeStatus, BlackboardError> {
        let snap = bb.snapshot();
        self.update(&snap);
        let choice = self.selected(&snap).map(|s| s.name.as_str());
        let changed = choice != current;
        let mut batch: Vec<(&str, Value)> = self
            .subtasks
            .iter()
            .map(|s| (s.priority_key(), Value::Priority(s.epsilon)))
            .collect();
        batch.push((PRIORITY_CHANGED_FLAG, Value::Flag(changed)));
        bb.write_batch(batch)?;
        Ok(NodeStatus::Running)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SORT: PriorityParams = PriorityParams::SORTING;

    fn rec(name: &str, eps: f64) -> SubtaskRecord {
        let mut r = SubtaskRecord::new(name, vec![], vec![format!("{name} done")], SORT);
        r.epsilon = eps;
        r
    }

    #[test]
    fn priority_examples() {
        assert_eq!(priority(0.04, &SORT), 1.0);
        assert_eq!(priority(1.5, &SORT), 0.0);
        assert!((priority(0.525, &SORT) - 0.5).abs() < 1e-15);
        assert_eq!(priority(0.05, &SORT), 1.0);
        assert_eq!(priority(1.0, &SORT), 0.0);
        assert_eq!(priority(f64::NAN, &SORT), 0.0);
    }

    #[test]
    fn invalid_params() {
        assert!(PriorityParams::new(1.0, 1.0).is_err());
        assert!(PriorityParams::new(2.0, 1.0).is_err());
        assert!(PriorityParams::new(f64::NAN, 1.0).is_err());
        let bad: Result<PriorityParams, _> =
            serde_json::from_str(r#"{"theta_min": 1.0, "theta_max": 0.5}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn select_examples() {
        // distances 0.145, 0.62, 0.81 m give 0.9, 0.4, 0.2
        let eps: Vec<f64> = [0.145, 0.62, 0.81].iter().map(|&d| priority(d, &SORT)).collect();
        for (e, want) in eps.iter().zip([0.9, 0.4, 0.2]) {
            assert!((e - want).abs() < 1e-12);
        }
        let (b, g, r) = (rec("b", eps[0]), rec("g", eps[1]), rec("r", eps[2]));
        assert_eq!(select(&[&r, &g, &b]).unwrap().name, "b");
        let (b, g) = (rec("b", 0.5), rec("g", 0.5));
        assert_eq!(select(&[&g, &b]).unwrap().name, "b");
        assert!(select(&[]).is_none());
    }

    fn sorting(pre: bool) -> Vec<SubtaskRecord> {
        let mk = |b: &str, pre: Vec<String>| {
            SubtaskRecord::new(format!("sort {b}"), pre, vec![format!("{b} placed")], SORT)
        };
        if pre {
            vec![
                mk("b_box", vec![]),
                mk("g_box", vec!["b_box placed".into()]),
                mk("r_box", vec!["b_box placed".into(), "g_box placed".into()]),
            ]
        } else {
            vec![mk("b_box", vec![]), mk("g_box", vec![]), mk("r_box", vec![])]
        }
    }

    #[test]
    fn active_set_examples() {
        let subs = sorting(false);
        let bb = Blackboard::new();
        bb.initialize(&subs, &[]).unwrap();
        assert_eq!(active_set(&subs, &bb.snapshot()).len(), 3);
        bb.set_flag("b_box placed", true).unwrap();
        let names: Vec<_> = active_set(&subs, &bb.snapshot())
            .iter()
            .map(|s| s.name.clone())
            .collect();
        assert_eq!(names, vec!["sort g_box", "sort r_box"]);
        bb.set_flag("g_box placed", true).unwrap();
        bb.set_flag("r_box placed", true).unwrap();
        assert!(active_set(&subs, &bb.snapshot()).is_empty());
    }

    #[test]
    fn preconditions_gate_activity() {
        let subs = sorting(true);
        let bb = Blackboard::new();
        let names = |bb: &Blackboard| -> Vec<String> {
            active_set(&subs, &bb.snapshot())
                .iter()
                .map(|s| s.name.clone())
                .collect()
        };
        assert_eq!(names(&bb), vec!["sort b_box"]);
        bb.set_flag("b_box placed", true).unwrap();
        assert_eq!(names(&bb), vec!["sort g_box"]);
        bb.set_flag("g_box placed", true).unwrap();
        assert_eq!(names(&bb), vec!["sort r_box"]);
    }

    #[test]
    fn goal_reached_examples() {
        let subs = sorting(false);
        let bb = Blackboard::new();
        assert!(goal_reached(&[], &bb.snapshot()));
        bb.set_flag("b_box placed", true).unwrap();
        bb.set_flag("g_box placed", true).unwrap();
        assert!(!goal_reached(&subs, &bb.snapshot()));
        bb.set_flag("r_box placed", true).unwrap();
        assert!(goal_reached(&subs, &bb.snapshot()));
    }

    #[test]
    fn handle_priority_flag_semantics() {
        let bb = Blackboard::new();
        let subs = sorting(false);
        bb.initialize(&subs, &[]).unwrap();
        let mut emph = Emphasizer::new(subs);
        let stim = |b: &str, d: f64| bb.write(&format!("stimulus/sort {b}"), Value::meters(d)).unwrap();
        stim("b_box", 0.3);
        stim("g_box", 0.55);
        stim("r_box", 0.8);

        assert_eq!(emph.handle_priority(&bb, None).unwrap(), NodeStatus::Running);
        assert!(bb.read_condition(PRIORITY_CHANGED_FLAG));

        // unchanged stimuli, current already the argmax
        emph.handle_priority(&bb, Some("sort b_box")).unwrap();
        assert!(!bb.read_condition(PRIORITY_CHANGED_FLAG));

        // g becomes closest while b is current
        stim("g_box", 0.1);
        emph.handle_priority(&bb, Some("sort b_box")).unwrap();
        assert!(bb.read_condition(PRIORITY_CHANGED_FLAG));
        assert_eq!(
            bb.get("priority/sort g_box").unwrap(),
            Value::Priority(priority(0.1, &SORT))
        );

        // current finished: the argmax moves on
        stim("g_box", 0.55);
        bb.set_flag("b_box placed", true).unwrap();
        emph.handle_priority(&bb, Some("sort b_box")).unwrap();
        assert!(bb.read_condition(PRIORITY_CHANGED_FLAG));
        assert_eq!(bb.get("priority/sort b_box").unwrap(), Value::Priority(0.0));
        assert_eq!(
            emph.selected(&bb.snapshot()).unwrap().name,
            "sort g_box"
        );
    }

    #[test]
    fn unobserved_stimulus_gives_zero() {
        let bb = Blackboard::new();
        let subs = sorting(false);
        bb.initialize(&subs, &[]).unwrap();
        let mut emph = Emphasizer::new(subs);
        emph.handle_priority(&bb, None).unwrap();
        assert!(emph.subtasks().iter().all(|s| s.epsilon == 0.0));
        // all tied at zero: lexicographic choice
        assert_eq!(emph.selected(&bb.snapshot()).unwrap().name, "sort b_box");
    }
}
