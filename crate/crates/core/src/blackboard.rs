//! Thread-safe key/value store shared by every node of a tree.
//!
//! Holds condition flags, stimulus scalars and subtask priorities. Writes are
//! versioned; a batch of writes becomes visible atomically, and snapshots are
//! immutable point-in-time views (copy-on-write, so taking one is cheap).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emphasizer::SubtaskRecord;

pub const INITIALIZED_FLAG: &str = "blackboard initialized";
pub const GOAL_FLAG: &str = "goal reached";
pub const PRIORITY_CHANGED_FLAG: &str = "priority changed";

pub fn stimulus_key(subtask: &str) -> String {
    format!("stimulus/{subtask}")
}

pub fn priority_key(subtask: &str) -> String {
    format!("priority/{subtask}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Meters,
    Unitless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Flag(bool),
    Scalar { value: f64, unit: Unit },
    Priority(f64),
    /// Stimulus slot registered but never sampled.
    Unobserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Flag,
    Scalar,
    Priority,
}

impl Value {
    pub fn meters(value: f64) -> Self {
        Value::Scalar {
            value,
            unit: Unit::Meters,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Flag(_) => ValueKind::Flag,
            Value::Scalar { .. } | Value::Unobserved => ValueKind::Scalar,
            Value::Priority(_) => ValueKind::Priority,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            Value::Flag(b) => Some(*b),
            _ => None,
        }
    }

    /// Scalar or priority value; `None` for flags and unobserved stimuli.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Scalar { value, .. } | Value::Priority(value) => Some(*value),
            _ => None,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Flag(b) => serde_json::Value::Bool(*b),
            Value::Scalar { value, .. } | Value::Priority(value) => serde_json::json!(value),
            Value::Unobserved => serde_json::Value::String("unobserved".into()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlackboardError {
    #[error("key `{key}` holds a {existing:?} value, cannot store {attempted:?}")]
    TypeMismatch {
        key: String,
        existing: ValueKind,
        attempted: ValueKind,
    },
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("priority for `{key}` must lie in [0, 1], got {value}")]
    PriorityOutOfRange { key: String, value: f64 },
}

type Entries = BTreeMap<String, Value>;

#[derive(Debug, Default)]
struct State {
    entries: Arc<Entries>,
    version: u64,
}

/// Shared handle; clones refer to the same store.
#[derive(Debug, Clone, Default)]
pub struct Blackboard {
    state: Arc<RwLock<State>>,
}

/// Immutable view of the store at one version.
#[derive(Debug, Clone)]
pub struct Snapshot {
    entries: Arc<Entries>,
    version: u64,
}

impl Snapshot {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    /// Unknown or non-flag keys read as false.
    pub fn condition(&self, name: &str) -> bool {
        matches!(self.entries.get(name), Some(Value::Flag(true)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every flag on the store with its value.
    pub fn flags(&self) -> BTreeMap<String, bool> {
        self.entries
            .iter()
            .filter_map(|(k, v)| v.as_flag().map(|b| (k.clone(), b)))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        )
    }
}

fn check(entries: &Entries, key: &str, value: &Value) -> Result<(), BlackboardError> {
    if let Value::Priority(p) = value {
        if !(0.0..=1.0).contains(p) {
            return Err(BlackboardError::PriorityOutOfRange {
                key: key.to_string(),
                value: *p,
            });
        }
    }
    if let Some(existing) = entries.get(key) {
        if existing.kind() != value.kind() {
            return Err(BlackboardError::TypeMismatch {
                key: key.to_string(),
                existing: existing.kind(),
                attempted: value.kind(),
            });
        }
    }
    Ok(())
}

fn put(entries: &mut Entries, key: &str, value: Value) {
    match entries.get_mut(key) {
        Some(slot) => *slot = value,
        None => {
            entries.insert(key.to_string(), value);
        }
    }
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the flags, stimuli and priorities of `subtasks` plus the
    /// goal conditions, then raises `blackboard initialized`.
    ///
    /// Missing flags start false, missing stimuli start unobserved and every
    /// priority starts at 0. Entries already written (for instance by a
    /// sensor that sampled before initialization) are kept.
    pub fn initialize(
        &self,
        subtasks: &[SubtaskRecord],
        goal: &[String],
    ) -> Result<u64, BlackboardError> {
        let mut names = BTreeSet::new();
        for s in subtasks {
            if !names.insert(s.name.as_str()) {
                return Err(BlackboardError::DuplicateKey(s.name.clone()));
            }
        }
        let mut batch: Vec<(String, Value)> = Vec::new();
        let snap = self.snapshot();
        if snap.get(INITIALIZED_FLAG).is_some() {
            return Err(BlackboardError::DuplicateKey(INITIALIZED_FLAG.to_string()));
        }
        let flags = subtasks
            .iter()
            .flat_map(|s| s.preconditions.iter().chain(&s.postconditions))
            .chain(goal);
        for f in flags {
            if snap.get(f).is_none() {
                batch.push((f.clone(), Value::Flag(false)));
            }
        }
        for s in subtasks {
            if snap.get(&s.stimulus_key).is_none() {
                batch.push((s.stimulus_key.clone(), Value::Unobserved));
            }
            batch.push((s.priority_key().to_string(), Value::Priority(0.0)));
        }
        batch.push((INITIALIZED_FLAG.to_string(), Value::Flag(true)));
        self.write_batch(batch)
    }

    /// Unknown names read as false.
    pub fn read_condition(&self, name: &str) -> bool {
        matches!(self.state.read().entries.get(name), Some(Value::Flag(true)))
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        self.state.read().entries.get(key).cloned()
    }

    pub fn version(&self) -> u64 {
        self.state.read().version
    }

    pub fn set_flag(&self, name: &str, value: bool) -> Result<u64, BlackboardError> {
        self.write(name, Value::Flag(value))
    }

    /// Replaces the value under `key` and returns the new version.
    pub fn write(&self, key: &str, value: Value) -> Result<u64, BlackboardError> {
        let mut st = self.state.write();
        check(&st.entries, key, &value)?;
        put(Arc::make_mut(&mut st.entries), key, value);
        st.version += 1;
        Ok(st.version)
    }

    /// Applies every write or none of them; readers never see a partial
    /// batch. The version advances by one per batch.
    pub fn write_batch<K, I>(&self, items: I) -> Result<u64, BlackboardError>
    where
        K: AsRef<str>,
        I: IntoIterator<Item = (K, Value)>,
    {
        let items: Vec<(K, Value)> = items.into_iter().collect();
        let mut st = self.state.write();
        // validate against the store as it will look after earlier items
        let mut staged: BTreeMap<&str, ValueKind> = BTreeMap::new();
        for (k, v) in &items {
            let key = k.as_ref();
            if let Some(&kind) = staged.get(key) {
                if kind != v.kind() {
                    return Err(BlackboardError::TypeMismatch {
                        key: key.to_string(),
                        existing: kind,
                        attempted: v.kind(),
                    });
                }
            } else {
                check(&st.entries, key, v)?;
            }
            if let Value::Priority(p) = v {
                if !(0.0..=1.0).contains(p) {
                    return Err(BlackboardError::PriorityOutOfRange {
                        key: key.to_string(),
                        value: *p,
                    });
                }
            }
            staged.insert(key, v.kind());
        }
        let entries = Arc::make_mut(&mut st.entries);
        for (k, v) in items {
            put(entries, k.as_ref(), v);
        }
        st.version += 1;
        Ok(st.version)
    }

    pub fn snapshot(&self) -> Snapshot {
        let st = self.state.read();
        Snapshot {
            entries: Arc::clone(&st.entries),
            version: st.version,
        }
    }

    /// Full store as a JSON object, key to value.
    pub fn dump_json(&self) -> serde_json::Value {
        self.snapshot().to_json()
    }
}
