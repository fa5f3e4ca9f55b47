//! Scenario files and the two sorting case studies.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbt_core::{Ltm, PriorityParams, SubtaskRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{placed_flag, subtask_name, ActionMode, Vec3, World, BOX_NAMES};

/// Task holding the generic sorting subtree, specialized per box.
pub const SORT_TASK: &str = "sort box";

const ROOT_JSON: &str = include_str!("../fixtures/ltm/rbt_root.json");
const SORT_JSON: &str = include_str!("../fixtures/ltm/sort box.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown case {0}, expected 1 or 2")]
    UnknownCase(u8),
    #[error("boxes must be exactly b_box, g_box and r_box, found {0:?}")]
    BadBoxes(Vec<String>),
    #[error("no storage slot for {0}")]
    MissingSlot(String),
    #[error("perturbation names unknown box `{0}`")]
    UnknownPerturbedBox(String),
    #[error("bad priority thresholds: {0}")]
    Params(#[from] rbt_core::emphasizer::EmphasizerError),
    #[error("step size must be positive, got {0}")]
    StepSize(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub tick: u64,
    #[serde(rename = "box")]
    pub name: String,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub case: u8,
    pub gripper: Vec3,
    pub boxes: BTreeMap<String, Vec3>,
    pub slots: BTreeMap<String, Vec3>,
    pub theta_min: f64,
    pub theta_max: f64,
    #[serde(default)]
    pub mode: ActionMode,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    #[serde(default = "default_step")]
    pub step_size: f64,
}

fn default_step() -> f64 {
    0.05
}

fn default_slots() -> BTreeMap<String, Vec3> {
    BTreeMap::from([
        ("b_box".to_string(), [-0.4, 0.3, 0.0]),
        ("g_box".to_string(), [-0.4, 0.45, 0.0]),
        ("r_box".to_string(), [-0.4, 0.6, 0.0]),
    ])
}

/// Points at `d` meters from the origin in three different directions.
fn spread(distances: [f64; 3]) -> BTreeMap<String, Vec3> {
    let dirs: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -0.6, 0.8]];
    BOX_NAMES
        .iter()
        .zip(distances)
        .zip(dirs)
        .map(|((n, d), u)| (n.to_string(), [u[0] * d, u[1] * d, u[2] * d]))
        .collect()
}

impl Scenario {
    /// Synthetic fixture: gripper at the origin, b/g/r boxes 0.30, 0.55 and
    /// 0.80 m away.
    pub fn fixture(case: u8) -> Result<Self, ScenarioError> {
        Self::with_distances(case, [0.30, 0.55, 0.80])
    }

    /// Fixture with the given b/g/r gripper distances.
    pub fn with_distances(case: u8, distances: [f64; 3]) -> Result<Self, ScenarioError> {
        let s = Scenario {
            case,
            gripper: [0.0; 3],
            boxes: spread(distances),
            slots: default_slots(),
            theta_min: PriorityParams::SORTING.theta_min(),
            theta_max: PriorityParams::SORTING.theta_max(),
            mode: ActionMode::Instant,
            perturbations: Vec::new(),
            step_size: default_step(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Random graspable box positions in (θmin, θmax) of the origin.
    pub fn random(case: u8, seed: u64) -> Result<Self, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::fixture(case)?;
        for p in s.boxes.values_mut() {
            let d = rng.gen_range(s.theta_min + 0.01..s.theta_max - 0.01);
            let (theta, phi) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::PI));
            *p = [d * phi.sin() * theta.cos(), d * phi.sin() * theta.sin(), d * phi.cos()];
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: shown.clone(),
            source,
        })?;
        let s: Scenario = serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
            path: shown,
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !matches!(self.case, 1 | 2) {
            return Err(ScenarioError::UnknownCase(self.case));
        }
        let names: Vec<String> = self.boxes.keys().cloned().collect();
        if names != BOX_NAMES {
            return Err(ScenarioError::BadBoxes(names));
        }
        for n in &names {
            if !self.slots.contains_key(n) {
                return Err(ScenarioError::MissingSlot(n.clone()));
            }
        }
        for p in &self.perturbations {
            if !self.boxes.contains_key(&p.name) {
                return Err(ScenarioError::UnknownPerturbedBox(p.name.clone()));
            }
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(ScenarioError::StepSize(self.step_size));
        }
        self.params()?;
        Ok(())
    }

    pub fn params(&self) -> Result<PriorityParams, ScenarioError> {
        Ok(PriorityParams::new(self.theta_min, self.theta_max)?)
    }

    pub fn world(&self) -> World {
        World::new(
            self.gripper,
            self.boxes.clone(),
            self.slots.clone(),
            self.mode,
            self.step_size,
            self.theta_max,
        )
    }

    pub fn subtasks(&self) -> Result<Vec<SubtaskRecord>, ScenarioError> {
        build_case(self.case, self.params()?)
    }

    /// Boxes sorted by initial gripper distance, ties by name.
    pub fn distance_order(&self) -> Vec<String> {
        let mut v: Vec<(f64, &String)> = self
            .boxes
            .iter()
            .map(|(n, p)| (crate::world::distance(self.gripper, *p), n))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        v.into_iter().map(|(_, n)| n.clone()).collect()
    }
}

/// Sorting subtasks for `case`: in case 1, g waits for b and r waits for
/// both; in case 2 there are no preconditions.
pub fn build_case(case: u8, params: PriorityParams) -> Result<Vec<SubtaskRecord>, ScenarioError> {
    let pre: [Vec<String>; 3] = match case {
        1 => [
            vec![],
            vec![placed_flag("b_box")],
            vec![placed_flag("b_box"), placed_flag("g_box")],
        ],
        2 => Default::default(),
        other => return Err(ScenarioError::UnknownCase(other)),
    };
    Ok(BOX_NAMES
        .iter()
        .zip(pre)
        .map(|(b, pre)| {
            SubtaskRecord::new(subtask_name(b), pre, vec![placed_flag(b)], params).with_template(
                SORT_TASK,
                BTreeMap::from([("box".to_string(), b.to_string())]),
            )
        })
        .collect())
}

/// The LTM shipped with the crate: `rbt_root` and `sort box`.
pub fn bundled_ltm() -> Ltm {
    let mut ltm = Ltm::new();
    ltm.insert_document(rbt_core::runtime::ROOT_TASK, ROOT_JSON)
        .expect("bundled root task parses");
    ltm.insert_document(SORT_TASK, SORT_JSON)
        .expect("bundled sort task parses");
    ltm
}

/// The six assignments of three distinct distances to b, g and r.
pub fn permutations() -> Vec<[f64; 3]> {
    let d = [0.30, 0.55, 0.80];
    let idx = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    idx.iter().map(|i| [d[i[0]], d[i[1]], d[i[2]]]).collect()
}
