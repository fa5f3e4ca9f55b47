//! Long-term memory: task schemas and their JSON form.
//!
//! A task is a list of control-flow schemas `(name, type, children, params)`.
//! Actions appear only as `A(<handler>)` child references; conditions appear
//! only in `params`, as flat tag/name pairs where `C_ij` is the j-th
//! precondition of child i and `G_ij` the j-th postcondition of child i.
//!
//! ```json
//! [
//!   {"name": "rbt_root", "type": "fallback",
//!    "children": ["sequence_1"], "params": ["G_11", "goal reached"]}
//! ]
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value as Json;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("document must be a JSON array of schema objects")]
    NotAnArray,
    #[error("schema #{index}: missing or non-{expected} field `{field}`")]
    MissingField {
        index: usize,
        field: &'static str,
        expected: &'static str,
    },
    #[error("schema `{schema}`: unknown node type `{kind}`")]
    UnknownType { schema: String, kind: String },
    #[error("duplicate schema name `{0}`")]
    DuplicateName(String),
    #[error("schema `{schema}`: child `{child}` does not resolve to any schema")]
    UnresolvedChild { schema: String, child: String },
    #[error("schema `{schema}`: bad condition tag `{tag}`")]
    BadTag { schema: String, tag: String },
    #[error("schema `{schema}`: params must alternate tag and condition name")]
    OddParams { schema: String },
    #[error("schema `{schema}`: tag `{tag}` refers to child {child} but the node has {children}")]
    ChildOutOfRange {
        schema: String,
        tag: String,
        child: usize,
        children: usize,
    },
    #[error("schema `{schema}` has no children")]
    NoChildren { schema: String },
    #[error("no schema name contains `root`")]
    NoRoot,
    #[error("several schemas look like roots: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("schema `{child}` is referenced by both `{first}` and `{second}`")]
    MultipleParents {
        child: String,
        first: String,
        second: String,
    },
    #[error("schema `{0}` is part of a reference cycle")]
    Cycle(String),
    #[error("schema `{0}` is not reachable from the root")]
    Unreachable(String),
}

#[derive(Debug, Error)]
pub enum LtmError {
    #[error("JSON syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<LtmError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaKind {
    Fallback,
    Sequence,
    Parallel,
    Decorator,
}

impl SchemaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaKind::Fallback => "fallback",
            SchemaKind::Sequence => "sequence",
            SchemaKind::Parallel => "parallel",
            SchemaKind::Decorator => "decorator",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fallback" | "selector" => Some(SchemaKind::Fallback),
            "sequence" => Some(SchemaKind::Sequence),
            "parallel" => Some(SchemaKind::Parallel),
            "decorator" => Some(SchemaKind::Decorator),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChildRef {
    /// Another schema of the same task.
    Node(String),
    /// `A(<handler>)` literal.
    Action(String),
}

impl ChildRef {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("A(").and_then(|r| r.strip_suffix(')')) {
            Some(name) => ChildRef::Action(name.to_string()),
            None => ChildRef::Node(s.to_string()),
        }
    }

    pub fn to_literal(&self) -> String {
        match self {
            ChildRef::Node(n) => n.clone(),
            ChildRef::Action(a) => format!("A({a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionRole {
    /// `C_ij`
    Pre,
    /// `G_ij`
    Post,
}

/// One `(tag, name)` pair from `params`, with 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConditionParam {
    pub role: ConditionRole,
    pub child: usize,
    pub ordinal: usize,
    pub name: String,
}

impl ConditionParam {
    /// `C_11` style when both indices are single digits, `C_10_2` otherwise.
    pub fn tag(&self) -> String {
        let letter = match self.role {
            ConditionRole::Pre => 'C',
            ConditionRole::Post => 'G',
        };
        if self.child < 10 && self.ordinal < 10 {
            format!("{letter}_{}{}", self.child, self.ordinal)
        } else {
            format!("{letter}_{}_{}", self.child, self.ordinal)
        }
    }
}

/// Parses `C_ij` / `G_ij`; returns the role and the two 1-based indices.
pub fn parse_tag(tag: &str) -> Option<(ConditionRole, usize, usize)> {
    let (role, body) = if let Some(b) = tag.strip_prefix("C_") {
        (ConditionRole::Pre, b)
    } else {
        (ConditionRole::Post, tag.strip_prefix("G_")?)
    };
    let index = |s: &str| -> Option<usize> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.starts_with('0') {
            return None;
        }
        s.parse().ok()
    };
    let (i, j) = if body.contains('_') {
        let (a, b) = body.split_once('_')?;
        (index(a)?, index(b)?)
    } else if body.len() == 2 {
        (index(&body[..1])?, index(&body[1..])?)
    } else {
        return None;
    };
    Some((role, i, j))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaNode {
    pub name: String,
    pub kind: SchemaKind,
    pub children: Vec<ChildRef>,
    pub params: Vec<ConditionParam>,
}

impl SchemaNode {
    pub fn is_root(&self) -> bool {
        self.name.contains("root")
    }

    /// Conditions of `role` attached to 1-based child `child`, in ordinal
    /// order.
    pub fn conditions(&self, role: ConditionRole, child: usize) -> Vec<&str> {
        let mut v: Vec<&ConditionParam> = self
            .params
            .iter()
            .filter(|p| p.role == role && p.child == child)
            .collect();
        v.sort_by_key(|p| p.ordinal);
        v.into_iter().map(|p| p.name.as_str()).collect()
    }

    fn to_json(&self) -> Json {
        let params: Vec<Json> = if self.params.is_empty() {
            vec![Json::String(String::new())]
        } else {
            self.params
                .iter()
                .flat_map(|p| [Json::String(p.tag()), Json::String(p.name.clone())])
                .collect()
        };
        serde_json::json!({
            "name": self.name,
            "type": self.kind.as_str(),
            "children": self.children.iter().map(ChildRef::to_literal).collect::<Vec<_>>(),
            "params": params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub name: String,
    pub schemas: Vec<SchemaNode>,
    pub source: Option<String>,
}

impl TaskRecord {
    /// Validates `schemas` as a tree rooted at the single `root`-named
    /// schema.
    pub fn new(name: impl Into<String>, schemas: Vec<SchemaNode>) -> Result<Self, SchemaError> {
        validate(&schemas)?;
        Ok(Self {
            name: name.into(),
            schemas,
            source: None,
        })
    }

    pub fn root(&self) -> &SchemaNode {
        self.schemas
            .iter()
            .find(|s| s.is_root())
            .expect("validated task has a root")
    }
}

fn field<'a>(
    obj: &'a serde_json::Map<String, Json>,
    index: usize,
    field: &'static str,
) -> Result<&'a Json, SchemaError> {
    obj.get(field).ok_or(SchemaError::MissingField {
        index,
        field,
        expected: "present",
    })
}

fn string_list(
    obj: &serde_json::Map<String, Json>,
    index: usize,
    name: &'static str,
) -> Result<Vec<String>, SchemaError> {
    let bad = SchemaError::MissingField {
        index,
        field: name,
        expected: "string-array",
    };
    let arr = field(obj, index, name)?.as_array().ok_or(bad.clone())?;
    arr.iter()
        .map(|v| v.as_str().map(str::to_string).ok_or(bad.clone()))
        .collect()
}

fn parse_schema(index: usize, value: &Json) -> Result<SchemaNode, SchemaError> {
    let obj = value.as_object().ok_or(SchemaError::NotAnArray)?;
    let name = field(obj, index, "name")?
        .as_str()
        .ok_or(SchemaError::MissingField {
            index,
            field: "name",
            expected: "string",
        })?
        .to_string();
    let kind_str = field(obj, index, "type")?
        .as_str()
        .ok_or(SchemaError::MissingField {
            index,
            field: "type",
            expected: "string",
        })?;
    let kind = SchemaKind::parse(kind_str).ok_or_else(|| SchemaError::UnknownType {
        schema: name.clone(),
        kind: kind_str.to_string(),
    })?;
    let children: Vec<ChildRef> = string_list(obj, index, "children")?
        .iter()
        .map(|c| ChildRef::parse(c))
        .collect();
    if children.is_empty() {
        return Err(SchemaError::NoChildren { schema: name });
    }
    let raw_params = string_list(obj, index, "params")?;
    // `[""]` and `[]` both mean no conditions
    let raw_params: Vec<String> = if raw_params.iter().all(String::is_empty) {
        Vec::new()
    } else {
        raw_params
    };
    if !raw_params.len().is_multiple_of(2) {
        return Err(SchemaError::OddParams { schema: name });
    }
    let mut params = Vec::with_capacity(raw_params.len() / 2);
    for pair in raw_params.chunks(2) {
        let (tag, cond) = (&pair[0], &pair[1]);
        let (role, child, ordinal) = parse_tag(tag).ok_or_else(|| SchemaError::BadTag {
            schema: name.clone(),
            tag: tag.clone(),
        })?;
        if child > children.len() {
            return Err(SchemaError::ChildOutOfRange {
                schema: name,
                tag: tag.clone(),
                child,
                children: children.len(),
            });
        }
        if cond.is_empty() {
            return Err(SchemaError::BadTag {
                schema: name,
                tag: tag.clone(),
            });
        }
        params.push(ConditionParam {
            role,
            child,
            ordinal,
            name: cond.clone(),
        });
    }
    Ok(SchemaNode {
        name,
        kind,
        children,
        params,
    })
}

/// Checks names, references, the single root and tree shape.
pub fn validate(schemas: &[SchemaNode]) -> Result<(), SchemaError> {
    let mut by_name: HashMap<&str, &SchemaNode> = HashMap::new();
    for s in schemas {
        if by_name.insert(&s.name, s).is_some() {
            return Err(SchemaError::DuplicateName(s.name.clone()));
        }
    }
    let mut parent_of: HashMap<&str, &str> = HashMap::new();
    for s in schemas {
        for c in &s.children {
            if let ChildRef::Node(child) = c {
                if !by_name.contains_key(child.as_str()) {
                    return Err(SchemaError::UnresolvedChild {
                        schema: s.name.clone(),
                        child: child.clone(),
                    });
                }
                if let Some(first) = parent_of.insert(child, &s.name) {
                    return Err(SchemaError::MultipleParents {
                        child: child.clone(),
                        first: first.to_string(),
                        second: s.name.clone(),
                    });
                }
            }
        }
    }
    let roots: Vec<&SchemaNode> = schemas.iter().filter(|s| s.is_root()).collect();
    let root = match roots.as_slice() {
        [] => return Err(SchemaError::NoRoot),
        [r] => *r,
        many => {
            return Err(SchemaError::MultipleRoots(
                many.iter().map(|s| s.name.clone()).collect(),
            ))
        }
    };
    if parent_of.contains_key(root.name.as_str()) {
        return Err(SchemaError::Cycle(root.name.clone()));
    }
    // single parent everywhere, so a walk from the root reaches each schema
    // at most once; anything left over sits on a cycle or is orphaned
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack = vec![root];
    while let Some(s) = stack.pop() {
        seen.insert(&s.name);
        for c in &s.children {
            if let ChildRef::Node(n) = c {
                stack.push(by_name[n.as_str()]);
            }
        }
    }
    for s in schemas {
        if !seen.contains(s.name.as_str()) {
            return Err(if on_cycle(&s.name, &parent_of) {
                SchemaError::Cycle(s.name.clone())
            } else {
                SchemaError::Unreachable(s.name.clone())
            });
        }
    }
    Ok(())
}

fn on_cycle(start: &str, parent_of: &HashMap<&str, &str>) -> bool {
    let mut cursor = start;
    for _ in 0..=parent_of.len() {
        match parent_of.get(cursor) {
            Some(&p) if p == start => return true,
            Some(&p) => cursor = p,
            None => return false,
        }
    }
    true
}

/// Parses a schema array. The task takes the root schema's name; stores
/// rename it after the file it came from.
pub fn parse_task(document: &str) -> Result<TaskRecord, LtmError> {
    let json: Json = serde_json::from_str(document)?;
    parse_task_value(&json)
}

fn parse_task_value(json: &Json) -> Result<TaskRecord, LtmError> {
    let arr = json.as_array().ok_or(SchemaError::NotAnArray)?;
    let schemas = arr
        .iter()
        .enumerate()
        .map(|(i, v)| parse_schema(i, v))
        .collect::<Result<Vec<_>, _>>()?;
    validate(&schemas)?;
    let name = schemas
        .iter()
        .find(|s| s.is_root())
        .map(|s| s.name.clone())
        .expect("validated");
    Ok(TaskRecord {
        name,
        schemas,
        source: None,
    })
}

/// Pretty-printed schema array; `[""]` stands for empty params.
pub fn serialize_task(task: &TaskRecord) -> String {
    let arr = Json::Array(task.schemas.iter().map(SchemaNode::to_json).collect());
    serde_json::to_string_pretty(&arr).expect("JSON values always serialize")
}

/// Task store backed by a directory of `<task-name>.json` files, optional
/// bundle files (`{task-name: [schemas]}`), or in-memory inserts.
#[derive(Debug, Clone, Default)]
pub struct Ltm {
    tasks: BTreeMap<String, TaskRecord>,
}

/// Outcome of parsing one file of a store directory.
#[derive(Debug)]
pub struct FileReport {
    pub path: PathBuf,
    pub result: Result<Vec<String>, LtmError>,
}

impl Ltm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task: TaskRecord) {
        self.tasks.insert(task.name.clone(), task);
    }

    /// Adds a task parsed from `document` under `name`.
    pub fn insert_document(&mut self, name: &str, document: &str) -> Result<(), LtmError> {
        let mut task = parse_task(document)?;
        task.name = name.to_string();
        self.insert(task);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn task_names(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    pub fn task(&self, name: &str) -> Result<&TaskRecord, LtmError> {
        self.tasks
            .get(name)
            .ok_or_else(|| LtmError::UnknownTask(name.to_string()))
    }

    /// Schemas of `name` in file order.
    pub fn get_task_from_ltm(&self, name: &str) -> Result<&[SchemaNode], LtmError> {
        Ok(&self.task(name)?.schemas)
    }

    fn parse_file(path: &Path) -> Result<Vec<TaskRecord>, LtmError> {
        let text = fs::read_to_string(path).map_err(|source| LtmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let json: Json = serde_json::from_str(&text)?;
        let source = Some(path.display().to_string());
        match &json {
            Json::Object(map) => map
                .iter()
                .map(|(name, v)| {
                    let mut t = parse_task_value(v)?;
                    t.name = name.clone();
                    t.source = source.clone();
                    Ok(t)
                })
                .collect(),
            _ => {
                let mut t = parse_task_value(&json)?;
                t.name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                t.source = source;
                Ok(vec![t])
            }
        }
    }

    /// Parses every `*.json` file of `dir` (sorted by file name) without
    /// stopping at the first failure.
    pub fn scan_dir(dir: &Path) -> Result<Vec<FileReport>, LtmError> {
        let entries = fs::read_dir(dir).map_err(|source| LtmError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths = Vec::new();
        for e in entries {
            let e = e.map_err(|source| LtmError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let p = e.path();
            if p.extension().is_some_and(|x| x == "json") && p.is_file() {
                paths.push(p);
            }
        }
        paths.sort();
        Ok(paths
            .into_iter()
            .map(|path| {
                let result = Self::parse_file(&path)
                    .map(|tasks| tasks.into_iter().map(|t| t.name).collect());
                FileReport { path, result }
            })
            .collect())
    }

    /// Loads a store directory; the first bad file aborts the load.
    pub fn load_dir(dir: &Path) -> Result<Self, LtmError> {
        let mut ltm = Ltm::new();
        for report in Self::scan_dir(dir)? {
            if let Err(e) = report.result {
                return Err(LtmError::File {
                    path: report.path,
                    source: Box::new(e),
                });
            }
            for t in Self::parse_file(&report.path)? {
                ltm.insert(t);
            }
        }
        Ok(ltm)
    }
}
