//! Domain types shared by every stage: activities, cost drivers, activity and
//! process instances, and event logs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::decimal::ExactDecimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("process instance `{0}` has no activity instances")]
    EmptyTrace(String),
    #[error("duplicate trace id `{0}`")]
    DuplicateTrace(String),
    #[error("concrete driver `{concrete}` is assigned to both `{first}` and `{second}`")]
    MultipleParents {
        concrete: String,
        first: String,
        second: String,
    },
    #[error("duplicate concrete driver `{0}`")]
    DuplicateConcrete(String),
    #[error("concrete driver `{concrete}` refers to unknown abstract driver `{parent}`")]
    UnknownParent { concrete: String, parent: String },
    #[error("abstract driver `{0}` has no concrete driver")]
    NoConcretization(String),
}

/// Label of an activity, e.g. "Conduct interview with candidate".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActivityId(String);

impl ActivityId {
    pub fn new(name: impl Into<String>) -> Result<Self, DomainError> {
        let name = name.into();
        if name.is_empty() {
            return Err(DomainError::Empty("activity name"));
        }
        Ok(ActivityId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ActivityId {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ActivityId::new(value)
    }
}

impl From<ActivityId> for String {
    fn from(value: ActivityId) -> Self {
        value.0
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A named source of environmental impact annotated to activities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractCostDriver(String);

impl AbstractCostDriver {
    pub fn new(id: impl Into<String>) -> Result<Self, DomainError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DomainError::Empty("abstract cost driver id"));
        }
        Ok(AbstractCostDriver(id))
    }

    pub fn id(&self) -> &str {
        &self.0
    }
}

/// A specific realization of an abstract driver with a fixed impact score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteCostDriver {
    pub id: String,
    pub parent: String,
    pub cost: ExactDecimal,
}

/// Which concrete drivers concretize which abstract driver. Each concrete
/// driver has exactly one parent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostDriverHierarchy {
    abstracts: BTreeMap<String, Vec<String>>,
    concretes: BTreeMap<String, ConcreteCostDriver>,
}

impl CostDriverHierarchy {
    pub fn new(
        abstracts: impl IntoIterator<Item = AbstractCostDriver>,
        concretes: impl IntoIterator<Item = ConcreteCostDriver>,
    ) -> Result<Self, DomainError> {
        let mut h = CostDriverHierarchy::default();
        for a in abstracts {
            h.abstracts.entry(a.0).or_default();
        }
        for c in concretes {
            if c.id.is_empty() {
                return Err(DomainError::Empty("concrete cost driver id"));
            }
            if let Some(existing) = h.concretes.get(&c.id) {
                return Err(if existing.parent != c.parent {
                    DomainError::MultipleParents {
                        concrete: c.id.clone(),
                        first: existing.parent.clone(),
                        second: c.parent.clone(),
                    }
                } else {
                    DomainError::DuplicateConcrete(c.id.clone())
                });
            }
            let children = h
                .abstracts
                .get_mut(&c.parent)
                .ok_or_else(|| DomainError::UnknownParent {
                    concrete: c.id.clone(),
                    parent: c.parent.clone(),
                })?;
            children.push(c.id.clone());
            h.concretes.insert(c.id.clone(), c);
        }
        if let Some((a, _)) = h.abstracts.iter().find(|(_, c)| c.is_empty()) {
            return Err(DomainError::NoConcretization(a.clone()));
        }
        Ok(h)
    }

    /// The pairs (abstract, concrete) of the relation.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.abstracts
            .iter()
            .flat_map(|(a, cs)| cs.iter().map(move |c| (a.as_str(), c.as_str())))
    }

    pub fn concretizations(&self, abstract_id: &str) -> &[String] {
        self.abstracts
            .get(abstract_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn concrete(&self, id: &str) -> Option<&ConcreteCostDriver> {
        self.concretes.get(id)
    }

    pub fn parent_of(&self, concrete_id: &str) -> Option<&str> {
        self.concretes.get(concrete_id).map(|c| c.parent.as_str())
    }

    /// The cost function over concrete drivers.
    pub fn cost(&self, concrete_id: &str) -> Option<&ExactDecimal> {
        self.concretes.get(concrete_id).map(|c| &c.cost)
    }
}

/// One driver recorded on an activity instance. The id names the driver as it
/// appears in the log; `value` carries an inline score when the log has one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DriverRef {
    pub id: String,
    pub value: Option<ExactDecimal>,
}

impl DriverRef {
    pub fn new(id: impl Into<String>) -> Self {
        DriverRef {
            id: id.into(),
            value: None,
        }
    }

    pub fn with_value(id: impl Into<String>, value: ExactDecimal) -> Self {
        DriverRef {
            id: id.into(),
            value: Some(value),
        }
    }
}

/// Insertion-ordered set of drivers keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DriverSet(Vec<DriverRef>);

impl DriverSet {
    pub fn new() -> Self {
        DriverSet(Vec::new())
    }

    /// Builds a set and returns the ids that were dropped as duplicates.
    pub fn from_refs(refs: impl IntoIterator<Item = DriverRef>) -> (Self, Vec<String>) {
        let mut set = DriverSet::new();
        let mut dropped = Vec::new();
        for r in refs {
            let id = r.id.clone();
            if !set.insert(r) {
                dropped.push(id);
            }
        }
        (set, dropped)
    }

    /// Returns false (and leaves the set unchanged) when the id is present.
    pub fn insert(&mut self, driver: DriverRef) -> bool {
        if self.contains(&driver.id) {
            return false;
        }
        self.0.push(driver);
        true
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.iter().any(|d| d.id == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DriverRef> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'a> IntoIterator for &'a DriverSet {
    type Item = &'a DriverRef;
    type IntoIter = std::slice::Iter<'a, DriverRef>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub type Timestamp = DateTime<FixedOffset>;

/// One execution of an activity with the drivers it incurred. Its sequence
/// index is its position in the owning [`ProcessInstance`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityInstance {
    pub activity: ActivityId,
    pub drivers: DriverSet,
    pub start: Timestamp,
    pub complete: Timestamp,
}

/// A case: a non-empty, totally ordered sequence of activity instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessInstance {
    id: String,
    variant: Option<String>,
    instances: Vec<ActivityInstance>,
}

impl ProcessInstance {
    pub fn new(
        id: impl Into<String>,
        variant: Option<String>,
        instances: Vec<ActivityInstance>,
    ) -> Result<Self, DomainError> {
        let id = id.into();
        if instances.is_empty() {
            return Err(DomainError::EmptyTrace(id));
        }
        Ok(ProcessInstance {
            id,
            variant,
            instances,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn variant(&self) -> Option<&str> {
        self.variant.as_deref()
    }

    pub fn instances(&self) -> &[ActivityInstance] {
        &self.instances
    }

    /// Number of activity instances of `activity` in this trace.
    pub fn occurrence_count(&self, activity: &ActivityId) -> usize {
        self.instances
            .iter()
            .filter(|i| &i.activity == activity)
            .count()
    }
}

/// A multiset of process instances with unique trace ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    traces: Vec<ProcessInstance>,
}

impl EventLog {
    pub fn new(traces: Vec<ProcessInstance>) -> Result<Self, DomainError> {
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !seen.insert(t.id.as_str()) {
                return Err(DomainError::DuplicateTrace(t.id.clone()));
            }
        }
        Ok(EventLog { traces })
    }

    pub fn traces(&self) -> &[ProcessInstance] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}
