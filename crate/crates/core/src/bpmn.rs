//! BPMN process models with environmental cost driver annotations.
//!
//! Supported subset: one process with a start event, end events, tasks,
//! exclusive and parallel gateways, and sequence flows. Parallel regions must
//! be block-structured. Lanes, pools and diagram information are read but
//! carry no meaning here.
//!
//! Annotations use the extension namespace [`SOPA_NAMESPACE`]:
//!
//! ```xml
//! <bpmn:task id="T1" name="Conduct interview with candidate">
//!   <bpmn:extensionElements>
//!     <sopa:costDriver id="Interview"/>
//!   </bpmn:extensionElements>
//! </bpmn:task>
//! <bpmn:sequenceFlow id="F7" sourceRef="G1" targetRef="T2">
//!   <bpmn:extensionElements>
//!     <sopa:probability value="0.95"/>
//!   </bpmn:extensionElements>
//! </bpmn:sequenceFlow>
//! <bpmn:endEvent id="E2" name="Process cancelled" sopa:outcome="cancelled"/>
//! ```
//!
//! The same information can be supplied (or overridden) by a sidecar file,
//! see [`parse_model_with_annotations`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::decimal::{parse_exact_decimal, ExactDecimal};
use crate::model::{ActivityId, DomainError};
use crate::variant_config::CostVariantConfig;
use crate::xml::{self, Element, XmlError};

/// Namespace URI of the annotation extension elements and attributes.
pub const SOPA_NAMESPACE: &str = "urn:sopa:bpmn-extension:1.0";

/// Default bound on how often a single node may be visited in one process
/// instance.
pub const DEFAULT_MAX_ITERATIONS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: unsupported BPMN element <{element}>")]
    Unsupported { line: usize, element: String },
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
    #[error("sequence flow `{flow}` references unknown node `{node}`")]
    UnknownNode { flow: String, node: String },
    #[error("unknown sequence flow `{0}`")]
    UnknownFlow(String),
    #[error("model has no start event")]
    MissingStart,
    #[error("model has more than one start event: {0:?}")]
    MultipleStarts(Vec<String>),
    #[error("model has no end event")]
    MissingEnd,
    #[error("node `{id}`: {message}")]
    Degree { id: String, message: String },
    #[error("node `{0}` is not reachable from the start event")]
    Unreachable(String),
    #[error("sequence flow `{0}` carries a probability but does not leave an exclusive split")]
    ProbabilityOnNonExclusiveFlow(String),
    #[error("exclusive split `{gateway}`: outgoing flow `{flow}` has no probability")]
    MissingProbability { gateway: String, flow: String },
    #[error("exclusive split `{gateway}`: probabilities sum to {sum}, expected 1")]
    ProbabilitySum { gateway: String, sum: String },
    #[error("parallel gateway `{gateway}` is not block-structured: {reason}")]
    Unstructured { gateway: String, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndOutcome {
    Completed,
    Failed,
    Cancelled,
}

impl EndOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            EndOutcome::Completed => "completed",
            EndOutcome::Failed => "failed",
            EndOutcome::Cancelled => "cancelled",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "completed" => Some(EndOutcome::Completed),
            "failed" => Some(EndOutcome::Failed),
            "cancelled" | "canceled" => Some(EndOutcome::Cancelled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayKind {
    Exclusive,
    Parallel,
}

/// Derived from the gateway's in- and out-degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayRole {
    Split,
    Join,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Start,
    End(EndOutcome),
    Task {
        activity: ActivityId,
        drivers: Vec<String>,
    },
    Gateway {
        kind: GatewayKind,
        role: GatewayRole,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub name: Option<String>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFlow {
    pub id: String,
    pub source: usize,
    pub target: usize,
    pub probability: Option<ExactDecimal>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessModel {
    nodes: Vec<Node>,
    flows: Vec<SequenceFlow>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    start: usize,
    /// Parallel split node -> its matching join.
    blocks: HashMap<usize, usize>,
}

impl ProcessModel {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[SequenceFlow] {
        &self.flows
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Indices into [`flows`](Self::flows), in declaration order.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn matching_join(&self, split: usize) -> Option<usize> {
        self.blocks.get(&split).copied()
    }

    /// Task nodes with their activity and annotated drivers.
    pub fn tasks(&self) -> impl Iterator<Item = (usize, &ActivityId, &[String])> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match &n.kind {
            NodeKind::Task { activity, drivers } => Some((i, activity, drivers.as_slice())),
            _ => None,
        })
    }

    /// Distinct activity labels in node order.
    pub fn activities(&self) -> Vec<&ActivityId> {
        let mut seen = HashSet::new();
        self.tasks()
            .filter(|(_, a, _)| seen.insert(*a))
            .map(|(_, a, _)| a)
            .collect()
    }

    pub fn is_exclusive_split(&self, node: usize) -> bool {
        matches!(
            self.nodes[node].kind,
            NodeKind::Gateway {
                kind: GatewayKind::Exclusive,
                role: GatewayRole::Split
            }
        )
    }

    /// Probability of taking `flow`: its branch probability when it leaves an
    /// exclusive split, 1 otherwise.
    pub fn flow_weight(&self, flow: usize) -> ExactDecimal {
        match &self.flows[flow].probability {
            Some(p) if self.is_exclusive_split(self.flows[flow].source) => p.clone(),
            _ => ExactDecimal::one(),
        }
    }

    pub fn branch_probabilities(&self) -> BranchProbabilities {
        BranchProbabilities(
            self.flows
                .iter()
                .filter_map(|f| f.probability.clone().map(|p| (f.id.clone(), p)))
                .collect(),
        )
    }

    /// Copy of the model with some branch probabilities replaced.
    pub fn with_probabilities(&self, overrides: &BranchProbabilities) -> Result<Self, ModelError> {
        let mut model = self.clone();
        for (flow_id, p) in &overrides.0 {
            let flow = model
                .flows
                .iter_mut()
                .find(|f| &f.id == flow_id)
                .ok_or_else(|| ModelError::UnknownFlow(flow_id.clone()))?;
            flow.probability = Some(p.clone());
        }
        check_probabilities(&model)?;
        Ok(model)
    }
}

/// Branch probabilities keyed by sequence flow id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BranchProbabilities(pub HashMap<String, ExactDecimal>);

impl BranchProbabilities {
    pub fn get(&self, flow_id: &str) -> Option<&ExactDecimal> {
        self.0.get(flow_id)
    }

    pub fn set(&mut self, flow_id: impl Into<String>, p: ExactDecimal) {
        self.0.insert(flow_id.into(), p);
    }
}

#[derive(Debug, Clone)]
enum PendingKind {
    Start,
    End(EndOutcome),
    Task { name: String, drivers: Vec<String> },
    Gateway(GatewayKind),
}

/// Assembles and checks a [`ProcessModel`].
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    nodes: Vec<(String, Option<String>, PendingKind)>,
    flows: Vec<(String, String, String, Option<ExactDecimal>)>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(mut self, id: &str) -> Self {
        self.nodes.push((id.into(), None, PendingKind::Start));
        self
    }

    pub fn end(mut self, id: &str, outcome: EndOutcome) -> Self {
        self.nodes.push((id.into(), None, PendingKind::End(outcome)));
        self
    }

    pub fn task(mut self, id: &str, name: &str, drivers: &[&str]) -> Self {
        self.nodes.push((
            id.into(),
            Some(name.into()),
            PendingKind::Task {
                name: name.into(),
                drivers: drivers.iter().map(|d| d.to_string()).collect(),
            },
        ));
        self
    }

    pub fn exclusive(mut self, id: &str) -> Self {
        self.nodes
            .push((id.into(), None, PendingKind::Gateway(GatewayKind::Exclusive)));
        self
    }

    pub fn parallel(mut self, id: &str) -> Self {
        self.nodes
            .push((id.into(), None, PendingKind::Gateway(GatewayKind::Parallel)));
        self
    }

    pub fn flow(mut self, source: &str, target: &str) -> Self {
        let id = format!("flow_{}", self.flows.len());
        self.flows.push((id, source.into(), target.into(), None));
        self
    }

    /// Flow with a branch probability given as decimal text. Panics on bad
    /// text; intended for programmatic construction.
    pub fn branch(mut self, source: &str, target: &str, probability: &str) -> Self {
        let id = format!("flow_{}", self.flows.len());
        let p = parse_exact_decimal(probability).expect("valid probability literal");
        self.flows.push((id, source.into(), target.into(), Some(p)));
        self
    }

    pub fn flow_with_id(
        mut self,
        id: &str,
        source: &str,
        target: &str,
        probability: Option<ExactDecimal>,
    ) -> Self {
        self.flows
            .push((id.into(), source.into(), target.into(), probability));
        self
    }

    fn set_name(&mut self, id: &str, name: Option<String>) {
        if let Some(n) = self.nodes.iter_mut().find(|n| n.0 == id) {
            if n.1.is_none() {
                n.1 = name;
            }
        }
    }

    pub fn build(self) -> Result<ProcessModel, ModelError> {
        let mut ids = HashSet::new();
        for id in self
            .nodes
            .iter()
            .map(|n| &n.0)
            .chain(self.flows.iter().map(|f| &f.0))
        {
            if !ids.insert(id.as_str()) {
                return Err(ModelError::DuplicateId(id.clone()));
            }
        }
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.0.as_str(), i))
            .collect();

        let mut flows = Vec::with_capacity(self.flows.len());
        let mut outgoing = vec![Vec::new(); self.nodes.len()];
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        for (id, src, tgt, p) in &self.flows {
            let lookup = |n: &String| {
                index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| ModelError::UnknownNode {
                        flow: id.clone(),
                        node: n.clone(),
                    })
            };
            let (s, t) = (lookup(src)?, lookup(tgt)?);
            outgoing[s].push(flows.len());
            incoming[t].push(flows.len());
            flows.push(SequenceFlow {
                id: id.clone(),
                source: s,
                target: t,
                probability: p.clone(),
            });
        }

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, (id, name, kind)) in self.nodes.iter().enumerate() {
            let (ins, outs) = (incoming[i].len(), outgoing[i].len());
            let degree = |message: &str| ModelError::Degree {
                id: id.clone(),
                message: message.to_string(),
            };
            let kind = match kind {
                PendingKind::Start => {
                    if ins != 0 || outs != 1 {
                        return Err(degree(
                            "a start event needs no incoming and exactly one outgoing flow",
                        ));
                    }
                    NodeKind::Start
                }
                PendingKind::End(o) => {
                    if ins == 0 || outs != 0 {
                        return Err(degree(
                            "an end event needs incoming flows and no outgoing flow",
                        ));
                    }
                    NodeKind::End(*o)
                }
                PendingKind::Task { name, drivers } => {
                    if ins != 1 || outs != 1 {
                        return Err(degree(
                            "a task needs exactly one incoming and one outgoing flow; use gateways to merge or split",
                        ));
                    }
                    let mut unique: Vec<String> = Vec::new();
                    for d in drivers {
                        if d.is_empty() {
                            return Err(degree("cost driver ids must not be empty"));
                        }
                        if !unique.contains(d) {
                            unique.push(d.clone());
                        }
                    }
                    NodeKind::Task {
                        activity: ActivityId::new(name.clone())?,
                        drivers: unique,
                    }
                }
                PendingKind::Gateway(kind) => {
                    let role = match (ins, outs) {
                        (1, 1) => GatewayRole::PassThrough,
                        (1, o) if o > 1 => GatewayRole::Split,
                        (i, 1) if i > 1 => GatewayRole::Join,
                        _ => {
                            return Err(degree(
                                "a gateway must either split (one incoming) or join (one outgoing)",
                            ))
                        }
                    };
                    NodeKind::Gateway { kind: *kind, role }
                }
            };
            nodes.push(Node {
                id: id.clone(),
                name: name.clone(),
                kind,
            });
        }

        let starts: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Start)
            .map(|(i, _)| i)
            .collect();
        let start = match starts.as_slice() {
            [] => return Err(ModelError::MissingStart),
            [s] => *s,
            many => {
                return Err(ModelError::MultipleStarts(
                    many.iter().map(|&i| nodes[i].id.clone()).collect(),
                ))
            }
        };
        if !nodes.iter().any(|n| matches!(n.kind, NodeKind::End(_))) {
            return Err(ModelError::MissingEnd);
        }

        let mut model = ProcessModel {
            nodes,
            flows,
            outgoing,
            incoming,
            start,
            blocks: HashMap::new(),
        };
        check_probabilities(&model)?;

        let mut reached = vec![false; model.nodes.len()];
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut reached[n], true) {
                continue;
            }
            stack.extend(model.outgoing[n].iter().map(|&f| model.flows[f].target));
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(ModelError::Unreachable(model.nodes[i].id.clone()));
        }

        model.blocks = parallel_blocks(&model)?;
        Ok(model)
    }
}

fn check_probabilities(model: &ProcessModel) -> Result<(), ModelError> {
    for (i, node) in model.nodes.iter().enumerate() {
        let outs = &model.outgoing[i];
        if model.is_exclusive_split(i) {
            let mut sum = ExactDecimal::zero();
            for &f in outs {
                let flow = &model.flows[f];
                match &flow.probability {
                    Some(p) => sum += p,
                    None => {
                        return Err(ModelError::MissingProbability {
                            gateway: node.id.clone(),
                            flow: flow.id.clone(),
                        })
                    }
                }
            }
            if sum != ExactDecimal::one() {
                return Err(ModelError::ProbabilitySum {
                    gateway: node.id.clone(),
                    sum: sum.to_string(),
                });
            }
        } else if let Some(&f) = outs.iter().find(|&&f| model.flows[f].probability.is_some()) {
            return Err(ModelError::ProbabilityOnNonExclusiveFlow(
                model.flows[f].id.clone(),
            ));
        }
    }
    Ok(())
}

fn is_parallel(model: &ProcessModel, n: usize, role: GatewayRole) -> bool {
    model.nodes[n].kind
        == NodeKind::Gateway {
            kind: GatewayKind::Parallel,
            role,
        }
}

fn parallel_blocks(model: &ProcessModel) -> Result<HashMap<usize, usize>, ModelError> {
    let mut memo: HashMap<usize, (usize, HashSet<usize>)> = HashMap::new();
    for n in 0..model.nodes.len() {
        if is_parallel(model, n, GatewayRole::Split) {
            match_block(model, n, &mut memo, &mut Vec::new())?;
        }
    }
    let mut blocks = HashMap::new();
    let mut claimed: HashMap<usize, usize> = HashMap::new();
    for (&split, (join, _)) in &memo {
        if let Some(other) = claimed.insert(*join, split) {
            return Err(ModelError::Unstructured {
                gateway: model.nodes[split].id.clone(),
                reason: format!(
                    "shares its join `{}` with `{}`",
                    model.nodes[*join].id, model.nodes[other].id
                ),
            });
        }
        blocks.insert(split, *join);
    }
    for n in 0..model.nodes.len() {
        if is_parallel(model, n, GatewayRole::Join) && !claimed.contains_key(&n) {
            return Err(ModelError::Unstructured {
                gateway: model.nodes[n].id.clone(),
                reason: "join has no matching parallel split".into(),
            });
        }
    }
    Ok(blocks)
}

/// Finds the join closing the block opened by `split`, together with the
/// block's interior nodes.
fn match_block(
    model: &ProcessModel,
    split: usize,
    memo: &mut HashMap<usize, (usize, HashSet<usize>)>,
    active: &mut Vec<usize>,
) -> Result<usize, ModelError> {
    if let Some((join, _)) = memo.get(&split) {
        return Ok(*join);
    }
    let fail = |reason: String| ModelError::Unstructured {
        gateway: model.nodes[split].id.clone(),
        reason,
    };
    if active.contains(&split) {
        return Err(fail("parallel blocks overlap".into()));
    }
    active.push(split);

    let mut join: Option<usize> = None;
    let mut interior: HashSet<usize> = HashSet::new();
    let mut stack: Vec<usize> = model.outgoing[split]
        .iter()
        .map(|&f| model.flows[f].target)
        .collect();
    while let Some(n) = stack.pop() {
        if n == split {
            return Err(fail("a branch flows back into the split".into()));
        }
        if is_parallel(model, n, GatewayRole::Join) {
            match join {
                Some(j) if j != n => {
                    return Err(fail(format!(
                        "branches end in different joins `{}` and `{}`",
                        model.nodes[j].id, model.nodes[n].id
                    )))
                }
                _ => join = Some(n),
            }
            continue;
        }
        if !interior.insert(n) {
            continue;
        }
        match model.nodes[n].kind {
            NodeKind::End(_) => {
                return Err(fail(format!(
                    "end event `{}` inside the parallel block",
                    model.nodes[n].id
                )))
            }
            _ if is_parallel(model, n, GatewayRole::Split) => {
                let inner = match_block(model, n, memo, active)?;
                interior.extend(memo[&n].1.iter().copied());
                interior.insert(inner);
                stack.extend(model.outgoing[inner].iter().map(|&f| model.flows[f].target));
            }
            _ => stack.extend(model.outgoing[n].iter().map(|&f| model.flows[f].target)),
        }
    }
    active.pop();
    let join = join.ok_or_else(|| fail("no matching parallel join".into()))?;
    if model.incoming[join].len() != model.outgoing[split].len() {
        return Err(fail(format!(
            "join `{}` has {} incoming flows for {} branches",
            model.nodes[join].id,
            model.incoming[join].len(),
            model.outgoing[split].len()
        )));
    }
    for &n in interior.iter().chain(std::iter::once(&join)) {
        for &f in &model.incoming[n] {
            let src = model.flows[f].source;
            if src != split && !interior.contains(&src) {
                return Err(fail(format!(
                    "node `{}` is entered from outside the block via `{}`",
                    model.nodes[n].id, model.flows[f].id
                )));
            }
        }
    }
    memo.insert(split, (join, interior));
    Ok(join)
}

const TASK_ELEMENTS: &[&str] = &[
    "task",
    "userTask",
    "manualTask",
    "serviceTask",
    "scriptTask",
    "sendTask",
    "receiveTask",
    "businessRuleTask",
];

const IGNORED_PROCESS_CHILDREN: &[&str] = &[
    "laneSet",
    "documentation",
    "extensionElements",
    "textAnnotation",
    "association",
];

pub fn parse_model(bytes: &[u8]) -> Result<ProcessModel, ModelError> {
    parse_model_with_annotations(bytes, None)
}

/// Parses a model and applies an optional sidecar annotation file:
///
/// ```xml
/// <sopaAnnotations>
///   <task name="Conduct interview with candidate">
///     <costDriver id="Interview"/>
///   </task>
///   <simulationParameters>
///     <flow id="F12" probability="0.5"/>
///   </simulationParameters>
/// </sopaAnnotations>
/// ```
///
/// A sidecar `task` entry replaces the drivers of every task with that name;
/// a `flow` entry replaces that flow's probability.
pub fn parse_model_with_annotations(
    bytes: &[u8],
    sidecar: Option<&[u8]>,
) -> Result<ProcessModel, ModelError> {
    let root = xml::parse_document(bytes)?;
    if root.name != "definitions" {
        return Err(invalid(
            &root,
            format!("expected <definitions>, found <{}>", root.name),
        ));
    }
    let mut processes = Vec::new();
    for child in &root.children {
        match child.name.as_str() {
            "process" => processes.push(child),
            "collaboration" => {
                if let Some(m) = child.children_named("messageFlow").next() {
                    return Err(unsupported(m));
                }
            }
            _ => {}
        }
    }
    let process = match processes
        .iter()
        .filter(|p| !p.children.is_empty())
        .collect::<Vec<_>>()
        .as_slice()
    {
        [p] => *p,
        [] => return Err(invalid(&root, "no <process> with flow elements")),
        _ => return Err(invalid(&root, "only a single <process> is supported")),
    };

    let mut builder = ModelBuilder::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for el in &process.children {
        let name = el.name.as_str();
        if IGNORED_PROCESS_CHILDREN.contains(&name) {
            continue;
        }
        let id = el.required_attr("id")?.to_string();
        lines.insert(id.clone(), el.line);
        let label = el.attr("name").map(str::to_string);
        builder = match name {
            "startEvent" => builder.start(&id),
            "endEvent" => {
                let outcome = match end_outcome(el) {
                    Some(text) => EndOutcome::parse(text)
                        .ok_or_else(|| invalid(el, format!("unknown end outcome `{text}`")))?,
                    None => EndOutcome::Completed,
                };
                builder.end(&id, outcome)
            }
            "exclusiveGateway" => builder.exclusive(&id),
            "parallelGateway" => builder.parallel(&id),
            "sequenceFlow" => {
                let p = match flow_probability(el) {
                    Some(text) => Some(
                        parse_exact_decimal(text)
                            .map_err(|e| invalid(el, format!("probability: {e}")))?,
                    ),
                    None => None,
                };
                builder.flow_with_id(
                    &id,
                    el.required_attr("sourceRef")?,
                    el.required_attr("targetRef")?,
                    p,
                )
            }
            t if TASK_ELEMENTS.contains(&t) => {
                if let Some(l) = el.children.iter().find(|c| c.name.ends_with("LoopCharacteristics"))
                {
                    return Err(unsupported(l));
                }
                let task_name = label
                    .clone()
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| invalid(el, format!("task `{id}` has no name")))?;
                let drivers: Vec<String> = el
                    .children_named("extensionElements")
                    .flat_map(|x| x.children_named("costDriver"))
                    .map(|d| d.required_attr("id").map(str::to_string))
                    .collect::<Result<_, _>>()?;
                let refs: Vec<&str> = drivers.iter().map(String::as_str).collect();
                builder.task(&id, &task_name, &refs)
            }
            _ => return Err(unsupported(el)),
        };
        builder.set_name(&id, label);
    }

    if let Some(sidecar) = sidecar {
        builder = apply_sidecar(builder, sidecar)?;
    }
    builder.build().map_err(|e| locate(e, &lines))
}

fn end_outcome(el: &Element) -> Option<&str> {
    el.attr("outcome").or_else(|| {
        el.children_named("extensionElements")
            .flat_map(|x| x.children_named("outcome"))
            .find_map(|o| o.attr("value"))
    })
}

fn flow_probability(el: &Element) -> Option<&str> {
    el.attr("probability").or_else(|| {
        el.children_named("extensionElements")
            .flat_map(|x| x.children_named("probability"))
            .find_map(|o| o.attr("value"))
    })
}

fn apply_sidecar(mut builder: ModelBuilder, bytes: &[u8]) -> Result<ModelBuilder, ModelError> {
    let root = xml::parse_document(bytes)?;
    if root.name != "sopaAnnotations" {
        return Err(invalid(
            &root,
            format!("expected <sopaAnnotations>, found <{}>", root.name),
        ));
    }
    for el in &root.children {
        match el.name.as_str() {
            "task" => {
                let name = el.required_attr("name")?;
                let drivers: Vec<String> = el
                    .children_named("costDriver")
                    .map(|d| d.required_attr("id").map(str::to_string))
                    .collect::<Result<_, _>>()?;
                let mut matched = false;
                for (_, _, kind) in builder.nodes.iter_mut() {
                    if let PendingKind::Task { name: n, drivers: ds } = kind {
                        if n == name {
                            *ds = drivers.clone();
                            matched = true;
                        }
                    }
                }
                if !matched {
                    return Err(invalid(el, format!("no task named `{name}` in the model")));
                }
            }
            "simulationParameters" => {
                for f in &el.children {
                    if f.name != "flow" {
                        return Err(invalid(f, format!("unexpected element <{}>", f.name)));
                    }
                    let id = f.required_attr("id")?;
                    let p = parse_exact_decimal(f.required_attr("probability")?)
                        .map_err(|e| invalid(f, format!("probability: {e}")))?;
                    let flow = builder
                        .flows
                        .iter_mut()
                        .find(|x| x.0 == id)
                        .ok_or_else(|| invalid(f, format!("no sequence flow `{id}` in the model")))?;
                    flow.3 = Some(p);
                }
            }
            other => return Err(invalid(el, format!("unexpected element <{other}>"))),
        }
    }
    Ok(builder)
}

fn invalid(el: &Element, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        line: el.line,
        message: message.into(),
    }
}

fn unsupported(el: &Element) -> ModelError {
    ModelError::Unsupported {
        line: el.line,
        element: el.name.clone(),
    }
}

fn locate(err: ModelError, lines: &HashMap<String, usize>) -> ModelError {
    let id = match &err {
        ModelError::Degree { id, .. } => Some(id),
        ModelError::DuplicateId(id) | ModelError::Unreachable(id) => Some(id),
        ModelError::ProbabilityOnNonExclusiveFlow(f) => Some(f),
        ModelError::MissingProbability { gateway, .. }
        | ModelError::ProbabilitySum { gateway, .. }
        | ModelError::Unstructured { gateway, .. } => Some(gateway),
        ModelError::UnknownNode { flow, .. } => Some(flow),
        _ => None,
    };
    match id.and_then(|id| lines.get(id)) {
        Some(&line) => ModelError::Invalid {
            line,
            message: err.to_string(),
        },
        None => err,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    MissingDriver {
        task: String,
        activity: String,
        driver: String,
        variant: String,
    },
    NonTerminatingLoop {
        node: String,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MissingDriver {
                task,
                activity,
                driver,
                variant,
            } => write!(
                f,
                "task `{activity}` ({task}) is annotated with driver `{driver}`, which cost variant `{variant}` does not concretize"
            ),
            Diagnostic::NonTerminatingLoop { node } => {
                write!(f, "loop cannot terminate: no end event is reachable from `{node}`")
            }
        }
    }
}

/// Checks a model against a variant config. An empty result means every
/// annotated driver is priced by every variant and every loop can exit.
pub fn validate(model: &ProcessModel, config: &CostVariantConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (idx, activity, drivers) in model.tasks() {
        for driver in drivers {
            for v in &config.variants {
                if v.cost_of(driver).is_none() {
                    out.push(Diagnostic::MissingDriver {
                        task: model.node(idx).id.clone(),
                        activity: activity.to_string(),
                        driver: driver.clone(),
                        variant: v.id.clone(),
                    });
                }
            }
        }
    }
    out.extend(termination_diagnostics(model));
    out
}

fn termination_diagnostics(model: &ProcessModel) -> Vec<Diagnostic> {
    let n = model.nodes.len();
    let live = |f: usize| !model.flow_weight(f).is_zero();
    let mut terminates = vec![false; n];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if terminates[i] {
                continue;
            }
            let outs = &model.outgoing[i];
            let ok = match &model.nodes[i].kind {
                NodeKind::End(_) => true,
                NodeKind::Gateway {
                    kind: GatewayKind::Parallel,
                    role: GatewayRole::Split,
                } => outs.iter().all(|&f| terminates[model.flows[f].target]),
                _ => outs
                    .iter()
                    .any(|&f| live(f) && terminates[model.flows[f].target]),
            };
            if ok {
                terminates[i] = true;
                changed = true;
            }
        }
    }

    let mut reached = vec![false; n];
    let mut stack = vec![model.start];
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut reached[i], true) {
            continue;
        }
        stack.extend(
            model.outgoing[i]
                .iter()
                .filter(|&&f| live(f))
                .map(|&f| model.flows[f].target),
        );
    }
    let stuck: BTreeSet<usize> = (0..n).filter(|&i| reached[i] && !terminates[i]).collect();
    // Report decision points; fall back to the first stuck node.
    let mut report: Vec<usize> = stuck
        .iter()
        .copied()
        .filter(|&i| model.is_exclusive_split(i))
        .collect();
    if report.is_empty() {
        report.extend(stuck.iter().next().copied());
    }
    report
        .into_iter()
        .map(|i| Diagnostic::NonTerminatingLoop {
            node: model.nodes[i].id.clone(),
        })
        .collect()
}
