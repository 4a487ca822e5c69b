#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, Duration, FixedOffset};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sopa_core::bpmn::{
    parse_model, parse_model_with_annotations, EndOutcome, GatewayKind, GatewayRole, ModelBuilder,
    NodeKind, ProcessModel,
};
use sopa_core::model::{ActivityId, ActivityInstance, DriverRef, DriverSet, EventLog, ProcessInstance};
use sopa_core::variant_config::{parse_variant_config, CostVariantConfig};
use sopa_core::ExactDecimal;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn d(s: &str) -> ExactDecimal {
    s.parse().unwrap()
}

/// The hiring model as used for scenario `s` ("a", "b" or "c").
pub fn hiring_model(s: &str) -> ProcessModel {
    let bpmn = read("hiring/hiring.bpmn");
    if s == "c" {
        parse_model_with_annotations(&bpmn, Some(&read("hiring/scenario-c.annotations.xml")))
            .unwrap()
    } else {
        parse_model(&bpmn).unwrap()
    }
}

pub fn hiring_config(s: &str) -> CostVariantConfig {
    parse_variant_config(&read(&format!("hiring/scenario-{s}.variants.xml"))).unwrap()
}

// ---------------------------------------------------------------------------
// Random block-structured acyclic models.

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    builder: ModelBuilder,
    next: usize,
    budget: usize,
}

impl Gen<'_> {
    fn id(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn take(&mut self, n: usize) -> bool {
        if self.budget >= n {
            self.budget -= n;
            true
        } else {
            false
        }
    }

    fn probabilities(&mut self, n: usize) -> Vec<String> {
        // Tenths that sum to one; zero weights are allowed.
        let mut cuts: Vec<u32> = (0..n - 1).map(|_| self.rng.gen_range(0..=10)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        let mut out = Vec::with_capacity(n);
        for c in cuts.into_iter().chain([10]) {
            out.push(format!("{}/10", c - prev));
            prev = c;
        }
        out
    }

    /// Emits a fragment and returns its entry and exit node ids.
    fn fragment(&mut self, depth: usize) -> (String, String) {
        let choice = if depth > 3 { 0 } else { self.rng.gen_range(0..4) };
        match choice {
            1 if self.take(4) => {
                let (s, j) = (self.id("x"), self.id("xj"));
                let b = std::mem::take(&mut self.builder);
                self.builder = b.exclusive(&s).exclusive(&j);
                let n = self.rng.gen_range(2..=3);
                let ps = self.probabilities(n);
                for p in ps {
                    let (entry, exit) = self.fragment(depth + 1);
                    let b = std::mem::take(&mut self.builder);
                    self.builder = b.branch(&s, &entry, &p).flow(&exit, &j);
                }
                (s, j)
            }
            2 if self.take(4) => {
                let (s, j) = (self.id("p"), self.id("pj"));
                let b = std::mem::take(&mut self.builder);
                self.builder = b.parallel(&s).parallel(&j);
                for _ in 0..2 {
                    let (entry, exit) = self.fragment(depth + 1);
                    let b = std::mem::take(&mut self.builder);
                    self.builder = b.flow(&s, &entry).flow(&exit, &j);
                }
                (s, j)
            }
            3 if self.budget >= 3 => {
                let (e1, x1) = self.fragment(depth + 1);
                let (e2, x2) = self.fragment(depth + 1);
                let b = std::mem::take(&mut self.builder);
                self.builder = b.flow(&x1, &e2);
                (e1, x2)
            }
            _ => {
                self.budget = self.budget.saturating_sub(1);
                let id = self.id("t");
                let name = format!("Task {}", self.rng.gen_range(0..4));
                let drivers: &[&str] = match self.rng.gen_range(0..3) {
                    0 => &[],
                    1 => &["d1"],
                    _ => &["d1", "d2"],
                };
                let b = std::mem::take(&mut self.builder);
                self.builder = b.task(&id, &name, drivers);
                (id.clone(), id)
            }
        }
    }
}

/// A random acyclic block-structured model with at most `max_nodes` nodes.
pub fn random_acyclic_model(seed: u64, max_nodes: usize) -> ProcessModel {
    // The budget is soft, so oversized draws are simply redrawn.
    for attempt in 0.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(attempt));
        let mut g = Gen {
            rng: &mut rng,
            builder: ModelBuilder::new().start("s").end("e", EndOutcome::Completed),
            next: 0,
            budget: max_nodes - 2,
        };
        let (entry, exit) = g.fragment(0);
        let builder = g.builder.flow("s", &entry).flow(&exit, "e");
        let model = builder.build().expect("generated model is valid");
        if model.nodes().len() <= max_nodes {
            return model;
        }
    }
    unreachable!()
}

/// Every complete execution of an acyclic model with its probability and
/// the task nodes it runs, by exhaustive expansion.
pub fn enumerate_runs(model: &ProcessModel) -> Vec<(BigRational, Vec<usize>)> {
    runs_from(model, model.start(), None)
}

fn next_node(model: &ProcessModel, node: usize) -> usize {
    model.flows()[model.outgoing(node)[0]].target
}

fn runs_from(model: &ProcessModel, node: usize, stop: Option<usize>) -> Vec<(BigRational, Vec<usize>)> {
    if Some(node) == stop {
        return vec![(BigRational::one(), Vec::new())];
    }
    match &model.node(node).kind {
        NodeKind::End(_) => vec![(BigRational::one(), Vec::new())],
        NodeKind::Task { .. } => runs_from(model, next_node(model, node), stop)
            .into_iter()
            .map(|(p, mut tasks)| {
                tasks.insert(0, node);
                (p, tasks)
            })
            .collect(),
        NodeKind::Gateway {
            kind: GatewayKind::Exclusive,
            role: GatewayRole::Split,
        } => {
            let mut out = Vec::new();
            for &f in model.outgoing(node) {
                let p = model.flows()[f]
                    .probability
                    .clone()
                    .expect("split flows carry probabilities")
                    .into_rational();
                if p.is_zero() {
                    continue;
                }
                for (q, tasks) in runs_from(model, model.flows()[f].target, stop) {
                    out.push((&p * q, tasks));
                }
            }
            out
        }
        NodeKind::Gateway {
            kind: GatewayKind::Parallel,
            role: GatewayRole::Split,
        } => {
            let join = model.matching_join(node).unwrap();
            let mut combos = vec![(BigRational::one(), Vec::new())];
            for &f in model.outgoing(node) {
                let branch = runs_from(model, model.flows()[f].target, Some(join));
                let mut next = Vec::new();
                for (p, tasks) in &combos {
                    for (q, more) in &branch {
                        let mut all: Vec<usize> = tasks.clone();
                        all.extend(more);
                        next.push((p * q, all));
                    }
                }
                combos = next;
            }
            let tail = runs_from(model, next_node(model, join), stop);
            let mut out = Vec::new();
            for (p, tasks) in &combos {
                for (q, more) in &tail {
                    let mut all = tasks.clone();
                    all.extend(more);
                    out.push((p * q, all));
                }
            }
            out
        }
        _ => runs_from(model, next_node(model, node), stop),
    }
}

// ---------------------------------------------------------------------------
// Random event logs.

const NAMES: [&str; 6] = [
    "Sift and select candidates (Dep)",
    "Check <contents> & \"form\"",
    "Zusage prüfen",
    "a",
    "b",
    "Conduct interview with candidate",
];
const DRIVERS: [&str; 5] = ["Sifting", "In-house mail", "Interview", "Rück & Versand", "x"];

pub fn random_decimal(rng: &mut ChaCha8Rng) -> ExactDecimal {
    match rng.gen_range(0..3) {
        0 => ExactDecimal::from_scaled(rng.gen_range(0..100_000), -rng.gen_range(0..12)),
        1 => format!("{}/{}", rng.gen_range(0..1000), rng.gen_range(1..50))
            .parse()
            .unwrap(),
        _ => ExactDecimal::from_integer(rng.gen_range(0..5)),
    }
}

/// A random log. With `inline` every driver carries a value.
pub fn random_log(seed: u64, max_traces: usize, inline: bool) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets = [0, 3600, -5 * 3600, 2 * 3600 + 1800];
    let traces = (0..rng.gen_range(1..=max_traces))
        .map(|i| {
            let offset = FixedOffset::east_opt(*offsets.choose(&mut rng).unwrap()).unwrap();
            let base: DateTime<FixedOffset> = DateTime::from_timestamp(
                rng.gen_range(1_500_000_000..1_900_000_000),
                0,
            )
            .unwrap()
            .with_timezone(&offset);
            let mut clock = base;
            let instances = (0..rng.gen_range(1..8))
                .map(|_| {
                    let start = clock;
                    clock += Duration::seconds(rng.gen_range(0..5000));
                    let complete = clock;
                    let mut drivers = DriverSet::new();
                    for _ in 0..rng.gen_range(0..4) {
                        let id = *DRIVERS.choose(&mut rng).unwrap();
                        let r = if inline || rng.gen_bool(0.3) {
                            DriverRef::with_value(id, random_decimal(&mut rng))
                        } else {
                            DriverRef::new(id)
                        };
                        drivers.insert(r);
                    }
                    ActivityInstance {
                        activity: ActivityId::new(*NAMES.choose(&mut rng).unwrap()).unwrap(),
                        drivers,
                        start,
                        complete,
                    }
                })
                .collect();
            let variant = match rng.gen_range(0..3) {
                0 => None,
                1 => Some("standard procedure".to_string()),
                _ => Some("digital only".to_string()),
            };
            ProcessInstance::new(format!("case-{i}"), variant, instances).unwrap()
        })
        .collect();
    EventLog::new(traces).unwrap()
}
