//! Seeded token-game simulation of a process model into an event log.
//!
//! Every trace draws from its own RNG stream, derived from the seed and the
//! trace index, so traces can be simulated in any order or in parallel and
//! the log is still bit-identical.

use chrono::{DateTime, Duration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bpmn::{self, Diagnostic, GatewayKind, GatewayRole, NodeKind, ProcessModel};
use crate::decimal::ExactDecimal;
use crate::model::{
    ActivityInstance, DomainError, DriverRef, DriverSet, EventLog, ProcessInstance, Timestamp,
};
use crate::variant_config::CostVariantConfig;

/// Environment variable capping the worker threads; 0 or unset means one
/// per core.
pub const THREADS_ENV: &str = "SOPA_THREADS";

pub const DEFAULT_BASE_TIMESTAMP: &str = "2024-01-01T00:00:00+00:00";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VariantMode {
    #[default]
    Sampled,
    /// Largest-remainder quotas, assigned to consecutive traces in config
    /// order.
    ExactQuota,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationSettings {
    pub instances: u64,
    pub seed: u64,
    pub variant_mode: VariantMode,
    /// Visits allowed per node within one trace.
    pub max_iterations: u64,
    pub base_timestamp: Timestamp,
    /// Worker threads; 0 picks one per core.
    pub threads: usize,
}

impl SimulationSettings {
    pub fn new(instances: u64, seed: u64) -> Self {
        SimulationSettings {
            instances,
            seed,
            variant_mode: VariantMode::Sampled,
            max_iterations: bpmn::DEFAULT_MAX_ITERATIONS,
            base_timestamp: DateTime::parse_from_rfc3339(DEFAULT_BASE_TIMESTAMP)
                .expect("constant timestamp"),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulationError {
    #[error("instances must be at least 1")]
    NoInstances,
    #[error("the cost variant config lists no variants with positive frequency")]
    NoVariants,
    #[error("model does not validate against the variant config:\n{}", join_lines(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("trace {trace}: node `{node}` visited more than {limit} times; the loop does not terminate")]
    MaxIterations {
        trace: u64,
        node: String,
        limit: u64,
    },
    #[error("trace {trace}: {source}")]
    Domain {
        trace: u64,
        #[source]
        source: DomainError,
    },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

fn join_lines(items: &[Diagnostic]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads [`THREADS_ENV`]; unparsable values count as unset.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// The random stream of one trace: a pure function of seed and index.
pub fn derive_instance_rng(seed: u64, trace_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trace_index);
    rng
}

/// Largest-remainder apportionment of `total` over `weights`, which must sum
/// to one. Ties go to the earlier weight.
pub fn largest_remainder(weights: &[ExactDecimal], total: u64) -> Vec<u64> {
    use num_integer::Integer;
    use num_traits::ToPrimitive;
    let mut counts = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let share = w.mul_count(total).into_rational();
        let (q, r) = share.numer().div_rem(share.denom());
        counts.push(q.to_u64().unwrap_or(0));
        remainders.push((num_rational::BigRational::new(r, share.denom().clone()), i));
    }
    let assigned: u64 = counts.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in remainders
        .into_iter()
        .take(total.saturating_sub(assigned) as usize)
    {
        counts[i] += 1;
    }
    counts
}

struct Walker<'a> {
    model: &'a ProcessModel,
    trace: u64,
    limit: u64,
    visits: Vec<u64>,
    rng: ChaCha8Rng,
    clock: Timestamp,
    out: Vec<ActivityInstance>,
}

impl Walker<'_> {
    fn tick(&mut self) -> Timestamp {
        let now = self.clock;
        self.clock += Duration::seconds(1);
        now
    }

    fn target(&self, flow: usize) -> usize {
        self.model.flows()[flow].target
    }

    fn choose(&mut self, node: usize) -> usize {
        let outs = self.model.outgoing(node);
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut last = outs[0];
        for &f in outs {
            let w = self.model.flow_weight(f).to_f64();
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = f;
            if u < acc {
                return f;
            }
        }
        last
    }

    /// Runs from `node` until an end event or, inside a parallel block,
    /// until `stop` is reached.
    fn walk(&mut self, mut node: usize, stop: Option<usize>) -> Result<(), SimulationError> {
        loop {
            if Some(node) == stop {
                return Ok(());
            }
            self.visits[node] += 1;
            if self.visits[node] > self.limit {
                return Err(SimulationError::MaxIterations {
                    trace: self.trace,
                    node: self.model.node(node).id.clone(),
                    limit: self.limit,
                });
            }
            let model = self.model;
            let flow = match &model.node(node).kind {
                NodeKind::End(_) => return Ok(()),
                NodeKind::Task { activity, drivers } => {
                    let start = self.tick();
                    let complete = self.tick();
                    self.out.push(ActivityInstance {
                        activity: activity.clone(),
                        drivers: DriverSet::from_refs(drivers.iter().map(DriverRef::new)).0,
                        start,
                        complete,
                    });
                    model.outgoing(node)[0]
                }
                NodeKind::Gateway {
                    kind: GatewayKind::Parallel,
                    role: GatewayRole::Split,
                } => {
                    let join = model
                        .matching_join(node)
                        .expect("parallel splits are matched at build time");
                    for &f in model.outgoing(node) {
                        self.walk(self.target(f), Some(join))?;
                    }
                    self.visits[join] += 1;
                    model.outgoing(join)[0]
                }
                NodeKind::Gateway {
                    kind: GatewayKind::Exclusive,
                    role: GatewayRole::Split,
                } => self.choose(node),
                _ => model.outgoing(node)[0],
            };
            node = self.target(flow);
        }
    }
}

fn simulate_trace(
    model: &ProcessModel,
    settings: &SimulationSettings,
    trace: u64,
    variant: &str,
    rng: ChaCha8Rng,
) -> Result<ProcessInstance, SimulationError> {
    let mut walker = Walker {
        model,
        trace,
        limit: settings.max_iterations,
        visits: vec![0; model.nodes().len()],
        rng,
        clock: settings.base_timestamp,
        out: Vec::new(),
    };
    walker.walk(model.start(), None)?;
    ProcessInstance::new(trace.to_string(), Some(variant.to_string()), walker.out)
        .map_err(|source| SimulationError::Domain { trace, source })
}

fn sample_variant<'c>(config: &'c CostVariantConfig, rng: &mut ChaCha8Rng) -> &'c str {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for v in &config.variants {
        let f = v.frequency.to_f64();
        if f <= 0.0 {
            continue;
        }
        acc += f;
        last = Some(v.id.as_str());
        if u < acc {
            return &v.id;
        }
    }
    last.expect("checked for a positive frequency")
}

/// Simulates `settings.instances` traces. Trace ids are the 0-based trace
/// indices.
pub fn simulate(
    model: &ProcessModel,
    config: &CostVariantConfig,
    settings: &SimulationSettings,
) -> Result<EventLog, SimulationError> {
    if settings.instances == 0 {
        return Err(SimulationError::NoInstances);
    }
    if !config.variants.iter().any(|v| !v.frequency.is_zero()) {
        return Err(SimulationError::NoVariants);
    }
    let diagnostics = bpmn::validate(model, config);
    if !diagnostics.is_empty() {
        return Err(SimulationError::Invalid(diagnostics));
    }

    let quotas: Vec<&str> = match settings.variant_mode {
        VariantMode::Sampled => Vec::new(),
        VariantMode::ExactQuota => {
            let weights: Vec<ExactDecimal> =
                config.variants.iter().map(|v| v.frequency.clone()).collect();
            largest_remainder(&weights, settings.instances)
                .into_iter()
                .zip(&config.variants)
                .flat_map(|(n, v)| std::iter::repeat_n(v.id.as_str(), n as usize))
                .collect()
        }
    };

    let run = |i: u64| {
        let mut rng = derive_instance_rng(settings.seed, i);
        // The variant draw comes first so that quota and sampled mode
        // route identically given the same variant.
        let sampled = sample_variant(config, &mut rng);
        let variant = quotas.get(i as usize).copied().unwrap_or(sampled);
        simulate_trace(model, settings, i, variant, rng)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| SimulationError::ThreadPool(e.to_string()))?;
    let results: Vec<Result<ProcessInstance, SimulationError>> =
        pool.install(|| (0..settings.instances).into_par_iter().map(run).collect());
    let traces = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EventLog::new(traces).expect("trace ids are distinct indices"))
}
