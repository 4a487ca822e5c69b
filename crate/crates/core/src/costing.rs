//! Activity instance, process instance and average costs over an event log.
//!
//! All sums are exact. A driver's score is its inline `cost:value` when the
//! log carries one, otherwise the score the trace's cost variant assigns to
//! the abstract driver.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decimal::ExactDecimal;
use crate::model::{ActivityId, ActivityInstance, DriverRef, EventLog, ProcessInstance};
use crate::variant_config::CostVariantConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("the event log is empty")]
    EmptyLog,
    #[error("activity `{0}` does not occur in the log")]
    ActivityAbsent(String),
    #[error("trace `{trace}` has no cost:variant")]
    MissingVariant { trace: String },
    #[error("trace `{trace}` names cost variant `{variant}`, which the config does not define")]
    UnknownVariant { trace: String, variant: String },
    #[error("trace `{trace}`: driver `{driver}` of `{activity}` has no cost{}", variant_suffix(.variant))]
    UnresolvedDriver {
        trace: String,
        activity: String,
        driver: String,
        variant: Option<String>,
    },
}

fn variant_suffix(variant: &Option<String>) -> String {
    match variant {
        Some(v) => format!(" in variant `{v}`"),
        None => String::new(),
    }
}

/// In lenient mode every problem that strict mode rejects becomes one of
/// these, and the offending driver contributes nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostWarning(pub CostError);

impl fmt::Display for CostWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; skipped", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resolution {
    #[default]
    Strict,
    Lenient,
}

/// Where driver scores come from when an event carries no inline value.
#[derive(Debug, Clone, Copy)]
pub enum CostSource<'a> {
    Variants(&'a CostVariantConfig),
    InlineOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct CostFunction<'a> {
    pub source: CostSource<'a>,
    pub resolution: Resolution,
}

/// A concrete driver as it was priced: the identity used to group activity
/// instances by concretization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConcreteDriver {
    pub driver: String,
    /// `None` for inline values.
    pub variant: Option<String>,
    pub cost: ExactDecimal,
}

impl<'a> CostFunction<'a> {
    pub fn new(config: &'a CostVariantConfig) -> Self {
        CostFunction {
            source: CostSource::Variants(config),
            resolution: Resolution::Strict,
        }
    }

    pub fn inline_only() -> Self {
        CostFunction {
            source: CostSource::InlineOnly,
            resolution: Resolution::Strict,
        }
    }

    pub fn lenient(mut self) -> Self {
        self.resolution = Resolution::Lenient;
        self
    }

    fn fail(&self, err: CostError, warnings: &mut Vec<CostWarning>) -> Result<(), CostError> {
        match self.resolution {
            Resolution::Strict => Err(err),
            Resolution::Lenient => {
                warnings.push(CostWarning(err));
                Ok(())
            }
        }
    }

    /// The variant config entry of a trace, if it has a usable one.
    fn trace_variant(
        &self,
        trace: &ProcessInstance,
        warnings: &mut Vec<CostWarning>,
    ) -> Result<Option<&'a str>, CostError> {
        let CostSource::Variants(config) = self.source else {
            return Ok(None);
        };
        let Some(v) = trace.variant() else {
            self.fail(
                CostError::MissingVariant {
                    trace: trace.id().to_string(),
                },
                warnings,
            )?;
            return Ok(None);
        };
        match config.variant(v) {
            Some(found) => Ok(Some(found.id.as_str())),
            None => {
                self.fail(
                    CostError::UnknownVariant {
                        trace: trace.id().to_string(),
                        variant: v.to_string(),
                    },
                    warnings,
                )?;
                Ok(None)
            }
        }
    }

    fn price(&self, variant: Option<&'a str>, driver: &DriverRef) -> Option<ConcreteDriver> {
        if let Some(value) = &driver.value {
            return Some(ConcreteDriver {
                driver: driver.id.clone(),
                variant: None,
                cost: value.clone(),
            });
        }
        let (CostSource::Variants(config), Some(v)) = (self.source, variant) else {
            return None;
        };
        config.cost_function(v, &driver.id).ok().map(|c| ConcreteDriver {
            driver: driver.id.clone(),
            variant: Some(v.to_string()),
            cost: c.clone(),
        })
    }

    /// The concretization of one activity instance, sorted.
    fn concretize(
        &self,
        trace: &ProcessInstance,
        variant: Option<&'a str>,
        instance: &ActivityInstance,
        warnings: &mut Vec<CostWarning>,
    ) -> Result<Vec<ConcreteDriver>, CostError> {
        let mut out = Vec::with_capacity(instance.drivers.len());
        for d in &instance.drivers {
            match self.price(variant, d) {
                Some(c) => out.push(c),
                None => self.fail(
                    CostError::UnresolvedDriver {
                        trace: trace.id().to_string(),
                        activity: instance.activity.to_string(),
                        driver: d.id.clone(),
                        variant: trace.variant().map(str::to_string),
                    },
                    warnings,
                )?,
            }
        }
        out.sort();
        Ok(out)
    }

    /// Sum of the concrete driver costs of `instance`, which belongs to
    /// `trace`.
    pub fn activity_instance_cost(
        &self,
        trace: &ProcessInstance,
        instance: &ActivityInstance,
        warnings: &mut Vec<CostWarning>,
    ) -> Result<ExactDecimal, CostError> {
        let variant = self.trace_variant(trace, warnings)?;
        Ok(self
            .concretize(trace, variant, instance, warnings)?
            .iter()
            .map(|c| &c.cost)
            .sum())
    }

    pub fn process_instance_cost(
        &self,
        trace: &ProcessInstance,
        warnings: &mut Vec<CostWarning>,
    ) -> Result<ExactDecimal, CostError> {
        Ok(self.evaluate(trace, warnings)?.total)
    }

    fn evaluate(
        &self,
        trace: &ProcessInstance,
        warnings: &mut Vec<CostWarning>,
    ) -> Result<TraceCosts, CostError> {
        let variant = self.trace_variant(trace, warnings)?;
        let mut instances = Vec::with_capacity(trace.instances().len());
        let mut total = ExactDecimal::zero();
        for instance in trace.instances() {
            let concretization = self.concretize(trace, variant, instance, warnings)?;
            let cost: ExactDecimal = concretization.iter().map(|c| &c.cost).sum();
            total += &cost;
            instances.push((instance.activity.clone(), concretization, cost));
        }
        Ok(TraceCosts { instances, total })
    }
}

struct TraceCosts {
    instances: Vec<(ActivityId, Vec<ConcreteDriver>, ExactDecimal)>,
    total: ExactDecimal,
}

fn evaluate_log(
    log: &EventLog,
    costs: &CostFunction<'_>,
) -> Result<(Vec<TraceCosts>, Vec<CostWarning>), CostError> {
    if log.is_empty() {
        return Err(CostError::EmptyLog);
    }
    // Exact sums make the merge order irrelevant; collecting in trace order
    // keeps the warnings deterministic.
    let per_trace: Vec<Result<(TraceCosts, Vec<CostWarning>), CostError>> = log
        .traces()
        .par_iter()
        .map(|t| {
            let mut w = Vec::new();
            costs.evaluate(t, &mut w).map(|c| (c, w))
        })
        .collect();
    let mut traces = Vec::with_capacity(per_trace.len());
    let mut warnings = Vec::new();
    for r in per_trace {
        let (c, w) = r?;
        traces.push(c);
        warnings.extend(w);
    }
    Ok((traces, warnings))
}

/// Occurrences of each concretization of one activity and its instance cost.
#[derive(Debug, Default)]
struct Concretizations(BTreeMap<Vec<ConcreteDriver>, (u64, ExactDecimal)>);

impl Concretizations {
    fn record(&mut self, key: &[ConcreteDriver], cost: &ExactDecimal) {
        self.0
            .entry(key.to_vec())
            .or_insert_with(|| (0, cost.clone()))
            .0 += 1;
    }

    /// Σ specific_count(a, Q) · activity_instance_cost(a, Q) over Σ occurrences.
    fn average(&self) -> Option<(ExactDecimal, u64, ExactDecimal)> {
        let occurrences: u64 = self.0.values().map(|(n, _)| n).sum();
        let total: ExactDecimal = self.0.values().map(|(n, c)| c.mul_count(*n)).sum();
        Some((total.div_count(occurrences)?, occurrences, total))
    }
}

fn concretizations(traces: &[TraceCosts]) -> BTreeMap<&ActivityId, Concretizations> {
    let mut by_activity: BTreeMap<&ActivityId, Concretizations> = BTreeMap::new();
    for t in traces {
        for (activity, key, cost) in &t.instances {
            by_activity.entry(activity).or_default().record(key, cost);
        }
    }
    by_activity
}

pub fn average_activity_cost(
    activity: &ActivityId,
    log: &EventLog,
    costs: &CostFunction<'_>,
) -> Result<ExactDecimal, CostError> {
    let (traces, _) = evaluate_log(log, costs)?;
    concretizations(&traces)
        .get(activity)
        .and_then(Concretizations::average)
        .map(|(avg, _, _)| avg)
        .ok_or_else(|| CostError::ActivityAbsent(activity.to_string()))
}

pub fn average_process_instance_cost(
    log: &EventLog,
    costs: &CostFunction<'_>,
) -> Result<ExactDecimal, CostError> {
    let (traces, _) = evaluate_log(log, costs)?;
    let sum: ExactDecimal = traces.iter().map(|t| &t.total).sum();
    Ok(sum
        .div_count(traces.len() as u64)
        .expect("log is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActivityRow {
    pub name: String,
    pub average_cost: ExactDecimal,
    pub occurrences: u64,
    pub total_cost: ExactDecimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VariantRow {
    pub id: String,
    pub trace_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub scenario: String,
    /// Sorted by activity name.
    pub per_activity: Vec<ActivityRow>,
    pub average_process_instance_cost: ExactDecimal,
    pub trace_count: u64,
    pub variants: Vec<VariantRow>,
    pub warnings: Vec<String>,
}

impl CostReport {
    pub fn activity(&self, name: &str) -> Option<&ActivityRow> {
        self.per_activity.iter().find(|r| r.name == name)
    }
}

pub fn analyze(
    log: &EventLog,
    costs: &CostFunction<'_>,
    scenario: &str,
) -> Result<CostReport, CostError> {
    let (traces, warnings) = evaluate_log(log, costs)?;
    let per_activity = concretizations(&traces)
        .into_iter()
        .filter_map(|(a, c)| {
            c.average().map(|(average_cost, occurrences, total_cost)| ActivityRow {
                name: a.to_string(),
                average_cost,
                occurrences,
                total_cost,
            })
        })
        .collect();
    let sum: ExactDecimal = traces.iter().map(|t| &t.total).sum();

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in log.traces() {
        if let Some(v) = t.variant() {
            *counts.entry(v).or_default() += 1;
        }
    }
    // Config order first, then anything the config does not know.
    let mut variants = Vec::new();
    if let CostSource::Variants(config) = costs.source {
        for v in &config.variants {
            variants.push(VariantRow {
                id: v.id.clone(),
                trace_count: counts.remove(v.id.as_str()).unwrap_or(0),
            });
        }
    }
    variants.extend(counts.into_iter().map(|(id, n)| VariantRow {
        id: id.to_string(),
        trace_count: n,
    }));

    Ok(CostReport {
        scenario: scenario.to_string(),
        per_activity,
        average_process_instance_cost: sum
            .div_count(traces.len() as u64)
            .expect("log is non-empty"),
        trace_count: traces.len() as u64,
        variants,
        warnings: warnings.iter().map(ToString::to_string).collect(),
    })
}
