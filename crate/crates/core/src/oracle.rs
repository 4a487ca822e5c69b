//! Expected costs computed from the model alone, without simulation.
//!
//! Let x_n be the expected number of times node n is entered per process
//! instance. The start node is entered once; every other node receives the
//! weighted flow of its incoming sequence flows, where a flow leaving an
//! exclusive split carries its branch probability. A parallel join fires
//! once per synchronized token set, so it takes the mean of its inputs,
//! which in a block-structured model are all equal. Loops make the system
//! cyclic; it is solved exactly by Gaussian elimination.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::bpmn::{GatewayKind, GatewayRole, NodeKind, ProcessModel};
use crate::decimal::ExactDecimal;
use crate::model::ActivityId;
use crate::variant_config::{ConfigError, CostVariantConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("flow equations are singular: some loop can never be left")]
    Singular,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Solves `a · x = b` in place. Returns `None` when `a` is singular.
fn solve(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for v in &mut a[col][col..] {
            *v = &*v * &inv;
        }
        let pivot_row = a[col].clone();
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for (v, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= &factor * p;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    Some(b)
}

/// Expected number of entries into every node, indexed like
/// [`ProcessModel::nodes`].
pub fn expected_node_visits(model: &ProcessModel) -> Result<Vec<ExactDecimal>, OracleError> {
    let n = model.nodes().len();
    let mut a = vec![vec![BigRational::zero(); n]; n];
    let mut b = vec![BigRational::zero(); n];
    for (i, node) in model.nodes().iter().enumerate() {
        a[i][i] = BigRational::one();
        if i == model.start() {
            b[i] = BigRational::one();
            continue;
        }
        let incoming = model.incoming(i);
        let scale = match node.kind {
            NodeKind::Gateway {
                kind: GatewayKind::Parallel,
                role: GatewayRole::Join,
            } => BigRational::from_integer(incoming.len().into()).recip(),
            _ => BigRational::one(),
        };
        for &f in incoming {
            let src = model.flows()[f].source;
            let w = model.flow_weight(f).into_rational() * &scale;
            a[i][src] -= w;
        }
    }
    let x = solve(a, b).ok_or(OracleError::Singular)?;
    x.into_iter()
        .map(|v| ExactDecimal::from_rational(v).map_err(|_| OracleError::Singular))
        .collect()
}

/// Expected executions per process instance of every activity, summed over
/// tasks that share a label.
pub fn expected_activity_executions(
    model: &ProcessModel,
) -> Result<BTreeMap<ActivityId, ExactDecimal>, OracleError> {
    let visits = expected_node_visits(model)?;
    let mut out: BTreeMap<ActivityId, ExactDecimal> = BTreeMap::new();
    for (idx, activity, _) in model.tasks() {
        *out.entry(activity.clone()).or_default() += &visits[idx];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectedActivity {
    pub name: String,
    pub expected_executions: ExactDecimal,
    /// Expected cost per execution, weighted over variants; absent for
    /// activities that are never executed.
    pub average_cost: Option<ExactDecimal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VariantShare {
    pub id: String,
    pub frequency: ExactDecimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Expectation {
    pub scenario: String,
    pub per_activity: Vec<ExpectedActivity>,
    pub average_process_instance_cost: ExactDecimal,
    pub variants: Vec<VariantShare>,
}

/// Σ_v frequency(v) · Σ_task E[executions] · Σ_driver cost_v(driver).
pub fn expected_process_cost(
    model: &ProcessModel,
    config: &CostVariantConfig,
) -> Result<ExactDecimal, OracleError> {
    Ok(expectation(model, config, "")?.average_process_instance_cost)
}

pub fn expectation(
    model: &ProcessModel,
    config: &CostVariantConfig,
    scenario: &str,
) -> Result<Expectation, OracleError> {
    let visits = expected_node_visits(model)?;
    let mut executions: BTreeMap<&ActivityId, ExactDecimal> = BTreeMap::new();
    let mut costs: BTreeMap<&ActivityId, ExactDecimal> = BTreeMap::new();
    for (idx, activity, drivers) in model.tasks() {
        *executions.entry(activity).or_default() += &visits[idx];
        let mut mixed = ExactDecimal::zero();
        for v in &config.variants {
            let mut per_run = ExactDecimal::zero();
            for d in drivers {
                per_run += config.cost_function(&v.id, d)?;
            }
            mixed += &(&v.frequency * &per_run);
        }
        *costs.entry(activity).or_default() += &(&visits[idx] * &mixed);
    }
    let total: ExactDecimal = costs.values().sum();
    let per_activity = executions
        .into_iter()
        .map(|(a, n)| {
            let average_cost = costs[a].ratio(&n).map(|r| {
                ExactDecimal::from_rational(r).expect("ratio of non-negative values")
            });
            ExpectedActivity {
                name: a.to_string(),
                expected_executions: n,
                average_cost,
            }
        })
        .collect();
    Ok(Expectation {
        scenario: scenario.to_string(),
        per_activity,
        average_process_instance_cost: total,
        variants: config
            .variants
            .iter()
            .map(|v| VariantShare {
                id: v.id.clone(),
                frequency: v.frequency.clone(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpmn::{EndOutcome, ModelBuilder};
    use crate::variant_config::{CostVariant, DriverCost};

    fn d(s: &str) -> ExactDecimal {
        s.parse().unwrap()
    }

    fn executions(model: &ProcessModel, name: &str) -> ExactDecimal {
        expected_activity_executions(model).unwrap()[&ActivityId::new(name).unwrap()].clone()
    }

    #[test]
    fn chain_runs_once() {
        let m = ModelBuilder::new()
            .start("s")
            .task("a", "A", &[])
            .end("e", EndOutcome::Completed)
            .flow("s", "a")
            .flow("a", "e")
            .build()
            .unwrap();
        assert_eq!(executions(&m, "A"), ExactDecimal::one());
    }

    #[test]
    fn exclusive_split_divides_mass() {
        let m = ModelBuilder::new()
            .start("s")
            .exclusive("x")
            .task("b", "B", &[])
            .task("c", "C", &[])
            .exclusive("j")
            .end("e", EndOutcome::Completed)
            .flow("s", "x")
            .branch("x", "b", "0.5")
            .branch("x", "c", "0.5")
            .flow("b", "j")
            .flow("c", "j")
            .flow("j", "e")
            .build()
            .unwrap();
        assert_eq!(executions(&m, "B"), d("0.5"));
        assert_eq!(executions(&m, "C"), d("0.5"));
    }

    fn rework_loop(p_back: &str, p_exit: &str) -> ProcessModel {
        ModelBuilder::new()
            .start("s")
            .exclusive("j")
            .task("a", "A", &["d"])
            .exclusive("x")
            .end("e", EndOutcome::Completed)
            .flow("s", "j")
            .flow("j", "a")
            .flow("a", "x")
            .branch("x", "j", p_back)
            .branch("x", "e", p_exit)
            .build()
            .unwrap()
    }

    #[test]
    fn loop_is_a_geometric_series() {
        // 1 / (1 - 0.05) = 20/19
        assert_eq!(executions(&rework_loop("0.05", "0.95"), "A"), d("20/19"));
    }

    #[test]
    fn loop_without_exit_is_singular() {
        assert_eq!(
            expected_node_visits(&rework_loop("1", "0")),
            Err(OracleError::Singular)
        );
    }

    #[test]
    fn parallel_join_fires_once() {
        let m = ModelBuilder::new()
            .start("s")
            .parallel("p")
            .task("a", "A", &[])
            .task("b", "B", &[])
            .parallel("q")
            .task("c", "C", &[])
            .end("e", EndOutcome::Completed)
            .flow("s", "p")
            .flow("p", "a")
            .flow("p", "b")
            .flow("a", "q")
            .flow("b", "q")
            .flow("q", "c")
            .flow("c", "e")
            .build()
            .unwrap();
        for name in ["A", "B", "C"] {
            assert_eq!(executions(&m, name), ExactDecimal::one());
        }
    }

    fn config(costs: &[(&str, &str)]) -> CostVariantConfig {
        CostVariantConfig {
            count: 10,
            variants: costs
                .iter()
                .map(|(f, c)| CostVariant {
                    id: format!("v{c}"),
                    frequency: d(f),
                    drivers: vec![DriverCost {
                        driver: "d".into(),
                        cost: d(c),
                    }],
                })
                .collect(),
        }
    }

    #[test]
    fn process_cost_is_a_frequency_mixture() {
        let single = ModelBuilder::new()
            .start("s")
            .task("a", "A", &["d"])
            .end("e", EndOutcome::Completed)
            .flow("s", "a")
            .flow("a", "e")
            .build()
            .unwrap();
        assert_eq!(
            expected_process_cost(&single, &config(&[("1", "2.89e-5")])).unwrap(),
            d("2.89e-5")
        );
        assert_eq!(
            expected_process_cost(&single, &config(&[("0.5", "3"), ("0.5", "5")])).unwrap(),
            d("4")
        );
        let looped = rework_loop("0.5", "0.5");
        let e = expectation(&looped, &config(&[("1", "1e-5")]), "x").unwrap();
        assert_eq!(e.average_process_instance_cost, d("2e-5"));
        assert_eq!(e.per_activity[0].average_cost, Some(d("1e-5")));
    }

    #[test]
    fn missing_driver_cost_is_reported() {
        let m = rework_loop("0.5", "0.5");
        let cfg = CostVariantConfig {
            count: 1,
            variants: vec![CostVariant {
                id: "v".into(),
                frequency: ExactDecimal::one(),
                drivers: Vec::new(),
            }],
        };
        assert!(matches!(
            expected_process_cost(&m, &cfg),
            Err(OracleError::Config(ConfigError::UnknownDriver { .. }))
        ));
    }
}
