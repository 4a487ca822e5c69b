mod common;

use common::{d, random_log};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sopa_core::costing::{analyze, average_activity_cost, CostFunction};
use sopa_core::model::{ActivityId, EventLog, ProcessInstance};
use sopa_core::variant_config::parse_variant_config;
use sopa_core::xes::{parse_xes, Strictness};
use sopa_core::ExactDecimal;

use std::collections::BTreeMap;

/// Naive recomputation straight from the events.
fn naive(log: &EventLog) -> (BTreeMap<String, (ExactDecimal, u64)>, ExactDecimal) {
    let mut per: BTreeMap<String, (ExactDecimal, u64)> = BTreeMap::new();
    let mut grand = ExactDecimal::zero();
    for t in log.traces() {
        for i in t.instances() {
            let mut c = ExactDecimal::zero();
            for dr in &i.drivers {
                c += dr.value.as_ref().unwrap();
            }
            let e = per.entry(i.activity.to_string()).or_default();
            e.0 += &c;
            e.1 += 1;
            grand += &c;
        }
    }
    (per, grand.div_count(log.len() as u64).unwrap())
}

#[test]
fn analyze_agrees_with_naive_recomputation() {
    for seed in 0..60 {
        let log = random_log(seed, 10, true);
        let report = analyze(&log, &CostFunction::inline_only(), "r").unwrap();
        let (per, avg) = naive(&log);
        assert_eq!(report.average_process_instance_cost, avg, "seed {seed}");
        assert_eq!(report.per_activity.len(), per.len());
        for row in &report.per_activity {
            let (total, n) = &per[&row.name];
            assert_eq!(row.occurrences, *n);
            assert_eq!(row.average_cost, total.div_count(*n).unwrap());
            assert_eq!(
                average_activity_cost(&ActivityId::new(row.name.clone()).unwrap(), &log, &CostFunction::inline_only())
                    .unwrap(),
                row.average_cost
            );
        }
    }
}

#[test]
fn reports_are_permutation_invariant() {
    for seed in 0..30 {
        let log = random_log(200 + seed, 20, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traces: Vec<ProcessInstance> = log.traces().to_vec();
        traces.shuffle(&mut rng);
        let shuffled = EventLog::new(traces).unwrap();
        let f = CostFunction::inline_only();
        assert_eq!(analyze(&log, &f, "x").unwrap(), analyze(&shuffled, &f, "x").unwrap());
    }
}

#[test]
fn average_lies_between_extreme_instances_and_is_additive() {
    for seed in 0..30 {
        let log = random_log(400 + seed, 15, true);
        let f = CostFunction::inline_only();
        let mut w = Vec::new();
        let costs: Vec<ExactDecimal> = log
            .traces()
            .iter()
            .map(|t| {
                let total = f.process_instance_cost(t, &mut w).unwrap();
                let parts: ExactDecimal = t
                    .instances()
                    .iter()
                    .map(|i| f.activity_instance_cost(t, i, &mut w).unwrap())
                    .sum();
                assert_eq!(total, parts);
                total
            })
            .collect();
        let avg = analyze(&log, &f, "x").unwrap().average_process_instance_cost;
        assert!(costs.iter().min().unwrap() <= &avg && &avg <= costs.iter().max().unwrap());
    }
}

#[test]
fn duplicate_traces_each_count() {
    let one = random_log(7, 1, true);
    let t = &one.traces()[0];
    let copy = ProcessInstance::new("copy", t.variant().map(String::from), t.instances().to_vec()).unwrap();
    let twice = EventLog::new(vec![t.clone(), copy]).unwrap();
    let f = CostFunction::inline_only();
    let a = analyze(&one, &f, "x").unwrap();
    let b = analyze(&twice, &f, "x").unwrap();
    assert_eq!(a.average_process_instance_cost, b.average_process_instance_cost);
    assert_eq!(b.trace_count, 2);
    assert_eq!(
        b.per_activity.iter().map(|r| r.occurrences).sum::<u64>(),
        2 * a.per_activity.iter().map(|r| r.occurrences).sum::<u64>()
    );
}

const LOG: &[u8] = br#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1849-2016" xmlns="http://www.xes-standard.org/">
	<trace>
		<string key="concept:name" value="1"/>
		<string key="cost:variant" value="standard procedure"/>
		<event>
			<string key="cost:driver" value="In-house mail"/>
			<string key="concept:name" value="Check contents of hiring req. (SC)"/>
			<date key="time:timestamp" value="2024-01-01T00:00:00+00:00"/>
		</event>
		<event>
			<string key="cost:driver" value="Carrier pigeon"/>
			<string key="concept:name" value="Check contents of hiring req. (DO)"/>
			<date key="time:timestamp" value="2024-01-01T00:00:01+00:00"/>
		</event>
	</trace>
</log>
"#;

#[test]
fn one_unknown_driver_in_lenient_mode_is_one_warning() {
    let log = parse_xes(LOG, Strictness::Strict).unwrap().log;
    let config = parse_variant_config(&common::read("hiring/scenario-a.variants.xml")).unwrap();
    assert!(analyze(&log, &CostFunction::new(&config), "x").is_err());
    let report = analyze(&log, &CostFunction::new(&config).lenient(), "x").unwrap();
    assert_eq!(report.warnings.len(), 1, "{:?}", report.warnings);
    assert!(report.warnings[0].contains("Carrier pigeon"));
    assert_eq!(report.average_process_instance_cost, d("3.91e-5"));
}
