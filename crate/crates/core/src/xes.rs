//! XES event logs carrying cost variant and cost driver attributes.
//!
//! Traces carry `cost:variant`; each activity instance is written as a
//! `start` and a `complete` event, and its drivers appear as repeated
//! `cost:driver` strings on the complete event. A driver may nest a
//! `cost:value` float with an inline score, which takes precedence over the
//! cost variant config at analysis time.

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};

use chrono::{DateTime, SecondsFormat};

use crate::decimal::parse_exact_decimal;
use crate::model::{
    ActivityId, ActivityInstance, DomainError, DriverRef, DriverSet, EventLog, ProcessInstance,
    Timestamp,
};
use crate::xml::{self, Element, XmlError};

pub const KEY_NAME: &str = "concept:name";
pub const KEY_TRANSITION: &str = "lifecycle:transition";
pub const KEY_TIMESTAMP: &str = "time:timestamp";
pub const KEY_VARIANT: &str = "cost:variant";
pub const KEY_DRIVER: &str = "cost:driver";
pub const KEY_VALUE: &str = "cost:value";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum XesError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: complete event of `{activity}` in trace `{trace}` has no matching start event")]
    UnmatchedComplete {
        line: usize,
        trace: String,
        activity: String,
    },
    #[error("line {line}: malformed timestamp `{value}`")]
    Timestamp { line: usize, value: String },
    #[error("line {line}: trace `{trace}` has no cost:variant attribute")]
    MissingVariant { line: usize, trace: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Whether traces must name their cost variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XesWarning {
    DuplicateDriver {
        trace: String,
        activity: String,
        driver: String,
    },
    UnmatchedStart {
        trace: String,
        activity: String,
    },
    IgnoredTransition {
        trace: String,
        activity: String,
        transition: String,
    },
    AmbiguousValue {
        trace: String,
        activity: String,
    },
}

impl fmt::Display for XesWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XesWarning::DuplicateDriver {
                trace,
                activity,
                driver,
            } => write!(
                f,
                "trace `{trace}`: `{activity}` lists driver `{driver}` more than once; kept one"
            ),
            XesWarning::UnmatchedStart { trace, activity } => write!(
                f,
                "trace `{trace}`: start event of `{activity}` never completes; dropped"
            ),
            XesWarning::IgnoredTransition {
                trace,
                activity,
                transition,
            } => write!(
                f,
                "trace `{trace}`: ignored `{transition}` event of `{activity}`"
            ),
            XesWarning::AmbiguousValue { trace, activity } => write!(
                f,
                "trace `{trace}`: event-level cost:value on `{activity}` with several drivers; ignored"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub log: EventLog,
    pub warnings: Vec<XesWarning>,
}

const HEADER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1849-2016" xes.features="nested-attributes" xmlns="http://www.xes-standard.org/">
	<extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>
	<extension name="Lifecycle" prefix="lifecycle" uri="http://www.xes-standard.org/lifecycle.xesext"/>
	<extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>
"#;

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, false)
}

fn string_attr(out: &mut String, indent: &str, key: &str, value: &str) {
    let _ = writeln!(
        out,
        "{indent}<string key=\"{key}\" value=\"{}\"/>",
        xml::escape_attr(value)
    );
}

fn write_event(out: &mut String, instance: &ActivityInstance, complete: bool) {
    out.push_str("\t\t<event>\n");
    if complete {
        for d in &instance.drivers {
            match &d.value {
                None => string_attr(out, "\t\t\t", KEY_DRIVER, &d.id),
                Some(v) => {
                    let _ = writeln!(
                        out,
                        "\t\t\t<string key=\"{KEY_DRIVER}\" value=\"{}\">\n\t\t\t\t<float key=\"{KEY_VALUE}\" value=\"{v}\"/>\n\t\t\t</string>",
                        xml::escape_attr(&d.id)
                    );
                }
            }
        }
    }
    string_attr(out, "\t\t\t", KEY_NAME, instance.activity.as_str());
    string_attr(
        out,
        "\t\t\t",
        KEY_TRANSITION,
        if complete { "complete" } else { "start" },
    );
    let ts = if complete {
        &instance.complete
    } else {
        &instance.start
    };
    let _ = writeln!(
        out,
        "\t\t\t<date key=\"{KEY_TIMESTAMP}\" value=\"{}\"/>",
        format_timestamp(ts)
    );
    out.push_str("\t\t</event>\n");
}

/// Serializes one trace, one tab deep.
pub fn write_trace(out: &mut String, trace: &ProcessInstance) {
    out.push_str("\t<trace>\n");
    string_attr(out, "\t\t", KEY_NAME, trace.id());
    if let Some(v) = trace.variant() {
        string_attr(out, "\t\t", KEY_VARIANT, v);
    }
    for instance in trace.instances() {
        write_event(out, instance, false);
        write_event(out, instance, true);
    }
    out.push_str("\t</trace>\n");
}

pub fn write_xes(log: &EventLog) -> Vec<u8> {
    let mut out = String::from(HEADER);
    for trace in log.traces() {
        write_trace(&mut out, trace);
    }
    out.push_str("</log>\n");
    out.into_bytes()
}

fn invalid(el: &Element, message: impl Into<String>) -> XesError {
    XesError::Invalid {
        line: el.line,
        message: message.into(),
    }
}

struct RawEvent<'a> {
    el: &'a Element,
    name: Option<&'a str>,
    transition: Option<&'a str>,
    timestamp: Option<&'a str>,
    drivers: Vec<&'a Element>,
    value: Option<&'a str>,
}

fn raw_event(el: &Element) -> RawEvent<'_> {
    let mut ev = RawEvent {
        el,
        name: None,
        transition: None,
        timestamp: None,
        drivers: Vec::new(),
        value: None,
    };
    for a in &el.children {
        match a.attr("key") {
            Some(KEY_NAME) => ev.name = a.attr("value"),
            Some(KEY_TRANSITION) => ev.transition = a.attr("value"),
            Some(KEY_TIMESTAMP) => ev.timestamp = a.attr("value"),
            Some(KEY_DRIVER) => ev.drivers.push(a),
            Some(KEY_VALUE) => ev.value = a.attr("value"),
            _ => {}
        }
    }
    ev
}

fn parse_timestamp(el: &Element, value: &str) -> Result<Timestamp, XesError> {
    DateTime::parse_from_rfc3339(value).map_err(|_| XesError::Timestamp {
        line: el.line,
        value: value.to_string(),
    })
}

fn parse_drivers(
    ev: &RawEvent<'_>,
    trace: &str,
    activity: &str,
    warnings: &mut Vec<XesWarning>,
) -> Result<Vec<DriverRef>, XesError> {
    let mut refs = Vec::with_capacity(ev.drivers.len());
    for d in &ev.drivers {
        let id = d.required_attr("value")?;
        let nested = d
            .children
            .iter()
            .find(|c| c.attr("key") == Some(KEY_VALUE))
            .and_then(|c| c.attr("value"));
        let value = match nested {
            Some(text) => Some(
                parse_exact_decimal(text).map_err(|e| invalid(d, format!("cost:value: {e}")))?,
            ),
            None => None,
        };
        refs.push(DriverRef {
            id: id.to_string(),
            value,
        });
    }
    if let Some(text) = ev.value {
        let value =
            parse_exact_decimal(text).map_err(|e| invalid(ev.el, format!("cost:value: {e}")))?;
        match refs.as_mut_slice() {
            [] => refs.push(DriverRef::with_value(activity, value)),
            [only] => only.value = Some(value),
            _ => warnings.push(XesWarning::AmbiguousValue {
                trace: trace.to_string(),
                activity: activity.to_string(),
            }),
        }
    }
    Ok(refs)
}

/// A start event awaiting its complete: position, time and drivers.
type OpenStart = (usize, Timestamp, Vec<DriverRef>);

fn parse_trace(
    el: &Element,
    strictness: Strictness,
    warnings: &mut Vec<XesWarning>,
) -> Result<ProcessInstance, XesError> {
    let mut id = None;
    let mut variant = None;
    for a in &el.children {
        match a.attr("key") {
            Some(KEY_NAME) if a.name != "event" => id = a.attr("value"),
            Some(KEY_VARIANT) if a.name != "event" => variant = a.attr("value"),
            _ => {}
        }
    }
    let id = id.ok_or_else(|| invalid(el, "trace has no concept:name"))?;
    if strictness == Strictness::Strict && variant.is_none() {
        return Err(XesError::MissingVariant {
            line: el.line,
            trace: id.to_string(),
        });
    }

    // Instances are ordered by the position of their first event.
    let mut pending: HashMap<&str, VecDeque<OpenStart>> = HashMap::new();
    let mut done: Vec<(usize, ActivityInstance)> = Vec::new();
    for (pos, ev_el) in el.children_named("event").enumerate() {
        let ev = raw_event(ev_el);
        let name = ev
            .name
            .ok_or_else(|| invalid(ev_el, "event has no concept:name"))?;
        let ts_text = ev
            .timestamp
            .ok_or_else(|| invalid(ev_el, "event has no time:timestamp"))?;
        let ts = parse_timestamp(ev_el, ts_text)?;
        let drivers = parse_drivers(&ev, id, name, warnings)?;
        let activity = ActivityId::new(name)?;
        let mut finish = |start_pos: usize, start: Timestamp, mut refs: Vec<DriverRef>| {
            refs.extend(drivers.iter().cloned());
            let (set, dropped) = DriverSet::from_refs(refs);
            warnings.extend(dropped.into_iter().map(|driver| XesWarning::DuplicateDriver {
                trace: id.to_string(),
                activity: name.to_string(),
                driver,
            }));
            done.push((
                start_pos,
                ActivityInstance {
                    activity: activity.clone(),
                    drivers: set,
                    start,
                    complete: ts,
                },
            ));
        };
        match ev.transition {
            None => finish(pos, ts, Vec::new()),
            Some(t) if t.eq_ignore_ascii_case("start") => {
                pending
                    .entry(name)
                    .or_default()
                    .push_back((pos, ts, drivers.clone()));
            }
            Some(t) if t.eq_ignore_ascii_case("complete") => {
                let (start_pos, start, refs) = pending
                    .get_mut(name)
                    .and_then(VecDeque::pop_front)
                    .ok_or_else(|| XesError::UnmatchedComplete {
                        line: ev_el.line,
                        trace: id.to_string(),
                        activity: name.to_string(),
                    })?;
                finish(start_pos, start, refs);
            }
            Some(other) => warnings.push(XesWarning::IgnoredTransition {
                trace: id.to_string(),
                activity: name.to_string(),
                transition: other.to_string(),
            }),
        }
    }
    let mut dangling: Vec<(usize, &str)> = pending
        .iter()
        .flat_map(|(name, q)| q.iter().map(move |(pos, _, _)| (*pos, *name)))
        .collect();
    dangling.sort_unstable();
    warnings.extend(dangling.into_iter().map(|(_, name)| XesWarning::UnmatchedStart {
        trace: id.to_string(),
        activity: name.to_string(),
    }));
    done.sort_by_key(|(pos, _)| *pos);
    Ok(ProcessInstance::new(
        id,
        variant.map(str::to_string),
        done.into_iter().map(|(_, i)| i).collect(),
    )?)
}

pub fn parse_xes(bytes: &[u8], strictness: Strictness) -> Result<ParsedLog, XesError> {
    let root = xml::parse_document(bytes)?;
    if root.name != "log" {
        return Err(invalid(
            &root,
            format!("expected <log>, found <{}>", root.name),
        ));
    }
    let mut warnings = Vec::new();
    let traces = root
        .children_named("trace")
        .map(|t| parse_trace(t, strictness, &mut warnings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedLog {
        log: EventLog::new(traces)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = include_str!("../fixtures/listing2.xes");

    fn ts(s: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn inst(name: &str, drivers: &[&str], start: &str, complete: &str) -> ActivityInstance {
        ActivityInstance {
            activity: ActivityId::new(name).unwrap(),
            drivers: DriverSet::from_refs(drivers.iter().map(|d| DriverRef::new(*d))).0,
            start: ts(start),
            complete: ts(complete),
        }
    }

    fn listing_trace() -> ProcessInstance {
        let t0 = "2026-07-17T15:35:28+02:00";
        ProcessInstance::new(
            "410",
            Some("standard procedure".into()),
            vec![
                inst("Hiring required", &[], t0, t0),
                inst(
                    "Submit request for job advertisement (Department)",
                    &["Request for job advertisement"],
                    t0,
                    "2026-07-17T16:12:16+02:00",
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_listing_excerpt() {
        let parsed = parse_xes(LISTING.as_bytes(), Strictness::Strict).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.log.len(), 1);
        let t = &parsed.log.traces()[0];
        assert_eq!(t.id(), "410");
        assert_eq!(t.variant(), Some("standard procedure"));
        assert_eq!(t.instances()[0].activity.as_str(), "Hiring required");
        assert!(t.instances()[0].drivers.is_empty());
        assert_eq!(t, &listing_trace());
    }

    #[test]
    fn writes_listing_structure_verbatim() {
        let log = EventLog::new(vec![listing_trace()]).unwrap();
        let text = String::from_utf8(write_xes(&log)).unwrap();
        // The excerpt elides its tail with "..." and indents loosely, so the
        // comparison is line by line after trimming.
        let expected: Vec<&str> = LISTING
            .lines()
            .map(str::trim)
            .skip_while(|l| *l != "<trace>")
            .filter(|l| *l != "...")
            .take_while(|l| *l != "</log>")
            .collect();
        let ours: Vec<&str> = text
            .lines()
            .map(str::trim)
            .skip_while(|l| *l != "<trace>")
            .take_while(|l| *l != "</log>")
            .collect();
        assert_eq!(ours, expected);
    }

    #[test]
    fn empty_driver_set_writes_no_driver_element() {
        let t = "2024-01-01T00:00:00+00:00";
        let log = EventLog::new(vec![ProcessInstance::new(
            "1",
            Some("v".into()),
            vec![inst("A", &[], t, t)],
        )
        .unwrap()])
        .unwrap();
        let text = String::from_utf8(write_xes(&log)).unwrap();
        assert!(!text.contains("cost:driver"));
    }

    #[test]
    fn multiple_drivers_are_sibling_strings_in_order() {
        let t = "2024-01-01T00:00:00+00:00";
        let log = EventLog::new(vec![ProcessInstance::new(
            "1",
            Some("v".into()),
            vec![inst("A", &["Sifting", "Interview"], t, t)],
        )
        .unwrap()])
        .unwrap();
        let bytes = write_xes(&log);
        let text = String::from_utf8(bytes.clone()).unwrap();
        let s = text.find("value=\"Sifting\"").unwrap();
        let i = text.find("value=\"Interview\"").unwrap();
        assert!(s < i);
        let back = parse_xes(&bytes, Strictness::Strict).unwrap().log;
        assert_eq!(back, log);
    }

    #[test]
    fn duplicate_driver_collapses_with_warning() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/><string key="cost:variant" value="v"/>
<event><string key="concept:name" value="A"/><string key="cost:driver" value="d"/><string key="cost:driver" value="d"/>
<date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event></trace></log>"#;
        let parsed = parse_xes(doc, Strictness::Strict).unwrap();
        assert_eq!(parsed.log.traces()[0].instances()[0].drivers.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(matches!(
            parsed.warnings[0],
            XesWarning::DuplicateDriver { .. }
        ));
    }

    #[test]
    fn unmatched_complete_is_an_error() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/><string key="cost:variant" value="v"/>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="complete"/>
<date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event></trace></log>"#;
        match parse_xes(doc, Strictness::Strict) {
            Err(XesError::UnmatchedComplete { line, activity, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(activity, "A");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_timestamp_is_an_error() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/><string key="cost:variant" value="v"/>
<event><string key="concept:name" value="A"/><date key="time:timestamp" value="yesterday"/></event></trace></log>"#;
        assert!(matches!(
            parse_xes(doc, Strictness::Strict),
            Err(XesError::Timestamp { .. })
        ));
    }

    #[test]
    fn missing_variant_depends_on_strictness() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/>
<event><string key="concept:name" value="A"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event></trace></log>"#;
        assert!(matches!(
            parse_xes(doc, Strictness::Strict),
            Err(XesError::MissingVariant { .. })
        ));
        let lenient = parse_xes(doc, Strictness::Lenient).unwrap();
        assert_eq!(lenient.log.traces()[0].variant(), None);
    }

    #[test]
    fn fifo_matching_of_interleaved_events() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/><string key="cost:variant" value="v"/>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="start"/><date key="time:timestamp" value="2024-01-01T00:00:01Z"/></event>
<event><string key="concept:name" value="B"/><string key="lifecycle:transition" value="start"/><date key="time:timestamp" value="2024-01-01T00:00:02Z"/></event>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="start"/><date key="time:timestamp" value="2024-01-01T00:00:03Z"/></event>
<event><string key="concept:name" value="B"/><string key="lifecycle:transition" value="complete"/><string key="cost:driver" value="b"/><date key="time:timestamp" value="2024-01-01T00:00:04Z"/></event>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="complete"/><string key="cost:driver" value="first"/><date key="time:timestamp" value="2024-01-01T00:00:05Z"/></event>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="complete"/><string key="cost:driver" value="second"/><date key="time:timestamp" value="2024-01-01T00:00:06Z"/></event>
</trace></log>"#;
        let log = parse_xes(doc, Strictness::Strict).unwrap().log;
        let t = &log.traces()[0];
        let summary: Vec<(String, String, u32)> = t
            .instances()
            .iter()
            .map(|i| {
                (
                    i.activity.to_string(),
                    i.drivers.iter().next().unwrap().id.clone(),
                    chrono::Timelike::second(&i.complete),
                )
            })
            .collect();
        assert_eq!(
            summary,
            vec![
                ("A".into(), "first".into(), 5),
                ("B".into(), "b".into(), 4),
                ("A".into(), "second".into(), 6),
            ]
        );
    }

    #[test]
    fn inline_values_nested_and_event_level() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/>
<event><string key="concept:name" value="A"/><string key="cost:driver" value="d"><float key="cost:value" value="3.5e-5"/></string><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
<event><string key="concept:name" value="B"/><string key="cost:driver" value="e"/><float key="cost:value" value="0.00001"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
<event><string key="concept:name" value="C"/><float key="cost:value" value="2e-6"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
</trace></log>"#;
        let parsed = parse_xes(doc, Strictness::Lenient).unwrap();
        let i = parsed.log.traces()[0].instances();
        let v = |k: usize| i[k].drivers.iter().next().unwrap().clone();
        assert_eq!(v(0), DriverRef::with_value("d", "3.5e-5".parse().unwrap()));
        assert_eq!(v(1), DriverRef::with_value("e", "1e-5".parse().unwrap()));
        assert_eq!(v(2), DriverRef::with_value("C", "2e-6".parse().unwrap()));
        // Nested values survive a round trip.
        let back = parse_xes(&write_xes(&parsed.log), Strictness::Lenient).unwrap();
        assert_eq!(back.log, parsed.log);
    }

    #[test]
    fn ignores_other_transitions_and_reports_dangling_starts() {
        let doc = br#"<log><trace><string key="concept:name" value="1"/><string key="cost:variant" value="v"/>
<event><string key="concept:name" value="A"/><string key="lifecycle:transition" value="schedule"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
<event><string key="concept:name" value="A"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
<event><string key="concept:name" value="B"/><string key="lifecycle:transition" value="start"/><date key="time:timestamp" value="2024-01-01T00:00:00Z"/></event>
</trace></log>"#;
        let parsed = parse_xes(doc, Strictness::Strict).unwrap();
        assert_eq!(parsed.log.traces()[0].instances().len(), 1);
        assert_eq!(parsed.warnings.len(), 2);
    }
}
