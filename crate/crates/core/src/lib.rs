//! Environmental activity-based costing for business processes.
//!
//! The pipeline mirrors how an analyst works: annotate a BPMN model with
//! abstract cost drivers ([`bpmn`]), price those drivers per cost variant
//! ([`variant_config`]), simulate the model into an XES event log
//! ([`simulator`], [`xes`]), compute activity and process instance costs
//! ([`costing`]), and compare re-design scenarios ([`report`]). The
//! [`oracle`] module predicts expected costs analytically from the model.

pub mod bpmn;
pub mod costing;
pub mod decimal;
pub mod model;
pub mod oracle;
pub mod report;
pub mod simulator;
pub mod variant_config;
pub mod xes;
mod xml;

pub use decimal::{parse_exact_decimal, ExactDecimal, Rounding};
pub use xml::XmlError;
