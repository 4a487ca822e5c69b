//! Cost-variant configuration files.
//!
//! ```xml
//! <costVariantConfig count="500">
//!     <variant id="standard procedure" frequency="0.5">
//!         <driver id="In-house mail" cost="0.0000391"/>
//!     </variant>
//! </costVariantConfig>
//! ```
//!
//! Each variant maps abstract driver ids to the score of the concrete driver
//! that replaces them in process instances of that variant.

use std::collections::HashSet;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::decimal::{parse_exact_decimal, ExactDecimal};
use crate::model::{AbstractCostDriver, ConcreteCostDriver, CostDriverHierarchy, DomainError};
use crate::xml::{self, Element, XmlError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("variant frequencies sum to {sum}, expected 1")]
    FrequencySum { sum: String },
    #[error("unknown cost variant `{0}`")]
    UnknownVariant(String),
    #[error("cost variant `{variant}` does not concretize driver `{driver}`")]
    UnknownDriver { variant: String, driver: String },
    #[error("configuration declares no cost variants")]
    NoVariants,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverCost {
    pub driver: String,
    pub cost: ExactDecimal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostVariant {
    pub id: String,
    pub frequency: ExactDecimal,
    /// Declaration order is kept; ids are unique.
    pub drivers: Vec<DriverCost>,
}

impl CostVariant {
    pub fn cost_of(&self, driver: &str) -> Option<&ExactDecimal> {
        self.drivers
            .iter()
            .find(|d| d.driver == driver)
            .map(|d| &d.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostVariantConfig {
    pub count: u64,
    pub variants: Vec<CostVariant>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConfigOptions {
    /// Accept frequency sums within 1e-9 of one and renormalize them.
    pub tolerant_frequencies: bool,
}

impl CostVariantConfig {
    pub fn variant(&self, id: &str) -> Option<&CostVariant> {
        self.variants.iter().find(|v| v.id == id)
    }

    /// The score variant `variant_id` assigns to `abstract_driver`.
    pub fn cost_function(
        &self,
        variant_id: &str,
        abstract_driver: &str,
    ) -> Result<&ExactDecimal, ConfigError> {
        let variant = self
            .variant(variant_id)
            .ok_or_else(|| ConfigError::UnknownVariant(variant_id.to_string()))?;
        variant
            .cost_of(abstract_driver)
            .ok_or_else(|| ConfigError::UnknownDriver {
                variant: variant_id.to_string(),
                driver: abstract_driver.to_string(),
            })
    }

    /// The driver hierarchy implied by the config: every (variant, driver)
    /// entry is one concrete driver named `"{driver} [{variant}]"`.
    pub fn hierarchy(&self) -> Result<CostDriverHierarchy, DomainError> {
        let mut abstracts = Vec::new();
        let mut seen = HashSet::new();
        let mut concretes = Vec::new();
        for v in &self.variants {
            for d in &v.drivers {
                if seen.insert(d.driver.clone()) {
                    abstracts.push(AbstractCostDriver::new(d.driver.clone())?);
                }
                concretes.push(ConcreteCostDriver {
                    id: format!("{} [{}]", d.driver, v.id),
                    parent: d.driver.clone(),
                    cost: d.cost.clone(),
                });
            }
        }
        CostDriverHierarchy::new(abstracts, concretes)
    }
}

fn invalid(el: &Element, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        line: el.line,
        message: message.into(),
    }
}

fn decimal_attr(el: &Element, name: &str) -> Result<ExactDecimal, ConfigError> {
    let text = el.required_attr(name)?;
    parse_exact_decimal(text).map_err(|e| invalid(el, format!("attribute `{name}`: {e}")))
}

pub fn parse_variant_config(bytes: &[u8]) -> Result<CostVariantConfig, ConfigError> {
    parse_variant_config_with(bytes, ConfigOptions::default())
}

pub fn parse_variant_config_with(
    bytes: &[u8],
    options: ConfigOptions,
) -> Result<CostVariantConfig, ConfigError> {
    let root = xml::parse_document(bytes)?;
    if root.name != "costVariantConfig" {
        return Err(invalid(
            &root,
            format!("expected root <costVariantConfig>, found <{}>", root.name),
        ));
    }
    let count_text = root.required_attr("count")?;
    let count: u64 = count_text
        .trim()
        .parse()
        .ok()
        .filter(|&c| c > 0)
        .ok_or_else(|| invalid(&root, format!("count `{count_text}` is not a positive integer")))?;

    let mut variants: Vec<CostVariant> = Vec::new();
    for el in &root.children {
        if el.name != "variant" {
            return Err(invalid(el, format!("unexpected element <{}>", el.name)));
        }
        let id = el.required_attr("id")?.to_string();
        if variants.iter().any(|v| v.id == id) {
            return Err(invalid(el, format!("duplicate variant id `{id}`")));
        }
        let frequency = decimal_attr(el, "frequency")?;
        if frequency > ExactDecimal::one() {
            return Err(invalid(el, format!("frequency {frequency} exceeds 1")));
        }
        let mut drivers: Vec<DriverCost> = Vec::new();
        for d in &el.children {
            if d.name != "driver" {
                return Err(invalid(d, format!("unexpected element <{}>", d.name)));
            }
            let driver = d.required_attr("id")?.to_string();
            if driver.is_empty() {
                return Err(invalid(d, "driver id must not be empty"));
            }
            if drivers.iter().any(|x| x.driver == driver) {
                return Err(invalid(
                    d,
                    format!("driver `{driver}` declared twice in variant `{id}`"),
                ));
            }
            let cost = decimal_attr(d, "cost")?;
            drivers.push(DriverCost { driver, cost });
        }
        variants.push(CostVariant {
            id,
            frequency,
            drivers,
        });
    }
    if variants.is_empty() {
        return Err(ConfigError::NoVariants);
    }
    normalize_frequencies(&mut variants, options)?;
    Ok(CostVariantConfig { count, variants })
}

fn normalize_frequencies(
    variants: &mut [CostVariant],
    options: ConfigOptions,
) -> Result<(), ConfigError> {
    let sum: ExactDecimal = variants.iter().map(|v| &v.frequency).sum();
    if sum == ExactDecimal::one() {
        return Ok(());
    }
    let deviation = (sum.as_rational() - BigRational::one()).abs();
    let tolerance = crate::decimal::pow10(-9);
    if options.tolerant_frequencies && deviation <= tolerance && !sum.is_zero() {
        for v in variants.iter_mut() {
            let scaled = v.frequency.as_rational() / sum.as_rational();
            v.frequency = ExactDecimal::from_rational(scaled).expect("ratio of non-negatives");
        }
        return Ok(());
    }
    Err(ConfigError::FrequencySum {
        sum: sum.to_string(),
    })
}

/// Canonical serialization; parses back to an equal config.
pub fn write_variant_config(config: &CostVariantConfig) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<costVariantConfig count=\"{}\">", config.count);
    for v in &config.variants {
        let _ = writeln!(
            out,
            "    <variant id=\"{}\" frequency=\"{}\">",
            xml::escape_attr(&v.id),
            v.frequency
        );
        for d in &v.drivers {
            let _ = writeln!(
                out,
                "        <driver id=\"{}\" cost=\"{}\"/>",
                xml::escape_attr(&d.driver),
                d.cost
            );
        }
        out.push_str("    </variant>\n");
    }
    out.push_str("</costVariantConfig>\n");
    out
}
