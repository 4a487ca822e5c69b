//! Scenario comparison and rendering of cost reports as JSON, CSV, Markdown
//! and SVG.
//!
//! Relative differences are kept as exact rationals and rounded only when
//! rendered.

use std::fmt::Write as _;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::costing::CostReport;
use crate::decimal::{format_fixed, ExactDecimal, Rounding};
use crate::xml::escape_attr;

pub const AVERAGE_ROW: &str = "Average process instance cost";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("unknown format `{0}`; expected json, csv, svg or md")]
    UnknownFormat(String),
    #[error("report `{0}` has no activities")]
    EmptyReport(String),
    #[error("format {0} is not available for this output")]
    Unsupported(&'static str),
    #[error("{0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    SvgBar,
    Markdown,
}

impl Format {
    /// Picks the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Result<Self, ReportError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse()
    }

    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::SvgBar => "svg",
            Format::Markdown => "markdown",
        }
    }
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" | "svg-bar" => Ok(Format::SvgBar),
            "md" | "markdown" | "markdown-table" => Ok(Format::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

/// How numbers are rounded for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Significant digits of costs.
    pub significant: usize,
    /// Fractional digits of percentages.
    pub percent_decimals: u32,
    pub rounding: Rounding,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            significant: 3,
            percent_decimals: 2,
            rounding: Rounding::TowardZero,
        }
    }
}

/// Relative difference of a candidate value against a baseline value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    /// (candidate − baseline) / baseline.
    Relative(BigRational),
    /// Zero baseline, non-zero candidate.
    Undefined,
}

impl Change {
    pub fn between(baseline: &ExactDecimal, candidate: &ExactDecimal) -> Change {
        let b = baseline.as_rational();
        let c = candidate.as_rational();
        if b.is_zero() {
            return if c.is_zero() {
                Change::Relative(BigRational::zero())
            } else {
                Change::Undefined
            };
        }
        Change::Relative((c - b) / b)
    }

    pub fn render(&self, opts: &RenderOptions) -> String {
        match self {
            Change::Undefined => "undefined (division by zero)".to_string(),
            Change::Relative(r) => format_percent(r, opts),
        }
    }
}

/// Signed percentage, e.g. `-50.18%` or `+4.00%`.
pub fn format_percent(ratio: &BigRational, opts: &RenderOptions) -> String {
    let hundred = BigRational::from_integer(100.into());
    let text = format_fixed(&(ratio * hundred), opts.percent_decimals, opts.rounding);
    if ratio.is_positive() && text.bytes().any(|b| (b'1'..=b'9').contains(&b)) {
        format!("+{text}%")
    } else {
        format!("{text}%")
    }
}

/// One value per scenario; `None` where the activity is missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRow {
    pub name: String,
    pub baseline: Option<ExactDecimal>,
    pub candidates: Vec<Option<ExactDecimal>>,
}

impl ComparisonRow {
    /// The change per candidate; `None` when either side lacks the row.
    pub fn changes(&self) -> Vec<Option<Change>> {
        self.candidates
            .iter()
            .map(|c| match (&self.baseline, c) {
                (Some(b), Some(c)) => Some(Change::between(b, c)),
                _ => None,
            })
            .collect()
    }

    fn cell(&self, i: usize, opts: &RenderOptions) -> String {
        match (&self.baseline, &self.candidates[i]) {
            (Some(b), Some(c)) => Change::between(b, c).render(opts),
            (Some(_), None) => "only in baseline".to_string(),
            (None, Some(_)) => "only in candidate".to_string(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonReport {
    pub baseline: String,
    pub candidates: Vec<String>,
    /// Baseline activity order, then activities only candidates have.
    pub rows: Vec<ComparisonRow>,
    pub overall: ComparisonRow,
}

pub fn compare(baseline: &CostReport, candidate: &CostReport) -> Result<ComparisonReport, ReportError> {
    compare_many(baseline, std::slice::from_ref(candidate))
}

pub fn compare_many(
    baseline: &CostReport,
    candidates: &[CostReport],
) -> Result<ComparisonReport, ReportError> {
    for r in std::iter::once(baseline).chain(candidates) {
        if r.per_activity.is_empty() {
            return Err(ReportError::EmptyReport(r.scenario.clone()));
        }
    }
    let mut names: Vec<&str> = baseline.per_activity.iter().map(|r| r.name.as_str()).collect();
    for c in candidates {
        for r in &c.per_activity {
            if !names.contains(&r.name.as_str()) {
                names.push(&r.name);
            }
        }
    }
    let value = |report: &CostReport, name: &str| report.activity(name).map(|r| r.average_cost.clone());
    let rows = names
        .into_iter()
        .map(|name| ComparisonRow {
            name: name.to_string(),
            baseline: value(baseline, name),
            candidates: candidates.iter().map(|c| value(c, name)).collect(),
        })
        .collect();
    Ok(ComparisonReport {
        baseline: baseline.scenario.clone(),
        candidates: candidates.iter().map(|c| c.scenario.clone()).collect(),
        rows,
        overall: ComparisonRow {
            name: AVERAGE_ROW.to_string(),
            baseline: Some(baseline.average_process_instance_cost.clone()),
            candidates: candidates
                .iter()
                .map(|c| Some(c.average_process_instance_cost.clone()))
                .collect(),
        },
    })
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn cost_text(v: &ExactDecimal, opts: &RenderOptions) -> String {
    v.to_scientific(opts.significant, opts.rounding)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ChangeJson {
    candidate: String,
    value: Option<ExactDecimal>,
    relative: Option<String>,
    percent: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RowJson {
    name: String,
    baseline: Option<ExactDecimal>,
    changes: Vec<ChangeJson>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ComparisonJson {
    baseline: String,
    candidates: Vec<String>,
    per_activity: Vec<RowJson>,
    average_process_instance_cost: RowJson,
}

fn row_json(report: &ComparisonReport, row: &ComparisonRow, opts: &RenderOptions) -> RowJson {
    RowJson {
        name: row.name.clone(),
        baseline: row.baseline.clone(),
        changes: row
            .changes()
            .into_iter()
            .enumerate()
            .map(|(i, change)| ChangeJson {
                candidate: report.candidates[i].clone(),
                value: row.candidates[i].clone(),
                relative: match change {
                    Some(Change::Relative(r)) => Some(r.to_string()),
                    _ => None,
                },
                percent: row.cell(i, opts),
            })
            .collect(),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| ReportError::Serialize(e.to_string()))
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| ReportError::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Serialize(e.to_string()))
}

/// Renders a comparison. Markdown follows the layout of a relative
/// differences table: one column per candidate.
pub fn render_comparison(
    report: &ComparisonReport,
    format: Format,
    opts: &RenderOptions,
) -> Result<String, ReportError> {
    let all_rows = || report.rows.iter().chain(std::iter::once(&report.overall));
    match format {
        Format::Markdown => {
            let mut out = String::new();
            let _ = write!(out, "| Activity |");
            for c in &report.candidates {
                let _ = write!(out, " {} vs. {} |", md_escape(c), md_escape(&report.baseline));
            }
            out.push_str("\n|---|");
            for _ in &report.candidates {
                out.push_str("---:|");
            }
            out.push('\n');
            for row in all_rows() {
                let _ = write!(out, "| {} |", md_escape(&row.name));
                for i in 0..report.candidates.len() {
                    let _ = write!(out, " {} |", row.cell(i, opts));
                }
                out.push('\n');
            }
            Ok(out)
        }
        Format::Json => to_json(&ComparisonJson {
            baseline: report.baseline.clone(),
            candidates: report.candidates.clone(),
            per_activity: report.rows.iter().map(|r| row_json(report, r, opts)).collect(),
            average_process_instance_cost: row_json(report, &report.overall, opts),
        }),
        Format::Csv => {
            let mut header = vec!["activity".to_string(), report.baseline.clone()];
            for c in &report.candidates {
                header.push(c.clone());
                header.push(format!("{c} change"));
            }
            let mut rows = vec![header];
            for row in all_rows() {
                let mut r = vec![
                    row.name.clone(),
                    row.baseline.as_ref().map(|v| cost_text(v, opts)).unwrap_or_default(),
                ];
                for (i, c) in row.candidates.iter().enumerate() {
                    r.push(c.as_ref().map(|v| cost_text(v, opts)).unwrap_or_default());
                    r.push(row.cell(i, opts));
                }
                rows.push(r);
            }
            csv_string(rows)
        }
        Format::SvgBar => Err(ReportError::Unsupported(format.name())),
    }
}

/// Renders a single cost report.
pub fn render_report(
    report: &CostReport,
    format: Format,
    opts: &RenderOptions,
) -> Result<String, ReportError> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => {
            let mut rows = vec![vec![
                "activity".to_string(),
                "average_cost".to_string(),
                "occurrences".to_string(),
                "average_cost_exact".to_string(),
            ]];
            rows.extend(report.per_activity.iter().map(|r| {
                vec![
                    r.name.clone(),
                    cost_text(&r.average_cost, opts),
                    r.occurrences.to_string(),
                    r.average_cost.to_string(),
                ]
            }));
            csv_string(rows)
        }
        Format::Markdown => {
            let mut out = format!(
                "| Activity | {} | Occurrences |\n|---|---:|---:|\n",
                md_escape(&report.scenario)
            );
            for r in &report.per_activity {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} |",
                    md_escape(&r.name),
                    cost_text(&r.average_cost, opts),
                    r.occurrences
                );
            }
            let _ = writeln!(
                out,
                "| {AVERAGE_ROW} | {} | {} |",
                cost_text(&report.average_process_instance_cost, opts),
                report.trace_count
            );
            Ok(out)
        }
        Format::SvgBar => Ok(activity_chart(std::slice::from_ref(report), opts)),
    }
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

struct Bar {
    value: f64,
    label: String,
}

/// Groups of bars, one series per scenario, with a legend.
fn bar_chart(title: &str, groups: &[(String, Vec<Bar>)], series: &[String]) -> String {
    let bar_w = 14.0;
    let gap = 18.0;
    let group_w = bar_w * series.len().max(1) as f64 + gap;
    let left = 70.0;
    let top = 40.0;
    let plot_h = 260.0;
    let label_h = 220.0;
    let legend_h = 20.0 * series.len() as f64 + 10.0;
    let width = left + group_w * groups.len() as f64 + 20.0;
    let height = top + plot_h + label_h + legend_h;
    let max = groups
        .iter()
        .flat_map(|(_, bars)| bars.iter().map(|b| b.value))
        .fold(0.0_f64, f64::max);
    let scale = if max > 0.0 { plot_h / max } else { 0.0 };
    let base = top + plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left:.0}" y="20" font-size="14">{}</text>"#,
        escape_attr(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left:.0}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black"/>"#,
        width - 20.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left:.0}" y1="{top:.1}" x2="{left:.0}" y2="{base:.1}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{max:.3e}</text>"#,
        left - 4.0,
        top + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#,
        left - 4.0,
        base + 4.0
    );
    for (g, (name, bars)) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + group_w * g as f64;
        for (i, bar) in bars.iter().enumerate() {
            let h = bar.value * scale;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{}"><title>{}</title></rect>"#,
                x0 + bar_w * i as f64,
                base - h,
                PALETTE[i % PALETTE.len()],
                escape_attr(&bar.label)
            );
        }
        let lx = x0 + bar_w * bars.len() as f64 / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.1}" y="{:.1}" text-anchor="end" transform="rotate(-60 {lx:.1} {:.1})">{}</text>"#,
            base + 12.0,
            base + 12.0,
            escape_attr(name)
        );
    }
    for (i, name) in series.iter().enumerate() {
        let y = top + plot_h + label_h + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{left:.0}" y="{y:.1}" width="12" height="12" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.1}">{}</text>"#,
            left + 18.0,
            y + 10.0,
            escape_attr(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars of average activity costs, one series per scenario.
pub fn activity_chart(reports: &[CostReport], opts: &RenderOptions) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        for a in &r.per_activity {
            if !names.contains(&a.name.as_str()) {
                names.push(&a.name);
            }
        }
    }
    let groups: Vec<(String, Vec<Bar>)> = names
        .iter()
        .map(|name| {
            let bars = reports
                .iter()
                .map(|r| {
                    let v = r.activity(name).map(|a| &a.average_cost);
                    Bar {
                        value: v.map(ExactDecimal::to_f64).unwrap_or(0.0),
                        label: format!(
                            "{}: {}",
                            r.scenario,
                            v.map(|v| cost_text(v, opts)).unwrap_or_else(|| "absent".into())
                        ),
                    }
                })
                .collect();
            (name.to_string(), bars)
        })
        .collect();
    let series: Vec<String> = reports.iter().map(|r| r.scenario.clone()).collect();
    bar_chart("Average environmental activity costs", &groups, &series)
}

/// One bar per scenario with its average process instance cost.
pub fn instance_average_chart(reports: &[CostReport], opts: &RenderOptions) -> String {
    let groups: Vec<(String, Vec<Bar>)> = reports
        .iter()
        .map(|r| {
            (
                r.scenario.clone(),
                vec![Bar {
                    value: r.average_process_instance_cost.to_f64(),
                    label: cost_text(&r.average_process_instance_cost, opts),
                }],
            )
        })
        .collect();
    bar_chart(
        "Average environmental process instance costs",
        &groups,
        &["average".to_string()],
    )
}
