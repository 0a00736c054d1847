//! CSV and JSON output. Every file starts with a header naming the tool
//! version and config hash; JSON carries them as fields.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::{TOOL_NAME, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::selection::{clamp_ratio, BaselineRow, ExperimentRecord, SweepOutcome};

/// CSV numbers: rounded to 12 significant digits, then printed in the
/// shortest form, so `6 * 0.6` shows as `3.6`.
pub fn csv_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    // avoid "-0"
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

pub fn header_comment(config_hash: &str) -> String {
    format!("# {TOOL_NAME} {TOOL_VERSION} config_hash={config_hash}\n")
}

pub fn baseline_csv(rows: &[BaselineRow], config_hash: &str) -> String {
    let mut s = header_comment(config_hash);
    s.push_str("p,params,ratio,objective,seconds\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.p,
            r.params,
            csv_float(clamp_ratio(r.ratio)),
            csv_float(r.objective),
            csv_float(r.control_time)
        )
        .unwrap();
    }
    s
}

fn record_ratio(r: &ExperimentRecord) -> String {
    if r.is_failed() {
        "NaN".into()
    } else {
        csv_float(clamp_ratio(r.ratio))
    }
}

/// Sweep table; hybrid tables add `phase2_ratio`.
pub fn sweep_csv(records: &[ExperimentRecord], config_hash: &str, hybrid: bool) -> String {
    let mut s = header_comment(config_hash);
    s.push_str("lambda,selected_params,effective_depth,ratio,stopped_early");
    s.push_str(if hybrid { ",phase2_ratio\n" } else { "\n" });
    for r in records {
        write!(
            s,
            "{},{},{},{},{}",
            csv_float(r.lambda),
            r.selected_params,
            r.effective_depth,
            record_ratio(r),
            r.stopped_early
        )
        .unwrap();
        if hybrid {
            let p2 = r.phase2_ratio.map_or("NaN".to_string(), |v| csv_float(clamp_ratio(v)));
            write!(s, ",{p2}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Number with 17 significant digits; `null` when not finite.
fn json_number(v: f64) -> Result<Box<RawValue>> {
    let text = if v.is_finite() { format!("{v:.16e}") } else { "null".into() };
    RawValue::from_string(text).map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct JsonRecord {
    lambda: Box<RawValue>,
    x_final: Vec<Box<RawValue>>,
    generators: Vec<&'static str>,
    selected_params: usize,
    effective_depth: usize,
    ratio: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase2_ratio: Option<Box<RawValue>>,
    stopped_early: bool,
    failure: Option<String>,
}

#[derive(Serialize)]
struct JsonDocument {
    config_hash: String,
    tool_version: String,
    best_index: Option<usize>,
    records: Vec<JsonRecord>,
}

pub fn sweep_json(outcome: &SweepOutcome, config_hash: &str) -> Result<String> {
    let records = outcome
        .records
        .iter()
        .map(|r| {
            Ok(JsonRecord {
                lambda: json_number(r.lambda)?,
                x_final: r.final_x.iter().map(|&v| json_number(v)).collect::<Result<_>>()?,
                generators: r.final_tags.iter().map(|t| t.as_str()).collect(),
                selected_params: r.selected_params,
                effective_depth: r.effective_depth,
                ratio: json_number(r.ratio)?,
                phase2_ratio: r.phase2_ratio.map(json_number).transpose()?,
                stopped_early: r.stopped_early,
                failure: r.failure.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = JsonDocument {
        config_hash: config_hash.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        best_index: outcome.best,
        records,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
