//! Manifest invariant checks. Violations are reported as data.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::DONE_ID;
use super::{PipelineError, Stage};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based manifest line.
    pub line: usize,
    pub sample_id: Option<String>,
    pub rule: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub lines: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

const UNIT_SCORES: &[&str] = &["s_local", "s_global", "s_local_w", "s_global_w", "s_local_l", "s_global_l"];
const PROBABILITIES: &[&str] = &["p_yes", "p_no"];
const GAPS: &[&str] = &["delta_local", "delta_global"];
const TOKENS: &[&str] = &["token_sequence", "token_ids"];

/// Recursively checks numeric ranges and token bounds under `value`.
fn check_values(value: &Value, vocab: usize, found: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                let range = if UNIT_SCORES.contains(&key.as_str()) {
                    Some((-1.0, 1.0))
                } else if PROBABILITIES.contains(&key.as_str()) {
                    Some((0.0, 1.0))
                } else if GAPS.contains(&key.as_str()) {
                    Some((-2.0, 2.0))
                } else {
                    None
                };
                if let (Some((lo, hi)), Some(x)) = (range, v.as_f64()) {
                    if !(lo..=hi).contains(&x) {
                        found.push(("range".into(), format!("{key} = {x} outside [{lo}, {hi}]")));
                    }
                }
                if TOKENS.contains(&key.as_str()) {
                    if let Some(tokens) = v.as_array() {
                        if let Some(t) = tokens.iter().filter_map(Value::as_u64).find(|t| *t as usize >= vocab) {
                            found.push(("token_bounds".into(), format!("{key} holds token {t} >= {vocab}")));
                        }
                    }
                }
                check_values(v, vocab, found);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| check_values(v, vocab, found)),
        _ => {}
    }
}

/// Checks the header, record tags, stage ordering, score ranges and token
/// bounds (`vocab` is the policy vocabulary size).
pub fn validate_manifest(path: &Path, vocab: usize) -> Result<ValidationReport, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut report = ValidationReport::default();
    let mut push = |line: usize, sample_id: Option<&str>, rule: &str, message: String| {
        report.violations.push(Violation {
            line,
            sample_id: sample_id.map(str::to_string),
            rule: rule.to_string(),
            message,
        });
    };
    let mut seen: HashSet<(Stage, String)> = HashSet::new();
    let mut done: HashSet<Stage> = HashSet::new();
    let mut lines = 0;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        lines = n;
        let value: Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                push(n, None, "json", e.to_string());
                continue;
            }
        };
        if n == 1 {
            let ok = value.get("type").and_then(Value::as_str) == Some("header")
                && value.get("config_hash").and_then(Value::as_str).is_some();
            if !ok {
                push(n, None, "header", "first line is not a manifest header".into());
            }
            continue;
        }
        let sample_id = value.get("sample_id").and_then(Value::as_str);
        let stage = value
            .get("stage")
            .and_then(Value::as_str)
            .and_then(|s| s.parse::<Stage>().ok());
        let (Some(stage), Some(sample_id)) = (stage, sample_id) else {
            push(n, sample_id, "ordering", "record has no stage marker or sample id".into());
            continue;
        };
        if !seen.insert((stage, sample_id.to_string())) {
            push(n, Some(sample_id), "duplicate", format!("second {stage} record"));
        }
        if sample_id == DONE_ID {
            done.insert(stage);
        } else if let Some(prev) = stage.previous() {
            let ready = if stage.is_per_sample() {
                seen.contains(&(prev, sample_id.to_string()))
            } else {
                done.contains(&prev)
            };
            if !ready {
                push(n, Some(sample_id), "ordering", format!("{stage} record precedes its {prev} record"));
            }
        }
        let mut found = Vec::new();
        if let Some(data) = value.get("data") {
            check_values(data, vocab, &mut found);
        }
        for (rule, message) in found {
            push(n, Some(sample_id), &rule, message);
        }
    }
    report.lines = lines;
    Ok(report)
}
