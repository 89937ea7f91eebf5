//! Accuracy scoring and grouped reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{point_in_box, BBox, Point};
use crate::types::Perspective;

use super::parse::{parse_response, ParseFailReason};
use super::EvalError;

/// One grounding-model prediction for one sample.
///
/// Serialized as JSONL with `point` as a `[x, y]` array or null and
/// `fail_reason` as a string or null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    #[serde(rename = "perspective")]
    pub perspective_used: Perspective,
    pub raw_response: String,
    #[serde(rename = "point", with = "point_option")]
    pub parsed_point: Option<Point>,
    pub fail_reason: Option<ParseFailReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_text: Option<String>,
    /// Endpoint round-trip time in seconds; zero for offline scoring.
    #[serde(default)]
    pub latency: f64,
}

impl Prediction {
    /// Builds a prediction by parsing a raw response.
    pub fn from_raw(
        sample_id: impl Into<String>,
        perspective: Perspective,
        raw: impl Into<String>,
        latency: f64,
    ) -> Self {
        let raw = raw.into();
        let parsed = parse_response(&raw);
        Prediction {
            sample_id: sample_id.into(),
            perspective_used: perspective,
            raw_response: raw,
            parsed_point: parsed.point,
            fail_reason: parsed.fail_reason,
            reasoning_text: parsed.reasoning,
            latency,
        }
    }

    pub fn is_correct(&self, gt: BBox) -> bool {
        self.parsed_point.map(|p| point_in_box(p, gt)).unwrap_or(false)
    }
}

mod point_option {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Option<Point>, s: S) -> Result<S::Ok, S::Error> {
        p.map(|p| [p.x, p.y]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Point>, D::Error> {
        let v = Option::<[f64; 2]>::deserialize(d)?;
        Ok(v.map(|[x, y]| Point::new(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Accuracy report over a prediction set, optionally partitioned by sample
/// tag dimensions. Group keys are ordered lexicographically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub groups: BTreeMap<String, GroupStat>,
    pub parse_failure_count: usize,
    pub n: usize,
}

impl EvalReport {
    /// Wide table: one column per group plus `Avg`, accuracies in percent.
    pub fn render_table(&self) -> String {
        let mut names: Vec<String> = self.groups.keys().cloned().collect();
        names.push("Avg".to_string());
        let mut values: Vec<String> = self
            .groups
            .values()
            .map(|g| format!("{:.1}", g.accuracy * 100.0))
            .collect();
        values.push(format!("{:.1}", self.overall_accuracy * 100.0));
        let widths: Vec<usize> =
            names.iter().zip(&values).map(|(n, v)| n.len().max(v.len())).collect();
        let row = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!("{}\n{}\n", row(&names), row(&values))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,correct,total,accuracy\n");
        for (name, g) in &self.groups {
            out.push_str(&format!("{},{},{},{:.6}\n", name, g.correct, g.total, g.accuracy));
        }
        let correct: usize = self.groups.values().map(|g| g.correct).sum();
        let correct = if self.groups.is_empty() {
            (self.overall_accuracy * self.n as f64).round() as usize
        } else {
            correct
        };
        out.push_str(&format!("overall,{},{},{:.6}\n", correct, self.n, self.overall_accuracy));
        out
    }
}

/// Fraction of predictions whose point lands inside the ground-truth box.
/// Predictions without a parsed point count as incorrect.
pub fn accuracy(
    preds: &[Prediction],
    gts: &BTreeMap<String, BBox>,
) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut correct = 0usize;
    for p in preds {
        let gt = gts
            .get(&p.sample_id)
            .ok_or_else(|| EvalError::MissingGroundTruth(p.sample_id.clone()))?;
        if p.is_correct(*gt) {
            correct += 1;
        }
    }
    Ok(correct as f64 / preds.len() as f64)
}

/// Scores predictions and partitions them by the named tag dimensions.
///
/// `sample_tags` maps sample id to its dimension map; the group key is the
/// `dim=value` pairs joined with `/` in `group_keys` order.
pub fn grouped_report(
    preds: &[Prediction],
    gts: &BTreeMap<String, BBox>,
    sample_tags: &BTreeMap<String, BTreeMap<String, String>>,
    group_keys: &[String],
) -> Result<EvalReport, EvalError> {
    let overall_accuracy = accuracy(preds, gts)?;
    let mut groups: BTreeMap<String, GroupStat> = BTreeMap::new();
    for p in preds {
        let dims = sample_tags.get(&p.sample_id);
        let mut parts = Vec::with_capacity(group_keys.len());
        for key in group_keys {
            let value = dims
                .and_then(|d| d.get(key))
                .ok_or_else(|| EvalError::UnknownGroupKey(key.clone()))?;
            parts.push(format!("{key}={value}"));
        }
        if parts.is_empty() {
            continue;
        }
        let stat = groups.entry(parts.join("/")).or_insert(GroupStat {
            correct: 0,
            total: 0,
            accuracy: 0.0,
        });
        stat.total += 1;
        if p.is_correct(gts[&p.sample_id]) {
            stat.correct += 1;
        }
    }
    for stat in groups.values_mut() {
        stat.accuracy = stat.correct as f64 / stat.total as f64;
    }
    let parse_failure_count = preds.iter().filter(|p| p.parsed_point.is_none()).count();
    Ok(EvalReport { overall_accuracy, groups, parse_failure_count, n: preds.len() })
}
