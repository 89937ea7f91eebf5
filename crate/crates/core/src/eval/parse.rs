//! Parsing of grounding-model responses.
//!
//! The expected shape is an optional `<think>…</think>` block followed by a
//! `<tool_call>…</tool_call>` block whose body is a JSON click action.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Why a response failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFailReason {
    MissingToolCall,
    BadJson,
    MissingCoordinate,
    NonNumeric,
    /// Not produced by the parser itself; recorded when the endpoint call
    /// failed after retries and there is nothing to parse.
    EndpointError,
}

/// Outcome of parsing one raw response. `point` is present iff the response
/// matched the grammar; otherwise `fail_reason` says why.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub reasoning: Option<String>,
    pub point: Option<Point>,
    pub fail_reason: Option<ParseFailReason>,
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(&text[start..end])
}

/// Parses a model response into reasoning text and a click point.
///
/// Accepts both the wrapped form
/// `{"name":"grounding","arguments":{"action":"click","coordinate":[x,y]}}`
/// and the bare `{"action":"click","coordinate":[x,y]}`. Never panics or
/// errors; failures are reported through `fail_reason`.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let reasoning = between(raw, "<think>", "</think>")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let fail = |reason| ParsedResponse { reasoning: reasoning.clone(), point: None, fail_reason: Some(reason) };

    let body = match between(raw, "<tool_call>", "</tool_call>") {
        Some(b) => b.trim(),
        None => return fail(ParseFailReason::MissingToolCall),
    };
    let value: serde_json::Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) => return fail(ParseFailReason::BadJson),
    };
    let obj = match value.as_object() {
        Some(o) => o,
        None => return fail(ParseFailReason::BadJson),
    };
    let args = obj.get("arguments").and_then(|v| v.as_object()).unwrap_or(obj);
    let coordinate = match args.get("coordinate").and_then(|v| v.as_array()) {
        Some(c) if c.len() >= 2 => c,
        _ => return fail(ParseFailReason::MissingCoordinate),
    };
    match (coordinate[0].as_f64(), coordinate[1].as_f64()) {
        (Some(x), Some(y)) => ParsedResponse {
            reasoning,
            point: Some(Point::new(x, y)),
            fail_reason: None,
        },
        _ => fail(ParseFailReason::NonNumeric),
    }
}
