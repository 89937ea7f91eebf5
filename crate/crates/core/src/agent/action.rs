//! The planner action schema and the "Thought/Action" turn grammar.

use serde::{Deserialize, Serialize};

use super::AgentError;

/// The default phone app list offered to the planner.
pub const DEFAULT_AVAILABLE_APPS: [&str; 21] = [
    "Camera",
    "Chrome",
    "Clock",
    "Contacts",
    "Dialer",
    "Files",
    "Settings",
    "Markor",
    "Tasks",
    "Simple Draw Pro",
    "Simple Gallery Pro",
    "Simple SMS Messenger",
    "Audio Recorder",
    "Pro Expense",
    "Broccoli APP",
    "OSMand",
    "VLC",
    "Joplin",
    "Retro Music",
    "OpenTracks",
    "Simple Calendar Pro",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

impl ScrollDirection {
    /// Scrolling moves content opposite to the finger: scrolling down means
    /// swiping up.
    pub fn inverse(self) -> ScrollDirection {
        match self {
            ScrollDirection::Up => ScrollDirection::Down,
            ScrollDirection::Down => ScrollDirection::Up,
            ScrollDirection::Left => ScrollDirection::Right,
            ScrollDirection::Right => ScrollDirection::Left,
        }
    }

    fn parse(s: &str) -> Option<ScrollDirection> {
        match s {
            "up" => Some(ScrollDirection::Up),
            "down" => Some(ScrollDirection::Down),
            "left" => Some(ScrollDirection::Left),
            "right" => Some(ScrollDirection::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Complete,
    Infeasible,
}

/// The ten planner actions, serialized as `{"action_type": "...", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action_type", rename_all = "snake_case")]
pub enum AgentAction {
    OpenApp { app_name: String },
    Click { target: String },
    LongPress { target: String },
    InputText { text: String, target: String },
    Answer { text: String },
    NavigateHome,
    NavigateBack,
    Scroll { direction: ScrollDirection },
    Status { status: TaskStatus },
    Wait,
}

/// Strict mode rejects extra fields; lenient mode (the default for live
/// planners) ignores them, since real model outputs often add fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    NoActionLine,
    BadJson,
    UnknownActionType,
    MissingField,
    ExtraFieldStrict,
}

fn malformed(reason: MalformedReason, detail: impl Into<String>) -> AgentError {
    AgentError::MalformedTurn { reason, detail: detail.into() }
}

/// Validates an action JSON object against the schema.
///
/// Implemented by hand rather than through serde so strict mode can reject
/// unknown fields, which internally tagged enums cannot express.
pub fn parse_action(value: &serde_json::Value, mode: JsonMode) -> Result<AgentAction, AgentError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(MalformedReason::BadJson, "action is not a JSON object"))?;
    let action_type = obj
        .get("action_type")
        .and_then(|v| v.as_str())
        .ok_or_else(|| malformed(MalformedReason::MissingField, "action_type"))?;

    let get_str = |key: &str| -> Result<String, AgentError> {
        obj.get(key)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| malformed(MalformedReason::MissingField, key))
    };

    let (action, fields): (AgentAction, &[&str]) = match action_type {
        "open_app" => (AgentAction::OpenApp { app_name: get_str("app_name")? }, &["app_name"]),
        "click" => (AgentAction::Click { target: get_str("target")? }, &["target"]),
        "long_press" => (AgentAction::LongPress { target: get_str("target")? }, &["target"]),
        "input_text" => (
            AgentAction::InputText { text: get_str("text")?, target: get_str("target")? },
            &["text", "target"],
        ),
        "answer" => (AgentAction::Answer { text: get_str("text")? }, &["text"]),
        "navigate_home" => (AgentAction::NavigateHome, &[]),
        "navigate_back" => (AgentAction::NavigateBack, &[]),
        "scroll" => {
            let raw = get_str("direction")?;
            let direction = ScrollDirection::parse(&raw)
                .ok_or_else(|| malformed(MalformedReason::MissingField, format!("direction {raw:?}")))?;
            (AgentAction::Scroll { direction }, &["direction"])
        }
        "status" => {
            let raw = get_str("status")?;
            let status = match raw.as_str() {
                "complete" => TaskStatus::Complete,
                "infeasible" => TaskStatus::Infeasible,
                _ => return Err(malformed(MalformedReason::MissingField, format!("status {raw:?}"))),
            };
            (AgentAction::Status { status }, &["status"])
        }
        "wait" => (AgentAction::Wait, &[]),
        other => return Err(malformed(MalformedReason::UnknownActionType, other)),
    };

    if mode == JsonMode::Strict {
        for key in obj.keys() {
            if key != "action_type" && !fields.contains(&key.as_str()) {
                return Err(malformed(MalformedReason::ExtraFieldStrict, key.clone()));
            }
        }
    }
    Ok(action)
}

/// One parsed planner reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerTurn {
    pub thought: String,
    pub action: AgentAction,
    pub raw: String,
}

// First balanced JSON object starting at or after `from`, string-aware.
fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses the two-line planner output format: a `Thought:` line followed by
/// an `Action:` line carrying the action JSON. A bare JSON object after the
/// thought is accepted when the `Action:` label is missing.
pub fn parse_planner_turn(raw: &str, mode: JsonMode) -> Result<PlannerTurn, AgentError> {
    let (thought_part, action_part) = match raw.find("Action:") {
        Some(idx) => (&raw[..idx], &raw[idx + "Action:".len()..]),
        None => match raw.find('{') {
            Some(idx) => (&raw[..idx], &raw[idx..]),
            None => return Err(malformed(MalformedReason::NoActionLine, "no Action line or JSON")),
        },
    };
    let thought = thought_part
        .trim()
        .strip_prefix("Thought:")
        .map(str::trim)
        .unwrap_or(thought_part.trim())
        .to_string();
    let body = first_json_object(action_part)
        .ok_or_else(|| malformed(MalformedReason::NoActionLine, "no JSON object after Action:"))?;
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| malformed(MalformedReason::BadJson, e.to_string()))?;
    let action = parse_action(&value, mode)?;
    Ok(PlannerTurn { thought, action, raw: raw.to_string() })
}
