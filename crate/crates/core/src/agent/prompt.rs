//! Planner prompt rendering: goal, serialized action history, and app list.

use serde::{Deserialize, Serialize};

use super::action::AgentAction;
use crate::prompts::PLANNER_SYSTEM_PROMPT;

/// One prior turn as the planner sees it in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub thought: String,
    pub action: AgentAction,
    /// Short execution outcome, e.g. "ok" or "failed: no match for target".
    pub result: String,
}

impl HistoryEntry {
    fn render(&self) -> String {
        let action_json =
            serde_json::to_string(&self.action).expect("action serialization is infallible");
        format!("step {}: {} — {} — {}", self.step, self.thought, action_json, self.result)
    }
}

/// Fills the planner template. Byte-stable for identical inputs; an empty
/// history renders as "[]".
pub fn render_planner_prompt(goal: &str, history: &[HistoryEntry], apps: &[String]) -> String {
    let history_text = if history.is_empty() {
        "[]".to_string()
    } else {
        history.iter().map(HistoryEntry::render).collect::<Vec<_>>().join("\n  ")
    };
    let apps_text = serde_json::to_string(apps).expect("string list serialization is infallible");
    PLANNER_SYSTEM_PROMPT
        .replace("{goal}", goal)
        .replace("{history}", &history_text)
        .replace("{available_apps}", &apps_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::action::{ScrollDirection, DEFAULT_AVAILABLE_APPS};

    fn default_apps() -> Vec<String> {
        DEFAULT_AVAILABLE_APPS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_history_renders_empty_list() {
        let p = render_planner_prompt("check the weather", &[], &default_apps());
        assert!(p.contains("- User Goal: check the weather"));
        assert!(p.contains("- Previous Actions: []"));
        assert!(!p.contains("{goal}"));
        assert!(!p.contains("{history}"));
        assert!(!p.contains("{available_apps}"));
    }

    #[test]
    fn all_default_apps_appear_verbatim() {
        let p = render_planner_prompt("g", &[], &default_apps());
        for app in DEFAULT_AVAILABLE_APPS {
            assert!(p.contains(&format!("\"{app}\"")), "missing app {app}");
        }
    }

    #[test]
    fn history_entries_render_in_order() {
        let history = vec![
            HistoryEntry {
                step: 1,
                thought: "open the browser".into(),
                action: AgentAction::OpenApp { app_name: "Chrome".into() },
                result: "ok".into(),
            },
            HistoryEntry {
                step: 2,
                thought: "reveal more results".into(),
                action: AgentAction::Scroll { direction: ScrollDirection::Down },
                result: "ok".into(),
            },
        ];
        let p = render_planner_prompt("g", &history, &default_apps());
        let first = p.find("step 1: open the browser").unwrap();
        let second = p.find("step 2: reveal more results").unwrap();
        assert!(first < second);
        assert!(p.contains("{\"action_type\":\"open_app\",\"app_name\":\"Chrome\"}"));
        assert!(p.contains("{\"action_type\":\"scroll\",\"direction\":\"down\"}"));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let history = vec![HistoryEntry {
            step: 1,
            thought: "t".into(),
            action: AgentAction::Wait,
            result: "ok".into(),
        }];
        let a = render_planner_prompt("goal", &history, &default_apps());
        let b = render_planner_prompt("goal", &history, &default_apps());
        assert_eq!(a, b);
    }

    #[test]
    fn golden_context_block() {
        let history = vec![HistoryEntry {
            step: 1,
            thought: "open the clock app".into(),
            action: AgentAction::OpenApp { app_name: "Clock".into() },
            result: "ok".into(),
        }];
        let apps = vec!["Clock".to_string(), "Files".to_string()];
        let p = render_planner_prompt("set an alarm for 7am", &history, &apps);
        let golden = "## Current Context.\n\
                      - User Goal: set an alarm for 7am\n\
                      - Previous Actions: step 1: open the clock app — {\"action_type\":\"open_app\",\"app_name\":\"Clock\"} — ok\n\
                      - Available Apps: [\"Clock\",\"Files\"]\n";
        assert!(p.contains(golden), "context block mismatch:\n{p}");
    }
}
