//! The perception-action loop: screenshot, planner call, parse, execute,
//! append history, until a terminal status or a budget runs out.

use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::action::{parse_planner_turn, AgentAction, JsonMode, TaskStatus, DEFAULT_AVAILABLE_APPS};
use super::device::DeviceAdapter;
use super::executor::{execute, GroundingExecutor};
use super::prompt::{render_planner_prompt, HistoryEntry};
use super::AgentError;
use crate::llm::{ContentPart, LlmClient};
use crate::types::Screenshot;

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub max_steps: usize,
    pub json_mode: JsonMode,
    /// Consecutive malformed planner turns tolerated before aborting.
    pub malformed_budget: u32,
    /// Pause performed by the `wait` action.
    pub wait: Duration,
    pub available_apps: Vec<String>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            max_steps: 30,
            json_mode: JsonMode::Lenient,
            malformed_budget: 2,
            wait: Duration::from_secs(2),
            available_apps: DEFAULT_AVAILABLE_APPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Complete,
    Infeasible,
    StepLimit,
    /// The planner produced too many consecutive malformed turns.
    MalformedBudget,
    /// The device stopped responding; the episode aborted.
    DeviceError,
    /// A planner or grounding endpoint failed after retries.
    EndpointError,
}

/// Execution outcome as persisted in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub ok: bool,
    pub detail: String,
}

/// One step of an episode, serialized as one JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub step: usize,
    pub screenshot_id: String,
    pub thought: String,
    pub action: AgentAction,
    pub execution: ExecutionOutcome,
    pub wall_ms: u64,
}

#[derive(Debug)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    pub steps: usize,
    pub transcript: Vec<TranscriptRecord>,
    /// Abort explanation or the final `answer` text, when there is one.
    pub detail: Option<String>,
}

fn planner_user_content(
    client: &LlmClient,
    screen: &Screenshot,
) -> Result<Vec<ContentPart>, String> {
    let mut content =
        vec![ContentPart::Text { text: format!("Current screen: {}", screen.id) }];
    if client.needs_images() {
        let bytes = std::fs::read(&screen.image_ref)
            .map_err(|e| format!("{}: {e}", screen.image_ref))?;
        content.push(ContentPart::Image {
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        });
    }
    Ok(content)
}

/// Runs the planner loop until a `status` action, the step limit, the
/// malformed-turn budget, or an abort. Endpoint and device failures are
/// recorded in the result status rather than returned as errors.
pub fn run_episode(
    goal: &str,
    planner: &LlmClient,
    executor: &dyn GroundingExecutor,
    device: &mut dyn DeviceAdapter,
    options: &EpisodeOptions,
) -> Result<EpisodeResult, AgentError> {
    if options.max_steps == 0 {
        return Err(AgentError::Config("max_steps must be >= 1".into()));
    }
    if options.available_apps.is_empty() {
        return Err(AgentError::Config("available_apps must be non-empty".into()));
    }

    let mut transcript = Vec::new();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut consecutive_malformed = 0u32;
    let mut last_answer: Option<String> = None;
    let abort = |status, detail: String, steps, transcript| {
        Ok(EpisodeResult { status, steps, transcript, detail: Some(detail) })
    };

    let mut screen = match device.screenshot() {
        Ok(s) => s,
        Err(e) => return abort(EpisodeStatus::DeviceError, e.to_string(), 0, transcript),
    };

    for step in 1..=options.max_steps {
        let prompt = render_planner_prompt(goal, &history, &options.available_apps);
        let content = match planner_user_content(planner, &screen) {
            Ok(c) => c,
            Err(detail) => return abort(EpisodeStatus::EndpointError, detail, step - 1, transcript),
        };
        let req = planner.request().system(prompt).user(content);
        let started = Instant::now();
        let raw = match planner.complete(&req) {
            Ok(raw) => raw,
            Err(e) => {
                return abort(EpisodeStatus::EndpointError, e.to_string(), step - 1, transcript)
            }
        };
        let turn = match parse_planner_turn(&raw, options.json_mode) {
            Ok(turn) => {
                consecutive_malformed = 0;
                turn
            }
            Err(e) => {
                consecutive_malformed += 1;
                if consecutive_malformed >= options.malformed_budget {
                    return abort(EpisodeStatus::MalformedBudget, e.to_string(), step, transcript);
                }
                continue;
            }
        };

        let outcome = match execute(
            &turn.action,
            device,
            executor,
            &screen,
            &options.available_apps,
            options.wait,
        ) {
            Ok(result) => result,
            Err(AgentError::Device(e)) => {
                return abort(EpisodeStatus::DeviceError, e.to_string(), step, transcript)
            }
            Err(AgentError::Grounding(e)) => {
                return abort(EpisodeStatus::EndpointError, e.to_string(), step, transcript)
            }
            Err(e) => return Err(e),
        };

        transcript.push(TranscriptRecord {
            step,
            screenshot_id: screen.id.clone(),
            thought: turn.thought.clone(),
            action: turn.action.clone(),
            execution: ExecutionOutcome { ok: outcome.ok, detail: outcome.detail.clone() },
            wall_ms: started.elapsed().as_millis() as u64,
        });
        history.push(HistoryEntry {
            step,
            thought: turn.thought,
            action: turn.action.clone(),
            result: if outcome.ok {
                "ok".to_string()
            } else {
                format!("failed: {}", outcome.detail)
            },
        });

        match &turn.action {
            AgentAction::Status { status } => {
                let status = match status {
                    TaskStatus::Complete => EpisodeStatus::Complete,
                    TaskStatus::Infeasible => EpisodeStatus::Infeasible,
                };
                return Ok(EpisodeResult { status, steps: step, transcript, detail: last_answer });
            }
            AgentAction::Answer { text } => last_answer = Some(text.clone()),
            _ => {}
        }
        if let Some(next) = outcome.new_screen {
            screen = next;
        }
    }

    Ok(EpisodeResult {
        status: EpisodeStatus::StepLimit,
        steps: options.max_steps,
        transcript,
        detail: None,
    })
}

/// Re-executes a transcript's actions on a fresh device, step by step.
/// With the same scenario and executor this reproduces the original final
/// device state.
pub fn replay_transcript(
    transcript: &[TranscriptRecord],
    device: &mut dyn DeviceAdapter,
    executor: &dyn GroundingExecutor,
    available_apps: &[String],
) -> Result<(), AgentError> {
    for record in transcript {
        let screen = device.screenshot()?;
        execute(&record.action, device, executor, &screen, available_apps, Duration::ZERO)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::device::{settings_scenario, MockDevice};
    use crate::agent::executor::MockExecutor;
    use crate::llm::MockEndpoint;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn options() -> EpisodeOptions {
        EpisodeOptions {
            wait: Duration::ZERO,
            available_apps: vec!["Settings".to_string()],
            ..EpisodeOptions::default()
        }
    }

    fn scripted_planner(turns: Vec<&'static str>) -> LlmClient {
        let counter = AtomicUsize::new(0);
        LlmClient::mock(MockEndpoint::new(move |_| {
            let i = counter.fetch_add(1, Ordering::SeqCst).min(turns.len() - 1);
            Ok(turns[i].to_string())
        }))
    }

    const TOGGLE_SCRIPT: [&str; 3] = [
        "Thought: open settings first\nAction: {\"action_type\":\"open_app\",\"app_name\":\"Settings\"}",
        "Thought: flip the toggle\nAction: {\"action_type\":\"click\",\"target\":\"wifi toggle\"}",
        "Thought: done\nAction: {\"action_type\":\"status\",\"status\":\"complete\"}",
    ];

    #[test]
    fn scripted_three_step_episode_completes() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner = scripted_planner(TOGGLE_SCRIPT.to_vec());
        let result = run_episode("toggle wifi", &planner, &exec, &mut dev, &options()).unwrap();
        assert_eq!(result.status, EpisodeStatus::Complete);
        assert_eq!(result.steps, 3);
        assert_eq!(result.transcript.len(), 3);
        assert!(result.transcript.iter().all(|r| r.execution.ok));
        assert_eq!(dev.succeeded(), Some(true));
    }

    #[test]
    fn wait_forever_hits_step_limit() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner =
            scripted_planner(vec!["Thought: loading\nAction: {\"action_type\":\"wait\"}"]);
        let opts = EpisodeOptions { max_steps: 5, ..options() };
        let result = run_episode("g", &planner, &exec, &mut dev, &opts).unwrap();
        assert_eq!(result.status, EpisodeStatus::StepLimit);
        assert_eq!(result.steps, 5);
        assert_eq!(result.transcript.len(), 5);
    }

    #[test]
    fn malformed_budget_aborts_after_two_consecutive() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner = scripted_planner(vec!["complete gibberish, no action"]);
        let result = run_episode("g", &planner, &exec, &mut dev, &options()).unwrap();
        assert_eq!(result.status, EpisodeStatus::MalformedBudget);
        assert_eq!(result.steps, 2);
        assert!(result.transcript.is_empty());
    }

    #[test]
    fn one_malformed_turn_is_forgiven() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner = scripted_planner(vec![
            "gibberish",
            TOGGLE_SCRIPT[0],
            "more gibberish",
            TOGGLE_SCRIPT[1],
            TOGGLE_SCRIPT[2],
        ]);
        let result = run_episode("toggle wifi", &planner, &exec, &mut dev, &options()).unwrap();
        assert_eq!(result.status, EpisodeStatus::Complete);
        assert_eq!(dev.succeeded(), Some(true));
    }

    #[test]
    fn dead_device_aborts_immediately() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        dev.set_failing(true);
        let exec = MockExecutor::for_scenario(scenario);
        let planner = scripted_planner(TOGGLE_SCRIPT.to_vec());
        let result = run_episode("g", &planner, &exec, &mut dev, &options()).unwrap();
        assert_eq!(result.status, EpisodeStatus::DeviceError);
        assert_eq!(result.steps, 0);
    }

    #[test]
    fn planner_endpoint_failure_is_recorded() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner = LlmClient::mock(MockEndpoint::failing());
        let result = run_episode("g", &planner, &exec, &mut dev, &options()).unwrap();
        assert_eq!(result.status, EpisodeStatus::EndpointError);
        assert_eq!(result.steps, 0);
    }

    #[test]
    fn success_rate_over_twenty_runs_is_one() {
        let mut successes = 0;
        for _ in 0..20 {
            let scenario = settings_scenario();
            let mut dev = MockDevice::new(scenario.clone()).unwrap();
            let exec = MockExecutor::for_scenario(scenario);
            let planner = scripted_planner(TOGGLE_SCRIPT.to_vec());
            let result =
                run_episode("toggle wifi", &planner, &exec, &mut dev, &options()).unwrap();
            if result.status == EpisodeStatus::Complete && dev.succeeded() == Some(true) {
                successes += 1;
            }
        }
        assert_eq!(successes, 20);
    }

    #[test]
    fn replay_reproduces_final_device_state() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario.clone());
        let planner = scripted_planner(TOGGLE_SCRIPT.to_vec());
        let apps = options().available_apps;
        let result = run_episode("toggle wifi", &planner, &exec, &mut dev, &options()).unwrap();

        let mut fresh = MockDevice::new(scenario.clone()).unwrap();
        let replay_exec = MockExecutor::for_scenario(scenario);
        replay_transcript(&result.transcript, &mut fresh, &replay_exec, &apps).unwrap();
        assert_eq!(fresh.current_screen(), dev.current_screen());
        assert_eq!(fresh.flags(), dev.flags());
        assert_eq!(fresh.typed_text(), dev.typed_text());
    }

    #[test]
    fn two_failed_clicks_appear_in_rendered_history() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::new(|_, _| None);
        let endpoint = Arc::new(MockEndpoint::fixed(
            "Thought: try the toggle\nAction: {\"action_type\":\"click\",\"target\":\"elusive button\"}",
        ));
        let planner =
            LlmClient::new(endpoint.clone(), LlmClient::mock(MockEndpoint::fixed("")).config);
        let opts = EpisodeOptions { max_steps: 3, ..options() };
        let result = run_episode("g", &planner, &exec, &mut dev, &opts).unwrap();
        assert_eq!(result.status, EpisodeStatus::StepLimit);
        assert!(result.transcript.iter().all(|r| !r.execution.ok));

        let calls = endpoint.calls.lock().unwrap();
        let third_prompt = match &calls[2].messages[0].content[0] {
            ContentPart::Text { text } => text.clone(),
            _ => panic!("expected text system message"),
        };
        assert_eq!(third_prompt.matches("failed: grounding failed").count(), 2);
        assert!(third_prompt.contains("step 1:"));
        assert!(third_prompt.contains("step 2:"));
    }

    #[test]
    fn transcript_record_jsonl_shape() {
        let record = TranscriptRecord {
            step: 1,
            screenshot_id: "home#1".into(),
            thought: "open settings".into(),
            action: AgentAction::OpenApp { app_name: "Settings".into() },
            execution: ExecutionOutcome { ok: true, detail: "opened Settings".into() },
            wall_ms: 12,
        };
        let line = serde_json::to_string(&record).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["step"], 1);
        assert_eq!(v["screenshot_id"], "home#1");
        assert_eq!(v["action"]["action_type"], "open_app");
        assert_eq!(v["execution"]["ok"], true);
        assert!(v["wall_ms"].is_u64());
        let back: TranscriptRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn zero_max_steps_is_a_config_error() {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let planner = scripted_planner(TOGGLE_SCRIPT.to_vec());
        let opts = EpisodeOptions { max_steps: 0, ..options() };
        let err = run_episode("g", &planner, &exec, &mut dev, &opts).unwrap_err();
        assert!(matches!(err, AgentError::Config(_)));
    }
}
