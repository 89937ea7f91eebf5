//! Action execution: grounding click targets to points and driving the
//! device, with failures folded into results the planner can see.

use std::time::Duration;

use base64::Engine;

use super::action::AgentAction;
use super::device::{DeviceAdapter, DeviceError, MockScenario};
use super::AgentError;
use crate::geometry::Point;
use crate::llm::{ContentPart, LlmClient};
use crate::prompts::{render_grounding_system, GroundingTemplate};
use crate::types::Screenshot;

/// Resolves a target description to a point on the current screen.
pub trait GroundingExecutor {
    fn ground_target(
        &self,
        screen: &Screenshot,
        target: &str,
    ) -> Result<Option<Point>, AgentError>;
}

/// Grounds through a vision-language endpoint using the open-ended "think"
/// grounding prompt.
pub struct LlmExecutor {
    pub client: LlmClient,
}

impl LlmExecutor {
    pub fn new(client: LlmClient) -> Self {
        LlmExecutor { client }
    }
}

impl GroundingExecutor for LlmExecutor {
    fn ground_target(
        &self,
        screen: &Screenshot,
        target: &str,
    ) -> Result<Option<Point>, AgentError> {
        let system = render_grounding_system(GroundingTemplate::Rl, screen.width, screen.height);
        let mut content = vec![ContentPart::Text { text: target.to_string() }];
        if self.client.needs_images() {
            let bytes = std::fs::read(&screen.image_ref)
                .map_err(|e| AgentError::Config(format!("{}: {e}", screen.image_ref)))?;
            content.push(ContentPart::Image {
                data: base64::engine::general_purpose::STANDARD.encode(bytes),
            });
        }
        let req = self.client.request().system(system).user(content);
        let raw = self.client.complete(&req).map_err(AgentError::Grounding)?;
        Ok(crate::eval::parse_response(&raw).point)
    }
}

/// Scripted grounding for tests: a closure over (screen, target).
pub struct MockExecutor {
    #[allow(clippy::type_complexity)]
    ground_fn: Box<dyn Fn(&Screenshot, &str) -> Option<Point> + Send + Sync>,
}

impl MockExecutor {
    pub fn new<F>(ground_fn: F) -> Self
    where
        F: Fn(&Screenshot, &str) -> Option<Point> + Send + Sync + 'static,
    {
        MockExecutor { ground_fn: Box::new(ground_fn) }
    }

    /// Grounds against a scenario's named regions, reading the screen name
    /// from the mock screenshot id.
    pub fn for_scenario(scenario: MockScenario) -> Self {
        MockExecutor::new(move |screen, target| {
            scenario.region_center(MockScenario::screen_of_shot(&screen.id), target)
        })
    }
}

impl GroundingExecutor for MockExecutor {
    fn ground_target(
        &self,
        screen: &Screenshot,
        target: &str,
    ) -> Result<Option<Point>, AgentError> {
        Ok((self.ground_fn)(screen, target))
    }
}

/// Outcome of executing one action. `new_screen` is the post-action
/// screenshot when a device action ran, `None` for pure bookkeeping actions
/// and failed attempts that never touched the device.
#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub ok: bool,
    pub detail: String,
    pub new_screen: Option<Screenshot>,
}

impl ExecutionResult {
    fn ok_with(detail: impl Into<String>, screen: Screenshot) -> Self {
        ExecutionResult { ok: true, detail: detail.into(), new_screen: Some(screen) }
    }

    fn failed(detail: impl Into<String>) -> Self {
        ExecutionResult { ok: false, detail: detail.into(), new_screen: None }
    }
}

fn ground_or_fail(
    executor: &dyn GroundingExecutor,
    screen: &Screenshot,
    target: &str,
) -> Result<Result<Point, ExecutionResult>, AgentError> {
    match executor.ground_target(screen, target)? {
        Some(p) => Ok(Ok(p)),
        None => Ok(Err(ExecutionResult::failed(format!("grounding failed: no match for {target:?}")))),
    }
}

/// Executes one planner action.
///
/// Grounding misses and unavailable apps come back as `ok = false` so the
/// planner sees them in history; device errors propagate and abort the
/// episode. Every completed device action is followed by a fresh screenshot.
pub fn execute(
    action: &AgentAction,
    device: &mut dyn DeviceAdapter,
    executor: &dyn GroundingExecutor,
    screen: &Screenshot,
    available_apps: &[String],
    wait: Duration,
) -> Result<ExecutionResult, AgentError> {
    Ok(match action {
        AgentAction::OpenApp { app_name } => {
            if !available_apps.iter().any(|a| a == app_name) {
                return Ok(ExecutionResult::failed(format!("app not available: {app_name:?}")));
            }
            match device.open_app(app_name) {
                Ok(()) => ExecutionResult::ok_with(format!("opened {app_name}"), device.screenshot()?),
                Err(DeviceError::UnknownApp(name)) => {
                    ExecutionResult::failed(format!("device cannot open {name:?}"))
                }
                Err(e) => return Err(e.into()),
            }
        }
        AgentAction::Click { target } => match ground_or_fail(executor, screen, target)? {
            Err(fail) => fail,
            Ok(p) => {
                device.tap(p)?;
                ExecutionResult::ok_with(format!("tapped ({:.0}, {:.0})", p.x, p.y), device.screenshot()?)
            }
        },
        AgentAction::LongPress { target } => match ground_or_fail(executor, screen, target)? {
            Err(fail) => fail,
            Ok(p) => {
                device.long_press(p)?;
                ExecutionResult::ok_with(
                    format!("long-pressed ({:.0}, {:.0})", p.x, p.y),
                    device.screenshot()?,
                )
            }
        },
        AgentAction::InputText { text, target } => match ground_or_fail(executor, screen, target)? {
            Err(fail) => fail,
            Ok(p) => {
                device.tap(p)?;
                device.type_text(text)?;
                ExecutionResult::ok_with(format!("typed into {target:?}"), device.screenshot()?)
            }
        },
        AgentAction::Answer { text } => {
            ExecutionResult { ok: true, detail: format!("answered: {text}"), new_screen: None }
        }
        AgentAction::NavigateHome => {
            device.key_home()?;
            ExecutionResult::ok_with("navigated home", device.screenshot()?)
        }
        AgentAction::NavigateBack => {
            device.key_back()?;
            ExecutionResult::ok_with("navigated back", device.screenshot()?)
        }
        AgentAction::Scroll { direction } => {
            device.swipe(direction.inverse())?;
            ExecutionResult::ok_with(format!("scrolled {direction:?}"), device.screenshot()?)
        }
        AgentAction::Status { status } => {
            ExecutionResult { ok: true, detail: format!("status: {status:?}"), new_screen: None }
        }
        AgentAction::Wait => {
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
            ExecutionResult::ok_with("waited", device.screenshot()?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::action::{ScrollDirection, TaskStatus};
    use crate::agent::device::{settings_scenario, DeviceCall, MockDevice};
    use crate::llm::MockEndpoint;

    fn apps() -> Vec<String> {
        vec!["Settings".to_string()]
    }

    fn setup() -> (MockDevice, MockExecutor, Screenshot) {
        let scenario = settings_scenario();
        let mut dev = MockDevice::new(scenario.clone()).unwrap();
        let exec = MockExecutor::for_scenario(scenario);
        let screen = dev.screenshot().unwrap();
        dev.calls.clear();
        (dev, exec, screen)
    }

    #[test]
    fn click_taps_grounded_point() {
        let (mut dev, _, _) = setup();
        dev.open_app("Settings").unwrap();
        let screen = dev.screenshot().unwrap();
        dev.calls.clear();
        let exec = MockExecutor::new(|_, _| Some(Point::new(900.0, 50.0)));
        let action = AgentAction::Click { target: "blue circle button at top-right".into() };
        let result =
            execute(&action, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(result.ok);
        assert_eq!(dev.calls[0], DeviceCall::Tap { x: 900.0, y: 50.0 });
        assert!(result.new_screen.is_some());
    }

    #[test]
    fn scroll_down_swipes_up() {
        let (mut dev, exec, screen) = setup();
        let action = AgentAction::Scroll { direction: ScrollDirection::Down };
        let result = execute(&action, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(result.ok);
        assert_eq!(dev.calls[0], DeviceCall::Swipe { direction: ScrollDirection::Up });
    }

    #[test]
    fn answer_and_status_touch_no_device() {
        let (mut dev, exec, screen) = setup();
        let answer = AgentAction::Answer { text: "It's 25 degrees today.".into() };
        let result = execute(&answer, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(result.ok);
        assert_eq!(result.detail, "answered: It's 25 degrees today.");
        let status = AgentAction::Status { status: TaskStatus::Complete };
        execute(&status, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(dev.calls.is_empty());
    }

    #[test]
    fn input_text_taps_then_types() {
        let (mut dev, _, _) = setup();
        dev.open_app("Settings").unwrap();
        let screen = dev.screenshot().unwrap();
        dev.calls.clear();
        let exec = MockExecutor::new(|_, _| Some(Point::new(10.0, 10.0)));
        let action = AgentAction::InputText { text: "Hello".into(), target: "message input box".into() };
        let result = execute(&action, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(result.ok);
        assert_eq!(dev.calls[0], DeviceCall::Tap { x: 10.0, y: 10.0 });
        assert_eq!(dev.calls[1], DeviceCall::TypeText { text: "Hello".into() });
    }

    #[test]
    fn unavailable_app_fails_without_device_call() {
        let (mut dev, exec, screen) = setup();
        let action = AgentAction::OpenApp { app_name: "Minesweeper".into() };
        let result = execute(&action, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(!result.ok);
        assert!(result.detail.contains("not available"));
        assert!(dev.calls.is_empty());
    }

    #[test]
    fn grounding_miss_fails_without_tap() {
        let (mut dev, exec, screen) = setup();
        let action = AgentAction::Click { target: "nonexistent widget".into() };
        let result = execute(&action, &mut dev, &exec, &screen, &apps(), Duration::ZERO).unwrap();
        assert!(!result.ok);
        assert!(result.detail.contains("grounding failed"));
        assert!(dev.calls.is_empty());
    }

    #[test]
    fn llm_executor_parses_grounding_reply() {
        let reply = "<think>\nfound it\n</think>\n<tool_call>\n{\"name\":\"grounding\",\"arguments\":{\"action\":\"click\",\"coordinate\":[588,67]}}\n</tool_call>";
        let exec = LlmExecutor::new(LlmClient::mock(MockEndpoint::fixed(reply)));
        let screen = Screenshot { id: "s".into(), width: 1080, height: 1920, image_ref: "mock://s".into() };
        let p = exec.ground_target(&screen, "the red icon").unwrap().unwrap();
        assert_eq!((p.x, p.y), (588.0, 67.0));
    }

    #[test]
    fn llm_executor_endpoint_failure_propagates() {
        let exec = LlmExecutor::new(LlmClient::mock(MockEndpoint::failing()));
        let screen = Screenshot { id: "s".into(), width: 1080, height: 1920, image_ref: "mock://s".into() };
        let err = exec.ground_target(&screen, "x").unwrap_err();
        assert!(matches!(err, AgentError::Grounding(_)));
    }
}
