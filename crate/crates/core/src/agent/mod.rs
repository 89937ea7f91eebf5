//! Planner/executor loop for phone control: the ten-action schema, planner
//! prompt rendering, grounded click execution, episode state, and a
//! scriptable mock device.

mod action;
mod device;
mod episode;
mod executor;
mod prompt;

pub use action::{
    parse_action, parse_planner_turn, AgentAction, JsonMode, MalformedReason, PlannerTurn,
    ScrollDirection, TaskStatus, DEFAULT_AVAILABLE_APPS,
};
pub use device::{
    DeviceAdapter, DeviceCall, DeviceError, MockDevice, MockScenario, RegionSpec, ScreenSpec,
    SuccessPredicate,
};
pub use episode::{
    replay_transcript, run_episode, EpisodeOptions, EpisodeResult, EpisodeStatus,
    ExecutionOutcome, TranscriptRecord,
};
pub use executor::{execute, ExecutionResult, GroundingExecutor, LlmExecutor, MockExecutor};
pub use prompt::{render_planner_prompt, HistoryEntry};

use crate::llm::EndpointError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("malformed planner turn ({reason:?}): {detail}")]
    MalformedTurn { reason: MalformedReason, detail: String },
    #[error("device: {0}")]
    Device(#[from] DeviceError),
    #[error("planner endpoint: {0}")]
    Planner(EndpointError),
    #[error("grounding endpoint: {0}")]
    Grounding(EndpointError),
    #[error("config: {0}")]
    Config(String),
}
