//! Evaluation of grounding predictions: response parsing, point-in-box
//! accuracy with grouped reports, endpoint querying, the per-sample
//! best-of-perspectives oracle, and reasoning-perspective classification.

mod classify;
mod ground;
mod oracle;
mod parse;
mod report;

pub use classify::{classify_reasoning, tag_histogram, ReasoningTagSet};
pub use ground::ground;
pub use oracle::{oracle_combined, CorrectnessMatrix, OracleSummary};
pub use parse::{parse_response, ParseFailReason, ParsedResponse};
pub use report::{accuracy, grouped_report, EvalReport, GroupStat, Prediction};

use crate::llm::EndpointError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("no ground truth for sample {0}")]
    MissingGroundTruth(String),
    #[error("unknown group key {0:?}")]
    UnknownGroupKey(String),
    #[error("correctness matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("image: {0}")]
    Image(String),
    #[error("malformed classifier reply: {0}")]
    MalformedReply(String),
}
