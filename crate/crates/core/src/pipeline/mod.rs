//! The dataset pipeline: ground-truth refinement against detected elements,
//! multi-perspective instruction augmentation, verification filtering, and
//! SFT/RL corpus construction.

mod augment;
mod corpus;
mod refine;
mod runner;

pub use augment::{
    augment_instructions, parse_augment_reply, parse_verify_reply, verify_instruction,
    AugmentReply, VerificationResult,
};
pub use corpus::{build_rl_corpus, build_sft_corpus, RlExample, SftCorpus, SftExample};
pub use refine::{refine_gt, DetectedElement, DetectionsRecord, RefineOutcome};
pub use runner::{
    all_pass_endpoint, run_pipeline, PipelineConfig, PipelineOutput, PipelineReport,
    RejectRecord, RetentionStat, VerificationRecord, ALL_PASS_VERIFY_REPLY,
};

use crate::llm::EndpointError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("refinement threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("malformed endpoint reply: {0}")]
    MalformedReply(String),
    #[error("overlay: {0}")]
    Overlay(#[from] crate::overlay::OverlayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad record: {0}")]
    BadRecord(String),
}
