//! Core library for a GUI-grounding toolkit: geometry and metrics, dataset
//! pipeline, evaluation, a toy policy-optimization testbed, and a mobile
//! agent protocol.

pub mod agent;
pub mod eval;
pub mod geometry;
pub mod grpo;
pub mod jsonl;
pub mod llm;
pub mod overlay;
pub mod pipeline;
pub mod prompts;
pub mod types;

pub use geometry::{iou, point_in_box, BBox, Point};
pub use types::{GroundingSample, Instruction, Perspective, Screenshot};
