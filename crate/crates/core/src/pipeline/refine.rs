//! IoU-based refinement of ground-truth boxes against externally detected
//! UI elements.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};
use crate::types::GroundingSample;

use super::PipelineError;

/// One externally detected UI element on a screenshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedElement {
    #[serde(with = "crate::types::bbox_array")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Detections JSONL record: all elements found on one screenshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionsRecord {
    pub screenshot_id: String,
    pub elements: Vec<DetectedElement>,
}

/// Result of matching a ground-truth box against the detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RefineOutcome {
    /// Best detection clears the threshold and differs from the gt box; the
    /// detection's box substitutes the annotation.
    Refined {
        #[serde(with = "crate::types::bbox_array")]
        new_bbox: BBox,
        matched_iou: f64,
    },
    /// Best detection clears the threshold and is identical to the gt box.
    Kept { matched_iou: f64 },
    /// No detection reaches the threshold; the sample is filtered out.
    Dropped { best_iou: f64 },
}

/// Matches `sample.gt_bbox` against the detections by maximal IoU.
///
/// Ties break toward the smaller-area detection, then lexicographic box
/// order, so the outcome is deterministic regardless of input order.
pub fn refine_gt(
    sample: &GroundingSample,
    detections: &[DetectedElement],
    threshold: f64,
) -> Result<RefineOutcome, PipelineError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PipelineError::InvalidThreshold(threshold));
    }
    let gt = sample.gt_bbox;
    let mut best: Option<(&DetectedElement, f64)> = None;
    for det in detections {
        let v = iou(gt, det.bbox);
        let better = match best {
            None => true,
            Some((cur, cur_iou)) => {
                if v != cur_iou {
                    v > cur_iou
                } else if det.bbox.area() != cur.bbox.area() {
                    det.bbox.area() < cur.bbox.area()
                } else {
                    det.bbox.lex_cmp(&cur.bbox) == std::cmp::Ordering::Less
                }
            }
        };
        if better {
            best = Some((det, v));
        }
    }
    Ok(match best {
        None => RefineOutcome::Dropped { best_iou: 0.0 },
        Some((det, v)) if v >= threshold => {
            if det.bbox == gt {
                RefineOutcome::Kept { matched_iou: v }
            } else {
                RefineOutcome::Refined { new_bbox: det.bbox, matched_iou: v }
            }
        }
        Some((_, v)) => RefineOutcome::Dropped { best_iou: v },
    })
}
