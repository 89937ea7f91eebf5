//! End-to-end pipeline execution: refine, augment, verify, emit.
//!
//! Endpoint-bound work fans out over a bounded worker pool; results are
//! reassembled in input order so corpus files are deterministic regardless
//! of completion order.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::LlmClient;
use crate::types::{GroundingSample, Instruction, Perspective};

use super::augment::{augment_instructions, verify_instruction, VerificationResult};
use super::refine::{refine_gt, DetectedElement, RefineOutcome};
use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Minimum IoU for a detection to refine/keep the ground truth.
    pub iou_threshold: f64,
    /// Marker name rendered into the augmentation prompt.
    pub annotation_type: String,
    /// Bound on concurrent endpoint calls.
    pub max_in_flight: usize,
    /// Whether original instructions also pass through verification.
    pub verify_original: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iou_threshold: 0.5,
            annotation_type: "rectangle".into(),
            max_in_flight: 4,
            verify_original: true,
        }
    }
}

/// One line of the rejects file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

/// Recorded verification verdict for an emitted instruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub sample_id: String,
    pub perspective: Perspective,
    pub result: VerificationResult,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetentionStat {
    pub generated: usize,
    pub retained: usize,
}

impl RetentionStat {
    pub fn rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.retained as f64 / self.generated as f64
        }
    }
}

/// Counts for one pipeline run. The conservation identity
/// `input = emitted + dropped_refine + augment_failures + fully_rejected_by_verification`
/// accounts for every sample exactly once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub input: usize,
    pub dropped_refine: usize,
    pub augment_failures: usize,
    /// Individual instructions rejected by verification.
    pub verify_rejections: usize,
    /// Samples rejected outright because their original instruction failed
    /// verification.
    pub fully_rejected_by_verification: usize,
    pub emitted: usize,
    pub per_perspective: BTreeMap<Perspective, RetentionStat>,
}

impl PipelineReport {
    pub fn conservation_holds(&self) -> bool {
        self.input
            == self.emitted
                + self.dropped_refine
                + self.augment_failures
                + self.fully_rejected_by_verification
    }
}

/// Everything a pipeline run produces.
#[derive(Debug)]
pub struct PipelineOutput {
    pub emitted: Vec<GroundingSample>,
    pub rejects: Vec<RejectRecord>,
    pub verifications: Vec<VerificationRecord>,
    pub report: PipelineReport,
}

enum SampleOutcome {
    DroppedRefine(RejectRecord),
    AugmentFailed(RejectRecord),
    FullyRejected {
        rejects: Vec<RejectRecord>,
        verify_rejections: usize,
        generated: Vec<Perspective>,
    },
    Emitted {
        sample: Box<GroundingSample>,
        verifications: Vec<VerificationRecord>,
        rejects: Vec<RejectRecord>,
        verify_rejections: usize,
        generated: Vec<Perspective>,
    },
}

/// Runs the full pipeline over `samples`.
///
/// `detections` indexes detected elements by screenshot id; a screenshot
/// with no entry refines against an empty list and is dropped.
pub fn run_pipeline(
    samples: &[GroundingSample],
    detections: &HashMap<String, Vec<DetectedElement>>,
    client: &LlmClient,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    if !(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0) {
        return Err(PipelineError::InvalidThreshold(config.iou_threshold));
    }
    let outcomes = ordered_parallel_map(samples, config.max_in_flight.max(1), |sample| {
        process_sample(sample, detections, client, config)
    });

    let mut out = PipelineOutput {
        emitted: Vec::new(),
        rejects: Vec::new(),
        verifications: Vec::new(),
        report: PipelineReport { input: samples.len(), ..Default::default() },
    };
    for p in Perspective::ALL {
        out.report.per_perspective.insert(p, RetentionStat::default());
    }
    for outcome in outcomes {
        match outcome {
            SampleOutcome::DroppedRefine(r) => {
                out.report.dropped_refine += 1;
                out.rejects.push(r);
            }
            SampleOutcome::AugmentFailed(r) => {
                out.report.augment_failures += 1;
                out.rejects.push(r);
            }
            SampleOutcome::FullyRejected { rejects, verify_rejections, generated } => {
                out.report.fully_rejected_by_verification += 1;
                out.report.verify_rejections += verify_rejections;
                for p in generated {
                    out.report.per_perspective.get_mut(&p).unwrap().generated += 1;
                }
                out.rejects.extend(rejects);
            }
            SampleOutcome::Emitted { sample, verifications, rejects, verify_rejections, generated } => {
                out.report.emitted += 1;
                out.report.verify_rejections += verify_rejections;
                for p in generated {
                    out.report.per_perspective.get_mut(&p).unwrap().generated += 1;
                }
                for p in sample.instructions.keys() {
                    out.report.per_perspective.get_mut(p).unwrap().retained += 1;
                }
                out.verifications.extend(verifications);
                out.rejects.extend(rejects);
                out.emitted.push(*sample);
            }
        }
    }
    debug_assert!(out.report.conservation_holds());
    Ok(out)
}

fn process_sample(
    sample: &GroundingSample,
    detections: &HashMap<String, Vec<DetectedElement>>,
    client: &LlmClient,
    config: &PipelineConfig,
) -> SampleOutcome {
    static EMPTY: Vec<DetectedElement> = Vec::new();
    let dets = detections.get(&sample.screenshot.id).unwrap_or(&EMPTY);
    let outcome = match refine_gt(sample, dets, config.iou_threshold) {
        Ok(o) => o,
        Err(e) => {
            return SampleOutcome::DroppedRefine(RejectRecord {
                id: sample.id.clone(),
                stage: "refine".into(),
                reason: e.to_string(),
            })
        }
    };
    let mut refined = sample.clone();
    match outcome {
        RefineOutcome::Dropped { best_iou } => {
            return SampleOutcome::DroppedRefine(RejectRecord {
                id: sample.id.clone(),
                stage: "refine".into(),
                reason: format!("best IoU {best_iou:.4} below threshold {}", config.iou_threshold),
            });
        }
        RefineOutcome::Refined { new_bbox, .. } => {
            if !refined.screenshot.contains_box(&new_bbox) {
                return SampleOutcome::DroppedRefine(RejectRecord {
                    id: sample.id.clone(),
                    stage: "refine".into(),
                    reason: "refined bbox exceeds screenshot bounds".into(),
                });
            }
            refined.gt_bbox = new_bbox;
        }
        RefineOutcome::Kept { .. } => {}
    }

    let reply = match augment_instructions(&refined, client, &config.annotation_type) {
        Ok(r) => r,
        Err(e) => {
            return SampleOutcome::AugmentFailed(RejectRecord {
                id: sample.id.clone(),
                stage: "augment".into(),
                reason: e.to_string(),
            })
        }
    };
    let generated: Vec<Perspective> = reply.perspectives.keys().copied().collect();

    let mut rejects = Vec::new();
    let mut verifications = Vec::new();
    let mut verify_rejections = 0usize;
    let mut kept = BTreeMap::new();

    let mut candidates: Vec<(Perspective, String)> = Vec::new();
    candidates.push((Perspective::Original, refined.instructions[&Perspective::Original].clone()));
    for (p, text) in &reply.perspectives {
        candidates.push((*p, text.clone()));
    }

    for (perspective, text) in candidates {
        if perspective == Perspective::Original && !config.verify_original {
            kept.insert(perspective, text);
            continue;
        }
        let instruction = Instruction { text: text.clone(), perspective };
        match verify_instruction(&refined, &instruction, client) {
            Ok(result) if result.passed() => {
                verifications.push(VerificationRecord {
                    sample_id: sample.id.clone(),
                    perspective,
                    result,
                });
                kept.insert(perspective, text);
            }
            Ok(result) => {
                verify_rejections += 1;
                rejects.push(RejectRecord {
                    id: sample.id.clone(),
                    stage: "verify".into(),
                    reason: format!(
                        "{perspective}: is_unique={} bbox_ok={}",
                        result.is_unique, result.bbox_ok
                    ),
                });
            }
            Err(e) => {
                verify_rejections += 1;
                rejects.push(RejectRecord {
                    id: sample.id.clone(),
                    stage: "verify".into(),
                    reason: format!("{perspective}: {e}"),
                });
            }
        }
    }

    if !kept.contains_key(&Perspective::Original) {
        return SampleOutcome::FullyRejected { rejects, verify_rejections, generated };
    }
    refined.instructions = kept;
    SampleOutcome::Emitted {
        sample: Box::new(refined),
        verifications,
        rejects,
        verify_rejections,
        generated,
    }
}

pub const ALL_PASS_VERIFY_REPLY: &str = r#"{"instruction_evaluation":{"reasoning":"unique","is_unique":true},"bbox_evaluation":{"reasoning":"tight","is_appropriately_sized":true}}"#;

const ALL_PASS_AUGMENT_REPLY: &str = r#"{"chinese_translation":"zh","appearance_based":"the red icon","function_based":"opens settings","spatial_based":"top right corner","goal_based":"change preferences"}"#;

/// Scripted endpoint that answers every augmentation request with four fixed
/// texts and every verification request with a pass. Used for deterministic
/// fixture runs (`--endpoint-profile mock:allpass`) and tests.
pub fn all_pass_endpoint() -> crate::llm::MockEndpoint {
    crate::llm::MockEndpoint::new(|req| {
        let text = req.last_user_text();
        if text.contains("Quality Evaluation of a GUI Grounding Datum") {
            Ok(ALL_PASS_VERIFY_REPLY.to_string())
        } else {
            Ok(ALL_PASS_AUGMENT_REPLY.to_string())
        }
    })
}

/// Maps `f` over `items` with at most `workers` threads, returning results
/// in input order.
fn ordered_parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if items.is_empty() {
        return Vec::new();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap().expect("worker filled slot")).collect()
}
