//! Instruction augmentation and verification against an LLM endpoint.
//!
//! Both calls send the screenshot with the ground-truth annotation overlaid
//! (red rectangle at the box, blue hollow circle at its center). Endpoints
//! that do not consume images (scripted mocks) skip the overlay step.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{last_json_object, ContentPart, LlmClient};
use crate::overlay::overlay_base64_png;
use crate::prompts::{render_augment_prompt, render_verify_prompt};
use crate::types::{GroundingSample, Instruction, Perspective};

use super::PipelineError;

/// Parsed augmentation reply: the four perspective texts plus the translated
/// original, which is stored but unused downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentReply {
    pub perspectives: BTreeMap<Perspective, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chinese_translation: Option<String>,
    pub raw_response: String,
}

/// Outcome of the GPT verification step for one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub is_unique: bool,
    pub bbox_ok: bool,
    pub instruction_reasoning: String,
    pub bbox_reasoning: String,
    pub raw_response: String,
}

impl VerificationResult {
    /// An instruction passes iff it is unique and the box is well-sized.
    pub fn passed(&self) -> bool {
        self.is_unique && self.bbox_ok
    }
}

fn image_part(sample: &GroundingSample) -> Result<ContentPart, PipelineError> {
    let data = overlay_base64_png(Path::new(&sample.screenshot.image_ref), sample.gt_bbox)?;
    Ok(ContentPart::Image { data })
}

// Accepted key spellings for each generated category, first match wins.
const CATEGORY_KEYS: [(Perspective, [&str; 3]); 4] = [
    (Perspective::Appearance, ["appearance_based", "appearance", "appearance-based"]),
    (Perspective::Function, ["function_based", "function", "functionality"]),
    (Perspective::Spatial, ["spatial_based", "spatial", "location"]),
    (Perspective::Goal, ["goal_based", "goal", "intent"]),
];

/// Asks the endpoint for the four perspective rewrites of the sample's
/// original instruction.
///
/// `annotation_type` names the visual marker rendered on the screenshot
/// (e.g. "bounding box" or "circle").
pub fn augment_instructions(
    sample: &GroundingSample,
    client: &LlmClient,
    annotation_type: &str,
) -> Result<AugmentReply, PipelineError> {
    let original = sample
        .instructions
        .get(&Perspective::Original)
        .ok_or_else(|| PipelineError::BadRecord(format!("sample {}: no original instruction", sample.id)))?;
    let prompt = render_augment_prompt(annotation_type, original);
    let mut content = vec![ContentPart::Text { text: prompt }];
    if client.needs_images() {
        content.push(image_part(sample)?);
    }
    let req = client.request().user(content);
    let raw = client.complete(&req)?;
    parse_augment_reply(&raw)
}

/// Parses an augmentation reply: the terminal JSON object must carry all
/// four categories with non-empty texts.
pub fn parse_augment_reply(raw: &str) -> Result<AugmentReply, PipelineError> {
    let obj = last_json_object(raw)
        .ok_or_else(|| PipelineError::MalformedReply("no terminal JSON object".into()))?;
    let map = obj.as_object().expect("last_json_object returns objects");
    let mut perspectives = BTreeMap::new();
    for (perspective, keys) in CATEGORY_KEYS {
        let text = keys
            .iter()
            .find_map(|k| map.get(*k).and_then(|v| v.as_str()))
            .map(str::trim)
            .filter(|t| !t.is_empty());
        match text {
            Some(t) => {
                perspectives.insert(perspective, t.to_string());
            }
            None => {
                return Err(PipelineError::MalformedReply(format!(
                    "missing category {}",
                    perspective
                )))
            }
        }
    }
    let chinese_translation = ["chinese_translation", "translation", "original_instruction_chinese"]
        .iter()
        .find_map(|k| map.get(*k).and_then(|v| v.as_str()))
        .map(|s| s.to_string());
    Ok(AugmentReply { perspectives, chinese_translation, raw_response: raw.to_string() })
}

/// Verifies one instruction against the annotated screenshot.
pub fn verify_instruction(
    sample: &GroundingSample,
    instruction: &Instruction,
    client: &LlmClient,
) -> Result<VerificationResult, PipelineError> {
    let prompt = render_verify_prompt(&instruction.text);
    let mut content = vec![ContentPart::Text { text: prompt }];
    if client.needs_images() {
        content.push(image_part(sample)?);
    }
    let req = client.request().user(content);
    let raw = client.complete(&req)?;
    parse_verify_reply(&raw)
}

/// Parses the verifier's terminal JSON object.
pub fn parse_verify_reply(raw: &str) -> Result<VerificationResult, PipelineError> {
    let obj = last_json_object(raw)
        .ok_or_else(|| PipelineError::MalformedReply("no terminal JSON object".into()))?;
    let is_unique = obj
        .pointer("/instruction_evaluation/is_unique")
        .and_then(|v| v.as_bool())
        .ok_or_else(|| PipelineError::MalformedReply("missing instruction_evaluation.is_unique".into()))?;
    let bbox_ok = obj
        .pointer("/bbox_evaluation/is_appropriately_sized")
        .and_then(|v| v.as_bool())
        .ok_or_else(|| {
            PipelineError::MalformedReply("missing bbox_evaluation.is_appropriately_sized".into())
        })?;
    let instruction_reasoning = obj
        .pointer("/instruction_evaluation/reasoning")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let bbox_reasoning = obj
        .pointer("/bbox_evaluation/reasoning")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    Ok(VerificationResult {
        is_unique,
        bbox_ok,
        instruction_reasoning,
        bbox_reasoning,
        raw_response: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockEndpoint;
    use crate::types::Screenshot;

    fn sample() -> GroundingSample {
        let mut instructions = BTreeMap::new();
        instructions.insert(
            Perspective::Original,
            "Click on the CSDN bookmark in the bookmarks bar".to_string(),
        );
        GroundingSample {
            id: "s".into(),
            screenshot: Screenshot { id: "sh".into(), width: 1920, height: 1080, image_ref: "missing.png".into() },
            gt_bbox: crate::geometry::BBox::new(560.0, 50.0, 620.0, 85.0),
            instructions,
            source: "t".into(),
            tags: vec![],
            extra: serde_json::Map::new(),
        }
    }

    const FULL_REPLY: &str = r#"{
        "original_instruction": "Click on the CSDN bookmark in the bookmarks bar",
        "chinese_translation": "Click CSDN (zh)",
        "appearance_based": "Click the bookmark with the red 'C' icon and the label 'CSDN' in the bookmarks bar",
        "function_based": "Click the bookmark that opens the CSDN website",
        "spatial_based": "Click the bookmark to the right of the address bar star",
        "goal_based": "Open the CSDN developer site"
    }"#;

    #[test]
    fn augment_parses_four_categories() {
        let client = LlmClient::mock(MockEndpoint::fixed(FULL_REPLY));
        let reply = augment_instructions(&sample(), &client, "rectangle").unwrap();
        assert_eq!(reply.perspectives.len(), 4);
        assert_eq!(
            reply.perspectives[&Perspective::Appearance],
            "Click the bookmark with the red 'C' icon and the label 'CSDN' in the bookmarks bar"
        );
        assert_eq!(reply.chinese_translation.as_deref(), Some("Click CSDN (zh)"));
    }

    #[test]
    fn augment_missing_category_is_malformed() {
        let reply = r#"{"appearance_based":"a","function_based":"b","spatial_based":"c"}"#;
        let client = LlmClient::mock(MockEndpoint::fixed(reply));
        let err = augment_instructions(&sample(), &client, "rectangle").unwrap_err();
        assert!(matches!(err, PipelineError::MalformedReply(_)));
    }

    #[test]
    fn augment_endpoint_failure_propagates() {
        let client = LlmClient::mock(MockEndpoint::failing());
        let err = augment_instructions(&sample(), &client, "rectangle").unwrap_err();
        assert!(matches!(err, PipelineError::Endpoint(_)));
    }

    #[test]
    fn verify_parses_pass_and_fail() {
        let pass = r#"{"instruction_evaluation":{"reasoning":"unique","is_unique":true},"bbox_evaluation":{"reasoning":"tight","is_appropriately_sized":true}}"#;
        let client = LlmClient::mock(MockEndpoint::fixed(pass));
        let instr = Instruction { text: "click it".into(), perspective: Perspective::Appearance };
        let v = verify_instruction(&sample(), &instr, &client).unwrap();
        assert!(v.passed());
        assert_eq!(v.instruction_reasoning, "unique");

        let fail = r#"{"instruction_evaluation":{"reasoning":"two matches","is_unique":false},"bbox_evaluation":{"reasoning":"ok","is_appropriately_sized":true}}"#;
        let v = parse_verify_reply(fail).unwrap();
        assert!(!v.passed());
    }

    #[test]
    fn verify_takes_terminal_json_after_prose() {
        let raw = "Step 1 reasoning: the {instruction} looks unique to me.\n\nFinal answer:\n{\"instruction_evaluation\":{\"reasoning\":\"r1\",\"is_unique\":true},\"bbox_evaluation\":{\"reasoning\":\"r2\",\"is_appropriately_sized\":false}}";
        let v = parse_verify_reply(raw).unwrap();
        assert!(v.is_unique);
        assert!(!v.bbox_ok);
        assert!(!v.passed());
    }

    #[test]
    fn verify_missing_booleans_is_malformed() {
        let raw = r#"{"instruction_evaluation":{"reasoning":"r"}}"#;
        assert!(matches!(parse_verify_reply(raw), Err(PipelineError::MalformedReply(_))));
    }
}
