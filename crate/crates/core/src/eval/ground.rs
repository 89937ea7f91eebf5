//! Querying a grounding-model endpoint for one sample.

use std::time::Instant;

use base64::Engine;

use crate::llm::{ContentPart, LlmClient};
use crate::prompts::{render_grounding_system, GroundingTemplate};
use crate::types::{GroundingSample, Instruction};

use super::parse::ParseFailReason;
use super::report::Prediction;
use super::EvalError;

fn raw_screenshot_part(sample: &GroundingSample) -> Result<ContentPart, EvalError> {
    let bytes = std::fs::read(&sample.screenshot.image_ref)
        .map_err(|e| EvalError::Image(format!("{}: {e}", sample.screenshot.image_ref)))?;
    Ok(ContentPart::Image { data: base64::engine::general_purpose::STANDARD.encode(bytes) })
}

/// Sends the screenshot and instruction to the endpoint and parses the reply.
///
/// Endpoint failures after retries are folded into the returned prediction
/// with `fail_reason = endpoint_error`; only image loading errors propagate.
pub fn ground(
    sample: &GroundingSample,
    instruction: &Instruction,
    template: GroundingTemplate,
    client: &LlmClient,
) -> Result<Prediction, EvalError> {
    let system = render_grounding_system(
        template,
        sample.screenshot.width,
        sample.screenshot.height,
    );
    let mut content = vec![ContentPart::Text { text: instruction.text.clone() }];
    if client.needs_images() {
        content.push(raw_screenshot_part(sample)?);
    }
    let req = client.request().system(system).user(content);
    let started = Instant::now();
    let outcome = client.complete(&req);
    let latency = started.elapsed().as_secs_f64();
    Ok(match outcome {
        Ok(raw) => Prediction::from_raw(&sample.id, instruction.perspective, raw, latency),
        Err(e) => Prediction {
            sample_id: sample.id.clone(),
            perspective_used: instruction.perspective,
            raw_response: e.to_string(),
            parsed_point: None,
            fail_reason: Some(ParseFailReason::EndpointError),
            reasoning_text: None,
            latency,
        },
    })
}
