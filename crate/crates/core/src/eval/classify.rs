//! Reasoning-perspective classification against the ten-class taxonomy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::llm::{ContentPart, LlmClient};
use crate::prompts::{REASONING_TAXONOMY, TAXONOMY_TAGS};

use super::EvalError;

/// Taxonomy tags assigned to one model response. Tags outside the taxonomy
/// are kept separately so the response is flagged rather than dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTagSet {
    pub response_id: String,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_tags: Vec<String>,
}

impl ReasoningTagSet {
    pub fn flagged(&self) -> bool {
        !self.unknown_tags.is_empty()
    }
}

fn classification_prompt(response_text: &str) -> String {
    format!(
        "You classify the reasoning in a GUI grounding response against a fixed \
taxonomy of reasoning perspectives.\n\n{REASONING_TAXONOMY}\n\
Assign every applicable class to the response below, using the abbreviations. \
A response may combine several perspectives. Reply with a JSON object \
{{\"tags\": [\"...\"]}} as the very last part of your answer.\n\n\
Response to classify:\n{response_text}\n"
    )
}

/// Classifies each `(id, response_text)` pair with one endpoint call at
/// temperature 0.
pub fn classify_reasoning(
    responses: &[(String, String)],
    client: &LlmClient,
) -> Result<Vec<ReasoningTagSet>, EvalError> {
    let mut out = Vec::with_capacity(responses.len());
    for (id, text) in responses {
        let req = client
            .request_at(0.0)
            .user(vec![ContentPart::Text { text: classification_prompt(text) }]);
        let raw = client.complete(&req)?;
        let obj = crate::llm::last_json_object(&raw)
            .ok_or_else(|| EvalError::MalformedReply(format!("{id}: no terminal JSON")))?;
        let listed = obj
            .get("tags")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EvalError::MalformedReply(format!("{id}: no tags array")))?;
        let mut tags = Vec::new();
        let mut unknown_tags = Vec::new();
        for v in listed {
            let tag = v
                .as_str()
                .ok_or_else(|| EvalError::MalformedReply(format!("{id}: non-string tag")))?
                .trim()
                .to_ascii_lowercase();
            if TAXONOMY_TAGS.contains(&tag.as_str()) {
                if !tags.contains(&tag) {
                    tags.push(tag);
                }
            } else {
                unknown_tags.push(tag);
            }
        }
        out.push(ReasoningTagSet { response_id: id.clone(), tags, unknown_tags });
    }
    Ok(out)
}

/// Tag frequency over a classified set, taxonomy order not guaranteed.
pub fn tag_histogram(sets: &[ReasoningTagSet]) -> BTreeMap<String, usize> {
    let mut hist = BTreeMap::new();
    for set in sets {
        for tag in &set.tags {
            *hist.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    hist
}
