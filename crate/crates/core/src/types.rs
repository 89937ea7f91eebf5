//! Shared sample types: screenshots, instruction perspectives, and the
//! grounding sample record that flows through the whole toolkit.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

/// The analytical angle an instruction takes when describing a UI element.
///
/// Canonical members are `appearance`, `function`, `spatial` and `goal`,
/// plus `original` for the source dataset's own instruction. The aliases
/// `functionality`, `location` and `intent` are accepted on input and
/// normalized to the canonical names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Original,
    Appearance,
    Function,
    Spatial,
    Goal,
}

impl Perspective {
    /// The four augmented perspectives, in canonical order.
    pub const AUGMENTED: [Perspective; 4] = [
        Perspective::Appearance,
        Perspective::Function,
        Perspective::Spatial,
        Perspective::Goal,
    ];

    /// All five members, `original` first.
    pub const ALL: [Perspective; 5] = [
        Perspective::Original,
        Perspective::Appearance,
        Perspective::Function,
        Perspective::Spatial,
        Perspective::Goal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Perspective::Original => "original",
            Perspective::Appearance => "appearance",
            Perspective::Function => "function",
            Perspective::Spatial => "spatial",
            Perspective::Goal => "goal",
        }
    }

    /// Parses a canonical name or one of the documented aliases.
    pub fn parse(s: &str) -> Option<Perspective> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Some(Perspective::Original),
            "appearance" => Some(Perspective::Appearance),
            "function" | "functionality" => Some(Perspective::Function),
            "spatial" | "location" => Some(Perspective::Spatial),
            "goal" | "intent" => Some(Perspective::Goal),
            _ => None,
        }
    }

    /// Index of an augmented perspective in [`Perspective::AUGMENTED`].
    /// `original` has no index.
    pub fn augmented_index(&self) -> Option<usize> {
        Perspective::AUGMENTED.iter().position(|p| p == self)
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A screenshot reference: dimensions plus a locator for the image payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screenshot {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub image_ref: String,
}

impl Screenshot {
    /// True when `b` lies entirely within this screenshot.
    pub fn contains_box(&self, b: &BBox) -> bool {
        b.is_valid() && b.x_r <= self.width as f64 && b.y_r <= self.height as f64
    }
}

/// A natural-language instruction together with its perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub perspective: Perspective,
}

/// The pipeline's unit of work: a screenshot, a ground-truth box, and the
/// per-perspective instruction texts known for it.
///
/// Serialized as one JSON object per line. Unknown fields are preserved on
/// round-trip via the `extra` map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    pub id: String,
    pub screenshot: Screenshot,
    #[serde(with = "bbox_array")]
    pub gt_bbox: BBox,
    /// Perspective name -> instruction text. `original` is always present.
    pub instructions: BTreeMap<Perspective, String>,
    pub source: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Why a sample (or record) fails validation.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SampleError {
    #[error("sample {0}: missing original instruction")]
    MissingOriginal(String),
    #[error("sample {0}: empty instruction text for perspective {1}")]
    EmptyInstruction(String, Perspective),
    #[error("sample {0}: gt_bbox out of screenshot bounds")]
    BBoxOutOfBounds(String),
    #[error("sample {0}: invalid gt_bbox")]
    InvalidBBox(String),
}

impl GroundingSample {
    /// Checks the record invariants: original instruction present, all texts
    /// non-empty after trimming, and the box inside the screenshot.
    pub fn validate(&self) -> Result<(), SampleError> {
        if !self.gt_bbox.is_valid() {
            return Err(SampleError::InvalidBBox(self.id.clone()));
        }
        if !self.screenshot.contains_box(&self.gt_bbox) {
            return Err(SampleError::BBoxOutOfBounds(self.id.clone()));
        }
        if !self.instructions.contains_key(&Perspective::Original) {
            return Err(SampleError::MissingOriginal(self.id.clone()));
        }
        for (p, text) in &self.instructions {
            if text.trim().is_empty() {
                return Err(SampleError::EmptyInstruction(self.id.clone(), *p));
            }
        }
        Ok(())
    }

    /// Tags of the form `key=value`, parsed into a dimension map.
    /// Bare tags are exposed under the `tag` dimension.
    pub fn tag_dimensions(&self) -> BTreeMap<String, String> {
        let mut dims = BTreeMap::new();
        for t in &self.tags {
            match t.split_once('=') {
                Some((k, v)) => {
                    dims.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    dims.insert("tag".to_string(), t.trim().to_string());
                }
            }
        }
        dims
    }
}

// BBox serializes as the 4-element array [x_l, y_l, x_r, y_r] inside sample
// records; the struct form above is used elsewhere. Custom impls keep the
// JSONL schema exact.
pub mod bbox_array {
    use super::BBox;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &BBox, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(4))?;
        for v in [b.x_l, b.y_l, b.x_r, b.y_r] {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BBox, D::Error> {
        let v = <[f64; 4]>::deserialize(d)?;
        let b = BBox::new(v[0], v[1], v[2], v[3]);
        if v[0] > v[2] || v[1] > v[3] {
            return Err(D::Error::custom("bbox corners out of order"));
        }
        Ok(b)
    }
}
