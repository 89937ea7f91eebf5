//! Versioned prompt assets and their placeholder rendering.
//!
//! The assets live under `assets/` and are embedded at compile time so a
//! deployed binary cannot drift from the text it was tested with.

/// Instruction augmentation prompt. Placeholders: `<annotation_type>`,
/// `<instruction_here>`.
pub const AUGMENT_PROMPT: &str = include_str!("../assets/augment_prompt.txt");

/// Instruction/bbox verification prompt. Placeholder: `<instruction_here>`.
pub const VERIFY_PROMPT: &str = include_str!("../assets/verify_prompt.txt");

/// Grounding system prompt with the four perspective descriptions.
/// Placeholders: `{height}`, `{width}`.
pub const SFT_SYSTEM_PROMPT: &str = include_str!("../assets/sft_system_prompt.txt");

/// Grounding system prompt that only asks the model to think first.
/// Placeholders: `{height}`, `{width}`.
pub const RL_SYSTEM_PROMPT: &str = include_str!("../assets/rl_system_prompt.txt");

/// Planner system prompt for the phone-control loop.
/// Placeholders: `{goal}`, `{history}`, `{available_apps}`.
pub const PLANNER_SYSTEM_PROMPT: &str = include_str!("../assets/planner_system_prompt.txt");

/// The ten-class reasoning-perspective taxonomy, verbatim.
pub const REASONING_TAXONOMY: &str = include_str!("../assets/reasoning_taxonomy.txt");

/// Taxonomy abbreviations, in definition order.
pub const TAXONOMY_TAGS: [&str; 10] = [
    "app", "func", "loc", "intent", "struct", "state", "ctype", "seq", "salience", "a11y",
];

pub fn render_augment_prompt(annotation_type: &str, instruction: &str) -> String {
    AUGMENT_PROMPT
        .replace("<annotation_type>", annotation_type)
        .replace("<instruction_here>", instruction)
}

pub fn render_verify_prompt(instruction: &str) -> String {
    VERIFY_PROMPT.replace("<instruction_here>", instruction)
}

/// Which grounding system prompt to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingTemplate {
    /// Four perspective descriptions spelled out.
    Sft,
    /// Open-ended "think" prompt, no perspective list.
    Rl,
}

pub fn render_grounding_system(template: GroundingTemplate, width: u32, height: u32) -> String {
    let body = match template {
        GroundingTemplate::Sft => SFT_SYSTEM_PROMPT,
        GroundingTemplate::Rl => RL_SYSTEM_PROMPT,
    };
    body.replace("{height}", &height.to_string()).replace("{width}", &width.to_string())
}
