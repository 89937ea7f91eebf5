//! Endpoint profile resolution: named HTTP profiles from the config plus
//! `mock:` profiles for deterministic offline runs.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use groundkit_core::llm::{LlmClient, MockEndpoint};
use groundkit_core::pipeline::all_pass_endpoint;

use crate::config::AppConfig;
use crate::CliError;

/// Resolves an endpoint profile string into a client.
///
/// Supported forms:
/// - `mock:allpass`: passes every augmentation and verification request.
/// - `mock:replies:<path>`: JSON array of reply strings, cycled in order.
/// - any other name: an `[endpoints.<name>]` profile from the config file.
pub fn resolve_client(profile: &str, config: &AppConfig) -> Result<LlmClient, CliError> {
    if profile == "mock:allpass" {
        return Ok(LlmClient::mock(all_pass_endpoint()));
    }
    if let Some(path) = profile.strip_prefix("mock:replies:") {
        return replies_client(Path::new(path));
    }
    if let Some(rest) = profile.strip_prefix("mock:") {
        return Err(CliError::Usage(format!("unknown mock endpoint profile: mock:{rest}")));
    }
    let endpoint = config
        .endpoints
        .get(profile)
        .ok_or_else(|| CliError::Usage(format!("endpoint profile {profile:?} not found in config")))?;
    LlmClient::http(endpoint.clone())
        .map_err(|e| CliError::Operational(format!("endpoint {profile:?}: {e}")))
}

fn replies_client(path: &Path) -> Result<LlmClient, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?;
    let replies: Vec<String> = serde_json::from_str(&text)
        .map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?;
    if replies.is_empty() {
        return Err(CliError::Usage(format!("{}: reply list is empty", path.display())));
    }
    let counter = AtomicUsize::new(0);
    Ok(LlmClient::mock(MockEndpoint::new(move |_| {
        let i = counter.fetch_add(1, Ordering::SeqCst) % replies.len();
        Ok(replies[i].clone())
    })))
}
