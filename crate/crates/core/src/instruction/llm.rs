//! Client for a chat-completions style model endpoint.
//!
//! Disabled unless `DEFECTFORGE_LLM_URL` is set. The prompt is rendered from
//! a plain-text template with `[system]` and `[user]` sections; a custom
//! template may be supplied through `DEFECTFORGE_PROMPT_TEMPLATE`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mask::DefectType;

pub const DEFAULT_PROMPT: &str = include_str!("../../templates/instruction_prompt.txt");
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MODEL: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CategoryMetadata {
    pub category: String,
    #[serde(default)]
    pub spec_text: String,
    #[serde(default)]
    pub expert_prior: String,
    /// Multi-view image paths, passed through to the model as text.
    #[serde(default)]
    pub images: Vec<String>,
}

impl CategoryMetadata {
    pub fn new(category: impl Into<String>) -> Result<Self> {
        let category = category.into();
        if category.trim().is_empty() {
            return Err(Error::contract("category name must be nonempty"));
        }
        Ok(Self {
            category,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl EndpointConfig {
    /// Reads the endpoint from the environment; `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("DEFECTFORGE_LLM_URL").ok().filter(|u| !u.is_empty())?;
        Some(Self {
            url,
            key: std::env::var("DEFECTFORGE_LLM_KEY").ok().filter(|k| !k.is_empty()),
            model: std::env::var("DEFECTFORGE_LLM_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.into()),
            timeout: DEFAULT_TIMEOUT,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Loads the prompt template named by `DEFECTFORGE_PROMPT_TEMPLATE`, or the
/// built-in one.
pub fn prompt_template() -> Result<String> {
    match std::env::var("DEFECTFORGE_PROMPT_TEMPLATE") {
        Ok(p) if !p.is_empty() => std::fs::read_to_string(Path::new(&p)).map_err(|e| Error::io(p, e)),
        _ => Ok(DEFAULT_PROMPT.to_string()),
    }
}

pub fn render_prompt(template: &str, meta: &CategoryMetadata, requested: DefectType) -> Result<Prompt> {
    let images = if meta.images.is_empty() {
        "(none)".to_string()
    } else {
        meta.images.iter().map(|p| format!("- {p}")).collect::<Vec<_>>().join("\n")
    };
    let or_none = |s: &str| if s.trim().is_empty() { "(none)".to_string() } else { s.to_string() };
    let filled = template
        .replace("{category}", &meta.category)
        .replace("{defect_type}", requested.as_str())
        .replace("{spec_text}", &or_none(&meta.spec_text))
        .replace("{expert_prior}", &or_none(&meta.expert_prior))
        .replace("{images}", &images);
    let (Some(s), Some(u)) = (filled.find("[system]"), filled.find("[user]")) else {
        return Err(Error::Config("prompt template needs [system] and [user] sections".into()));
    };
    if s > u {
        return Err(Error::Config("prompt template must put [system] before [user]".into()));
    }
    Ok(Prompt {
        system: filled[s + "[system]".len()..u].trim().to_string(),
        user: filled[u + "[user]".len()..].trim().to_string(),
    })
}

/// Sends the rendered prompt and returns the first choice's message text.
pub fn mllm_generate(meta: &CategoryMetadata, requested: DefectType, cfg: &EndpointConfig) -> Result<String> {
    let key = cfg
        .key
        .as_deref()
        .ok_or_else(|| Error::Config("DEFECTFORGE_LLM_KEY is not set".into()))?;
    let prompt = render_prompt(&prompt_template()?, meta, requested)?;
    let body = json!({
        "model": cfg.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
    });
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(&cfg.url)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(&body)
        .map_err(|e| Error::Transport(format!("request to {} failed: {e}", cfg.url)))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(Error::Transport(format!("endpoint answered HTTP {}", status.as_u16())));
    }
    let reply: Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| Error::Transport(format!("unreadable response body: {e}")))?;
    reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_sections() {
        let mut meta = CategoryMetadata::new("bracket").unwrap();
        meta.images = vec!["views/front.png".into()];
        let p = render_prompt(DEFAULT_PROMPT, &meta, DefectType::Crack).unwrap();
        assert!(p.system.contains("single JSON object"));
        assert!(p.user.contains("Part category: bracket"));
        assert!(p.user.contains("- views/front.png"));
        assert!(p.user.contains("one realistic crack defect"));
        assert!(render_prompt("no sections", &meta, DefectType::Bump).is_err());
    }

    #[test]
    fn empty_category_rejected() {
        assert!(CategoryMetadata::new("  ").is_err());
    }
}
