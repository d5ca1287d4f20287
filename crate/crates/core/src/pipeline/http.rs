//! HTTP backends for the real generation services.
//!
//! Request bodies come from [`super::prompt`]; endpoints and the bearer token
//! come from configuration, since the services only define body shapes.

use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

use super::backend::{ChatBackend, ImageBackend, Model3dBackend, RemoteJob, RemoteStatus};
use super::prompt::{build_extract_prompt, PromptSpec};
use super::{AssetRef, PipelineError};

pub const API_KEY_ENV: &str = "PIPELINE_API_KEY";

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

fn transport(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Backend(e.to_string())
}

impl HttpClient {
    pub fn new(api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpClient { agent, api_key }
    }

    /// Reads the bearer token from `PIPELINE_API_KEY`.
    pub fn from_env() -> Self {
        Self::new(std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn post_json(&self, url: &str, body: &str) -> Result<Value, PipelineError> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(transport)?;
        response.body_mut().read_json().map_err(transport)
    }

    pub fn get_json(&self, url: &str) -> Result<Value, PipelineError> {
        let mut request = self.agent.get(url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.call().map_err(transport)?;
        response.body_mut().read_json().map_err(transport)
    }

    pub fn get_bytes(&self, url: &str, limit: u64) -> Result<Vec<u8>, PipelineError> {
        let mut response = self.agent.get(url).call().map_err(transport)?;
        response
            .body_mut()
            .with_config()
            .limit(limit)
            .read_to_vec()
            .map_err(transport)
    }
}

fn field<'a>(value: &'a Value, pointer: &str) -> Result<&'a str, PipelineError> {
    value
        .pointer(pointer)
        .and_then(Value::as_str)
        .ok_or_else(|| PipelineError::Backend(format!("response lacks {pointer}: {value}")))
}

#[derive(Clone, Debug)]
pub struct HttpChat {
    pub client: HttpClient,
    pub url: String,
}

impl ChatBackend for HttpChat {
    fn reply(&self, text: &str) -> Result<String, PipelineError> {
        let spec = build_extract_prompt(text)?;
        let value = self.client.post_json(&self.url, &spec.body)?;
        field(&value, "/choices/0/message/content").map(str::to_owned)
    }
}

#[derive(Clone, Debug)]
pub struct HttpImage {
    pub client: HttpClient,
    pub url: String,
}

impl ImageBackend for HttpImage {
    fn generate(&self, prompt: &PromptSpec) -> Result<String, PipelineError> {
        let value = self.client.post_json(&self.url, &prompt.body)?;
        field(&value, "/data/0/url").map(str::to_owned)
    }
}

/// Submit/status pair. `status_url` contains a `{job_id}` placeholder.
#[derive(Clone, Debug)]
pub struct HttpModel3d {
    pub client: HttpClient,
    pub submit_url: String,
    pub status_url: String,
}

#[derive(Deserialize)]
struct StatusReply {
    status: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

impl Model3dBackend for HttpModel3d {
    fn submit(&self, image: &AssetRef) -> Result<RemoteJob, PipelineError> {
        let body = serde_json::json!({ "image_url": image.uri }).to_string();
        let value = self.client.post_json(&self.submit_url, &body)?;
        field(&value, "/job_id").map(|id| RemoteJob(id.to_owned()))
    }

    fn status(&self, job: &RemoteJob, _polls: u32) -> Result<RemoteStatus, PipelineError> {
        let url = self.status_url.replace("{job_id}", &job.0);
        let value = self.client.get_json(&url)?;
        let reply: StatusReply = serde_json::from_value(value).map_err(transport)?;
        Ok(match reply.status.as_str() {
            "success" | "complete" | "completed" => match reply.url {
                Some(uri) => RemoteStatus::Done { uri },
                None => RemoteStatus::Failed {
                    reason: "completed without a download url".into(),
                },
            },
            "failed" | "error" | "cancelled" => RemoteStatus::Failed {
                reason: reply.error.unwrap_or(reply.status),
            },
            _ => RemoteStatus::Pending,
        })
    }
}
