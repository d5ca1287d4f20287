//! Generation chain: core-character extraction, image generation and
//! image-to-3D model jobs, behind pluggable backends.

mod assets;
mod backend;
mod http;
mod jobs;
mod prompt;
mod types;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use assets::{AssetStore, FetchError};
pub use backend::{
    extract_core_character, ChatBackend, FailingBackend, ImageBackend, MockChat, MockImage,
    MockModel3d, Model3dBackend, RemoteJob, RemoteStatus,
};
pub use http::{HttpChat, HttpClient, HttpImage, HttpModel3d, API_KEY_ENV};
pub use jobs::{Backends, GenerationJob, JobId, JobKind, JobPoll, JobState, Pipeline, RetryPolicy};
pub use prompt::{
    build_extract_prompt, build_image_prompt, PromptKind, PromptSpec, CHAT_MODEL,
    EXTRACT_INSTRUCTION, IMAGE_MODEL, IMAGE_SIZE, IMAGE_STYLE, MAX_EXTRACT_CHARS,
};
pub use types::{AssetRef, MediaKind, PipelineRequest, PipelineResult};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("text is empty")]
    EmptyText,
    #[error("text is {0} characters; at most {MAX_EXTRACT_CHARS} allowed")]
    TextTooLong(usize),
    #[error("reply {0:?} is not exactly one character")]
    NotOneCharacter(String),
    #[error("no lexicon keyword found in {0:?}")]
    NoLexiconMatch(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("pipeline misconfigured: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    #[default]
    Mock,
    Real,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(PipelineMode::Mock),
            "real" => Ok(PipelineMode::Real),
            other => Err(format!("unknown pipeline mode {other:?} (mock|real)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseUrls {
    pub chat: Option<String>,
    pub image: Option<String>,
    pub model3d_submit: Option<String>,
    /// Contains a `{job_id}` placeholder.
    pub model3d_status: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub mode: PipelineMode,
    #[serde(default)]
    pub base_urls: BaseUrls,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Status polls before a mock model job completes.
    #[serde(default = "default_mock_ticks")]
    pub mock_model_ticks: u32,
    /// Job kinds whose mock backend fails every call.
    #[serde(default)]
    pub mock_fail: Vec<JobKind>,
    #[serde(default = "default_asset_dir")]
    pub asset_dir: PathBuf,
}

fn default_max_retries() -> u32 {
    2
}

fn default_mock_ticks() -> u32 {
    2
}

fn default_asset_dir() -> PathBuf {
    PathBuf::from("assets")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: PipelineMode::Mock,
            base_urls: BaseUrls::default(),
            max_retries: default_max_retries(),
            mock_model_ticks: default_mock_ticks(),
            mock_fail: Vec::new(),
            asset_dir: default_asset_dir(),
        }
    }
}

impl Pipeline {
    /// Builds mock backends over `lexicon`, or HTTP backends from the base
    /// urls. Real backends back off 1 s between retries; mocks never wait.
    pub fn from_config(
        config: &PipelineConfig,
        lexicon: &BTreeMap<String, String>,
    ) -> Result<Self, PipelineError> {
        match config.mode {
            PipelineMode::Mock => {
                let failing = Arc::new(FailingBackend {
                    reason: "mock backend configured to fail".into(),
                });
                let fails = |kind| config.mock_fail.contains(&kind);
                let backends = Backends {
                    chat: if fails(JobKind::Extract) {
                        failing.clone()
                    } else {
                        Arc::new(MockChat::new(lexicon.clone()))
                    },
                    image: if fails(JobKind::Image) {
                        failing.clone()
                    } else {
                        Arc::new(MockImage)
                    },
                    model3d: if fails(JobKind::Model3d) {
                        failing
                    } else {
                        Arc::new(MockModel3d {
                            ticks: config.mock_model_ticks,
                        })
                    },
                };
                Ok(Pipeline::new(
                    backends,
                    AssetStore::offline(&config.asset_dir),
                    RetryPolicy {
                        max_retries: config.max_retries,
                        backoff: Duration::ZERO,
                    },
                ))
            }
            PipelineMode::Real => {
                let need = |url: &Option<String>, key: &str| {
                    url.clone()
                        .ok_or_else(|| PipelineError::Config(format!("pipeline.base_urls.{key} is required")))
                };
                let urls = &config.base_urls;
                let client = HttpClient::from_env();
                let backends = Backends {
                    chat: Arc::new(HttpChat {
                        client: client.clone(),
                        url: need(&urls.chat, "chat")?,
                    }),
                    image: Arc::new(HttpImage {
                        client: client.clone(),
                        url: need(&urls.image, "image")?,
                    }),
                    model3d: Arc::new(HttpModel3d {
                        client: client.clone(),
                        submit_url: need(&urls.model3d_submit, "model3d_submit")?,
                        status_url: need(&urls.model3d_status, "model3d_status")?,
                    }),
                };
                Ok(Pipeline::new(
                    backends,
                    AssetStore::with_http(&config.asset_dir, client),
                    RetryPolicy {
                        max_retries: config.max_retries,
                        backoff: Duration::from_secs(1),
                    },
                ))
            }
        }
    }
}
