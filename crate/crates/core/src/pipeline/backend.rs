use std::collections::BTreeMap;

use crate::digest::Digest64;

use super::prompt::{build_extract_prompt, PromptSpec};
use super::{AssetRef, PipelineError};

/// Chat model that answers the core-character extraction prompt.
pub trait ChatBackend: Send + Sync {
    /// Raw (untrimmed) reply for the learner's utterance.
    fn reply(&self, text: &str) -> Result<String, PipelineError>;
}

/// Text-to-image model. Returns a URI the asset store can fetch.
pub trait ImageBackend: Send + Sync {
    fn generate(&self, prompt: &PromptSpec) -> Result<String, PipelineError>;
}

/// Remote handle of a submitted image-to-model job.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteJob(pub String);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RemoteStatus {
    Pending,
    Done { uri: String },
    Failed { reason: String },
}

/// Image-to-3D model service: submit once, then poll.
pub trait Model3dBackend: Send + Sync {
    fn submit(&self, image: &AssetRef) -> Result<RemoteJob, PipelineError>;
    /// `polls` counts earlier status calls for this job.
    fn status(&self, job: &RemoteJob, polls: u32) -> Result<RemoteStatus, PipelineError>;
}

/// Trims the reply and insists on exactly one Unicode scalar.
pub fn extract_core_character(backend: &dyn ChatBackend, text: &str) -> Result<String, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let reply = backend.reply(text)?;
    let trimmed = reply.trim();
    if trimmed.chars().count() != 1 {
        return Err(PipelineError::NotOneCharacter(reply));
    }
    Ok(trimmed.to_owned())
}

/// Resolves the utterance against a keyword lexicon: the longest keyword
/// occurring in the lowercased text wins, ties going to the alphabetically
/// first keyword.
#[derive(Clone, Debug)]
pub struct MockChat {
    lexicon: BTreeMap<String, String>,
}

impl MockChat {
    pub fn new(lexicon: BTreeMap<String, String>) -> Self {
        MockChat { lexicon }
    }
}

impl ChatBackend for MockChat {
    fn reply(&self, text: &str) -> Result<String, PipelineError> {
        // Same validation a real request would go through.
        build_extract_prompt(text)?;
        let lowered = text.to_lowercase();
        let mut best: Option<(&String, &String)> = None;
        for (keyword, character) in &self.lexicon {
            if lowered.contains(keyword.as_str())
                && best.map_or(true, |(k, _)| keyword.chars().count() > k.chars().count())
            {
                best = Some((keyword, character));
            }
        }
        best.map(|(_, c)| c.clone())
            .ok_or_else(|| PipelineError::NoLexiconMatch(text.to_owned()))
    }
}

/// Deterministic image URI derived from the request body.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockImage;

impl ImageBackend for MockImage {
    fn generate(&self, prompt: &PromptSpec) -> Result<String, PipelineError> {
        Ok(format!("mock://image/{}", Digest64::of(prompt.body.as_bytes())))
    }
}

/// Completes after `ticks` status polls with `mock://model/<image digest>`.
#[derive(Clone, Copy, Debug)]
pub struct MockModel3d {
    pub ticks: u32,
}

impl Model3dBackend for MockModel3d {
    fn submit(&self, image: &AssetRef) -> Result<RemoteJob, PipelineError> {
        Ok(RemoteJob(image.digest.to_hex()))
    }

    fn status(&self, job: &RemoteJob, polls: u32) -> Result<RemoteStatus, PipelineError> {
        if polls + 1 >= self.ticks {
            Ok(RemoteStatus::Done {
                uri: format!("mock://model/{}", job.0),
            })
        } else {
            Ok(RemoteStatus::Pending)
        }
    }
}

/// Backend whose every call fails at the transport level.
#[derive(Clone, Debug)]
pub struct FailingBackend {
    pub reason: String,
}

impl FailingBackend {
    fn fail<T>(&self) -> Result<T, PipelineError> {
        Err(PipelineError::Backend(self.reason.clone()))
    }
}

impl ChatBackend for FailingBackend {
    fn reply(&self, _: &str) -> Result<String, PipelineError> {
        self.fail()
    }
}

impl ImageBackend for FailingBackend {
    fn generate(&self, _: &PromptSpec) -> Result<String, PipelineError> {
        self.fail()
    }
}

impl Model3dBackend for FailingBackend {
    fn submit(&self, _: &AssetRef) -> Result<RemoteJob, PipelineError> {
        self.fail()
    }

    fn status(&self, _: &RemoteJob, _: u32) -> Result<RemoteStatus, PipelineError> {
        self.fail()
    }
}
