use serde::{Deserialize, Serialize};

use crate::digest::Digest64;
use crate::session::{ModelId, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Png,
    Glb,
}

impl MediaKind {
    pub fn extension(self) -> &'static str {
        match self {
            MediaKind::Png => "png",
            MediaKind::Glb => "glb",
        }
    }
}

/// A fetched generation artifact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AssetRef {
    pub uri: String,
    pub media: MediaKind,
    pub digest: Digest64,
}

/// Work the session asks the generation pipeline to perform.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineRequest {
    ExtractCoreCharacter { task_id: TaskId, text: String },
    GenerateImage { task_id: TaskId, subject: String },
    GenerateModel3d { model_id: ModelId, task_id: TaskId, image: AssetRef },
}

/// Completed (or failed) pipeline work, fed back into the session queue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineResult {
    CoreCharacterExtracted { task_id: TaskId, character: String },
    ExtractionFailed { task_id: TaskId, reason: String },
    ImageReady { task_id: TaskId, asset: AssetRef },
    ImageFailed { task_id: TaskId, reason: String },
    ModelReady { model_id: ModelId, asset: AssetRef },
    ModelFailed { model_id: ModelId, reason: String },
}
