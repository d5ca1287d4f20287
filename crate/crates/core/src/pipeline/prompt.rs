//! Request bodies for the chat (core-character extraction) and image models.
//!
//! Bodies are compact JSON with fixed key order; golden files under
//! `tests/golden/` pin them byte for byte.

use serde::Serialize;

use super::PipelineError;

pub const CHAT_MODEL: &str = "glm-4-flash";
pub const IMAGE_MODEL: &str = "cogView-4-250304";
pub const IMAGE_SIZE: &str = "512x512";
pub const EXTRACT_INSTRUCTION: &str = "extract the main object described in this sentence, ignore color and other modifiers, and require the result to be one character";
pub const IMAGE_STYLE: &str =
    "simple background, no complex environment, solid color background, clear subject";
pub const MAX_EXTRACT_CHARS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptKind {
    Chat,
    Image,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub model_name: String,
    pub body: String,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: String,
}

#[derive(Serialize)]
struct ImageBody<'a> {
    model: &'a str,
    prompt: String,
    size: &'a str,
}

pub fn build_extract_prompt(text: &str) -> Result<PromptSpec, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let len = text.chars().count();
    if len > MAX_EXTRACT_CHARS {
        return Err(PipelineError::TextTooLong(len));
    }
    let body = ChatBody {
        model: CHAT_MODEL,
        messages: [ChatMessage {
            role: "user",
            content: format!("{text}, {EXTRACT_INSTRUCTION}"),
        }],
    };
    Ok(PromptSpec {
        kind: PromptKind::Chat,
        model_name: CHAT_MODEL.to_owned(),
        body: serde_json::to_string(&body).expect("plain strings serialize"),
    })
}

pub fn build_image_prompt(subject: &str) -> Result<PromptSpec, PipelineError> {
    if subject.trim().is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let body = ImageBody {
        model: IMAGE_MODEL,
        prompt: format!("{subject}, {IMAGE_STYLE}"),
        size: IMAGE_SIZE,
    };
    Ok(PromptSpec {
        kind: PromptKind::Image,
        model_name: IMAGE_MODEL.to_owned(),
        body: serde_json::to_string(&body).expect("plain strings serialize"),
    })
}
