//! Chat completion requests and the channel abstraction every LLM-backed
//! component talks through.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> ChatMessage {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("no recorded response for request {0}")]
    CassetteMiss(String),
}

impl ChannelError {
    /// Whether retrying the same request could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ChannelError::Transport(_) => true,
            ChannelError::Provider { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

impl ChatRequest {
    pub fn check(&self) -> Result<(), ChannelError> {
        if self.messages.is_empty() {
            return Err(ChannelError::InvalidRequest("messages must not be empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ChannelError::InvalidRequest(alloc::format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Anything that can turn a chat request into completion text.
pub trait ChatChannel {
    fn complete(&self, req: &ChatRequest) -> Result<String, ChannelError>;
}

impl<T: ChatChannel + ?Sized> ChatChannel for &T {
    fn complete(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        (**self).complete(req)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Stable content hash of a request. Keys are serialized in sorted order,
/// so the hash does not depend on field declaration order.
pub fn hash_request(req: &ChatRequest) -> String {
    let canonical = serde_json::to_value(req).expect("request serializes");
    sha256_hex(serde_json::to_string(&canonical).expect("value serializes").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn req() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(ChatRole::System, "s"), ChatMessage::new(ChatRole::User, "u")],
            temperature: 0.2,
            max_output: None,
        }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = req();
        assert_eq!(hash_request(&a), hash_request(&a.clone()));
        let mut b = req();
        b.temperature = 0.3;
        assert_ne!(hash_request(&a), hash_request(&b));
        let mut c = req();
        c.messages[1].content.push('!');
        assert_ne!(hash_request(&a), hash_request(&c));
        // equal whether parsed from differently ordered JSON
        let reordered: ChatRequest = serde_json::from_str(
            r#"{"temperature":0.2,"messages":[{"content":"s","role":"system"},{"role":"user","content":"u"}],"model":"m"}"#,
        )
        .unwrap();
        assert_eq!(hash_request(&a), hash_request(&reordered));
    }

    #[test]
    fn request_checks() {
        assert!(req().check().is_ok());
        let mut r = req();
        r.messages.clear();
        assert!(r.check().is_err());
        let mut r = req();
        r.temperature = 2.5;
        assert!(r.check().is_err());
    }
}
