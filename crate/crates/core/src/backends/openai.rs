//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{HttpClient, RetryPolicy};
use super::{ChatClient, ChatRequest};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct OpenAiChat {
    http: HttpClient,
    url: String,
}

impl OpenAiChat {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str, api_key: Option<String>, retry: RetryPolicy, timeout: Duration) -> Result<Self> {
        Ok(Self {
            http: HttpClient::new(api_key, retry, timeout)?,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
        })
    }
}

impl ChatClient for OpenAiChat {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        if req.user.is_empty() {
            return Err(Error::invalid("chat request with empty user message"));
        }
        let mut messages = Vec::with_capacity(2);
        if !req.system.is_empty() {
            messages.push(Message {
                role: "system",
                content: &req.system,
            });
        }
        messages.push(Message {
            role: "user",
            content: &req.user,
        });
        let body = CompletionRequest {
            model: &req.model,
            messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let reply: CompletionResponse = self.http.post_json(&self.url, &body)?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::MalformedResponse("completion has no message content".into()))
    }
}
