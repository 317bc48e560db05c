//! OpenAI-compatible chat-completions backend over blocking HTTP.
//!
//! Sends `POST {base_url}/v1/chat/completions` with a single user
//! message. The API key comes from the environment (never logged).

use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{
    estimate_tokens, BackendKind, ChatBackend, ChatRequest, ChatResponse, ClientError,
    UsageProvenance,
};

#[derive(Debug, Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        Self::with_timeout(base_url, api_key, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        }
    }
}

fn request_body(req: &ChatRequest) -> serde_json::Value {
    let mut body = serde_json::json!({
        "model": req.model,
        "messages": [{"role": "user", "content": req.prompt_text}],
        "temperature": req.temperature,
        "top_p": req.top_p,
    });
    if let Some(max) = req.max_completion_tokens {
        body["max_completion_tokens"] = serde_json::json!(max);
    }
    body
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let body = request_body(req);
        let url = format!("{}/v1/chat/completions", self.base_url);
        let started = Instant::now();
        let mut request = self.agent.post(&url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(map_transport)?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::Auth(truncate(&text))),
            _ => return Err(ClientError::Http { status, body: truncate(&text) }),
        }
        let parsed: CompletionBody = serde_json::from_str(&text)
            .map_err(|e| ClientError::MalformedResponse(format!("{e}: {}", truncate(&text))))?;
        let content = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| ClientError::MalformedResponse("no choices[0].message.content".into()))?;
        let (prompt_tokens, completion_tokens, usage) = match parsed.usage {
            Some(Usage { prompt_tokens: Some(p), completion_tokens: Some(c) }) => {
                (p, c, UsageProvenance::ApiReported)
            }
            _ => (
                estimate_tokens(&req.prompt_text),
                estimate_tokens(&content),
                UsageProvenance::Estimated,
            ),
        };
        Ok(ChatResponse {
            text: content,
            prompt_tokens,
            completion_tokens,
            latency: started.elapsed(),
            backend: BackendKind::Http,
            usage,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }
}

fn map_transport(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        other => ClientError::Transport(other.to_string()),
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 400;
    if s.len() <= MAX {
        s.to_string()
    } else {
        let mut end = MAX;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}
