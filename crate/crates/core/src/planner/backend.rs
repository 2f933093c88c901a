//! Language-model backends.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::template::{classify, template_tree, TemplateOptions};
use crate::bt::serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One completion request: the conversation so far plus the raw instruction,
/// which rule-based backends use directly.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub instruction: &'a str,
    pub messages: &'a [ChatMessage],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Network or protocol failure; worth one retry.
    #[error("transport error: {0}")]
    Transport(String),
    /// Missing fixture, token, or other setup problem.
    #[error("backend configuration error: {0}")]
    Config(String),
    /// The rule-based backend has no plan for this instruction.
    #[error("{0}")]
    NoTemplate(String),
}

impl BackendError {
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait PlannerBackend: Send + Sync {
    /// Short backend identifier for reports.
    fn kind(&self) -> &'static str;

    /// Returns the text of one model reply.
    fn complete(&self, request: ChatRequest<'_>) -> Result<String, BackendError>;

    /// Whether planning latency is meaningful for this backend.
    fn measures_latency(&self) -> bool {
        true
    }

    /// Whether replies depend on call order, so callers must not fan out.
    fn is_sequential(&self) -> bool {
        false
    }
}

/// Deterministic keyword-rule planner exposed through the backend interface.
#[derive(Debug, Clone, Default)]
pub struct TemplateBackend {
    pub options: TemplateOptions,
}

impl TemplateBackend {
    pub fn new() -> Self {
        TemplateBackend::default()
    }
}

impl PlannerBackend for TemplateBackend {
    fn kind(&self) -> &'static str {
        "template"
    }

    fn complete(&self, request: ChatRequest<'_>) -> Result<String, BackendError> {
        let (template, target) = classify(request.instruction).map_err(|e| BackendError::NoTemplate(e.to_string()))?;
        let graph = template_tree(template, &target, request.instruction, &self.options);
        serialize(&graph).map_err(|e| BackendError::Config(e.to_string()))
    }

    fn measures_latency(&self) -> bool {
        false
    }
}

/// Serves canned responses in order and records every request it received.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    responses: Vec<String>,
    next: AtomicUsize,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
    source: Option<PathBuf>,
}

impl ReplayBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ReplayBackend {
            responses,
            ..ReplayBackend::default()
        }
    }

    /// Loads every file in `dir` whose name starts with digits, ordered by
    /// that number (`0.txt`, `1.txt`, `10.txt`, ...).
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| BackendError::Config(format!("{}: {e}", dir.display())))?;
        let mut numbered = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| BackendError::Config(e.to_string()))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let digits: String = name.chars().take_while(char::is_ascii_digit).collect();
            if digits.is_empty() || !path.is_file() {
                continue;
            }
            let index: u64 = digits
                .parse()
                .map_err(|_| BackendError::Config(format!("fixture index too large: {name}")))?;
            numbered.push((index, name.to_string(), path));
        }
        numbered.sort();
        if numbered.is_empty() {
            return Err(BackendError::Config(format!(
                "no numbered fixtures in {}",
                dir.display()
            )));
        }
        let responses = numbered
            .iter()
            .map(|(_, _, p)| fs::read_to_string(p).map_err(|e| BackendError::Config(format!("{}: {e}", p.display()))))
            .collect::<Result<_, _>>()?;
        Ok(ReplayBackend {
            source: Some(dir.to_path_buf()),
            ..ReplayBackend::new(responses)
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn consumed(&self) -> usize {
        self.next.load(Ordering::SeqCst).min(self.responses.len())
    }

    /// Conversations received so far, in call order.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().expect("replay request log poisoned").clone()
    }
}

impl PlannerBackend for ReplayBackend {
    fn kind(&self) -> &'static str {
        "replay"
    }

    fn is_sequential(&self) -> bool {
        true
    }

    fn complete(&self, request: ChatRequest<'_>) -> Result<String, BackendError> {
        self.requests
            .lock()
            .expect("replay request log poisoned")
            .push(request.messages.to_vec());
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.responses.get(i).cloned().ok_or_else(|| {
            let from = self
                .source
                .as_ref()
                .map(|p| format!(" in {}", p.display()))
                .unwrap_or_default();
            BackendError::Config(format!(
                "replay fixtures exhausted after {} responses{from}",
                self.responses.len()
            ))
        })
    }

    fn measures_latency(&self) -> bool {
        false
    }
}

/// Chat-completion endpoint client.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
}

impl HttpChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpChatBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: None,
            temperature: 0.0,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let messages: Vec<Value> = messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        json!({"model": self.model, "messages": messages, "temperature": self.temperature})
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::Config(format!("environment variable {var} is not set"))),
        }
    }
}

/// Extracts the first choice's message text from a chat-completion reply.
pub fn parse_chat_response(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Transport(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
}

impl PlannerBackend for HttpChatBackend {
    fn kind(&self) -> &'static str {
        "http"
    }

    fn complete(&self, request: ChatRequest<'_>) -> Result<String, BackendError> {
        let token = self.token()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let mut req = client.post(&self.endpoint).json(&self.request_body(request.messages));
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let response = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        parse_chat_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_serves_in_order_then_errors() {
        let b = ReplayBackend::new(vec!["a".into(), "b".into()]);
        let msgs = [ChatMessage::user("hi")];
        let req = ChatRequest {
            instruction: "x",
            messages: &msgs,
        };
        assert_eq!(b.complete(req).unwrap(), "a");
        assert_eq!(b.complete(req).unwrap(), "b");
        assert!(matches!(b.complete(req), Err(BackendError::Config(_))));
        assert_eq!(b.requests().len(), 3);
        assert_eq!(b.consumed(), 2);
    }

    #[test]
    fn replay_dir_orders_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [
            ("10.txt", "ten"),
            ("2.txt", "two"),
            ("1.xml", "one"),
            ("notes.md", "skip"),
        ] {
            fs::write(dir.path().join(name), body).unwrap();
        }
        let b = ReplayBackend::from_dir(dir.path()).unwrap();
        assert_eq!(b.responses, ["one", "two", "ten"]);
        assert!(ReplayBackend::from_dir(dir.path().join("missing")).is_err());
    }

    #[test]
    fn chat_body_and_response_shapes() {
        let b = HttpChatBackend::new("http://localhost:1/v1/chat/completions", "m");
        let body = b.request_body(&[ChatMessage::user("plan")]);
        assert_eq!(body["model"], "m");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "plan");
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"<TaskGraph/>"}}]}"#;
        assert_eq!(parse_chat_response(reply).unwrap(), "<TaskGraph/>");
        assert!(parse_chat_response("{}").unwrap_err().is_transport());
        assert!(parse_chat_response("nope").unwrap_err().is_transport());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let mut b = HttpChatBackend::new("http://127.0.0.1:9/", "m");
        b.timeout = Duration::from_secs(2);
        let msgs = [ChatMessage::user("x")];
        let err = b
            .complete(ChatRequest {
                instruction: "x",
                messages: &msgs,
            })
            .unwrap_err();
        assert!(err.is_transport(), "{err}");
        b.token_env = Some("TASKGRAPH_TEST_SURELY_UNSET_TOKEN".into());
        let err = b
            .complete(ChatRequest {
                instruction: "x",
                messages: &msgs,
            })
            .unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn template_backend_is_deterministic() {
        let b = TemplateBackend::new();
        let req = ChatRequest {
            instruction: "Pick up the mug",
            messages: &[],
        };
        assert_eq!(b.complete(req).unwrap(), b.complete(req).unwrap());
        let req = ChatRequest {
            instruction: "juggle three balls",
            messages: &[],
        };
        assert!(matches!(b.complete(req), Err(BackendError::NoTemplate(_))));
    }
}
