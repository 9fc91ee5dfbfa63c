//! Boundary adapters for remote LLM endpoints: a chat-completion agent slot
//! and a remote judge channel. Nothing in the offline test suite depends on
//! this module; it exists so real models can occupy agent or judge roles.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::NeighborMessage;
use crate::error::{Error, Result};
use crate::judge::{
    JudgeAggregateReply, JudgeAggregateRequest, JudgeChannel, JudgeContributionReply,
    JudgeContributionRequest,
};
use crate::model::{AgentOutput, Query};

fn default_prompt_template() -> String {
    "{prompt}".to_string()
}
fn default_timeout_ms() -> u64 {
    30_000
}

/// A chat-completion-style HTTP endpoint plus the prompt template, timeout,
/// and retry budget used when calling it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointDescriptor {
    pub url: String,
    #[serde(default = "default_prompt_template")]
    pub prompt_template: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub auth_token: Option<String>,
}

impl EndpointDescriptor {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointDescriptor {
            url: url.into(),
            prompt_template: default_prompt_template(),
            timeout_ms: default_timeout_ms(),
            retries: 0,
            auth_token: None,
        }
    }
}

fn agent_for(timeout_ms: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .build()
        .new_agent()
}

fn post_json(
    url: &str,
    token: Option<&str>,
    timeout_ms: u64,
    retries: u32,
    body: &Value,
) -> Result<Value> {
    let agent = agent_for(timeout_ms);
    let mut last_err = String::new();
    for _ in 0..=retries {
        let mut request = agent.post(url);
        if let Some(token) = token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        match request.send_json(body) {
            Ok(mut response) => {
                return response
                    .body_mut()
                    .read_json::<Value>()
                    .map_err(|e| Error::MalformedResponse(e.to_string()));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::EndpointUnreachable(last_err))
}

/// Pulls a single text completion out of a chat-style reply. Accepts either
/// a bare `{"content": ...}` or the OpenAI-style
/// `{"choices": [{"message": {"content": ...}}]}`.
fn extract_completion(value: &Value) -> Result<String> {
    if let Some(content) = value.get("content").and_then(Value::as_str) {
        return Ok(content.to_string());
    }
    if let Some(content) = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
    {
        return Ok(content.to_string());
    }
    Err(Error::MalformedResponse(format!(
        "no completion text in reply: {value}"
    )))
}

fn chat(endpoint: &EndpointDescriptor, messages: Vec<Value>) -> Result<String> {
    let body = json!({ "messages": messages });
    let value = post_json(
        &endpoint.url,
        endpoint.auth_token.as_deref(),
        endpoint.timeout_ms,
        endpoint.retries,
        &body,
    )?;
    extract_completion(&value)
}

pub(crate) fn remote_respond(endpoint: &EndpointDescriptor, query: &Query) -> Result<String> {
    let prompt = endpoint.prompt_template.replace("{prompt}", &query.prompt);
    chat(endpoint, vec![json!({ "role": "user", "content": prompt })])
}

pub(crate) fn remote_revise(
    endpoint: &EndpointDescriptor,
    own: &AgentOutput,
    inbox: &[NeighborMessage],
) -> Result<String> {
    let mut lines = vec![format!("Your current answer: {}", own.answer)];
    for msg in inbox {
        lines.push(format!("Peer {} answered: {}", msg.sender, msg.content));
    }
    lines.push("Reply with your (possibly revised) final answer only.".to_string());
    chat(
        endpoint,
        vec![json!({ "role": "user", "content": lines.join("\n") })],
    )
}

/// Judge channel backed by an HTTP endpoint speaking the judge wire format.
#[derive(Debug, Clone)]
pub struct RemoteJudge {
    pub url: String,
    pub auth_token: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl RemoteJudge {
    pub fn new(url: impl Into<String>, auth_token: Option<String>) -> Self {
        RemoteJudge {
            url: url.into(),
            auth_token,
            timeout_ms: default_timeout_ms(),
            retries: 0,
        }
    }

    fn call<T: serde::de::DeserializeOwned>(&self, path: &str, body: &Value) -> Result<T> {
        let url = format!("{}/{}", self.url.trim_end_matches('/'), path);
        let value = post_json(
            &url,
            self.auth_token.as_deref(),
            self.timeout_ms,
            self.retries,
            body,
        )
        .map_err(|e| match e {
            Error::EndpointUnreachable(msg) => Error::JudgeUnavailable(msg),
            other => other,
        })?;
        serde_json::from_value(value).map_err(|e| {
            Error::MalformedJudgeReply(crate::error::MalformedReply::OutOfRange(e.to_string()))
        })
    }
}

impl JudgeChannel for RemoteJudge {
    fn aggregate(&self, request: &JudgeAggregateRequest) -> Result<JudgeAggregateReply> {
        self.call("aggregate", &serde_json::to_value(request)?)
    }

    fn score_contributions(
        &self,
        request: &JudgeContributionRequest,
    ) -> Result<JudgeContributionReply> {
        self.call("contributions", &serde_json::to_value(request)?)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_extraction_accepts_both_shapes() {
        let bare = json!({ "content": "B" });
        assert_eq!(extract_completion(&bare).unwrap(), "B");
        let openai = json!({ "choices": [ { "message": { "content": "C" } } ] });
        assert_eq!(extract_completion(&openai).unwrap(), "C");
        assert!(extract_completion(&json!({ "oops": 1 })).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_reported() {
        // reserved TEST-NET address; connection must fail fast
        let endpoint = EndpointDescriptor {
            timeout_ms: 200,
            ..EndpointDescriptor::new("http://192.0.2.1:9/v1/chat")
        };
        let query = Query {
            id: "q".into(),
            prompt: "hi".into(),
            task_kind: crate::model::TaskKind::FreeText,
            options: vec![],
            gold: crate::model::GoldAnswer::exact("x"),
        };
        let err = remote_respond(&endpoint, &query).unwrap_err();
        assert!(matches!(err, Error::EndpointUnreachable(_)));
    }
}
