//! Simulated user–agent episodes over a materialized environment.
//!
//! An episode wires three parties together: a *user* client that holds the
//! task intent and reveals it incrementally, an *agent* client that sees only
//! the domain's tool specs, and the environment runtime that executes the
//! agent's tool calls. The full conversation is recorded as a [`Trajectory`]
//! whose final state digest downstream filtering compares against the task's
//! golden digest.
//!
//! Both parties implement the same [`ModelClient`] contract — message list
//! plus tool specs in, exactly one assistant message out — so deterministic
//! in-process doubles ([`make_replay_agent`], [`make_scripted_user`]) and the
//! HTTP chat-completions client ([`HttpModelClient`]) are interchangeable.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::{ParamType, ParameterSpec, ToolSpec};
use crate::materialize::{DomainBundle, OpKind};
use crate::runtime::{
    digest, execute, CounterSynthesizer, ErrorCode, StateDigest, ToolCall, ToolResult,
};
use crate::synth::AgenticTask;
use crate::util::canonical_json;

/// System prompt template for the agent side; placeholders `{domain_id}`
/// and `{tool_specs}`.
pub const AGENT_SYSTEM_TEMPLATE: &str = include_str!("../templates/agent_system.txt");
/// System prompt template for the user simulator; placeholders `{intent}`
/// and `{done_token}`.
pub const USER_SYSTEM_TEMPLATE: &str = include_str!("../templates/user_system.txt");

/// Speaker of a [`Message`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
    Tool,
    System,
}

/// The invoked function of an assistant tool call, with the arguments as
/// JSON text (chat-completions convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    /// JSON-encoded argument object, e.g. `{"order_id":"order_1"}`.
    pub arguments: String,
}

/// One tool invocation requested by an assistant message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantToolCall {
    pub id: String,
    pub function: FunctionCall,
}

impl AssistantToolCall {
    /// Wrap a runtime call for the wire, serializing its arguments
    /// canonically (sorted keys).
    pub fn from_call(id: impl Into<String>, call: &ToolCall) -> Self {
        Self {
            id: id.into(),
            function: FunctionCall {
                name: call.tool_name.clone(),
                arguments: canonical_json(&call.arguments)
                    .expect("cell values always serialize"),
            },
        }
    }

    /// Decode the arguments text back into a runtime call.
    pub fn to_call(&self) -> Result<ToolCall, ClientError> {
        let arguments: BTreeMap<String, crate::runtime::CellValue> =
            serde_json::from_str(&self.function.arguments).map_err(|e| {
                ClientError::Malformed(format!(
                    "tool call {}: arguments are not a JSON object of cell values: {e}",
                    self.id
                ))
            })?;
        Ok(ToolCall {
            tool_name: self.function.name.clone(),
            arguments,
        })
    }
}

/// One conversation turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    /// Present only on assistant messages that request tool invocations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<AssistantToolCall>,
    /// Present only on tool messages; names the assistant call it answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn assistant_text(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn assistant_calls(content: impl Into<String>, tool_calls: Vec<AssistantToolCall>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_calls,
            tool_call_id: None,
        }
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(tool_call_id.into()),
        }
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    /// The user emitted the done token.
    UserDone,
    /// The turn or tool-call budget ran out.
    TurnCap,
    /// The agent produced a message with neither text nor tool calls.
    AgentStop,
    /// A model client failed after retries; kept for diagnostics only.
    ClientFailure,
}

/// Full record of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub messages: Vec<Message>,
    pub terminal_reason: TerminalReason,
    pub final_digest: StateDigest,
    pub tool_call_count: usize,
}

impl Trajectory {
    /// All tool calls across assistant messages, in order.
    pub fn assistant_calls(&self) -> impl Iterator<Item = &AssistantToolCall> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .flat_map(|m| m.tool_calls.iter())
    }
}

/// A model client failure (after any internal retries).
#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Message list plus tool specs in, exactly one assistant message out.
///
/// User-side clients also answer as `assistant`; the episode loop re-labels
/// their replies as user turns.
pub trait ModelClient {
    fn complete(&mut self, messages: &[Message], tools: &[ToolSpec])
        -> Result<Message, ClientError>;
}

/// Episode budget and completion sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    /// Maximum user→agent rounds.
    pub max_turns: usize,
    /// Maximum executed tool calls.
    pub max_tool_calls: usize,
    /// Content emitted by the user client when it deems the task complete.
    pub user_done_token: String,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_turns: 30,
            max_tool_calls: 20,
            user_done_token: "###DONE###".to_string(),
        }
    }
}

/// Render the agent system prompt for a bundle: one line per tool with its
/// signature and read/write classification.
pub fn render_agent_system(bundle: &DomainBundle) -> String {
    let mut lines = Vec::new();
    for tool in &bundle.tools {
        let params = tool
            .parameters
            .iter()
            .map(|p| {
                let mut s = format!("{}: {}", p.name, p.ptype.as_str());
                if !p.required {
                    s.push('?');
                }
                s
            })
            .collect::<Vec<_>>()
            .join(", ");
        let kind = match bundle.op_of(&tool.name) {
            Some(OpKind::Write) => "write",
            _ => "read",
        };
        lines.push(format!("- {}({params}) [{kind}]: {}", tool.name, tool.description));
    }
    AGENT_SYSTEM_TEMPLATE
        .replace("{domain_id}", &bundle.domain_id)
        .replace("{tool_specs}", &lines.join("\n"))
}

/// Render the user-simulator system prompt for a task.
pub fn render_user_system(task: &AgenticTask, done_token: &str) -> String {
    USER_SYSTEM_TEMPLATE
        .replace("{intent}", &task.intent)
        .replace("{done_token}", done_token)
}

/// The conversation as the user simulator sees it: its own system prompt,
/// the dialogue with roles flipped (its past utterances as `assistant`, the
/// agent's text replies as `user`), tool traffic hidden.
fn user_view(messages: &[Message], user_system: &str) -> Vec<Message> {
    let mut view = vec![Message::system(user_system)];
    for m in messages {
        match m.role {
            Role::User => view.push(Message::assistant_text(m.content.clone())),
            Role::Assistant if !m.content.trim().is_empty() => {
                view.push(Message::user(m.content.clone()));
            }
            _ => {}
        }
    }
    view
}

/// Run one simulated episode over `task`'s environment.
///
/// The loop alternates user and agent turns. Within an agent turn, every
/// requested tool call is executed against the evolving state and answered
/// with a tool message (execution errors included — they never abort the
/// episode); the agent is re-consulted until it replies with plain text.
/// Termination: the user's done token (`user_done`), the turn or tool-call
/// budget (`turn_cap`), an empty agent reply (`agent_stop`), or a client
/// error after retries (`client_failure`, kept for diagnostics).
pub fn run_episode(
    task: &AgenticTask,
    bundle: &DomainBundle,
    agent: &mut dyn ModelClient,
    user: &mut dyn ModelClient,
    limits: &EpisodeLimits,
) -> Trajectory {
    let mut state = task.seed_state.clone();
    let mut synth = CounterSynthesizer::new();
    let agent_system = render_agent_system(bundle);
    let user_system = render_user_system(task, &limits.user_done_token);

    let mut messages = vec![Message::system(agent_system)];
    let mut tool_call_count = 0usize;
    let mut call_counter = 0usize;
    let mut turns = 0usize;

    let terminal_reason = 'episode: loop {
        if turns >= limits.max_turns {
            break TerminalReason::TurnCap;
        }
        let user_reply = match user.complete(&user_view(&messages, &user_system), &[]) {
            Ok(m) => m,
            Err(_) => break TerminalReason::ClientFailure,
        };
        if user_reply.content.contains(&limits.user_done_token) {
            // The sentinel turn is control traffic, not conversation: it is
            // not recorded, so trajectories end on an assistant message.
            break TerminalReason::UserDone;
        }
        messages.push(Message::user(user_reply.content));
        turns += 1;

        // Agent inner loop: tool-call turns until a plain-text reply.
        loop {
            let reply = match agent.complete(&messages, &bundle.tools) {
                Ok(m) => m,
                Err(_) => break 'episode TerminalReason::ClientFailure,
            };
            if reply.tool_calls.is_empty() {
                let has_text = !reply.content.trim().is_empty();
                messages.push(Message::assistant_text(reply.content));
                if has_text {
                    break; // hand back to the user
                }
                break 'episode TerminalReason::AgentStop;
            }

            let calls: Vec<AssistantToolCall> = reply
                .tool_calls
                .into_iter()
                .map(|mut c| {
                    if c.id.is_empty() {
                        c.id = format!("call_{call_counter}");
                    }
                    call_counter += 1;
                    c
                })
                .collect();
            messages.push(Message::assistant_calls(reply.content, calls.clone()));

            for wire_call in &calls {
                let result = match wire_call.to_call() {
                    Ok(call) => {
                        let (next, result) = execute(&state, bundle, &call, &mut synth);
                        state = next;
                        result
                    }
                    Err(e) => ToolResult::error(ErrorCode::TypeMismatch, e.to_string()),
                };
                tool_call_count += 1;
                let body = serde_json::to_string(&result)
                    .unwrap_or_else(|_| r#"{"status":"error"}"#.to_string());
                messages.push(Message::tool(wire_call.id.clone(), body));
                if tool_call_count >= limits.max_tool_calls {
                    break 'episode TerminalReason::TurnCap;
                }
            }
        }
    };

    Trajectory {
        task_id: task.task_id.clone(),
        messages,
        terminal_reason,
        final_digest: digest(&state),
        tool_call_count,
    }
}

/// Deterministic agent double: emits the task's golden actions one per
/// assistant turn, then a fixed closing text reply (repeated if consulted
/// again).
pub struct ReplayAgent {
    actions: Vec<ToolCall>,
    next: usize,
}

impl ModelClient for ReplayAgent {
    fn complete(
        &mut self,
        _messages: &[Message],
        _tools: &[ToolSpec],
    ) -> Result<Message, ClientError> {
        if self.next < self.actions.len() {
            let call = &self.actions[self.next];
            let id = format!("call_{}", self.next);
            self.next += 1;
            Ok(Message::assistant_calls(
                "",
                vec![AssistantToolCall::from_call(id, call)],
            ))
        } else {
            Ok(Message::assistant_text(
                "Done — everything you asked for has been carried out.",
            ))
        }
    }
}

/// Build the replay agent for a task.
pub fn make_replay_agent(task: &AgenticTask) -> ReplayAgent {
    ReplayAgent {
        actions: task
            .golden_actions
            .iter()
            .map(|a| ToolCall {
                tool_name: a.tool_name.clone(),
                arguments: a.arguments.clone(),
            })
            .collect(),
        next: 0,
    }
}

/// Deterministic user double: reveals the intent in a fixed number of
/// utterances, then emits the done token once the agent has responded after
/// the last one.
pub struct ScriptedUser {
    utterances: Vec<String>,
    next: usize,
    done_token: String,
}

impl ScriptedUser {
    /// Override the done token (must match the episode limits').
    pub fn with_done_token(mut self, token: impl Into<String>) -> Self {
        self.done_token = token.into();
        self
    }
}

impl ModelClient for ScriptedUser {
    fn complete(
        &mut self,
        _messages: &[Message],
        _tools: &[ToolSpec],
    ) -> Result<Message, ClientError> {
        // The episode loop only consults the user at the start and after an
        // agent text reply, so exhaustion implies the agent has responded to
        // the final utterance.
        if self.next < self.utterances.len() {
            let utterance = self.utterances[self.next].clone();
            self.next += 1;
            Ok(Message::assistant_text(utterance))
        } else {
            Ok(Message::assistant_text(self.done_token.clone()))
        }
    }
}

/// Split an intent into sentence groups, as evenly as possible, preserving
/// order; at most `chunks` groups (fewer when the intent has fewer
/// sentences).
fn split_intent(intent: &str, chunks: usize) -> Vec<String> {
    let sentences: Vec<String> = intent
        .split_inclusive(". ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return vec![intent.trim().to_string()];
    }
    let groups = chunks.clamp(1, sentences.len());
    let base = sentences.len() / groups;
    let extra = sentences.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut idx = 0;
    for g in 0..groups {
        let take = base + usize::from(g < extra);
        out.push(sentences[idx..idx + take].join(" "));
        idx += take;
    }
    out
}

/// Build the scripted user for a task, revealing the intent over `chunks`
/// turns (clamped to the number of intent sentences). Uses the default done
/// token; see [`ScriptedUser::with_done_token`].
pub fn make_scripted_user(task: &AgenticTask, chunks: usize) -> ScriptedUser {
    assert!(chunks >= 1, "chunks must be at least 1");
    ScriptedUser {
        utterances: split_intent(&task.intent, chunks),
        next: 0,
        done_token: EpisodeLimits::default().user_done_token,
    }
}

/// Endpoint settings for [`HttpModelClient`]. The credential is referenced
/// by environment-variable name, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token; empty for
    /// unauthenticated endpoints.
    #[serde(default)]
    pub api_key_env: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

/// Blocking chat-completions client with exponential backoff on transport
/// errors, 429 and 5xx.
pub struct HttpModelClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpModelClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Self { config, agent }
    }

    fn bearer(&self) -> Option<String> {
        if self.config.api_key_env.is_empty() {
            return None;
        }
        std::env::var(&self.config.api_key_env).ok()
    }

    fn try_once(&self, body: &Value) -> Result<Value, ClientError> {
        let mut request = self
            .agent
            .post(&self.config.base_url)
            .set("content-type", "application/json");
        if let Some(token) = self.bearer() {
            request = request.set("authorization", &format!("Bearer {token}"));
        }
        match request.send_string(&body.to_string()) {
            Ok(response) => {
                let text = response
                    .into_string()
                    .map_err(|e| ClientError::Transport(e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))
            }
            Err(ureq::Error::Status(status, response)) => Err(ClientError::Http {
                status,
                detail: response.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(ClientError::Transport(e.to_string())),
        }
    }
}

impl ModelClient for HttpModelClient {
    fn complete(
        &mut self,
        messages: &[Message],
        tools: &[ToolSpec],
    ) -> Result<Message, ClientError> {
        let body = build_request_body(&self.config.model, messages, tools);
        let mut last_err = ClientError::Transport("no attempt made".to_string());
        for attempt in 0..=self.config.max_retries {
            match self.try_once(&body) {
                Ok(response) => return parse_response_message(&response),
                Err(e) => {
                    let retryable = matches!(
                        &e,
                        ClientError::Transport(_)
                            | ClientError::Http { status: 429, .. }
                            | ClientError::Http { status: 500..=599, .. }
                    );
                    last_err = e;
                    if !retryable || attempt == self.config.max_retries {
                        break;
                    }
                    let backoff = 250u64.saturating_mul(1 << attempt.min(5));
                    std::thread::sleep(Duration::from_millis(backoff.min(4_000)));
                }
            }
        }
        Err(last_err)
    }
}

/// JSON-schema fragment for one parameter.
fn param_schema(param: &ParameterSpec) -> Value {
    let mut schema = match param.ptype {
        ParamType::String => json!({"type": "string"}),
        ParamType::Integer => json!({"type": "integer"}),
        ParamType::Number => json!({"type": "number"}),
        ParamType::Boolean => json!({"type": "boolean"}),
        ParamType::Array => json!({"type": "array", "items": {}}),
        ParamType::Enum => json!({"type": "string", "enum": param.enum_values}),
    };
    if !param.description.is_empty() {
        schema["description"] = Value::String(param.description.clone());
    }
    schema
}

/// One tool spec in function-calling wire form.
fn tool_wire_spec(tool: &ToolSpec) -> Value {
    let mut properties = serde_json::Map::new();
    for p in &tool.parameters {
        properties.insert(p.name.clone(), param_schema(p));
    }
    let required: Vec<&str> = tool.required_params().map(|p| p.name.as_str()).collect();
    json!({
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {
                "type": "object",
                "properties": Value::Object(properties),
                "required": required,
            },
        },
    })
}

/// Build a chat-completions request body.
pub fn build_request_body(model: &str, messages: &[Message], tools: &[ToolSpec]) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages,
    });
    if !tools.is_empty() {
        body["tools"] = Value::Array(tools.iter().map(tool_wire_spec).collect());
    }
    body
}

/// Extract the single assistant message from a chat-completions response.
pub fn parse_response_message(response: &Value) -> Result<Message, ClientError> {
    let message = response
        .pointer("/choices/0/message")
        .ok_or_else(|| ClientError::Malformed("response has no choices[0].message".to_string()))?;
    let parsed: Message = serde_json::from_value(message.clone())
        .map_err(|e| ClientError::Malformed(format!("undecodable assistant message: {e}")))?;
    if parsed.role != Role::Assistant {
        return Err(ClientError::Malformed(format!(
            "expected an assistant message, got role {:?}",
            parsed.role
        )));
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materialize::fixtures::order_bundle;
    use crate::synth::{build_task, TemplateComposer, WalkConfig};

    fn task_and_bundle(seed: u64) -> (DomainBundle, AgenticTask) {
        let bundle = order_bundle();
        let task = build_task(&bundle, seed, &WalkConfig::default(), &TemplateComposer)
            .expect("task synthesis");
        (bundle, task)
    }

    /// Assert the structural conversation invariants of a trajectory.
    fn assert_well_formed(trajectory: &Trajectory) {
        assert_eq!(trajectory.messages[0].role, Role::System);
        assert_eq!(trajectory.messages[1].role, Role::User);
        let mut open_calls: Vec<String> = Vec::new();
        let mut last_speaker = Role::System;
        for m in &trajectory.messages[1..] {
            match m.role {
                Role::User => {
                    assert!(m.tool_calls.is_empty());
                    assert_ne!(last_speaker, Role::User, "two consecutive user messages");
                    last_speaker = Role::User;
                }
                Role::Assistant => {
                    assert!(open_calls.is_empty(), "assistant spoke over pending tool calls");
                    open_calls = m.tool_calls.iter().map(|c| c.id.clone()).collect();
                    last_speaker = Role::Assistant;
                }
                Role::Tool => {
                    let id = m.tool_call_id.clone().expect("tool message without id");
                    let pos = open_calls
                        .iter()
                        .position(|c| *c == id)
                        .expect("tool message answers no pending call");
                    open_calls.remove(pos);
                }
                Role::System => panic!("system message after the preamble"),
            }
        }
        assert!(open_calls.is_empty(), "dangling tool calls at episode end");
        let total: usize = trajectory
            .messages
            .iter()
            .map(|m| m.tool_calls.len())
            .sum();
        assert_eq!(total, trajectory.tool_call_count);
    }

    #[test]
    fn test_replay_episode_reaches_golden_digest() {
        let (bundle, task) = task_and_bundle(41);
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, 1);
        let trajectory =
            run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default());
        assert_eq!(trajectory.terminal_reason, TerminalReason::UserDone);
        assert_eq!(trajectory.final_digest, task.golden_digest);
        assert_eq!(trajectory.tool_call_count, task.golden_actions.len());
        assert_well_formed(&trajectory);

        // Golden actions appear verbatim, in order, one per assistant turn.
        let replayed: Vec<ToolCall> = trajectory
            .assistant_calls()
            .map(|c| c.to_call().expect("decodable call"))
            .collect();
        let golden: Vec<ToolCall> = task
            .golden_actions
            .iter()
            .map(|a| ToolCall { tool_name: a.tool_name.clone(), arguments: a.arguments.clone() })
            .collect();
        assert_eq!(replayed, golden);
    }

    #[test]
    fn test_replay_agent_emits_one_action_per_turn_then_text() {
        let (bundle, task) = task_and_bundle(7);
        let n = task.golden_actions.len();
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, 1);
        let trajectory =
            run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default());
        let call_turns = trajectory
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant && !m.tool_calls.is_empty())
            .count();
        let text_turns = trajectory
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant && m.tool_calls.is_empty())
            .count();
        assert_eq!(call_turns, n);
        assert!(trajectory
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant && !m.tool_calls.is_empty())
            .all(|m| m.tool_calls.len() == 1));
        assert_eq!(text_turns, 1);
    }

    #[test]
    fn test_unknown_tool_error_feeds_back_and_episode_continues() {
        struct OneBadCallAgent {
            fired: bool,
        }
        impl ModelClient for OneBadCallAgent {
            fn complete(
                &mut self,
                _m: &[Message],
                _t: &[ToolSpec],
            ) -> Result<Message, ClientError> {
                if !self.fired {
                    self.fired = true;
                    Ok(Message::assistant_calls(
                        "",
                        vec![AssistantToolCall {
                            id: "call_x".to_string(),
                            function: FunctionCall {
                                name: "no_such_tool".to_string(),
                                arguments: "{}".to_string(),
                            },
                        }],
                    ))
                } else {
                    Ok(Message::assistant_text("Sorry, that tool does not exist."))
                }
            }
        }

        let (bundle, task) = task_and_bundle(3);
        let mut agent = OneBadCallAgent { fired: false };
        let mut user = make_scripted_user(&task, 1);
        let trajectory =
            run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default());
        assert_eq!(trajectory.terminal_reason, TerminalReason::UserDone);
        let tool_msg = trajectory
            .messages
            .iter()
            .find(|m| m.role == Role::Tool)
            .expect("error fed back as a tool message");
        assert!(tool_msg.content.contains("unknown_tool"));
        // State untouched by the failed call.
        assert_eq!(trajectory.final_digest, digest(&task.seed_state));
        assert_well_formed(&trajectory);
    }

    #[test]
    fn test_turn_cap_with_never_done_user() {
        struct ChattyUser;
        impl ModelClient for ChattyUser {
            fn complete(
                &mut self,
                _m: &[Message],
                _t: &[ToolSpec],
            ) -> Result<Message, ClientError> {
                Ok(Message::assistant_text("And one more thing."))
            }
        }
        struct PoliteAgent;
        impl ModelClient for PoliteAgent {
            fn complete(
                &mut self,
                _m: &[Message],
                _t: &[ToolSpec],
            ) -> Result<Message, ClientError> {
                Ok(Message::assistant_text("Certainly."))
            }
        }

        let (bundle, task) = task_and_bundle(11);
        let limits = EpisodeLimits { max_turns: 1, ..EpisodeLimits::default() };
        let trajectory =
            run_episode(&task, &bundle, &mut PoliteAgent, &mut ChattyUser, &limits);
        assert_eq!(trajectory.terminal_reason, TerminalReason::TurnCap);
        let user_turns = trajectory.messages.iter().filter(|m| m.role == Role::User).count();
        assert_eq!(user_turns, 1);
        assert_well_formed(&trajectory);
    }

    #[test]
    fn test_tool_call_cap_terminates_episode() {
        let (bundle, task) = task_and_bundle(19);
        assert!(task.golden_actions.len() >= 2, "fixture walk long enough");
        let limits = EpisodeLimits { max_tool_calls: 1, ..EpisodeLimits::default() };
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, 1);
        let trajectory = run_episode(&task, &bundle, &mut agent, &mut user, &limits);
        assert_eq!(trajectory.terminal_reason, TerminalReason::TurnCap);
        assert_eq!(trajectory.tool_call_count, 1);
        assert_well_formed(&trajectory);
    }

    #[test]
    fn test_agent_stop_on_empty_reply() {
        struct MuteAgent;
        impl ModelClient for MuteAgent {
            fn complete(
                &mut self,
                _m: &[Message],
                _t: &[ToolSpec],
            ) -> Result<Message, ClientError> {
                Ok(Message::assistant_text(""))
            }
        }
        let (bundle, task) = task_and_bundle(23);
        let mut user = make_scripted_user(&task, 1);
        let trajectory = run_episode(
            &task,
            &bundle,
            &mut MuteAgent,
            &mut user,
            &EpisodeLimits::default(),
        );
        assert_eq!(trajectory.terminal_reason, TerminalReason::AgentStop);
    }

    #[test]
    fn test_client_failure_recorded_not_propagated() {
        struct BrokenAgent;
        impl ModelClient for BrokenAgent {
            fn complete(
                &mut self,
                _m: &[Message],
                _t: &[ToolSpec],
            ) -> Result<Message, ClientError> {
                Err(ClientError::Transport("connection refused".to_string()))
            }
        }
        let (bundle, task) = task_and_bundle(29);
        let mut user = make_scripted_user(&task, 1);
        let trajectory = run_episode(
            &task,
            &bundle,
            &mut BrokenAgent,
            &mut user,
            &EpisodeLimits::default(),
        );
        assert_eq!(trajectory.terminal_reason, TerminalReason::ClientFailure);
    }

    #[test]
    fn test_scripted_user_reveals_chunks_then_done_once() {
        let (bundle, task) = task_and_bundle(41);
        let sentences = task.intent.matches(". ").count() + 1;
        let chunks = 3.min(sentences);
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, chunks);
        let limits = EpisodeLimits::default();
        let trajectory = run_episode(&task, &bundle, &mut agent, &mut user, &limits);
        assert_eq!(trajectory.terminal_reason, TerminalReason::UserDone);
        let user_msgs: Vec<&Message> =
            trajectory.messages.iter().filter(|m| m.role == Role::User).collect();
        assert_eq!(user_msgs.len(), chunks);
        // The utterances concatenate back to the full intent.
        let joined = user_msgs.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join(" ");
        assert_eq!(joined, task.intent.trim());
        // The done token never appears in the recorded conversation.
        assert!(trajectory
            .messages
            .iter()
            .all(|m| !m.content.contains(&limits.user_done_token)));
        // Still replays to the golden digest despite incremental revelation.
        assert_eq!(trajectory.final_digest, task.golden_digest);
    }

    #[test]
    fn test_split_intent_grouping() {
        let intent = "First, a. Then, b. Then, c.";
        assert_eq!(split_intent(intent, 1), vec![intent.to_string()]);
        assert_eq!(
            split_intent(intent, 3),
            vec!["First, a.".to_string(), "Then, b.".to_string(), "Then, c.".to_string()]
        );
        // More chunks than sentences clamps.
        assert_eq!(split_intent(intent, 10).len(), 3);
        assert_eq!(split_intent(intent, 2).len(), 2);
    }

    #[test]
    fn test_identical_episodes_are_byte_identical_and_isolated() {
        let (bundle, task) = task_and_bundle(53);
        let run = || {
            let mut agent = make_replay_agent(&task);
            let mut user = make_scripted_user(&task, 2);
            run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default())
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        // A second episode over the same task starts from the same seed
        // state: digests agree, so no state leaked across episodes.
        assert_eq!(a.final_digest, b.final_digest);
    }

    #[test]
    fn test_wire_request_and_response_round_trip() {
        let (bundle, task) = task_and_bundle(61);
        let messages = vec![
            Message::system("s"),
            Message::user("u"),
        ];
        let body = build_request_body("test-model", &messages, &bundle.tools);
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
        let tools = body["tools"].as_array().unwrap();
        assert_eq!(tools.len(), bundle.tools.len());
        assert_eq!(tools[0]["type"], "function");
        let f = &tools[0]["function"];
        assert_eq!(f["name"], bundle.tools[0].name.as_str());
        assert_eq!(f["parameters"]["type"], "object");
        assert!(f["parameters"]["required"].is_array());

        // A canned chat-completions response decodes into an assistant
        // message whose call text parses back into a runtime call.
        let golden = &task.golden_actions[0];
        let args_text = canonical_json(&golden.arguments).unwrap();
        let response = json!({
            "choices": [{
                "message": {
                    "role": "assistant",
                    "content": "",
                    "tool_calls": [{
                        "id": "call_0",
                        "function": {"name": golden.tool_name, "arguments": args_text},
                    }],
                }
            }]
        });
        let parsed = parse_response_message(&response).expect("decodable response");
        assert_eq!(parsed.role, Role::Assistant);
        let call = parsed.tool_calls[0].to_call().expect("decodable arguments");
        assert_eq!(call.tool_name, golden.tool_name);
        assert_eq!(call.arguments, golden.arguments);

        // Malformed shapes are reported, not panicked on.
        assert!(parse_response_message(&json!({"choices": []})).is_err());
        let bad = AssistantToolCall {
            id: "x".to_string(),
            function: FunctionCall { name: "t".to_string(), arguments: "not json".to_string() },
        };
        assert!(bad.to_call().is_err());
    }

    #[test]
    fn test_trajectory_wire_format_round_trip() {
        let (bundle, task) = task_and_bundle(67);
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, 1);
        let trajectory =
            run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default());
        let line = serde_json::to_string(&trajectory).unwrap();
        let value: Value = serde_json::from_str(&line).unwrap();
        for key in ["task_id", "messages", "terminal_reason", "final_digest", "tool_call_count"] {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(value["terminal_reason"], "user_done");
        let back: Trajectory = serde_json::from_str(&line).unwrap();
        assert_eq!(back, trajectory);
    }
}
