//! Three-stage funnel filtering of interplay trajectories.
//!
//! Stage order is fixed: *validity* (conversation structure and repetition
//! control) → *state alignment* (re-execute the trajectory's tool calls and
//! compare the resulting database digest against the task's golden digest) →
//! *exact match* (ordered tool/argument sequence equality, applied to
//! all-read tasks by default since reads leave no state evidence). Evaluation
//! short-circuits at the first failure; a trajectory is kept only when every
//! applicable stage passes.
//!
//! Tool calls that *returned* errors are never grounds for rejection by
//! themselves — an agent may probe, fail, and recover; what matters is the
//! final state (and, where applicable, the exact call sequence).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::materialize::DomainBundle;
use crate::runtime::{
    digest, digest_ignoring, execute, CellValue, CounterSynthesizer, EnvironmentState, ToolCall,
};
use crate::synth::AgenticTask;
use crate::interplay::{Role, TerminalReason, Trajectory};

/// When the exact-match stage applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactMatchMode {
    /// Only for tasks whose golden actions are all reads (default): such
    /// trajectories cannot be judged by state evidence.
    AllReadOnly,
    /// For every task (stricter curation).
    Always,
}

/// Funnel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Whitespace-token n-gram size for the repetition detector (≥ 2).
    pub ngram_n: usize,
    /// An assistant message fails when one n-gram occupies more than this
    /// fraction of its n-grams; in (0, 1].
    pub repetition_threshold: f64,
    pub exact_match_mode: ExactMatchMode,
    /// Column names (bare or `table.column`) excluded from digest
    /// comparison.
    pub digest_ignore_columns: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            ngram_n: 8,
            repetition_threshold: 0.5,
            exact_match_mode: ExactMatchMode::AllReadOnly,
            digest_ignore_columns: BTreeSet::new(),
        }
    }
}

/// The three funnel stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Validity,
    StateAlignment,
    ExactMatch,
}

/// Outcome of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub stage: FilterStage,
    pub passed: bool,
    /// Non-empty when `passed` is false; starts with a stable slug
    /// (`alternation`, `dangling_tool_call`, `client_failure`,
    /// `ngram_repetition`, `replay_error`, `digest_mismatch`,
    /// `sequence_mismatch`).
    pub reason: String,
}

impl FilterVerdict {
    fn pass(stage: FilterStage) -> Self {
        Self { stage, passed: true, reason: String::new() }
    }

    fn fail(stage: FilterStage, reason: impl Into<String>) -> Self {
        Self { stage, passed: false, reason: reason.into() }
    }
}

/// Outcome of the whole funnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelResult {
    pub kept: bool,
    /// Verdicts in evaluation order; stops at the first failure.
    pub verdicts: Vec<FilterVerdict>,
}

/// One line of the funnel report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelRecord {
    pub task_id: String,
    pub kept: bool,
    pub verdicts: Vec<FilterVerdict>,
}

impl FunnelRecord {
    pub fn new(task_id: impl Into<String>, result: FunnelResult) -> Self {
        Self { task_id: task_id.into(), kept: result.kept, verdicts: result.verdicts }
    }
}

/// Largest share of any single whitespace-token n-gram among a text's
/// n-grams; `None` when the text has fewer than `n` tokens.
fn max_ngram_share(text: &str, n: usize) -> Option<f64> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < n {
        return None;
    }
    let mut counts: HashMap<&[&str], usize> = HashMap::new();
    let mut max = 0usize;
    for window in tokens.windows(n) {
        let c = counts.entry(window).or_insert(0);
        *c += 1;
        max = max.max(*c);
    }
    let total = tokens.len() - n + 1;
    Some(max as f64 / total as f64)
}

/// Stage 1: conversation structure and repetition control.
///
/// Fails on client-failure episodes, role-alternation violations (system
/// messages after the preamble, a conversation not opening with a user
/// message, consecutive user messages, user turns while tool calls are
/// pending), dangling tool calls (a call without a response before the next
/// conversational turn, or a response answering no pending call), and
/// degenerate repetition in any assistant message.
pub fn check_validity(trajectory: &Trajectory, config: &FilterConfig) -> FilterVerdict {
    assert!(config.ngram_n >= 2, "ngram_n must be at least 2");
    let stage = FilterStage::Validity;
    if trajectory.terminal_reason == TerminalReason::ClientFailure {
        return FilterVerdict::fail(stage, "client_failure: episode ended on a client error");
    }

    // Skip the leading system preamble.
    let body: Vec<&crate::interplay::Message> = trajectory
        .messages
        .iter()
        .skip_while(|m| m.role == Role::System)
        .collect();
    if body.first().map(|m| m.role) != Some(Role::User) {
        return FilterVerdict::fail(stage, "alternation: conversation does not open with a user message");
    }

    let mut pending: Vec<&str> = Vec::new();
    let mut last_conversational: Option<Role> = None;
    for (i, message) in body.iter().enumerate() {
        match message.role {
            Role::System => {
                return FilterVerdict::fail(
                    stage,
                    format!("alternation: system message at position {i} after the preamble"),
                );
            }
            Role::User => {
                if !message.tool_calls.is_empty() || message.tool_call_id.is_some() {
                    return FilterVerdict::fail(
                        stage,
                        format!("alternation: user message at position {i} carries tool fields"),
                    );
                }
                if !pending.is_empty() {
                    return FilterVerdict::fail(
                        stage,
                        format!("dangling_tool_call: user turn at position {i} while calls are unanswered"),
                    );
                }
                if last_conversational == Some(Role::User) {
                    return FilterVerdict::fail(
                        stage,
                        format!("alternation: consecutive user messages at position {i}"),
                    );
                }
                last_conversational = Some(Role::User);
            }
            Role::Assistant => {
                if message.tool_call_id.is_some() {
                    return FilterVerdict::fail(
                        stage,
                        format!("alternation: assistant message at position {i} carries a tool_call_id"),
                    );
                }
                if !pending.is_empty() {
                    return FilterVerdict::fail(
                        stage,
                        format!("dangling_tool_call: assistant turn at position {i} while calls are unanswered"),
                    );
                }
                if last_conversational != Some(Role::User) && !matches!(body.get(i.wrapping_sub(1)), Some(m) if m.role == Role::Tool)
                {
                    return FilterVerdict::fail(
                        stage,
                        format!("alternation: assistant message at position {i} follows no user or tool turn"),
                    );
                }
                pending = message.tool_calls.iter().map(|c| c.id.as_str()).collect();
                last_conversational = Some(Role::Assistant);
            }
            Role::Tool => {
                let Some(id) = message.tool_call_id.as_deref() else {
                    return FilterVerdict::fail(
                        stage,
                        format!("dangling_tool_call: tool message at position {i} names no call"),
                    );
                };
                let Some(pos) = pending.iter().position(|p| *p == id) else {
                    return FilterVerdict::fail(
                        stage,
                        format!("dangling_tool_call: tool message at position {i} answers no pending call"),
                    );
                };
                pending.remove(pos);
            }
        }
    }
    if !pending.is_empty() {
        return FilterVerdict::fail(
            stage,
            format!("dangling_tool_call: {} unanswered call(s) at episode end", pending.len()),
        );
    }

    for (i, message) in body.iter().enumerate() {
        if message.role != Role::Assistant {
            continue;
        }
        if let Some(share) = max_ngram_share(&message.content, config.ngram_n) {
            if share > config.repetition_threshold {
                return FilterVerdict::fail(
                    stage,
                    format!(
                        "ngram_repetition: assistant message at position {i} has a {}-gram at share {share:.3}",
                        config.ngram_n
                    ),
                );
            }
        }
    }
    FilterVerdict::pass(stage)
}

/// Decode a trajectory's assistant tool calls in order.
fn decode_calls(trajectory: &Trajectory) -> Result<Vec<ToolCall>, String> {
    trajectory
        .assistant_calls()
        .map(|c| c.to_call().map_err(|e| e.to_string()))
        .collect()
}

/// Replay `calls` from `seed` over `bundle`: fresh pk synthesizer, errors
/// tolerated, final state returned.
fn replay_calls(
    seed: &EnvironmentState,
    bundle: &DomainBundle,
    calls: &[ToolCall],
) -> EnvironmentState {
    let mut state = seed.clone();
    let mut synth = CounterSynthesizer::new();
    for call in calls {
        let (next, _result) = execute(&state, bundle, call, &mut synth);
        state = next;
    }
    state
}

/// Stage 2: database-level state alignment.
///
/// Re-executes the trajectory's tool calls from the task's seed state — the
/// recorded final digest is never trusted — and compares the resulting
/// digest with the golden digest. With a non-empty ignore set, the golden
/// actions are replayed too so both sides are digested under the same
/// masking.
pub fn check_state_alignment(
    trajectory: &Trajectory,
    task: &AgenticTask,
    bundle: &DomainBundle,
    config: &FilterConfig,
) -> FilterVerdict {
    let stage = FilterStage::StateAlignment;
    let calls = match decode_calls(trajectory) {
        Ok(calls) => calls,
        Err(e) => return FilterVerdict::fail(stage, format!("replay_error: {e}")),
    };
    let replayed = replay_calls(&task.seed_state, bundle, &calls);
    let (actual, expected) = if config.digest_ignore_columns.is_empty() {
        (digest(&replayed), task.golden_digest.clone())
    } else {
        let golden_calls: Vec<ToolCall> = task
            .golden_actions
            .iter()
            .map(|a| ToolCall { tool_name: a.tool_name.clone(), arguments: a.arguments.clone() })
            .collect();
        let golden_state = replay_calls(&task.seed_state, bundle, &golden_calls);
        (
            digest_ignoring(&replayed, &config.digest_ignore_columns),
            digest_ignoring(&golden_state, &config.digest_ignore_columns),
        )
    };
    if actual == expected {
        FilterVerdict::pass(stage)
    } else {
        FilterVerdict::fail(
            stage,
            format!("digest_mismatch: replayed {} != golden {}", actual.hex, expected.hex),
        )
    }
}

/// Normalize a cell for exact-match comparison: integral floats collapse to
/// integers (recursively inside arrays); strings stay verbatim.
fn canonical_cell(value: &CellValue) -> CellValue {
    match value {
        CellValue::Num(x)
            if x.fract() == 0.0 && x.is_finite() && (i64::MIN as f64..=i64::MAX as f64).contains(x) =>
        {
            CellValue::Int(*x as i64)
        }
        CellValue::Arr(items) => CellValue::Arr(items.iter().map(canonical_cell).collect()),
        other => other.clone(),
    }
}

fn canonical_call(call: &ToolCall) -> (String, Vec<(String, CellValue)>) {
    (
        call.tool_name.clone(),
        call.arguments
            .iter()
            .map(|(k, v)| (k.clone(), canonical_cell(v)))
            .collect(),
    )
}

/// Stage 3: ordered exact match of (tool, arguments) against the golden
/// actions. Arguments are compared key-sorted with numbers normalized and
/// strings verbatim.
pub fn check_exact_match(
    trajectory: &Trajectory,
    task: &AgenticTask,
    _config: &FilterConfig,
) -> FilterVerdict {
    let stage = FilterStage::ExactMatch;
    let calls = match decode_calls(trajectory) {
        Ok(calls) => calls,
        Err(e) => return FilterVerdict::fail(stage, format!("replay_error: {e}")),
    };
    if calls.len() != task.golden_actions.len() {
        return FilterVerdict::fail(
            stage,
            format!(
                "sequence_mismatch: {} calls vs {} golden actions",
                calls.len(),
                task.golden_actions.len()
            ),
        );
    }
    for (i, (call, action)) in calls.iter().zip(&task.golden_actions).enumerate() {
        let golden = ToolCall {
            tool_name: action.tool_name.clone(),
            arguments: action.arguments.clone(),
        };
        if canonical_call(call) != canonical_call(&golden) {
            return FilterVerdict::fail(
                stage,
                format!("sequence_mismatch: call {i} diverges from golden action {i}"),
            );
        }
    }
    FilterVerdict::pass(stage)
}

/// Whether the exact-match stage applies to `task` under `config`.
pub fn exact_match_applicable(task: &AgenticTask, config: &FilterConfig) -> bool {
    match config.exact_match_mode {
        ExactMatchMode::Always => true,
        ExactMatchMode::AllReadOnly => task.all_read,
    }
}

/// Run the full funnel in order, short-circuiting at the first failure.
pub fn run_funnel(
    trajectory: &Trajectory,
    task: &AgenticTask,
    bundle: &DomainBundle,
    config: &FilterConfig,
) -> FunnelResult {
    let mut verdicts = Vec::with_capacity(3);

    let v = check_validity(trajectory, config);
    let failed = !v.passed;
    verdicts.push(v);
    if failed {
        return FunnelResult { kept: false, verdicts };
    }

    let v = check_state_alignment(trajectory, task, bundle, config);
    let failed = !v.passed;
    verdicts.push(v);
    if failed {
        return FunnelResult { kept: false, verdicts };
    }

    if exact_match_applicable(task, config) {
        let v = check_exact_match(trajectory, task, config);
        let failed = !v.passed;
        verdicts.push(v);
        if failed {
            return FunnelResult { kept: false, verdicts };
        }
    }

    FunnelResult { kept: true, verdicts }
}
