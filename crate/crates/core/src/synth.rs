//! Task synthesis: directed walks over a domain's dependency slice,
//! grounded argument generation, golden-trace execution, and natural
//! language intent composition.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ParamType, ToolSpec};
use crate::materialize::{DatabaseSchema, DomainBundle, Effect, OpKind, ToolImpl};
use crate::runtime::{
    digest, execute, init_state, CallStatus, CellValue, CounterSynthesizer, EnvironmentState,
    PkValue, StateDigest, ToolCall,
};
use crate::util::derive_seed;

/// Walk sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Walks shorter than this are resampled (then accepted with a warning).
    pub min_steps: usize,
    /// Hard stop for walk length.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { min_steps: 2, max_steps: 8, seed: 0 }
    }
}

/// Default number of seeded rows per table in task seed states.
pub const DEFAULT_ROWS_PER_TABLE: RangeInclusive<usize> = 3..=6;

/// How many times a too-short walk is redrawn before being accepted.
const WALK_RETRY_CAP: usize = 16;

/// One step of a golden action sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenAction {
    pub tool_name: String,
    pub arguments: BTreeMap<String, CellValue>,
    /// Execution status this action is expected (and verified) to produce.
    pub expected_status: CallStatus,
}

/// A verifiable synthesized task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgenticTask {
    pub task_id: String,
    pub domain_id: String,
    pub seed_state: EnvironmentState,
    pub golden_actions: Vec<GoldenAction>,
    pub golden_digest: StateDigest,
    pub intent: String,
    /// True when every golden action's tool is read-classified.
    pub all_read: bool,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot compose an intent from zero actions")]
    EmptyActions,
    #[error("golden trace replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("internal synthesis failure: {0}")]
    Internal(String),
}

/// Sample a tool-name walk along the bundle's directed dependency slice:
/// seeded-uniform start, seeded-uniform outgoing edge at each step, halting
/// at `max_steps` or at a node without outgoing edges. Returns the walk and
/// a warning when a shorter-than-minimum walk had to be accepted.
pub fn sample_walk(bundle: &DomainBundle, config: &WalkConfig) -> (Vec<String>, Option<String>) {
    debug_assert!(config.min_steps >= 1 && config.min_steps <= config.max_steps);
    let mut names: Vec<&str> = bundle.tools.iter().map(|t| t.name.as_str()).collect();
    names.sort();
    let mut out_edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &bundle.graph_slice {
        out_edges.entry(e.from.as_str()).or_default().push(e.to.as_str());
    }
    for targets in out_edges.values_mut() {
        targets.sort();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut walk = Vec::new();
    for _attempt in 0..=WALK_RETRY_CAP {
        walk = Vec::with_capacity(config.max_steps);
        let mut current = *names.choose(&mut rng).expect("bundle has tools");
        walk.push(current.to_string());
        while walk.len() < config.max_steps {
            let Some(targets) = out_edges.get(current) else { break };
            if targets.is_empty() {
                break;
            }
            current = targets.choose(&mut rng).expect("non-empty");
            walk.push(current.to_string());
        }
        if walk.len() >= config.min_steps {
            return (walk, None);
        }
    }
    let warning = format!(
        "accepted a {}-step walk below min_steps={} after {} retries",
        walk.len(),
        config.min_steps,
        WALK_RETRY_CAP
    );
    (walk, Some(warning))
}

/// Pluggable argument generation strategy. Returns the argument map and
/// the execution status those arguments are expected to produce.
pub trait ArgGenerator {
    fn generate(
        &self,
        tool: &ToolSpec,
        impl_: &ToolImpl,
        schema: &DatabaseSchema,
        state: &EnvironmentState,
        seed: u64,
    ) -> (BTreeMap<String, CellValue>, CallStatus);
}

const VALUE_WORDS: [&str; 16] = [
    "arrow", "basil", "cedar", "delta", "ferry", "grove", "hazel", "iris", "jade", "koral",
    "lapis", "mango", "north", "olive", "plume", "quill",
];

fn fresh_value(rng: &mut ChaCha8Rng, ptype: ParamType, enum_values: &[String]) -> CellValue {
    match ptype {
        ParamType::String => {
            CellValue::Str((*VALUE_WORDS.choose(rng).expect("non-empty")).to_string())
        }
        ParamType::Integer => CellValue::Int(rng.gen_range(1..50)),
        ParamType::Number => CellValue::Num((rng.gen_range(1.0..50.0_f64) * 10.0).round() / 10.0),
        ParamType::Boolean => CellValue::Bool(rng.gen_bool(0.5)),
        ParamType::Enum => CellValue::Str(
            enum_values.choose(rng).cloned().unwrap_or_else(|| "unspecified".into()),
        ),
        ParamType::Array => {
            let n = rng.gen_range(1..=2);
            CellValue::Arr(
                (0..n)
                    .map(|_| CellValue::Str((*VALUE_WORDS.choose(rng).expect("non-empty")).to_string()))
                    .collect(),
            )
        }
    }
}

/// Default generator, grounded on the live database state:
/// - selector parameters take primary keys sampled from existing rows of
///   the target table (a synthetic missing key when the table is empty,
///   deliberately yielding a selector-miss for updates and deletes);
/// - insert parameters get fresh values, with the key parameter set to the
///   next free key;
/// - update assignments are redrawn until they differ from the selected
///   row's current cells, so a golden write always changes state.
pub struct GroundedArgGenerator;

impl ArgGenerator for GroundedArgGenerator {
    fn generate(
        &self,
        tool: &ToolSpec,
        impl_: &ToolImpl,
        schema: &DatabaseSchema,
        state: &EnvironmentState,
        seed: u64,
    ) -> (BTreeMap<String, CellValue>, CallStatus) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut args: BTreeMap<String, CellValue> = BTreeMap::new();
        let table = schema.table(&impl_.target_table).expect("validated impl");
        let rows = &state.tables[&impl_.target_table];
        let is_insert = matches!(impl_.effect, Some(Effect::Insert));

        // Ground the selector on an existing row when possible.
        let mut grounded_row = None;
        let mut selector_missed = false;
        if !impl_.selector.is_empty() {
            if rows.is_empty() {
                selector_missed = true;
                let miss = match table.pk_column().ctype {
                    ParamType::Integer => CellValue::Int(0),
                    _ => CellValue::Str(format!("{}_0", table.name)),
                };
                for b in &impl_.selector {
                    args.insert(b.param.clone(), miss.clone());
                }
            } else {
                let keys: Vec<&PkValue> = rows.keys().collect();
                let pk = *keys.choose(&mut rng).expect("non-empty");
                grounded_row = rows.get(pk);
                for b in &impl_.selector {
                    args.insert(b.param.clone(), pk.to_cell());
                }
            }
        }

        let assignments: Vec<&str> = match &impl_.effect {
            Some(Effect::Update { assignments }) => {
                assignments.iter().map(|b| b.param.as_str()).collect()
            }
            _ => Vec::new(),
        };

        for (idx, p) in tool.parameters.iter().enumerate() {
            if args.contains_key(&p.name) {
                continue;
            }
            let is_assignment = assignments.contains(&p.name.as_str());
            // Always populate required parameters and the first update
            // assignment; optional extras join half the time.
            let force = p.required || (is_assignment && idx == 0) || (is_assignment && assignments.len() == 1);
            if !force && !rng.gen_bool(0.5) {
                continue;
            }
            if is_insert && p.name == table.primary_key {
                let next = CounterSynthesizer::floor_for(table, state) + 1;
                let pk = match table.pk_column().ctype {
                    ParamType::Integer => CellValue::Int(next),
                    _ => CellValue::Str(format!("{}_{next}", table.name)),
                };
                args.insert(p.name.clone(), pk);
                continue;
            }
            let mut value = fresh_value(&mut rng, p.ptype, &p.enum_values);
            if is_assignment {
                if let Some(current) = grounded_row.and_then(|r| r.get(&p.name)) {
                    for _ in 0..8 {
                        if &value != current {
                            break;
                        }
                        value = match value {
                            CellValue::Bool(b) => CellValue::Bool(!b),
                            _ => fresh_value(&mut rng, p.ptype, &p.enum_values),
                        };
                    }
                }
            }
            args.insert(p.name.clone(), value);
        }

        let expected = match (&impl_.op_kind, &impl_.effect) {
            (OpKind::Read, _) => CallStatus::Ok,
            (_, Some(Effect::Insert)) => CallStatus::Ok,
            (_, Some(Effect::Update { .. })) | (_, Some(Effect::Delete)) => {
                if selector_missed {
                    CallStatus::Error
                } else if let Some(Effect::Update { assignments }) = &impl_.effect {
                    let any_change = assignments.iter().any(|b| {
                        match (args.get(&b.param), grounded_row.and_then(|r| r.get(&b.column))) {
                            (Some(new), Some(old)) => new != old,
                            (Some(_), None) => true,
                            (None, _) => false,
                        }
                    });
                    if any_change {
                        CallStatus::Ok
                    } else {
                        CallStatus::Error
                    }
                } else {
                    CallStatus::Ok
                }
            }
            (OpKind::Write, None) => CallStatus::Ok,
        };
        (args, expected)
    }
}

/// Generate arguments for one tool against a live state.
pub fn generate_arguments(
    tool: &ToolSpec,
    impl_: &ToolImpl,
    schema: &DatabaseSchema,
    state: &EnvironmentState,
    seed: u64,
    generator: &dyn ArgGenerator,
) -> (BTreeMap<String, CellValue>, CallStatus) {
    generator.generate(tool, impl_, schema, state, seed)
}

/// Pluggable intent phrasing strategy.
pub trait IntentComposer {
    fn compose(&self, actions: &[GoldenAction], tools: &[ToolSpec]) -> Result<String, String>;
}

/// Default composer: one clause per action naming the operation and every
/// argument value verbatim, joined as "First, … Then, …".
pub struct TemplateComposer;

impl TemplateComposer {
    fn clause(action: &GoldenAction) -> String {
        let verb = action.tool_name.replace('_', " ");
        if action.arguments.is_empty() {
            return verb;
        }
        let args: Vec<String> = action
            .arguments
            .iter()
            .map(|(k, v)| format!("{k}={}", v.display()))
            .collect();
        format!("{verb} with {}", args.join(", "))
    }
}

impl IntentComposer for TemplateComposer {
    fn compose(&self, actions: &[GoldenAction], _tools: &[ToolSpec]) -> Result<String, String> {
        let clauses: Vec<String> = actions
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let lead = if i == 0 { "First" } else { "Then" };
                format!("{lead}, {}.", Self::clause(a))
            })
            .collect();
        Ok(clauses.join(" "))
    }
}

/// True when every argument value of every action appears verbatim in the
/// text (the property that makes exact-match filtering meaningful).
pub fn preserves_argument_values(text: &str, actions: &[GoldenAction]) -> bool {
    actions.iter().all(|a| {
        a.arguments.values().all(|v| text.contains(&v.display()))
    })
}

/// Compose the user intent for an action sequence. A composer failure, or
/// output that drops an argument value, falls back to the default template.
pub fn compose_intent(
    actions: &[GoldenAction],
    tools: &[ToolSpec],
    composer: &dyn IntentComposer,
) -> Result<String, SynthError> {
    if actions.is_empty() {
        return Err(SynthError::EmptyActions);
    }
    if let Ok(text) = composer.compose(actions, tools) {
        if preserves_argument_values(&text, actions) {
            return Ok(text);
        }
    }
    let fallback = TemplateComposer
        .compose(actions, tools)
        .map_err(|e| SynthError::Internal(format!("template composer failed: {e}")))?;
    debug_assert!(preserves_argument_values(&fallback, actions));
    Ok(fallback)
}

/// Build one verifiable task: seed a state, walk the dependency slice,
/// ground arguments step by step while executing, digest the final state,
/// and compose the intent. The golden trace is replayed before returning.
pub fn build_task(
    bundle: &DomainBundle,
    seed: u64,
    walk_config: &WalkConfig,
    composer: &dyn IntentComposer,
) -> Result<AgenticTask, SynthError> {
    build_task_with_rows(bundle, seed, walk_config, composer, DEFAULT_ROWS_PER_TABLE)
}

/// `build_task` with an explicit seed-state row range.
pub fn build_task_with_rows(
    bundle: &DomainBundle,
    seed: u64,
    walk_config: &WalkConfig,
    composer: &dyn IntentComposer,
    rows_per_table: RangeInclusive<usize>,
) -> Result<AgenticTask, SynthError> {
    let seed_state = init_state(&bundle.schema, derive_seed(seed, "state", 0), rows_per_table);
    let walk_cfg = WalkConfig { seed: derive_seed(seed, "walk", 0), ..walk_config.clone() };
    let (walk, _short_warning) = sample_walk(bundle, &walk_cfg);

    let mut state = seed_state.clone();
    let mut synth = CounterSynthesizer::new();
    let mut actions = Vec::with_capacity(walk.len());
    for (i, tool_name) in walk.iter().enumerate() {
        let tool = bundle
            .tool(tool_name)
            .ok_or_else(|| SynthError::Internal(format!("walk visited unknown tool `{tool_name}`")))?;
        let impl_ = bundle.impl_of(tool_name).expect("validated bundle");
        let (arguments, expected) = generate_arguments(
            tool,
            impl_,
            &bundle.schema,
            &state,
            derive_seed(seed, "args", i as u64),
            &GroundedArgGenerator,
        );
        let call = ToolCall { tool_name: tool_name.clone(), arguments: arguments.clone() };
        let (next, result) = execute(&state, bundle, &call, &mut synth);
        if result.status != expected {
            return Err(SynthError::Internal(format!(
                "step {i} `{tool_name}` expected {expected:?} but executed {:?} ({:?})",
                result.status, result.error_code
            )));
        }
        actions.push(GoldenAction {
            tool_name: tool_name.clone(),
            arguments,
            expected_status: expected,
        });
        state = next;
    }
    let golden_digest = digest(&state);
    let all_read = actions
        .iter()
        .all(|a| bundle.op_of(&a.tool_name) == Some(OpKind::Read));
    let intent = compose_intent(&actions, &bundle.tools, composer)?;

    let task = AgenticTask {
        task_id: format!("{}_task_{seed:06}", bundle.domain_id),
        domain_id: bundle.domain_id.clone(),
        seed_state,
        golden_actions: actions,
        golden_digest,
        intent,
        all_read,
    };
    replay_task(bundle, &task)?;
    Ok(task)
}

/// Re-execute a task's golden actions from its seed state and verify both
/// the per-step statuses and the final digest.
pub fn replay_task(bundle: &DomainBundle, task: &AgenticTask) -> Result<(), SynthError> {
    let mut state = task.seed_state.clone();
    let mut synth = CounterSynthesizer::new();
    for (i, action) in task.golden_actions.iter().enumerate() {
        let call = ToolCall { tool_name: action.tool_name.clone(), arguments: action.arguments.clone() };
        let (next, result) = execute(&state, bundle, &call, &mut synth);
        if result.status != action.expected_status {
            return Err(SynthError::ReplayMismatch(format!(
                "step {i} `{}` replayed {:?}, expected {:?}",
                action.tool_name, result.status, action.expected_status
            )));
        }
        state = next;
    }
    let replayed = digest(&state);
    if replayed != task.golden_digest {
        return Err(SynthError::ReplayMismatch(format!(
            "final digest {} differs from golden {}",
            replayed.hex, task.golden_digest.hex
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedEdge;
    use crate::materialize::fixtures::{order_bundle, order_tools, param, tool};
    use crate::materialize::build_bundle;
    use crate::graph::{GraphConfig, ToolGraph};
    use std::collections::BTreeMap as Map;

    fn line_bundle() -> DomainBundle {
        // a_read -> b_read -> c_read chain over one shared table.
        let tools = vec![
            tool("get_ticket", vec![param("ticket_id", ParamType::String, true)]),
            tool("find_ticket_note", vec![param("ticket_id", ParamType::String, true)]),
            tool("view_ticket_log", vec![param("ticket_id", ParamType::String, true)]),
        ];
        let names: Vec<String> = tools.iter().map(|t| t.name.clone()).collect();
        let mut graph = ToolGraph::from_edges(names, vec![], GraphConfig::default());
        graph.directed_edges = vec![
            DirectedEdge { from: "find_ticket_note".into(), to: "get_ticket".into() },
            DirectedEdge { from: "get_ticket".into(), to: "view_ticket_log".into() },
        ];
        let (bundle, _) = build_bundle("tickets", tools, &graph, &Map::new()).unwrap();
        bundle
    }

    #[test]
    fn test_sample_walk_follows_forced_path() {
        let bundle = line_bundle();
        let cfg = WalkConfig { min_steps: 3, max_steps: 10, seed: 1 };
        let (walk, warning) = sample_walk(&bundle, &cfg);
        assert_eq!(walk, vec!["find_ticket_note", "get_ticket", "view_ticket_log"]);
        assert!(warning.is_none());
    }

    #[test]
    fn test_sample_walk_isolated_node_single_step() {
        let tools = vec![tool("get_ticket", vec![param("ticket_id", ParamType::String, true)])];
        let names: Vec<String> = tools.iter().map(|t| t.name.clone()).collect();
        let graph = ToolGraph::from_edges(names, vec![], GraphConfig::default());
        let (bundle, _) = build_bundle("solo", tools, &graph, &Map::new()).unwrap();
        let (walk, warning) = sample_walk(&bundle, &WalkConfig::default());
        assert_eq!(walk.len(), 1);
        assert!(warning.is_some(), "short walk must carry a warning");
    }

    #[test]
    fn test_sample_walk_cycle_hits_step_cap() {
        let tools = vec![
            tool("get_ticket", vec![param("ticket_id", ParamType::String, true)]),
            tool("find_ticket_note", vec![param("ticket_id", ParamType::String, true)]),
        ];
        let names: Vec<String> = tools.iter().map(|t| t.name.clone()).collect();
        let mut graph = ToolGraph::from_edges(names, vec![], GraphConfig::default());
        graph.directed_edges = vec![
            DirectedEdge { from: "get_ticket".into(), to: "find_ticket_note".into() },
            DirectedEdge { from: "find_ticket_note".into(), to: "get_ticket".into() },
        ];
        let (bundle, _) = build_bundle("cyc", tools, &graph, &Map::new()).unwrap();
        let (walk, _) = sample_walk(&bundle, &WalkConfig { min_steps: 2, max_steps: 4, seed: 3 });
        assert_eq!(walk.len(), 4);
    }

    #[test]
    fn test_walks_respect_directed_edges() {
        let bundle = order_bundle();
        for seed in 0..30 {
            let (walk, _) =
                sample_walk(&bundle, &WalkConfig { min_steps: 2, max_steps: 6, seed });
            for pair in walk.windows(2) {
                assert!(
                    bundle
                        .graph_slice
                        .iter()
                        .any(|e| e.from == pair[0] && e.to == pair[1]),
                    "walk {walk:?} uses a non-edge ({}, {})",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn test_generate_arguments_grounds_selector() {
        let bundle = order_bundle();
        let state = init_state(&bundle.schema, 11, 2..=2);
        let tool = bundle.tool("get_order").unwrap();
        let impl_ = bundle.impl_of("get_order").unwrap();
        let (args, status) =
            generate_arguments(tool, impl_, &bundle.schema, &state, 5, &GroundedArgGenerator);
        let (args2, _) =
            generate_arguments(tool, impl_, &bundle.schema, &state, 5, &GroundedArgGenerator);
        assert_eq!(args, args2, "same seed must reproduce arguments");
        assert_eq!(status, CallStatus::Ok);
        let pk = match &args["order_id"] {
            CellValue::Str(s) => s.clone(),
            other => panic!("unexpected pk {other:?}"),
        };
        assert!(state.tables["order"].contains_key(&PkValue::Str(pk)));
    }

    #[test]
    fn test_generate_arguments_insert_uses_fresh_key() {
        let bundle = order_bundle();
        let state = init_state(&bundle.schema, 11, 3..=3);
        let tool = bundle.tool("create_order").unwrap();
        let impl_ = bundle.impl_of("create_order").unwrap();
        let (args, status) =
            generate_arguments(tool, impl_, &bundle.schema, &state, 5, &GroundedArgGenerator);
        assert_eq!(status, CallStatus::Ok);
        for p in tool.required_params() {
            assert!(args.contains_key(&p.name), "missing required `{}`", p.name);
        }
        let pk = PkValue::from_cell(&args["order_id"]).unwrap();
        assert!(!state.tables["order"].contains_key(&pk), "insert key must be fresh");
    }

    #[test]
    fn test_generate_arguments_empty_table_expects_error() {
        let bundle = order_bundle();
        let state = init_state(&bundle.schema, 11, 0..=0);
        let tool = bundle.tool("update_order_item").unwrap();
        let impl_ = bundle.impl_of("update_order_item").unwrap();
        let (args, status) =
            generate_arguments(tool, impl_, &bundle.schema, &state, 5, &GroundedArgGenerator);
        assert_eq!(status, CallStatus::Error);
        assert!(args.contains_key("order_id"));
    }

    #[test]
    fn test_build_task_replays_and_is_deterministic() {
        let bundle = order_bundle();
        for seed in 0..20 {
            let task = build_task(&bundle, seed, &WalkConfig::default(), &TemplateComposer)
                .expect("task builds");
            replay_task(&bundle, &task).expect("golden replay holds");
            assert!(task.golden_actions.len() <= WalkConfig::default().max_steps);
            assert!(preserves_argument_values(&task.intent, &task.golden_actions));
        }
        let a = build_task(&bundle, 7, &WalkConfig::default(), &TemplateComposer).unwrap();
        let b = build_task(&bundle, 7, &WalkConfig::default(), &TemplateComposer).unwrap();
        assert_eq!(
            crate::util::canonical_json(&a).unwrap(),
            crate::util::canonical_json(&b).unwrap()
        );
    }

    #[test]
    fn test_build_task_all_read_flag() {
        let bundle = line_bundle();
        let task = build_task(&bundle, 3, &WalkConfig::default(), &TemplateComposer).unwrap();
        assert!(task.all_read);

        let writeful = order_bundle();
        let mut any_write = false;
        for seed in 0..10 {
            let t = build_task(&writeful, seed, &WalkConfig::default(), &TemplateComposer).unwrap();
            let has_write = t
                .golden_actions
                .iter()
                .any(|a| writeful.op_of(&a.tool_name) == Some(OpKind::Write));
            assert_eq!(t.all_read, !has_write);
            any_write |= has_write;
        }
        assert!(any_write, "expected at least one writeful task in 10 seeds");
    }

    #[test]
    fn test_compose_intent_contains_values_and_rejects_empty() {
        let action = GoldenAction {
            tool_name: "get_order".into(),
            arguments: [("order_id".to_string(), CellValue::Str("o1".into()))].into(),
            expected_status: CallStatus::Ok,
        };
        let text = compose_intent(&[action], &order_tools(), &TemplateComposer).unwrap();
        assert!(text.contains("o1"));
        assert!(matches!(
            compose_intent(&[], &order_tools(), &TemplateComposer),
            Err(SynthError::EmptyActions)
        ));
    }

    #[test]
    fn test_compose_intent_matches_committed_golden() {
        let actions = vec![
            GoldenAction {
                tool_name: "create_order".into(),
                arguments: [
                    ("order_id".to_string(), CellValue::Str("order_9".into())),
                    ("item".to_string(), CellValue::Str("maple".into())),
                    ("quantity".to_string(), CellValue::Int(2)),
                ]
                .into(),
                expected_status: CallStatus::Ok,
            },
            GoldenAction {
                tool_name: "get_order".into(),
                arguments: [("order_id".to_string(), CellValue::Str("order_9".into()))].into(),
                expected_status: CallStatus::Ok,
            },
            GoldenAction {
                tool_name: "update_order_item".into(),
                arguments: [
                    ("order_id".to_string(), CellValue::Str("order_9".into())),
                    ("item".to_string(), CellValue::Str("kelp".into())),
                ]
                .into(),
                expected_status: CallStatus::Ok,
            },
        ];
        let text = compose_intent(&actions, &order_tools(), &TemplateComposer).unwrap();
        let golden = include_str!("../tests/fixtures/intent_3_actions.txt");
        assert_eq!(text, golden.trim_end());
    }

    #[test]
    fn test_compose_intent_falls_back_when_values_dropped() {
        struct Lossy;
        impl IntentComposer for Lossy {
            fn compose(&self, _: &[GoldenAction], _: &[ToolSpec]) -> Result<String, String> {
                Ok("please do the thing".into())
            }
        }
        let action = GoldenAction {
            tool_name: "get_order".into(),
            arguments: [("order_id".to_string(), CellValue::Str("order_3".into()))].into(),
            expected_status: CallStatus::Ok,
        };
        let text = compose_intent(&[action.clone()], &order_tools(), &Lossy).unwrap();
        assert!(text.contains("order_3"), "fallback must restore the value: {text}");
        assert_eq!(text, TemplateComposer.compose(&[action], &[]).unwrap());
    }
}
