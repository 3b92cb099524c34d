//! Environment runtime: immutable database states, tool-call execution as
//! read/write operators, canonical digests, and cell-level diffs.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{ParamType, ParameterSpec};
use crate::materialize::{DatabaseSchema, DomainBundle, Effect, OpKind, TableSpec, ToolImpl};
use crate::util::{canonical_json, derive_seed};

/// One stored cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<CellValue>),
}

impl CellValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Bool(_) => "boolean",
            Self::Int(_) => "integer",
            Self::Num(_) => "number",
            Self::Str(_) => "string",
            Self::Arr(_) => "array",
        }
    }

    /// Render the value the way a person would type it in a sentence.
    pub fn display(&self) -> String {
        match self {
            Self::Bool(b) => b.to_string(),
            Self::Int(i) => i.to_string(),
            Self::Num(n) => {
                let mut s = serde_json::Number::from_f64(*n)
                    .map(|x| x.to_string())
                    .unwrap_or_else(|| n.to_string());
                if s.ends_with(".0") {
                    s.truncate(s.len() - 2);
                }
                s
            }
            Self::Str(s) => s.clone(),
            Self::Arr(items) => items.iter().map(|v| v.display()).collect::<Vec<_>>().join(", "),
        }
    }
}

/// A primary-key value; integer keys order before string keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PkValue {
    Int(i64),
    Str(String),
}

impl PkValue {
    pub fn to_cell(&self) -> CellValue {
        match self {
            Self::Int(i) => CellValue::Int(*i),
            Self::Str(s) => CellValue::Str(s.clone()),
        }
    }

    pub fn from_cell(cell: &CellValue) -> Option<Self> {
        match cell {
            CellValue::Int(i) => Some(Self::Int(*i)),
            CellValue::Str(s) => Some(Self::Str(s.clone())),
            _ => None,
        }
    }

    pub fn display(&self) -> String {
        match self {
            Self::Int(i) => i.to_string(),
            Self::Str(s) => s.clone(),
        }
    }
}

/// One table row: column name → cell value.
pub type Row = BTreeMap<String, CellValue>;

/// Immutable snapshot of the environment database.
///
/// Serialized form keeps tables sorted by name and rows sorted by primary
/// key, so equal states serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StateWire", into = "StateWire")]
pub struct EnvironmentState {
    /// Domain id of the schema this state conforms to.
    pub schema_ref: String,
    /// table name → primary-key column name.
    pub pk_columns: BTreeMap<String, String>,
    /// table name → pk value → row.
    pub tables: BTreeMap<String, BTreeMap<PkValue, Row>>,
}

#[derive(Serialize, Deserialize)]
struct StateWire {
    schema_ref: String,
    pk_columns: BTreeMap<String, String>,
    tables: BTreeMap<String, Vec<Row>>,
}

impl From<EnvironmentState> for StateWire {
    fn from(s: EnvironmentState) -> Self {
        Self {
            schema_ref: s.schema_ref,
            pk_columns: s.pk_columns.clone(),
            tables: s
                .tables
                .into_iter()
                .map(|(name, rows)| (name, rows.into_values().collect()))
                .collect(),
        }
    }
}

impl From<StateWire> for EnvironmentState {
    fn from(w: StateWire) -> Self {
        let mut tables = BTreeMap::new();
        for (name, rows) in w.tables {
            let pk_col = w.pk_columns.get(&name).cloned().unwrap_or_default();
            let mut keyed = BTreeMap::new();
            for row in rows {
                let pk = row
                    .get(&pk_col)
                    .and_then(PkValue::from_cell)
                    .unwrap_or_else(|| PkValue::Str(String::new()));
                keyed.insert(pk, row);
            }
            tables.insert(name, keyed);
        }
        Self { schema_ref: w.schema_ref, pk_columns: w.pk_columns, tables }
    }
}

impl EnvironmentState {
    /// An empty state shaped like `schema`.
    pub fn empty(schema: &DatabaseSchema) -> Self {
        Self {
            schema_ref: schema.domain_id.clone(),
            pk_columns: schema
                .tables
                .iter()
                .map(|t| (t.name.clone(), t.primary_key.clone()))
                .collect(),
            tables: schema.tables.iter().map(|t| (t.name.clone(), BTreeMap::new())).collect(),
        }
    }

    pub fn row_count(&self) -> usize {
        self.tables.values().map(|t| t.len()).sum()
    }
}

/// One invocation of a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: BTreeMap<String, CellValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Ok,
    Error,
}

/// Machine-readable execution failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownTool,
    MissingRequiredArgument,
    TypeMismatch,
    /// Update/delete selector matched zero rows.
    SelectorMiss,
    /// Update matched rows but changed no cell.
    NoEffect,
    /// Insert with an explicit primary key that already exists.
    PkConflict,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::UnknownTool => "unknown_tool",
            Self::MissingRequiredArgument => "missing_required_argument",
            Self::TypeMismatch => "type_mismatch",
            Self::SelectorMiss => "selector_miss",
            Self::NoEffect => "no_effect",
            Self::PkConflict => "pk_conflict",
        }
    }
}

/// Outcome of executing one tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: CallStatus,
    /// Affected or matched rows; present exactly when status is ok.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ToolResult {
    pub fn ok(payload: Vec<Row>) -> Self {
        Self { status: CallStatus::Ok, payload: Some(payload), error_code: None, message: None }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            status: CallStatus::Error,
            payload: None,
            error_code: Some(code),
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CallStatus::Ok
    }
}

/// Canonical content hash of a state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDigest {
    pub hex: String,
    pub algorithm: String,
}

/// One added or removed row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowEntry {
    pub table: String,
    pub pk: PkValue,
    pub row: Row,
}

/// One changed cell within a row present on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellChange {
    pub table: String,
    pub pk: PkValue,
    pub column: String,
    pub before: Option<CellValue>,
    pub after: Option<CellValue>,
}

/// Minimal cell-level difference between two same-schema states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateDiff {
    pub added: Vec<RowEntry>,
    pub removed: Vec<RowEntry>,
    pub changed: Vec<CellChange>,
}

impl StateDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("states reference different schemas: `{0}` vs `{1}`")]
    SchemaMismatch(String, String),
    #[error("diff does not fit the state: {0}")]
    DiffMismatch(String),
}

/// Strategy for minting primary keys for inserts that omit one.
pub trait PkSynthesizer {
    fn next_pk(&mut self, table: &TableSpec, state: &EnvironmentState) -> PkValue;
}

/// Default synthesizer: a per-table counter starting just past the largest
/// key already present, yielding `<table>_<n>` for string keys and plain
/// `n` for integer keys.
#[derive(Debug, Default, Clone)]
pub struct CounterSynthesizer {
    counters: BTreeMap<String, i64>,
}

impl CounterSynthesizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Largest counter-style key already present in `table`.
    pub(crate) fn floor_for(table: &TableSpec, state: &EnvironmentState) -> i64 {
        let Some(rows) = state.tables.get(&table.name) else { return 0 };
        let prefix = format!("{}_", table.name);
        rows.keys()
            .filter_map(|pk| match pk {
                PkValue::Int(i) => Some(*i),
                PkValue::Str(s) => s.strip_prefix(&prefix).and_then(|n| n.parse::<i64>().ok()),
            })
            .max()
            .unwrap_or(0)
    }
}

impl PkSynthesizer for CounterSynthesizer {
    fn next_pk(&mut self, table: &TableSpec, state: &EnvironmentState) -> PkValue {
        let counter = self
            .counters
            .entry(table.name.clone())
            .or_insert_with(|| Self::floor_for(table, state));
        loop {
            *counter += 1;
            let pk = match table.pk_column().ctype {
                ParamType::Integer => PkValue::Int(*counter),
                _ => PkValue::Str(format!("{}_{}", table.name, counter)),
            };
            let occupied = state
                .tables
                .get(&table.name)
                .map(|rows| rows.contains_key(&pk))
                .unwrap_or(false);
            if !occupied {
                return pk;
            }
        }
    }
}

const INIT_WORDS: [&str; 16] = [
    "amber", "birch", "cobalt", "dune", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "kelp", "lagoon", "maple", "nimbus", "opal", "prairie",
];

fn seeded_cell(rng: &mut ChaCha8Rng, ctype: ParamType, enum_values: &[String]) -> CellValue {
    match ctype {
        ParamType::String => {
            CellValue::Str((*INIT_WORDS.choose(rng).expect("word list non-empty")).to_string())
        }
        ParamType::Integer => CellValue::Int(rng.gen_range(1..100)),
        ParamType::Number => CellValue::Num((rng.gen_range(1.0..100.0_f64) * 100.0).round() / 100.0),
        ParamType::Boolean => CellValue::Bool(rng.gen_bool(0.5)),
        ParamType::Enum => CellValue::Str(
            enum_values.choose(rng).cloned().unwrap_or_else(|| "unspecified".to_string()),
        ),
        ParamType::Array => {
            let n = rng.gen_range(1..=3);
            CellValue::Arr(
                (0..n)
                    .map(|_| {
                        CellValue::Str(
                            (*INIT_WORDS.choose(rng).expect("word list non-empty")).to_string(),
                        )
                    })
                    .collect(),
            )
        }
    }
}

/// Populate a fresh state with seeded rows: each table receives a count
/// drawn from `rows_per_table`, keys follow the `<table>_<n>` convention
/// (plain integers for integer keys), and cell values are drawn per type.
/// Deterministic for a fixed (schema, seed).
pub fn init_state(
    schema: &DatabaseSchema,
    seed: u64,
    rows_per_table: RangeInclusive<usize>,
) -> EnvironmentState {
    let mut state = EnvironmentState::empty(schema);
    for table in &schema.tables {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, "init_table", fnv_name(&table.name)));
        let count = if rows_per_table.is_empty() {
            0
        } else {
            rng.gen_range(rows_per_table.clone())
        };
        let rows = state.tables.get_mut(&table.name).expect("table exists");
        for n in 1..=count {
            let pk = match table.pk_column().ctype {
                ParamType::Integer => PkValue::Int(n as i64),
                _ => PkValue::Str(format!("{}_{n}", table.name)),
            };
            let mut row = Row::new();
            row.insert(table.primary_key.clone(), pk.to_cell());
            for col in &table.columns {
                if col.name == table.primary_key {
                    continue;
                }
                row.insert(col.name.clone(), seeded_cell(&mut rng, col.ctype, &col.enum_values));
            }
            rows.insert(pk, row);
        }
    }
    state
}

fn fnv_name(name: &str) -> u64 {
    crate::util::fnv1a64(name.as_bytes())
}

/// Check an argument value against its declared parameter type, coercing
/// integers to numbers where the parameter expects a number.
fn check_argument(param: &ParameterSpec, value: &CellValue) -> Result<CellValue, String> {
    match (param.ptype, value) {
        (ParamType::String, CellValue::Str(_)) => Ok(value.clone()),
        (ParamType::Integer, CellValue::Int(_)) => Ok(value.clone()),
        (ParamType::Number, CellValue::Num(_)) => Ok(value.clone()),
        (ParamType::Number, CellValue::Int(i)) => Ok(CellValue::Num(*i as f64)),
        (ParamType::Boolean, CellValue::Bool(_)) => Ok(value.clone()),
        (ParamType::Enum, CellValue::Str(s)) => {
            if param.enum_values.iter().any(|v| v == s) {
                Ok(value.clone())
            } else {
                Err(format!(
                    "`{}` must be one of [{}], got `{s}`",
                    param.name,
                    param.enum_values.join(", ")
                ))
            }
        }
        (ParamType::Array, CellValue::Arr(items)) => {
            if items.iter().any(|v| matches!(v, CellValue::Arr(_))) {
                Err(format!("`{}` must be an array of scalars", param.name))
            } else {
                Ok(value.clone())
            }
        }
        _ => Err(format!(
            "`{}` expects {}, got {}",
            param.name,
            param.ptype,
            value.type_name()
        )),
    }
}

/// Rows of `table` matching every selector binding that has an argument.
fn matching_pks(
    state: &EnvironmentState,
    table: &str,
    impl_: &ToolImpl,
    args: &BTreeMap<String, CellValue>,
) -> Vec<PkValue> {
    let Some(rows) = state.tables.get(table) else { return Vec::new() };
    rows.iter()
        .filter(|(_, row)| {
            impl_.selector.iter().all(|b| match args.get(&b.param) {
                Some(v) => row.get(&b.column) == Some(v),
                None => true,
            })
        })
        .map(|(pk, _)| pk.clone())
        .collect()
}

/// Execute one tool call against a state, returning the successor state
/// and the result. The input state is never mutated; reads and errors
/// return it unchanged. Deterministic given (state, bundle, call,
/// synthesizer state).
pub fn execute(
    state: &EnvironmentState,
    bundle: &DomainBundle,
    call: &ToolCall,
    synth: &mut dyn PkSynthesizer,
) -> (EnvironmentState, ToolResult) {
    let unchanged = || state.clone();

    let Some(impl_) = bundle.impl_of(&call.tool_name) else {
        return (
            unchanged(),
            ToolResult::error(
                ErrorCode::UnknownTool,
                format!("no tool named `{}` in domain `{}`", call.tool_name, bundle.domain_id),
            ),
        );
    };
    let tool = bundle.tool(&call.tool_name).expect("bundle has one impl per tool");

    // Argument validation.
    for (name, _) in &call.arguments {
        if tool.param(name).is_none() {
            return (
                unchanged(),
                ToolResult::error(
                    ErrorCode::TypeMismatch,
                    format!("`{}` is not a parameter of `{}`", name, tool.name),
                ),
            );
        }
    }
    for p in tool.required_params() {
        if !call.arguments.contains_key(&p.name) {
            return (
                unchanged(),
                ToolResult::error(
                    ErrorCode::MissingRequiredArgument,
                    format!("`{}` requires argument `{}`", tool.name, p.name),
                ),
            );
        }
    }
    let mut args: BTreeMap<String, CellValue> = BTreeMap::new();
    for (name, value) in &call.arguments {
        let param = tool.param(name).expect("checked above");
        match check_argument(param, value) {
            Ok(v) => {
                args.insert(name.clone(), v);
            }
            Err(msg) => {
                return (unchanged(), ToolResult::error(ErrorCode::TypeMismatch, msg));
            }
        }
    }

    let table_spec = bundle
        .schema
        .table(&impl_.target_table)
        .expect("validated bundle resolves target tables");

    match (&impl_.op_kind, &impl_.effect) {
        (OpKind::Read, _) => {
            let pks = matching_pks(state, &impl_.target_table, impl_, &args);
            let rows = &state.tables[&impl_.target_table];
            let payload: Vec<Row> = pks
                .iter()
                .map(|pk| {
                    let row = &rows[pk];
                    impl_
                        .projection
                        .iter()
                        .filter_map(|c| row.get(c).map(|v| (c.clone(), v.clone())))
                        .collect()
                })
                .collect();
            (unchanged(), ToolResult::ok(payload))
        }
        (OpKind::Write, Some(Effect::Insert)) => {
            let mut row = Row::new();
            for p in &tool.parameters {
                if let (Some(value), Some(col)) = (args.get(&p.name), table_spec.column(&p.name)) {
                    let cell = match (col.ctype, value) {
                        (ParamType::Number, CellValue::Int(i)) => CellValue::Num(*i as f64),
                        _ => value.clone(),
                    };
                    row.insert(p.name.clone(), cell);
                }
            }
            let pk = match row.get(&table_spec.primary_key) {
                Some(cell) => match PkValue::from_cell(cell) {
                    Some(pk) => {
                        let occupied = state.tables[&impl_.target_table].contains_key(&pk);
                        if occupied {
                            return (
                                unchanged(),
                                ToolResult::error(
                                    ErrorCode::PkConflict,
                                    format!(
                                        "{} `{}` already exists",
                                        table_spec.primary_key,
                                        pk.display()
                                    ),
                                ),
                            );
                        }
                        pk
                    }
                    None => {
                        return (
                            unchanged(),
                            ToolResult::error(
                                ErrorCode::TypeMismatch,
                                format!("`{}` is not a valid key", table_spec.primary_key),
                            ),
                        )
                    }
                },
                None => synth.next_pk(table_spec, state),
            };
            row.insert(table_spec.primary_key.clone(), pk.to_cell());
            let mut next = state.clone();
            next.tables
                .get_mut(&impl_.target_table)
                .expect("table exists")
                .insert(pk, row.clone());
            (next, ToolResult::ok(vec![row]))
        }
        (OpKind::Write, Some(Effect::Update { assignments })) => {
            let pks = matching_pks(state, &impl_.target_table, impl_, &args);
            if pks.is_empty() {
                return (
                    unchanged(),
                    ToolResult::error(
                        ErrorCode::SelectorMiss,
                        format!("no `{}` row matches the given selector", impl_.target_table),
                    ),
                );
            }
            let mut next = state.clone();
            let rows = next.tables.get_mut(&impl_.target_table).expect("table exists");
            let mut changed_cells = 0usize;
            let mut payload = Vec::new();
            for pk in &pks {
                let row = rows.get_mut(pk).expect("matched row exists");
                for b in assignments {
                    if let Some(value) = args.get(&b.param) {
                        let col = table_spec.column(&b.column).expect("validated");
                        let cell = match (col.ctype, value) {
                            (ParamType::Number, CellValue::Int(i)) => CellValue::Num(*i as f64),
                            _ => value.clone(),
                        };
                        if row.get(&b.column) != Some(&cell) {
                            row.insert(b.column.clone(), cell);
                            changed_cells += 1;
                        }
                    }
                }
                payload.push(row.clone());
            }
            if changed_cells == 0 {
                return (
                    unchanged(),
                    ToolResult::error(
                        ErrorCode::NoEffect,
                        format!("update to `{}` changed nothing", impl_.target_table),
                    ),
                );
            }
            (next, ToolResult::ok(payload))
        }
        (OpKind::Write, Some(Effect::Delete)) => {
            let pks = matching_pks(state, &impl_.target_table, impl_, &args);
            if pks.is_empty() {
                return (
                    unchanged(),
                    ToolResult::error(
                        ErrorCode::SelectorMiss,
                        format!("no `{}` row matches the given selector", impl_.target_table),
                    ),
                );
            }
            let mut next = state.clone();
            let rows = next.tables.get_mut(&impl_.target_table).expect("table exists");
            let payload: Vec<Row> =
                pks.iter().filter_map(|pk| rows.remove(pk)).collect();
            (next, ToolResult::ok(payload))
        }
        (OpKind::Write, None) => unreachable!("validated bundles pair writes with effects"),
    }
}

/// Canonical SHA-256 digest of the full state.
pub fn digest(state: &EnvironmentState) -> StateDigest {
    digest_ignoring(state, &BTreeSet::new())
}

/// Digest with volatile columns excluded. Ignore entries are either bare
/// column names (apply to every table) or `table.column` qualified names.
pub fn digest_ignoring(state: &EnvironmentState, ignore: &BTreeSet<String>) -> StateDigest {
    let canonical = if ignore.is_empty() {
        canonical_json(state).expect("state serializes")
    } else {
        let mut pruned = state.clone();
        for (table, rows) in &mut pruned.tables {
            for row in rows.values_mut() {
                row.retain(|col, _| {
                    !ignore.contains(col) && !ignore.contains(&format!("{table}.{col}"))
                });
            }
        }
        canonical_json(&pruned).expect("state serializes")
    };
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    StateDigest { hex: hex::encode(hasher.finalize()), algorithm: "sha256".to_string() }
}

/// Cell-level difference: rows only in `after` are added, rows only in
/// `before` are removed, and shared rows contribute per-column changes.
pub fn diff(before: &EnvironmentState, after: &EnvironmentState) -> Result<StateDiff, RuntimeError> {
    if before.schema_ref != after.schema_ref {
        return Err(RuntimeError::SchemaMismatch(
            before.schema_ref.clone(),
            after.schema_ref.clone(),
        ));
    }
    let mut out = StateDiff::default();
    let table_names: BTreeSet<&String> =
        before.tables.keys().chain(after.tables.keys()).collect();
    let empty = BTreeMap::new();
    for table in table_names {
        let b = before.tables.get(table).unwrap_or(&empty);
        let a = after.tables.get(table).unwrap_or(&empty);
        let pks: BTreeSet<&PkValue> = b.keys().chain(a.keys()).collect();
        for pk in pks {
            match (b.get(pk), a.get(pk)) {
                (None, Some(row)) => out.added.push(RowEntry {
                    table: table.clone(),
                    pk: pk.clone(),
                    row: row.clone(),
                }),
                (Some(row), None) => out.removed.push(RowEntry {
                    table: table.clone(),
                    pk: pk.clone(),
                    row: row.clone(),
                }),
                (Some(rb), Some(ra)) => {
                    let cols: BTreeSet<&String> = rb.keys().chain(ra.keys()).collect();
                    for col in cols {
                        let vb = rb.get(col);
                        let va = ra.get(col);
                        if vb != va {
                            out.changed.push(CellChange {
                                table: table.clone(),
                                pk: pk.clone(),
                                column: col.clone(),
                                before: vb.cloned(),
                                after: va.cloned(),
                            });
                        }
                    }
                }
                (None, None) => unreachable!(),
            }
        }
    }
    Ok(out)
}

/// Transport `base` to the state the diff was computed against. Strict:
/// every removal/change must find the expected prior value.
pub fn apply_diff(base: &EnvironmentState, diff: &StateDiff) -> Result<EnvironmentState, RuntimeError> {
    let mut next = base.clone();
    for entry in &diff.removed {
        let rows = next
            .tables
            .get_mut(&entry.table)
            .ok_or_else(|| RuntimeError::DiffMismatch(format!("no table `{}`", entry.table)))?;
        if rows.remove(&entry.pk).is_none() {
            return Err(RuntimeError::DiffMismatch(format!(
                "row `{}` missing from `{}`",
                entry.pk.display(),
                entry.table
            )));
        }
    }
    for change in &diff.changed {
        let rows = next
            .tables
            .get_mut(&change.table)
            .ok_or_else(|| RuntimeError::DiffMismatch(format!("no table `{}`", change.table)))?;
        let row = rows.get_mut(&change.pk).ok_or_else(|| {
            RuntimeError::DiffMismatch(format!(
                "row `{}` missing from `{}`",
                change.pk.display(),
                change.table
            ))
        })?;
        if row.get(&change.column) != change.before.as_ref() {
            return Err(RuntimeError::DiffMismatch(format!(
                "cell `{}.{}` does not match the diff's before value",
                change.table, change.column
            )));
        }
        match &change.after {
            Some(v) => {
                row.insert(change.column.clone(), v.clone());
            }
            None => {
                row.remove(&change.column);
            }
        }
    }
    for entry in &diff.added {
        let rows = next
            .tables
            .get_mut(&entry.table)
            .ok_or_else(|| RuntimeError::DiffMismatch(format!("no table `{}`", entry.table)))?;
        if rows.insert(entry.pk.clone(), entry.row.clone()).is_some() {
            return Err(RuntimeError::DiffMismatch(format!(
                "row `{}` already present in `{}`",
                entry.pk.display(),
                entry.table
            )));
        }
    }
    Ok(next)
}
