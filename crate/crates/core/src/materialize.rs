//! Environment materialization: derive a per-domain database schema from
//! tool parameters and turn every tool into a declarative, interpretable
//! read/write implementation over that schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ParamType, ToolCatalog, ToolSpec};
use crate::graph::{DirectedEdge, DomainPartition, ToolGraph};

/// Whether a tool only queries state or induces a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Write,
}

/// One column of a derived table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ctype: ParamType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enum_values: Vec<String>,
}

/// One derived entity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    /// Must name a string- or integer-typed column.
    pub primary_key: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSpec {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn pk_column(&self) -> &ColumnSpec {
        self.column(&self.primary_key).expect("primary key column exists")
    }
}

/// The database structure of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub domain_id: String,
    pub tables: Vec<TableSpec>,
}

impl DatabaseSchema {
    pub fn table(&self, name: &str) -> Option<&TableSpec> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Equality binding between a call argument and a table column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub param: String,
    pub column: String,
}

/// The state transition a write tool performs.
///
/// `insert` carries no mapping: at execution time every tool parameter that
/// names a column of the target table supplies that column's cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    Insert,
    Update { assignments: Vec<Binding> },
    Delete,
}

/// Declarative implementation of one tool over the domain schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolImpl {
    pub tool_name: String,
    pub op_kind: OpKind,
    pub target_table: String,
    /// Equality bindings applied to select rows (reads, updates, deletes).
    pub selector: Vec<Binding>,
    /// Columns a read returns; empty for writes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub projection: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
    /// Declared failure modes, for documentation and clients.
    pub error_contract: Vec<String>,
}

/// A self-contained executable domain: tools, dependency slice, schema,
/// and one implementation per tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBundle {
    pub domain_id: String,
    pub tools: Vec<ToolSpec>,
    pub graph_slice: Vec<DirectedEdge>,
    pub schema: DatabaseSchema,
    pub impls: Vec<ToolImpl>,
}

impl DomainBundle {
    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn impl_of(&self, name: &str) -> Option<&ToolImpl> {
        self.impls.iter().find(|i| i.tool_name == name)
    }

    pub fn op_of(&self, name: &str) -> Option<OpKind> {
        self.impl_of(name).map(|i| i.op_kind)
    }
}

#[derive(Debug, Error)]
pub enum MaterializeError {
    #[error("domain has no tools")]
    EmptyDomain,
    #[error("tool `{tool}`: no parameter maps to any schema table")]
    ImpossibleBinding { tool: String },
    #[error("generator failed: {0}")]
    Generator(String),
    #[error("bundle failed validation: {0:?}")]
    InvalidBundle(Vec<BundleError>),
}

/// Verbs that classify a tool as read-only.
const READ_VERBS: [&str; 6] = ["get", "list", "search", "find", "check", "view"];
/// Verbs that classify a tool as state-changing.
const WRITE_VERBS: [&str; 10] =
    ["create", "add", "update", "set", "delete", "cancel", "book", "modify", "transfer", "send"];

/// Classify a tool as read or write from its leading name verb, unless an
/// explicit override exists. Unknown verbs default to read (cannot corrupt
/// state) and produce a warning.
pub fn classify_op(
    tool: &ToolSpec,
    overrides: &BTreeMap<String, OpKind>,
) -> (OpKind, Option<String>) {
    if let Some(&op) = overrides.get(&tool.name) {
        return (op, None);
    }
    let verb = tool.name.split('_').next().unwrap_or("");
    if READ_VERBS.contains(&verb) {
        (OpKind::Read, None)
    } else if WRITE_VERBS.contains(&verb) {
        (OpKind::Write, None)
    } else {
        (
            OpKind::Read,
            Some(format!("tool `{}`: unknown leading verb `{verb}`; defaulting to read", tool.name)),
        )
    }
}

/// Pluggable schema derivation strategy.
pub trait SchemaGenerator {
    fn derive(
        &self,
        domain_id: &str,
        tools: &[&ToolSpec],
    ) -> Result<DatabaseSchema, MaterializeError>;
}

/// Default deterministic heuristic:
/// - every parameter named `<stem>_id` (or exactly `id`, stem `record`)
///   with string or integer type seeds an entity table `<stem>` whose
///   primary key is that parameter;
/// - every other parameter becomes a column of the table seeded by its
///   tool's first id parameter;
/// - parameters of tools without any id parameter land in a `misc` table
///   keyed by a synthetic string `misc_id`.
///
/// Tools are processed in name order and the first occurrence of a column
/// fixes its type, so the result is insensitive to input order.
pub struct HeuristicSchemaGenerator;

/// Split an id-like parameter name into its entity stem, if it is one.
fn id_stem(param: &ParamterView) -> Option<String> {
    if !matches!(param.ptype, ParamType::String | ParamType::Integer) {
        return None;
    }
    if param.name == "id" {
        return Some("record".to_string());
    }
    param.name.strip_suffix("_id").map(str::to_string).filter(|s| !s.is_empty())
}

/// Minimal view of a parameter used by the schema heuristic.
struct ParamterView<'a> {
    name: &'a str,
    ptype: ParamType,
}

impl SchemaGenerator for HeuristicSchemaGenerator {
    fn derive(
        &self,
        domain_id: &str,
        tools: &[&ToolSpec],
    ) -> Result<DatabaseSchema, MaterializeError> {
        if tools.is_empty() {
            return Err(MaterializeError::EmptyDomain);
        }
        let mut sorted: Vec<&ToolSpec> = tools.to_vec();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));

        // table name → (pk column name, pk type, column map)
        let mut tables: BTreeMap<String, (String, ParamType, BTreeMap<String, ColumnSpec>)> =
            BTreeMap::new();
        let mut needs_misc = false;

        // Pass 1: seed entity tables from id parameters.
        for tool in &sorted {
            for p in &tool.parameters {
                let view = ParamterView { name: &p.name, ptype: p.ptype };
                if let Some(stem) = id_stem(&view) {
                    tables.entry(stem).or_insert_with(|| {
                        let pk_col = ColumnSpec {
                            name: p.name.clone(),
                            ctype: p.ptype,
                            enum_values: vec![],
                        };
                        let mut cols = BTreeMap::new();
                        cols.insert(p.name.clone(), pk_col);
                        (p.name.clone(), p.ptype, cols)
                    });
                }
            }
        }

        // Pass 2: attach non-id parameters to their tool's first id table.
        for tool in &sorted {
            let first_id = tool.parameters.iter().find_map(|p| {
                id_stem(&ParamterView { name: &p.name, ptype: p.ptype })
            });
            for p in &tool.parameters {
                if id_stem(&ParamterView { name: &p.name, ptype: p.ptype }).is_some() {
                    continue;
                }
                match &first_id {
                    Some(stem) => {
                        let (_, _, cols) = tables.get_mut(stem).expect("seeded in pass 1");
                        cols.entry(p.name.clone()).or_insert_with(|| ColumnSpec {
                            name: p.name.clone(),
                            ctype: p.ptype,
                            enum_values: p.enum_values.clone(),
                        });
                    }
                    None => needs_misc = true,
                }
            }
        }

        // Pass 3: the misc table for id-less tools.
        if needs_misc {
            let pk = ColumnSpec {
                name: "misc_id".into(),
                ctype: ParamType::String,
                enum_values: vec![],
            };
            let mut cols = BTreeMap::new();
            cols.insert("misc_id".to_string(), pk);
            for tool in &sorted {
                let has_id = tool
                    .parameters
                    .iter()
                    .any(|p| id_stem(&ParamterView { name: &p.name, ptype: p.ptype }).is_some());
                if has_id {
                    continue;
                }
                for p in &tool.parameters {
                    cols.entry(p.name.clone()).or_insert_with(|| ColumnSpec {
                        name: p.name.clone(),
                        ctype: p.ptype,
                        enum_values: p.enum_values.clone(),
                    });
                }
            }
            tables.insert("misc".to_string(), ("misc_id".to_string(), ParamType::String, cols));
        }

        let tables = tables
            .into_iter()
            .map(|(name, (pk, _, cols))| TableSpec {
                name,
                primary_key: pk,
                columns: cols.into_values().collect(),
            })
            .collect();
        Ok(DatabaseSchema { domain_id: domain_id.to_string(), tables })
    }
}

/// Derive the domain schema with the given generator.
pub fn derive_schema(
    domain_id: &str,
    domain_tools: &[&ToolSpec],
    generator: &dyn SchemaGenerator,
) -> Result<DatabaseSchema, MaterializeError> {
    generator.derive(domain_id, domain_tools)
}

/// Pluggable tool-implementation strategy.
pub trait ImplGenerator {
    fn materialize(
        &self,
        tool: &ToolSpec,
        schema: &DatabaseSchema,
        op_kind: OpKind,
    ) -> Result<ToolImpl, MaterializeError>;
}

/// Default heuristic: id-like parameters bind to their table's primary key
/// as selectors; the target table is the first id parameter's table (or
/// the first table holding one of the tool's parameters as a column);
/// reads project the remaining matching parameters or every column; write
/// effects follow the verb (create/add → insert, delete → delete, cancel
/// without payload → delete, otherwise update).
pub struct HeuristicImplGenerator;

impl ImplGenerator for HeuristicImplGenerator {
    fn materialize(
        &self,
        tool: &ToolSpec,
        schema: &DatabaseSchema,
        op_kind: OpKind,
    ) -> Result<ToolImpl, MaterializeError> {
        // Id parameters that actually match some table's primary key.
        let mut id_bindings: Vec<(String, String)> = Vec::new(); // (param, table)
        for p in &tool.parameters {
            if let Some(stem) = id_stem(&ParamterView { name: &p.name, ptype: p.ptype }) {
                if let Some(table) = schema.table(&stem) {
                    if table.primary_key == p.name {
                        id_bindings.push((p.name.clone(), stem));
                    }
                }
            }
        }

        let target_table = id_bindings
            .first()
            .map(|(_, t)| t.clone())
            .or_else(|| {
                tool.parameters.iter().find_map(|p| {
                    schema
                        .tables
                        .iter()
                        .find(|t| t.column(&p.name).is_some())
                        .map(|t| t.name.clone())
                })
            })
            .ok_or_else(|| MaterializeError::ImpossibleBinding { tool: tool.name.clone() })?;

        let table = schema.table(&target_table).expect("target table exists");
        let selector: Vec<Binding> = id_bindings
            .iter()
            .filter(|(_, t)| *t == target_table)
            .map(|(p, _)| Binding { param: p.clone(), column: table.primary_key.clone() })
            .collect();

        // Non-selector parameters that name columns of the target table.
        let payload: Vec<Binding> = tool
            .parameters
            .iter()
            .filter(|p| !selector.iter().any(|b| b.param == p.name))
            .filter(|p| table.column(&p.name).is_some())
            .map(|p| Binding { param: p.name.clone(), column: p.name.clone() })
            .collect();

        let verb = tool.name.split('_').next().unwrap_or("");
        match op_kind {
            OpKind::Read => {
                let mut projection: Vec<String> =
                    payload.iter().map(|b| b.column.clone()).collect();
                if projection.is_empty() {
                    projection = table.columns.iter().map(|c| c.name.clone()).collect();
                }
                projection.sort();
                Ok(ToolImpl {
                    tool_name: tool.name.clone(),
                    op_kind,
                    target_table,
                    selector,
                    projection,
                    effect: None,
                    error_contract: vec![
                        "unknown_tool".into(),
                        "missing_required_argument".into(),
                        "type_mismatch".into(),
                    ],
                })
            }
            OpKind::Write => {
                let effect = match verb {
                    "create" | "add" => Effect::Insert,
                    "delete" => Effect::Delete,
                    "cancel" if payload.is_empty() => Effect::Delete,
                    _ => Effect::Update { assignments: payload },
                };
                let mut error_contract = vec![
                    "unknown_tool".to_string(),
                    "missing_required_argument".to_string(),
                    "type_mismatch".to_string(),
                ];
                let selector = match effect {
                    Effect::Insert => Vec::new(),
                    _ => selector,
                };
                match &effect {
                    Effect::Insert => error_contract.push("pk_conflict".into()),
                    Effect::Update { .. } => {
                        error_contract.push("selector_miss".into());
                        error_contract.push("no_effect".into());
                    }
                    Effect::Delete => error_contract.push("selector_miss".into()),
                }
                Ok(ToolImpl {
                    tool_name: tool.name.clone(),
                    op_kind,
                    target_table,
                    selector,
                    projection: vec![],
                    effect: Some(effect),
                    error_contract,
                })
            }
        }
    }
}

/// Materialize one tool with the given generator.
pub fn materialize_tool(
    tool: &ToolSpec,
    schema: &DatabaseSchema,
    op_kind: OpKind,
    generator: &dyn ImplGenerator,
) -> Result<ToolImpl, MaterializeError> {
    generator.materialize(tool, schema, op_kind)
}

/// One structural defect found in a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleError {
    pub kind: BundleErrorKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleErrorKind {
    MissingImpl,
    OrphanImpl,
    DuplicateImpl,
    UnresolvedTable,
    UnresolvedColumn,
    OpEffectMismatch,
    ForeignEdge,
    InvalidPrimaryKey,
    DuplicateTable,
    DuplicateColumn,
}

/// Check every structural invariant of a bundle; returns all defects.
pub fn validate_bundle(bundle: &DomainBundle) -> Vec<BundleError> {
    let mut errors = Vec::new();
    let push = |errors: &mut Vec<BundleError>, kind, detail: String| {
        errors.push(BundleError { kind, detail });
    };

    // Schema well-formedness.
    let mut table_names = BTreeSet::new();
    for table in &bundle.schema.tables {
        if !table_names.insert(table.name.clone()) {
            push(&mut errors, BundleErrorKind::DuplicateTable, format!("table `{}`", table.name));
        }
        let mut col_names = BTreeSet::new();
        for col in &table.columns {
            if !col_names.insert(col.name.clone()) {
                push(
                    &mut errors,
                    BundleErrorKind::DuplicateColumn,
                    format!("table `{}` column `{}`", table.name, col.name),
                );
            }
        }
        match table.column(&table.primary_key) {
            None => push(
                &mut errors,
                BundleErrorKind::InvalidPrimaryKey,
                format!("table `{}`: pk `{}` is not a column", table.name, table.primary_key),
            ),
            Some(c) if !matches!(c.ctype, ParamType::String | ParamType::Integer) => push(
                &mut errors,
                BundleErrorKind::InvalidPrimaryKey,
                format!("table `{}`: pk `{}` must be string or integer", table.name, table.primary_key),
            ),
            Some(_) => {}
        }
    }

    // Impl coverage: exactly one per tool.
    let tool_names: BTreeSet<&str> = bundle.tools.iter().map(|t| t.name.as_str()).collect();
    let mut impl_seen: BTreeSet<&str> = BTreeSet::new();
    for im in &bundle.impls {
        if !impl_seen.insert(&im.tool_name) {
            push(&mut errors, BundleErrorKind::DuplicateImpl, format!("tool `{}`", im.tool_name));
        }
        if !tool_names.contains(im.tool_name.as_str()) {
            push(&mut errors, BundleErrorKind::OrphanImpl, format!("tool `{}`", im.tool_name));
        }
    }
    for t in &tool_names {
        if !impl_seen.contains(t) {
            push(&mut errors, BundleErrorKind::MissingImpl, format!("tool `{t}`"));
        }
    }

    // Impl references and op/effect consistency.
    for im in &bundle.impls {
        let Some(table) = bundle.schema.table(&im.target_table) else {
            push(
                &mut errors,
                BundleErrorKind::UnresolvedTable,
                format!("impl `{}` targets `{}`", im.tool_name, im.target_table),
            );
            continue;
        };
        let columns: Vec<&String> = im
            .selector
            .iter()
            .map(|b| &b.column)
            .chain(im.projection.iter())
            .chain(match &im.effect {
                Some(Effect::Update { assignments }) => {
                    assignments.iter().map(|b| &b.column).collect::<Vec<_>>()
                }
                _ => vec![],
            })
            .collect();
        for col in columns {
            if table.column(col).is_none() {
                push(
                    &mut errors,
                    BundleErrorKind::UnresolvedColumn,
                    format!("impl `{}` references `{}.{col}`", im.tool_name, table.name),
                );
            }
        }
        match (im.op_kind, &im.effect) {
            (OpKind::Read, Some(_)) => push(
                &mut errors,
                BundleErrorKind::OpEffectMismatch,
                format!("read impl `{}` has an effect", im.tool_name),
            ),
            (OpKind::Write, None) => push(
                &mut errors,
                BundleErrorKind::OpEffectMismatch,
                format!("write impl `{}` lacks an effect", im.tool_name),
            ),
            _ => {}
        }
    }

    // Graph slice endpoints.
    for e in &bundle.graph_slice {
        if !tool_names.contains(e.from.as_str()) || !tool_names.contains(e.to.as_str()) {
            push(
                &mut errors,
                BundleErrorKind::ForeignEdge,
                format!("edge {} -> {}", e.from, e.to),
            );
        }
    }

    errors
}

/// Non-fatal note produced while assembling a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleWarning {
    pub tool: Option<String>,
    pub message: String,
}

/// Assemble a validated bundle for one domain: classify ops, derive the
/// schema, materialize implementations, and slice the dependency graph.
///
/// Tools that cannot be bound to the schema are dropped with a warning.
/// When the domain has no usable directed edges, both orientations of its
/// undirected edges are used so walks remain possible.
pub fn build_bundle(
    domain_id: &str,
    tools: Vec<ToolSpec>,
    graph: &ToolGraph,
    overrides: &BTreeMap<String, OpKind>,
) -> Result<(DomainBundle, Vec<BundleWarning>), MaterializeError> {
    if tools.is_empty() {
        return Err(MaterializeError::EmptyDomain);
    }
    let mut tools = tools;
    tools.sort_by(|a, b| a.name.cmp(&b.name));
    let mut warnings = Vec::new();

    let refs: Vec<&ToolSpec> = tools.iter().collect();
    let schema = derive_schema(domain_id, &refs, &HeuristicSchemaGenerator)?;

    let mut kept: Vec<ToolSpec> = Vec::new();
    let mut impls: Vec<ToolImpl> = Vec::new();
    for tool in &tools {
        let (op, warning) = classify_op(tool, overrides);
        if let Some(message) = warning {
            warnings.push(BundleWarning { tool: Some(tool.name.clone()), message });
        }
        match materialize_tool(tool, &schema, op, &HeuristicImplGenerator) {
            Ok(im) => {
                kept.push(tool.clone());
                impls.push(im);
            }
            Err(MaterializeError::ImpossibleBinding { tool: name }) => {
                warnings.push(BundleWarning {
                    tool: Some(name.clone()),
                    message: format!("tool `{name}` dropped: no parameter maps to any schema table"),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(MaterializeError::EmptyDomain);
    }

    let kept_names: BTreeSet<&str> = kept.iter().map(|t| t.name.as_str()).collect();
    let mut graph_slice: Vec<DirectedEdge> = graph
        .directed_edges
        .iter()
        .filter(|e| kept_names.contains(e.from.as_str()) && kept_names.contains(e.to.as_str()))
        .cloned()
        .collect();
    if graph_slice.is_empty() {
        for e in &graph.undirected_edges {
            if kept_names.contains(e.a.as_str()) && kept_names.contains(e.b.as_str()) {
                graph_slice.push(DirectedEdge { from: e.a.clone(), to: e.b.clone() });
                graph_slice.push(DirectedEdge { from: e.b.clone(), to: e.a.clone() });
            }
        }
        if !graph_slice.is_empty() {
            warnings.push(BundleWarning {
                tool: None,
                message: format!(
                    "domain `{domain_id}` has no directed dependencies; walking undirected edges both ways"
                ),
            });
        }
    }
    graph_slice.sort();
    graph_slice.dedup();

    let bundle = DomainBundle { domain_id: domain_id.to_string(), tools: kept, graph_slice, schema, impls };
    let errors = validate_bundle(&bundle);
    if !errors.is_empty() {
        return Err(MaterializeError::InvalidBundle(errors));
    }
    Ok((bundle, warnings))
}

/// Build one bundle per community of a partition.
pub fn build_bundles(
    catalog: &ToolCatalog,
    graph: &ToolGraph,
    partition: &DomainPartition,
    overrides: &BTreeMap<String, OpKind>,
) -> Result<(Vec<DomainBundle>, Vec<BundleWarning>), MaterializeError> {
    let mut bundles = Vec::new();
    let mut warnings = Vec::new();
    for (i, community) in partition.communities.iter().enumerate() {
        let domain_id = format!("domain_{i:03}");
        let tools: Vec<ToolSpec> = community
            .iter()
            .filter_map(|name| catalog.tool(name).cloned())
            .collect();
        match build_bundle(&domain_id, tools, graph, overrides) {
            Ok((bundle, mut w)) => {
                bundles.push(bundle);
                warnings.append(&mut w);
            }
            Err(MaterializeError::EmptyDomain) => warnings.push(BundleWarning {
                tool: None,
                message: format!("domain `{domain_id}` produced no usable tools; skipped"),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok((bundles, warnings))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::catalog::{ParameterSpec, ReturnField};

    pub fn param(name: &str, ptype: ParamType, required: bool) -> ParameterSpec {
        ParameterSpec {
            name: name.into(),
            ptype,
            description: format!("The {} value.", name.replace('_', " ")),
            required,
            enum_values: vec![],
        }
    }

    pub fn enum_param(name: &str, values: &[&str], required: bool) -> ParameterSpec {
        ParameterSpec {
            name: name.into(),
            ptype: ParamType::Enum,
            description: format!("One of {}.", values.join("/")),
            required,
            enum_values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn tool(name: &str, params: Vec<ParameterSpec>) -> ToolSpec {
        ToolSpec {
            name: name.into(),
            description: format!("{}.", name.replace('_', " ")),
            parameters: params,
            returns: None,
        }
    }

    pub fn returning(mut t: ToolSpec, fields: &[(&str, ParamType)]) -> ToolSpec {
        t.returns = Some(
            fields
                .iter()
                .map(|(n, ty)| ReturnField { name: (*n).into(), ptype: *ty })
                .collect(),
        );
        t
    }

    /// Small single-domain order-management tool set used across tests.
    pub fn order_tools() -> Vec<ToolSpec> {
        vec![
            returning(
                tool(
                    "create_order",
                    vec![
                        param("order_id", ParamType::String, true),
                        param("item", ParamType::String, true),
                        param("quantity", ParamType::Integer, true),
                    ],
                ),
                &[("order_id", ParamType::String)],
            ),
            tool("get_order", vec![param("order_id", ParamType::String, true)]),
            tool(
                "update_order_item",
                vec![
                    param("order_id", ParamType::String, true),
                    param("item", ParamType::String, true),
                ],
            ),
            tool("cancel_order", vec![param("order_id", ParamType::String, true)]),
            tool(
                "find_order_item",
                vec![
                    param("order_id", ParamType::String, true),
                    param("item", ParamType::String, false),
                ],
            ),
        ]
    }

    /// A validated order-domain bundle with directed dependency edges.
    pub fn order_bundle() -> DomainBundle {
        let tools = order_tools();
        let names: Vec<String> = tools.iter().map(|t| t.name.clone()).collect();
        let mut graph = ToolGraph::from_edges(
            names,
            vec![
                ("create_order".into(), "get_order".into(), 0.9),
                ("get_order".into(), "update_order_item".into(), 0.9),
                ("update_order_item".into(), "cancel_order".into(), 0.9),
                ("get_order".into(), "find_order_item".into(), 0.9),
            ],
            crate::graph::GraphConfig::default(),
        );
        graph.directed_edges = vec![
            DirectedEdge { from: "create_order".into(), to: "get_order".into() },
            DirectedEdge { from: "get_order".into(), to: "update_order_item".into() },
            DirectedEdge { from: "get_order".into(), to: "find_order_item".into() },
            DirectedEdge { from: "update_order_item".into(), to: "cancel_order".into() },
            DirectedEdge { from: "find_order_item".into(), to: "get_order".into() },
        ];
        let (bundle, _) = build_bundle("orders", tools, &graph, &BTreeMap::new()).unwrap();
        bundle
    }
}
