//! Tool catalog ingestion: parse raw JSONL tool records, validate them into
//! a typed catalog, and optionally enrich descriptions.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed vocabulary of parameter types accepted by the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Enum,
    /// Array of scalar values (strings or numbers).
    Array,
}

impl ParamType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "string" => Some(Self::String),
            "integer" => Some(Self::Integer),
            "number" => Some(Self::Number),
            "boolean" => Some(Self::Boolean),
            "enum" => Some(Self::Enum),
            "array" => Some(Self::Array),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::String => "string",
            Self::Integer => "integer",
            Self::Number => "number",
            Self::Boolean => "boolean",
            Self::Enum => "enum",
            Self::Array => "array",
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One typed parameter of a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    /// Parameter identifier, unique within its tool.
    pub name: String,
    /// Value type drawn from the closed type vocabulary.
    #[serde(rename = "type")]
    pub ptype: ParamType,
    /// Free-text description; may be empty.
    #[serde(default)]
    pub description: String,
    /// Whether a call must supply this parameter.
    #[serde(default)]
    pub required: bool,
    /// Allowed values; non-empty exactly when `ptype` is `enum`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enum_values: Vec<String>,
}

/// One named output field of a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnField {
    pub name: String,
    #[serde(rename = "type")]
    pub ptype: ParamType,
}

/// A validated tool signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    /// Tool identifier, unique within a catalog.
    pub name: String,
    /// Free-text description of what the tool does.
    pub description: String,
    /// Typed parameter list.
    pub parameters: Vec<ParameterSpec>,
    /// Named output fields, when the source record declares them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns: Option<Vec<ReturnField>>,
}

impl ToolSpec {
    pub fn required_params(&self) -> impl Iterator<Item = &ParameterSpec> {
        self.parameters.iter().filter(|p| p.required)
    }

    pub fn param(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// The validated pool of tools, in ingestion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCatalog {
    pub tools: Vec<ToolSpec>,
    /// Provenance label per tool, parallel to `tools`.
    pub source_tags: Vec<String>,
    /// Cached length of `tools`.
    pub size: usize,
}

impl ToolCatalog {
    pub fn new(tools: Vec<ToolSpec>, source_tags: Vec<String>) -> Self {
        let size = tools.len();
        debug_assert_eq!(source_tags.len(), size);
        Self { tools, source_tags, size }
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    /// Serialize back to the JSONL wire format, one record per line.
    pub fn to_wire_lines(&self) -> Vec<String> {
        self.tools
            .iter()
            .zip(&self.source_tags)
            .map(|(tool, tag)| {
                let mut v = serde_json::to_value(tool).expect("tool serializes");
                v.as_object_mut()
                    .expect("tool is an object")
                    .insert("source".into(), serde_json::Value::String(tag.clone()));
                v.to_string()
            })
            .collect()
    }
}

/// Machine-readable reason a raw record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The line is not a JSON object in the expected shape.
    InvalidRecord,
    /// A required field is absent or has the wrong JSON type.
    MissingField,
    /// Tool or parameter name is empty.
    EmptyName,
    /// Tool description is empty.
    EmptyDescription,
    /// Parameter or return type outside the closed vocabulary.
    UnknownType,
    /// `enum_values` present/absent inconsistently with the enum type.
    InvalidEnum,
    /// Two parameters of one tool share a name.
    DuplicateParameter,
    /// A previously accepted tool already uses this name.
    DuplicateName,
}

/// Why one raw record was not admitted into the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    /// 1-based line number in the input stream.
    pub line: usize,
    /// Tool name when one could be extracted.
    pub name: Option<String>,
    pub reason: RejectReason,
    /// Human-readable detail for diagnostics.
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog stream: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse and validate a JSONL stream of raw tool records.
///
/// Per-record violations become `RejectionReport`s and never abort the
/// ingest; only an unreadable stream is fatal. Duplicate tool names keep
/// the first occurrence. A leading artifact header line (an object whose
/// only key is `_header`) and blank lines are skipped, which makes the
/// ingest idempotent over its own serialized output.
pub fn ingest_catalog<R: BufRead>(
    reader: R,
) -> Result<(ToolCatalog, Vec<RejectionReport>), CatalogError> {
    let mut tools: Vec<ToolSpec> = Vec::new();
    let mut source_tags: Vec<String> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut rejections: Vec<RejectionReport> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if is_header_line(trimmed) {
            continue;
        }
        match parse_record(trimmed) {
            Ok((tool, source)) => {
                if seen.contains(&tool.name) {
                    rejections.push(RejectionReport {
                        line: lineno,
                        name: Some(tool.name.clone()),
                        reason: RejectReason::DuplicateName,
                        detail: format!("tool `{}` already accepted", tool.name),
                    });
                } else {
                    seen.insert(tool.name.clone());
                    tools.push(tool);
                    source_tags.push(source);
                }
            }
            Err((name, reason, detail)) => {
                rejections.push(RejectionReport { line: lineno, name, reason, detail });
            }
        }
    }

    Ok((ToolCatalog::new(tools, source_tags), rejections))
}

fn is_header_line(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.as_object().map(|o| o.len() == 1 && o.contains_key("_header")))
        .unwrap_or(false)
}

type RecordError = (Option<String>, RejectReason, String);

fn parse_record(line: &str) -> Result<(ToolSpec, String), RecordError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
        (None, RejectReason::InvalidRecord, format!("not valid JSON: {e}"))
    })?;
    let obj = value.as_object().ok_or_else(|| {
        (None, RejectReason::InvalidRecord, "record is not a JSON object".to_string())
    })?;

    let name = require_string(obj, "name", None)?;
    if name.is_empty() {
        return Err((None, RejectReason::EmptyName, "tool name is empty".into()));
    }
    let named = Some(name.clone());

    let description = require_string(obj, "description", named.clone())?;
    if description.trim().is_empty() {
        return Err((named, RejectReason::EmptyDescription, "tool description is empty".into()));
    }

    let params_value = obj.get("parameters").ok_or_else(|| {
        (named.clone(), RejectReason::MissingField, "missing field `parameters`".to_string())
    })?;
    let params_arr = params_value.as_array().ok_or_else(|| {
        (named.clone(), RejectReason::MissingField, "`parameters` is not an array".to_string())
    })?;

    let mut parameters = Vec::with_capacity(params_arr.len());
    let mut param_names = BTreeSet::new();
    for (i, pv) in params_arr.iter().enumerate() {
        let p = parse_parameter(pv, i, &named)?;
        if !param_names.insert(p.name.clone()) {
            return Err((
                named,
                RejectReason::DuplicateParameter,
                format!("parameter `{}` declared twice", p.name),
            ));
        }
        parameters.push(p);
    }

    let returns = match obj.get("returns") {
        None | Some(serde_json::Value::Null) => None,
        Some(rv) => Some(parse_returns(rv, &named)?),
    };

    let source = obj
        .get("source")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown")
        .to_string();

    Ok((ToolSpec { name, description, parameters, returns }, source))
}

fn require_string(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    name: Option<String>,
) -> Result<String, RecordError> {
    match obj.get(key) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err((name, RejectReason::MissingField, format!("`{key}` is not a string"))),
        None => Err((name, RejectReason::MissingField, format!("missing field `{key}`"))),
    }
}

fn parse_parameter(
    value: &serde_json::Value,
    index: usize,
    tool: &Option<String>,
) -> Result<ParameterSpec, RecordError> {
    let obj = value.as_object().ok_or_else(|| {
        (
            tool.clone(),
            RejectReason::InvalidRecord,
            format!("parameter #{index} is not an object"),
        )
    })?;
    let pname = require_string(obj, "name", tool.clone())?;
    if pname.is_empty() {
        return Err((tool.clone(), RejectReason::EmptyName, format!("parameter #{index} has an empty name")));
    }
    let tname = require_string(obj, "type", tool.clone())?;
    let ptype = ParamType::parse(&tname).ok_or_else(|| {
        (
            tool.clone(),
            RejectReason::UnknownType,
            format!("parameter `{pname}` has unknown type `{tname}`"),
        )
    })?;
    let description = obj
        .get("description")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    let required = obj.get("required").and_then(|v| v.as_bool()).unwrap_or(false);
    let enum_values: Vec<String> = match obj.get("enum_values") {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(serde_json::Value::Array(a)) => a
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| {
                    (
                        tool.clone(),
                        RejectReason::InvalidEnum,
                        format!("parameter `{pname}` has a non-string enum value"),
                    )
                })
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err((
                tool.clone(),
                RejectReason::InvalidEnum,
                format!("parameter `{pname}` has non-array enum_values"),
            ))
        }
    };
    if (ptype == ParamType::Enum) != !enum_values.is_empty() {
        return Err((
            tool.clone(),
            RejectReason::InvalidEnum,
            format!("parameter `{pname}`: enum_values must be non-empty iff type is enum"),
        ));
    }
    Ok(ParameterSpec { name: pname, ptype, description, required, enum_values })
}

fn parse_returns(
    value: &serde_json::Value,
    tool: &Option<String>,
) -> Result<Vec<ReturnField>, RecordError> {
    let arr = value.as_array().ok_or_else(|| {
        (tool.clone(), RejectReason::InvalidRecord, "`returns` is not an array".to_string())
    })?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, rv) in arr.iter().enumerate() {
        let obj = rv.as_object().ok_or_else(|| {
            (
                tool.clone(),
                RejectReason::InvalidRecord,
                format!("return field #{i} is not an object"),
            )
        })?;
        let name = require_string(obj, "name", tool.clone())?;
        if name.is_empty() {
            return Err((tool.clone(), RejectReason::EmptyName, format!("return field #{i} has an empty name")));
        }
        let tname = require_string(obj, "type", tool.clone())?;
        let ptype = ParamType::parse(&tname).ok_or_else(|| {
            (
                tool.clone(),
                RejectReason::UnknownType,
                format!("return field `{name}` has unknown type `{tname}`"),
            )
        })?;
        out.push(ReturnField { name, ptype });
    }
    Ok(out)
}

/// Pluggable description transform; must not alter names or parameters.
pub trait DescriptionRewriter {
    /// Produce a replacement description for `tool`, or an error message.
    fn rewrite(&self, tool: &ToolSpec) -> Result<String, String>;
}

/// Default rewriter: returns descriptions unchanged.
pub struct IdentityRewriter;

impl DescriptionRewriter for IdentityRewriter {
    fn rewrite(&self, tool: &ToolSpec) -> Result<String, String> {
        Ok(tool.description.clone())
    }
}

/// Offline rewriter that appends an explicit input/output specification
/// derived from the tool's own signature.
pub struct SignatureRewriter;

impl DescriptionRewriter for SignatureRewriter {
    fn rewrite(&self, tool: &ToolSpec) -> Result<String, String> {
        let inputs: Vec<String> = tool
            .parameters
            .iter()
            .map(|p| format!("{} ({})", p.name, p.ptype))
            .collect();
        let mut spec = String::new();
        if !inputs.is_empty() {
            spec.push_str(&format!(" Inputs: {}.", inputs.join(", ")));
        }
        if let Some(returns) = &tool.returns {
            let outputs: Vec<String> =
                returns.iter().map(|r| format!("{} ({})", r.name, r.ptype)).collect();
            if !outputs.is_empty() {
                spec.push_str(&format!(" Outputs: {}.", outputs.join(", ")));
            }
        }
        Ok(format!("{}{}", tool.description, spec))
    }
}

/// Warning emitted when a rewriter fails on one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichWarning {
    pub tool: String,
    pub message: String,
}

/// Apply `rewriter` to every description. A rewriter failure (or an empty
/// rewrite, which would break validation) keeps the original text and
/// records a warning; names and parameter structures are never touched.
pub fn enrich_descriptions(
    catalog: &ToolCatalog,
    rewriter: &dyn DescriptionRewriter,
) -> (ToolCatalog, Vec<EnrichWarning>) {
    let mut warnings = Vec::new();
    let tools = catalog
        .tools
        .iter()
        .map(|tool| {
            let mut out = tool.clone();
            match rewriter.rewrite(tool) {
                Ok(text) if !text.trim().is_empty() => out.description = text,
                Ok(_) => warnings.push(EnrichWarning {
                    tool: tool.name.clone(),
                    message: "rewriter produced an empty description; keeping original".into(),
                }),
                Err(e) => warnings.push(EnrichWarning {
                    tool: tool.name.clone(),
                    message: format!("rewriter failed: {e}; keeping original"),
                }),
            }
            out
        })
        .collect();
    (ToolCatalog::new(tools, catalog.source_tags.clone()), warnings)
}

/// Aggregate shape statistics over a catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub tool_count: usize,
    /// parameter count per tool → number of tools with that count
    pub param_count_hist: BTreeMap<usize, usize>,
    /// parameter type name → number of parameters of that type
    pub ptype_freq: BTreeMap<String, usize>,
}

pub fn catalog_stats(catalog: &ToolCatalog) -> CatalogStats {
    let mut param_count_hist = BTreeMap::new();
    let mut ptype_freq = BTreeMap::new();
    for tool in &catalog.tools {
        *param_count_hist.entry(tool.parameters.len()).or_insert(0) += 1;
        for p in &tool.parameters {
            *ptype_freq.entry(p.ptype.as_str().to_string()).or_insert(0) += 1;
        }
    }
    CatalogStats { tool_count: catalog.size, param_count_hist, ptype_freq }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn record(name: &str, desc: &str, params: &str) -> String {
        format!(r#"{{"name":"{name}","description":"{desc}","parameters":{params}}}"#)
    }

    fn ingest_str(s: &str) -> (ToolCatalog, Vec<RejectionReport>) {
        ingest_catalog(s.as_bytes()).unwrap()
    }

    #[test]
    fn test_ingest_accepts_valid_records() {
        let input = [
            record("get_order", "Fetch an order.", r#"[{"name":"order_id","type":"string","required":true}]"#),
            record("cancel_order", "Cancel an order.", r#"[{"name":"order_id","type":"string","required":true}]"#),
            record("list_orders", "List orders.", "[]"),
        ]
        .join("\n");
        let (catalog, rejections) = ingest_str(&input);
        assert_eq!(catalog.size, 3);
        assert_eq!(catalog.tools.len(), 3);
        assert!(rejections.is_empty());
        assert_eq!(catalog.tools[0].parameters[0].name, "order_id");
        assert!(catalog.tools[0].parameters[0].required);
    }

    #[test]
    fn test_ingest_duplicate_name_keeps_first() {
        let input = [
            record("get_order", "First copy.", "[]"),
            record("get_order", "Second copy.", "[]"),
        ]
        .join("\n");
        let (catalog, rejections) = ingest_str(&input);
        assert_eq!(catalog.size, 1);
        assert_eq!(catalog.tools[0].description, "First copy.");
        assert_eq!(rejections.len(), 1);
        assert_eq!(rejections[0].reason, RejectReason::DuplicateName);
        assert_eq!(rejections[0].line, 2);
    }

    #[test]
    fn test_ingest_missing_description_rejected() {
        let input = r#"{"name":"get_order","parameters":[]}"#;
        let (catalog, rejections) = ingest_str(input);
        assert_eq!(catalog.size, 0);
        assert_eq!(rejections.len(), 1);
        assert_eq!(rejections[0].reason, RejectReason::MissingField);
        assert_eq!(rejections[0].name.as_deref(), Some("get_order"));
    }

    #[test]
    fn test_ingest_rejection_reasons() {
        let cases = [
            (r#"not json at all"#.to_string(), RejectReason::InvalidRecord),
            (r#"[1,2,3]"#.to_string(), RejectReason::InvalidRecord),
            (record("", "Desc.", "[]"), RejectReason::EmptyName),
            (record("t", "  ", "[]"), RejectReason::EmptyDescription),
            (
                record("t", "Desc.", r#"[{"name":"x","type":"uuid"}]"#),
                RejectReason::UnknownType,
            ),
            (
                record("t", "Desc.", r#"[{"name":"x","type":"enum"}]"#),
                RejectReason::InvalidEnum,
            ),
            (
                record("t", "Desc.", r#"[{"name":"x","type":"string","enum_values":["a"]}]"#),
                RejectReason::InvalidEnum,
            ),
            (
                record("t", "Desc.", r#"[{"name":"x","type":"string"},{"name":"x","type":"string"}]"#),
                RejectReason::DuplicateParameter,
            ),
        ];
        for (input, want) in cases {
            let (catalog, rejections) = ingest_str(&input);
            assert_eq!(catalog.size, 0, "input should be rejected: {input}");
            assert_eq!(rejections.len(), 1);
            assert_eq!(rejections[0].reason, want, "wrong reason for: {input}");
        }
    }

    #[test]
    fn test_ingest_enum_parameter_accepted() {
        let input = record(
            "set_mode",
            "Set device mode.",
            r#"[{"name":"mode","type":"enum","enum_values":["on","off"],"required":true}]"#,
        );
        let (catalog, rejections) = ingest_str(&input);
        assert!(rejections.is_empty());
        let p = &catalog.tools[0].parameters[0];
        assert_eq!(p.ptype, ParamType::Enum);
        assert_eq!(p.enum_values, vec!["on", "off"]);
    }

    #[test]
    fn test_ingest_counts_balance() {
        // Accepted + rejected must equal total non-blank records for a
        // seeded random mix of valid and broken lines.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut lines = Vec::new();
        let mut total = 0usize;
        for i in 0..200 {
            total += 1;
            match rng.gen_range(0..4) {
                0 => lines.push(record(&format!("tool_{i}"), "Does a thing.", "[]")),
                1 => lines.push(record(
                    &format!("tool_{i}"),
                    "Typed tool.",
                    r#"[{"name":"a_id","type":"string","required":true}]"#,
                )),
                2 => lines.push(record(&format!("tool_{i}"), "Bad param.", r#"[{"name":"x","type":"blob"}]"#)),
                _ => lines.push("{broken".to_string()),
            }
        }
        let (catalog, rejections) = ingest_str(&lines.join("\n"));
        assert_eq!(catalog.size + rejections.len(), total);
    }

    #[test]
    fn test_ingest_roundtrip_is_idempotent() {
        let input = [
            record(
                "create_ticket",
                "Open a ticket.",
                r#"[{"name":"subject","type":"string","required":true},{"name":"priority","type":"enum","enum_values":["low","high"]}]"#,
            ),
            r#"{"name":"get_ticket","description":"Read one ticket.","parameters":[{"name":"ticket_id","type":"string","required":true}],"returns":[{"name":"ticket_id","type":"string"}],"source":"support_suite"}"#.to_string(),
        ]
        .join("\n");
        let (catalog, rejections) = ingest_str(&input);
        assert!(rejections.is_empty());
        let serialized = catalog.to_wire_lines().join("\n");
        let (again, rejections2) = ingest_str(&serialized);
        assert!(rejections2.is_empty());
        assert_eq!(catalog, again);
        assert_eq!(again.source_tags[1], "support_suite");
    }

    #[test]
    fn test_ingest_skips_header_and_blank_lines() {
        let input = format!(
            "{}\n\n{}\n",
            r#"{"_header":{"version":"0.1.0"}}"#,
            record("ping", "Check liveness.", "[]")
        );
        let (catalog, rejections) = ingest_str(&input);
        assert_eq!(catalog.size, 1);
        assert!(rejections.is_empty());
    }

    #[test]
    fn test_enrich_identity_is_noop() {
        let input = record("t1", "Original.", "[]");
        let (catalog, _) = ingest_str(&input);
        let (enriched, warnings) = enrich_descriptions(&catalog, &IdentityRewriter);
        assert_eq!(enriched, catalog);
        assert!(warnings.is_empty());
    }

    #[test]
    fn test_enrich_failure_keeps_original() {
        struct FailOn2;
        impl DescriptionRewriter for FailOn2 {
            fn rewrite(&self, tool: &ToolSpec) -> Result<String, String> {
                if tool.name == "t2" {
                    Err("backend unavailable".into())
                } else {
                    Ok(format!("{} (rewritten)", tool.description))
                }
            }
        }
        let input = [
            record("t1", "One.", "[]"),
            record("t2", "Two.", "[]"),
            record("t3", "Three.", "[]"),
        ]
        .join("\n");
        let (catalog, _) = ingest_str(&input);
        let (enriched, warnings) = enrich_descriptions(&catalog, &FailOn2);
        assert_eq!(enriched.size, 3);
        assert_eq!(enriched.tools[0].description, "One. (rewritten)");
        assert_eq!(enriched.tools[1].description, "Two.");
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].tool, "t2");
    }

    #[test]
    fn test_enrich_preserves_signatures() {
        let input = [
            record(
                "create_user",
                "Make a user.",
                r#"[{"name":"email","type":"string","required":true},{"name":"age","type":"integer"}]"#,
            ),
            r#"{"name":"find_user","description":"Look up.","parameters":[{"name":"email","type":"string","required":true}],"returns":[{"name":"user_id","type":"string"}]}"#.to_string(),
        ]
        .join("\n");
        let (catalog, _) = ingest_str(&input);
        let (enriched, warnings) = enrich_descriptions(&catalog, &SignatureRewriter);
        assert!(warnings.is_empty());
        let triples = |c: &ToolCatalog| -> Vec<(String, String, ParamType)> {
            c.tools
                .iter()
                .flat_map(|t| {
                    t.parameters.iter().map(|p| (t.name.clone(), p.name.clone(), p.ptype))
                })
                .collect()
        };
        assert_eq!(triples(&catalog), triples(&enriched));
        assert!(enriched.tools[0].description.contains("Inputs: email (string), age (integer)."));
        assert!(enriched.tools[1].description.contains("Outputs: user_id (string)."));
    }

    #[test]
    fn test_stats_counts() {
        let (empty, _) = ingest_str("");
        let s = catalog_stats(&empty);
        assert_eq!(s.tool_count, 0);
        assert!(s.param_count_hist.is_empty());
        assert!(s.ptype_freq.is_empty());

        let two_params = r#"[{"name":"a","type":"string"},{"name":"b","type":"integer"}]"#;
        let input: Vec<String> =
            (0..5).map(|i| record(&format!("t{i}"), "Tool.", two_params)).collect();
        let (catalog, _) = ingest_str(&input.join("\n"));
        let s = catalog_stats(&catalog);
        assert_eq!(s.tool_count, 5);
        assert_eq!(s.param_count_hist.get(&2), Some(&5));
        assert_eq!(s.param_count_hist.values().sum::<usize>(), 5);
        assert_eq!(s.ptype_freq.get("string"), Some(&5));
        assert_eq!(s.ptype_freq.get("integer"), Some(&5));
    }
}
