//! Stage orchestration shared by the CLI subcommands and integration tests.
//!
//! Each stage reads its input artifacts, writes its output artifact with a
//! provenance header, and returns a list of key/value summary fields for the
//! one-line stage report. `run_pipeline` chains every stage over a working
//! directory with fixed artifact names.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{
    config_hash, read_json_doc, read_jsonl, write_json_doc, ArtifactError, ArtifactHeader,
    JsonlWriter,
};
use crate::catalog::{ingest_catalog, CatalogError, ToolCatalog};
use crate::config::PipelineConfig;
use crate::export::{
    build_eval_report, to_training_sample, EvalError, EvalRecord, ExportError, TrialOutcome,
};
use crate::filter::{run_funnel, FilterStage, FunnelRecord};
use crate::graph::{
    detect_communities, pairwise_edges, refine_partition, DomainPartition, GraphConfig,
    HeuristicJudge, ToolGraph,
};
use crate::interplay::{
    make_replay_agent, make_scripted_user, run_episode, HttpModelClient, ModelClient,
    TerminalReason, Trajectory,
};
use crate::materialize::{build_bundles, DomainBundle, MaterializeError};
use crate::synth::{build_task, AgenticTask, SynthError, TemplateComposer, WalkConfig};
use crate::util::derive_seed;

/// Key/value fields of a stage's one-line summary.
pub type Summary = Vec<(&'static str, String)>;

/// Render a stage summary as one machine-readable line.
pub fn format_summary(stage: &str, fields: &Summary) -> String {
    let mut line = format!("stage={stage} status=ok");
    for (key, value) in fields {
        line.push_str(&format!(" {key}={value}"));
    }
    line
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Materialize(#[from] MaterializeError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Data(String),
}

fn header_for(config: &PipelineConfig) -> ArtifactHeader {
    ArtifactHeader::new(config_hash(config), config.seed)
}

fn graph_config(config: &PipelineConfig) -> GraphConfig {
    GraphConfig {
        tau: config.graph.tau,
        embed_dim: config.graph.embed_dim,
        seed: config.seed,
    }
}

/// Read a catalog artifact (raw or ingested form).
fn load_catalog(path: &Path) -> Result<ToolCatalog, PipelineError> {
    let file = File::open(path)
        .map_err(|e| ArtifactError::Io { path: path.to_path_buf(), source: e })?;
    let (catalog, rejections) = ingest_catalog(BufReader::new(file))?;
    if catalog.size == 0 {
        return Err(PipelineError::Data(format!(
            "{}: no valid tool records ({} rejected)",
            path.display(),
            rejections.len()
        )));
    }
    Ok(catalog)
}

/// Ingest stage: validate a raw tool catalog, writing the clean records.
pub fn run_ingest(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let file = File::open(input)
        .map_err(|e| ArtifactError::Io { path: input.to_path_buf(), source: e })?;
    let (catalog, rejections) = ingest_catalog(BufReader::new(file))?;
    let mut writer = JsonlWriter::create(output, &header_for(config))?;
    for line in catalog.to_wire_lines() {
        writer.write_line(&line)?;
    }
    writer.finish()?;
    Ok(vec![
        ("count", catalog.size.to_string()),
        ("rejected", rejections.len().to_string()),
        ("out", output.display().to_string()),
    ])
}

/// Graph stage: parameter-similarity edges above the threshold.
pub fn run_graph(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let catalog = load_catalog(input)?;
    let graph = pairwise_edges(&catalog, &graph_config(config));
    write_json_doc(output, &header_for(config), &graph)?;
    Ok(vec![
        ("nodes", graph.nodes.len().to_string()),
        ("edges", graph.undirected_edges.len().to_string()),
        ("tau", format!("{}", graph.config.tau)),
        ("out", output.display().to_string()),
    ])
}

/// Partition stage: deterministic community detection over the tool graph.
pub fn run_partition(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, graph): (_, ToolGraph) = read_json_doc(input)?;
    let partition = detect_communities(&graph, &graph_config(config));
    write_json_doc(output, &header_for(config), &partition)?;
    Ok(vec![
        ("communities", partition.communities.len().to_string()),
        ("modularity", format!("{:.6}", partition.modularity)),
        ("out", output.display().to_string()),
    ])
}

/// The bundles artifact document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundlesDoc {
    pub bundles: Vec<DomainBundle>,
}

/// Materialize stage: dependency refinement plus per-domain schema and tool
/// implementations.
pub fn run_materialize(
    catalog_in: &Path,
    graph_in: &Path,
    partition_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let catalog = load_catalog(catalog_in)?;
    let (_, graph): (_, ToolGraph) = read_json_doc(graph_in)?;
    let (_, partition): (_, DomainPartition) = read_json_doc(partition_in)?;
    let (refined, judge_warnings) =
        refine_partition(&catalog, &graph, &partition, &HeuristicJudge);
    let (bundles, warnings) = build_bundles(&catalog, &refined, &partition, &BTreeMap::new())?;
    write_json_doc(output, &header_for(config), &BundlesDoc { bundles: bundles.clone() })?;
    Ok(vec![
        ("domains", bundles.len().to_string()),
        ("tools", bundles.iter().map(|b| b.tools.len()).sum::<usize>().to_string()),
        ("directed_edges", bundles.iter().map(|b| b.graph_slice.len()).sum::<usize>().to_string()),
        ("warnings", (judge_warnings.len() + warnings.len()).to_string()),
        ("out", output.display().to_string()),
    ])
}

/// Synth stage: seeded verifiable tasks, spread round-robin over domains.
pub fn run_synth(
    bundles_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, doc): (_, BundlesDoc) = read_json_doc(bundles_in)?;
    if doc.bundles.is_empty() {
        return Err(PipelineError::Data(format!(
            "{}: no domain bundles to synthesize from",
            bundles_in.display()
        )));
    }
    let walk = WalkConfig {
        min_steps: config.walk.min_steps,
        max_steps: config.walk.max_steps,
        seed: 0, // overridden per task
    };
    let tasks = in_pool(config.play.parallel, || {
        (0..config.synth.n_tasks)
            .into_par_iter()
            .map(|i| {
                let bundle = &doc.bundles[i % doc.bundles.len()];
                let seed = derive_seed(config.seed, "task", i as u64);
                build_task(bundle, seed, &walk, &TemplateComposer)
            })
            .collect::<Result<Vec<AgenticTask>, SynthError>>()
    })?;
    let mut writer = JsonlWriter::create(output, &header_for(config))?;
    for task in &tasks {
        writer.write_record(task)?;
    }
    writer.finish()?;
    let all_read = tasks.iter().filter(|t| t.all_read).count();
    Ok(vec![
        ("tasks", tasks.len().to_string()),
        ("all_read", all_read.to_string()),
        ("out", output.display().to_string()),
    ])
}

/// Run `f` inside a bounded rayon pool of `parallel` threads (the global
/// pool when `parallel` ≤ 1 would still be bounded, so build explicitly).
fn in_pool<T: Send>(parallel: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .expect("worker pool construction");
    pool.install(f)
}

fn index_bundles(doc: &BundlesDoc) -> BTreeMap<&str, &DomainBundle> {
    doc.bundles.iter().map(|b| (b.domain_id.as_str(), b)).collect()
}

/// Play stage: one interplay episode per task. Deterministic in-process
/// clients by default; the configured HTTP endpoint when present.
pub fn run_play(
    tasks_in: &Path,
    bundles_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, tasks): (_, Vec<AgenticTask>) = read_jsonl(tasks_in)?;
    let (_, doc): (_, BundlesDoc) = read_json_doc(bundles_in)?;
    let by_domain = index_bundles(&doc);

    let episodes: Vec<Result<Trajectory, PipelineError>> = in_pool(config.play.parallel, || {
        tasks
            .par_iter()
            .map(|task| {
                let bundle = by_domain.get(task.domain_id.as_str()).ok_or_else(|| {
                    PipelineError::Data(format!(
                        "task {} references unknown domain {}",
                        task.task_id, task.domain_id
                    ))
                })?;
                let (mut agent, mut user) = make_clients(config, task);
                Ok(run_episode(task, bundle, agent.as_mut(), user.as_mut(), &config.limits))
            })
            .collect()
    });

    let mut writer = JsonlWriter::create(output, &header_for(config))?;
    let mut reasons: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut count = 0usize;
    for episode in episodes {
        let trajectory = episode?;
        let reason = match trajectory.terminal_reason {
            TerminalReason::UserDone => "user_done",
            TerminalReason::TurnCap => "turn_cap",
            TerminalReason::AgentStop => "agent_stop",
            TerminalReason::ClientFailure => "client_failure",
        };
        *reasons.entry(reason).or_insert(0) += 1;
        writer.write_record(&trajectory)?;
        count += 1;
    }
    writer.finish()?;
    let mut summary = vec![("episodes", count.to_string())];
    for (reason, n) in reasons {
        summary.push((reason, n.to_string()));
    }
    summary.push(("out", output.display().to_string()));
    Ok(summary)
}

/// Build the episode clients for one task: HTTP when an endpoint is
/// configured, otherwise the deterministic replay agent and scripted user.
fn make_clients(
    config: &PipelineConfig,
    task: &AgenticTask,
) -> (Box<dyn ModelClient>, Box<dyn ModelClient>) {
    match &config.endpoint {
        Some(endpoint) => (
            Box::new(HttpModelClient::new(endpoint.clone())),
            Box::new(HttpModelClient::new(endpoint.clone())),
        ),
        None => (
            Box::new(make_replay_agent(task)),
            Box::new(
                make_scripted_user(task, config.play.chunks)
                    .with_done_token(config.limits.user_done_token.clone()),
            ),
        ),
    }
}

/// Join trajectories with their tasks, erroring on unknown ids.
fn join_tasks<'a>(
    trajectories: &'a [Trajectory],
    tasks: &'a [AgenticTask],
    bundles: &'a BundlesDoc,
) -> Result<Vec<(&'a Trajectory, &'a AgenticTask, &'a DomainBundle)>, PipelineError> {
    let by_id: BTreeMap<&str, &AgenticTask> =
        tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let by_domain = index_bundles(bundles);
    trajectories
        .iter()
        .map(|trajectory| {
            let task = by_id.get(trajectory.task_id.as_str()).ok_or_else(|| {
                PipelineError::Data(format!("trajectory references unknown task {}", trajectory.task_id))
            })?;
            let bundle = by_domain.get(task.domain_id.as_str()).ok_or_else(|| {
                PipelineError::Data(format!("task {} references unknown domain {}", task.task_id, task.domain_id))
            })?;
            Ok((trajectory, *task, *bundle))
        })
        .collect()
}

/// Filter stage: the three-stage funnel over every trajectory.
pub fn run_filter(
    trajectories_in: &Path,
    tasks_in: &Path,
    bundles_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, trajectories): (_, Vec<Trajectory>) = read_jsonl(trajectories_in)?;
    let (_, tasks): (_, Vec<AgenticTask>) = read_jsonl(tasks_in)?;
    let (_, doc): (_, BundlesDoc) = read_json_doc(bundles_in)?;

    let mut writer = JsonlWriter::create(output, &header_for(config))?;
    let mut kept = 0usize;
    let mut dropped: BTreeMap<&'static str, usize> = BTreeMap::new();
    let joined = join_tasks(&trajectories, &tasks, &doc)?;
    let total = joined.len();
    for (trajectory, task, bundle) in joined {
        let result = run_funnel(trajectory, task, bundle, &config.filter);
        if result.kept {
            kept += 1;
        } else if let Some(verdict) = result.verdicts.last() {
            let stage = match verdict.stage {
                FilterStage::Validity => "dropped_validity",
                FilterStage::StateAlignment => "dropped_state_alignment",
                FilterStage::ExactMatch => "dropped_exact_match",
            };
            *dropped.entry(stage).or_insert(0) += 1;
        }
        writer.write_record(&FunnelRecord::new(trajectory.task_id.clone(), result))?;
    }
    writer.finish()?;
    let mut summary = vec![("total", total.to_string()), ("kept", kept.to_string())];
    for (stage, n) in dropped {
        summary.push((stage, n.to_string()));
    }
    summary.push(("out", output.display().to_string()));
    Ok(summary)
}

/// Export stage: loss-masked training samples for funnel-kept trajectories.
pub fn run_export(
    trajectories_in: &Path,
    funnel_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, trajectories): (_, Vec<Trajectory>) = read_jsonl(trajectories_in)?;
    let (_, records): (_, Vec<FunnelRecord>) = read_jsonl(funnel_in)?;
    let kept: BTreeMap<&str, bool> =
        records.iter().map(|r| (r.task_id.as_str(), r.kept)).collect();

    let mut writer = JsonlWriter::create(output, &header_for(config))?;
    let mut exported = 0usize;
    let mut skipped_unsupervisable = 0usize;
    for trajectory in &trajectories {
        if !kept.get(trajectory.task_id.as_str()).copied().unwrap_or(false) {
            continue;
        }
        // A kept trajectory can still be all-context (e.g. every golden
        // action expected an error and the agent never acted); skip those.
        match to_training_sample(trajectory, config.export.stage_tag) {
            Ok(sample) => {
                writer.write_record(&sample)?;
                exported += 1;
            }
            Err(ExportError::NothingToSupervise(_)) => skipped_unsupervisable += 1,
        }
    }
    writer.finish()?;
    Ok(vec![
        ("samples", exported.to_string()),
        ("skipped_unsupervisable", skipped_unsupervisable.to_string()),
        (
            "stage_tag",
            serde_json::to_value(config.export.stage_tag)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        ),
        ("out", output.display().to_string()),
    ])
}

/// Eval stage: pass^k curve and depth analysis over trial records.
pub fn run_eval(
    records_in: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let (_, records): (_, Vec<EvalRecord>) = read_jsonl(records_in)?;
    let report = build_eval_report(&records, config.eval.bucket_width)?;
    write_json_doc(output, &header_for(config), &report)?;
    Ok(vec![
        ("tasks", report.total_tasks.to_string()),
        ("trials", report.total_trials.to_string()),
        ("pass_1", format!("{:.6}", report.pass_k.get(&1).copied().unwrap_or(0.0))),
        ("trend_slope", format!("{:.6}", report.trend_slope)),
        ("out", output.display().to_string()),
    ])
}

/// Fixed artifact names used by `run_pipeline` inside its output directory.
pub const PIPELINE_FILES: [(&str, &str); 9] = [
    ("catalog", "catalog.jsonl"),
    ("graph", "graph.json"),
    ("partition", "partition.json"),
    ("bundles", "bundles.json"),
    ("tasks", "tasks.jsonl"),
    ("trajectories", "trajectories.jsonl"),
    ("funnel", "funnel.jsonl"),
    ("export", "export.jsonl"),
    ("eval_report", "eval_report.json"),
];

fn pipeline_path(out_dir: &Path, key: &str) -> PathBuf {
    let name = PIPELINE_FILES
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .expect("known pipeline artifact");
    out_dir.join(name)
}

/// Full pipeline: ingest → graph → partition → materialize → synth → play →
/// filter → export, plus a single-trial eval report derived from the funnel.
pub fn run_pipeline(
    catalog_in: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| ArtifactError::Io { path: out_dir.to_path_buf(), source: e })?;
    let p = |key: &str| pipeline_path(out_dir, key);

    run_ingest(catalog_in, &p("catalog"), config)?;
    run_graph(&p("catalog"), &p("graph"), config)?;
    run_partition(&p("graph"), &p("partition"), config)?;
    run_materialize(&p("catalog"), &p("graph"), &p("partition"), &p("bundles"), config)?;
    run_synth(&p("bundles"), &p("tasks"), config)?;
    run_play(&p("tasks"), &p("bundles"), &p("trajectories"), config)?;
    run_filter(&p("trajectories"), &p("tasks"), &p("bundles"), &p("funnel"), config)?;
    let export_summary = run_export(&p("trajectories"), &p("funnel"), &p("export"), config)?;

    // Single-trial eval records: one trial per task, success = kept.
    let (_, trajectories): (_, Vec<Trajectory>) = read_jsonl(&p("trajectories"))?;
    let (_, funnel): (_, Vec<FunnelRecord>) = read_jsonl(&p("funnel"))?;
    let kept: BTreeMap<&str, bool> =
        funnel.iter().map(|r| (r.task_id.as_str(), r.kept)).collect();
    let records: Vec<EvalRecord> = trajectories
        .iter()
        .map(|t| {
            EvalRecord::new(
                t.task_id.clone(),
                vec![TrialOutcome {
                    success: kept.get(t.task_id.as_str()).copied().unwrap_or(false),
                    tool_call_count: t.tool_call_count,
                }],
            )
        })
        .collect();
    let report = build_eval_report(&records, config.eval.bucket_width)?;
    write_json_doc(&p("eval_report"), &header_for(config), &report)?;

    let kept_count = funnel.iter().filter(|r| r.kept).count();
    let exported = export_summary
        .iter()
        .find(|(k, _)| *k == "samples")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    Ok(vec![
        ("tasks", trajectories.len().to_string()),
        ("kept", kept_count.to_string()),
        ("samples", exported),
        ("out_dir", out_dir.display().to_string()),
    ])
}

/// Verify every golden action of every task replays to ok/error exactly as
/// recorded (used by tests and the synth summary).
pub fn replay_consistency(tasks: &[AgenticTask], bundles: &BundlesDoc) -> Result<usize, PipelineError> {
    let by_domain = index_bundles(bundles);
    let mut consistent = 0usize;
    for task in tasks {
        let bundle = by_domain.get(task.domain_id.as_str()).ok_or_else(|| {
            PipelineError::Data(format!("task {} references unknown domain {}", task.task_id, task.domain_id))
        })?;
        crate::synth::replay_task(bundle, task)?;
        consistent += 1;
    }
    Ok(consistent)
}
