//! C ABI over the environment-synthesis engine.
//!
//! Foreign callers build a world from a tool catalog, synthesize seeded
//! tasks, run deterministic replay episodes, and validate trajectories
//! through the quality funnel. All handles are opaque; strings returned by
//! the library must be released with `envforge_string_free`, handles with
//! their matching `_free` function.
//!
//! Every function returns an `EnvforgeStatus`; on any non-`Ok` status the
//! thread-local message retrieved via `envforge_last_error` describes the
//! failure. Returned pointers are only valid when the call reported `Ok`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use envforge::catalog::ingest_catalog;
use envforge::filter::{run_funnel, FilterConfig, FunnelRecord};
use envforge::graph::{detect_communities, pairwise_edges, refine_partition, GraphConfig, HeuristicJudge};
use envforge::interplay::{make_replay_agent, make_scripted_user, run_episode, EpisodeLimits, Trajectory};
use envforge::materialize::{build_bundles, DomainBundle};
use envforge::synth::{build_task, replay_task, AgenticTask, TemplateComposer, WalkConfig};
use envforge::util::derive_seed;

/// Result code of every FFI call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvforgeStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArg = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// File could not be read.
    Io = 3,
    /// Input failed to parse or validate.
    Parse = 4,
    /// World construction, synthesis, or replay failed.
    Build = 5,
    /// An index or identifier did not resolve.
    NotFound = 6,
    /// Internal panic; state may be inconsistent.
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(message).expect("nul bytes stripped"));
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

/// Message for the most recent failure on this thread, or null when the
/// last call succeeded. The pointer stays valid until the next library
/// call on the same thread.
#[no_mangle]
pub extern "C" fn envforge_last_error() -> *const c_char {
    LAST_ERROR
        .with(|slot| slot.borrow().as_ref().map(|s| s.as_ptr()).unwrap_or(std::ptr::null()))
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn envforge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// An executable world: one domain bundle per detected community.
pub struct EnvforgeWorld {
    bundles: Vec<DomainBundle>,
}

/// One synthesized (or imported) verifiable task.
pub struct EnvforgeTask {
    task: AgenticTask,
}

/// Run a fallible body, translating panics and the error path into codes.
fn guarded(body: impl FnOnce() -> Result<(), (EnvforgeStatus, String)>) -> EnvforgeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_error();
            EnvforgeStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let detail = panic
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {detail}"));
            EnvforgeStatus::Internal
        }
    }
}

fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, (EnvforgeStatus, String)> {
    if ptr.is_null() {
        return Err((EnvforgeStatus::NullArg, format!("{name} must not be null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| (EnvforgeStatus::Utf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, (EnvforgeStatus, String)> {
    if ptr.is_null() {
        return Err((EnvforgeStatus::NullArg, format!("{name} must not be null")));
    }
    Ok(unsafe { &mut *ptr })
}

fn handle_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, (EnvforgeStatus, String)> {
    if ptr.is_null() {
        return Err((EnvforgeStatus::NullArg, format!("{name} must not be null")));
    }
    Ok(unsafe { &*ptr })
}

fn build_world_from_reader(
    reader: impl std::io::BufRead,
    tau: f64,
    seed: u64,
) -> Result<EnvforgeWorld, (EnvforgeStatus, String)> {
    let (catalog, rejections) = ingest_catalog(reader)
        .map_err(|e| (EnvforgeStatus::Parse, format!("catalog ingest failed: {e}")))?;
    if catalog.size == 0 {
        return Err((
            EnvforgeStatus::Parse,
            format!("no valid tool records ({} rejected)", rejections.len()),
        ));
    }
    let config = GraphConfig { tau, embed_dim: 512, seed };
    let graph = pairwise_edges(&catalog, &config);
    let partition = detect_communities(&graph, &config);
    let (refined, _) = refine_partition(&catalog, &graph, &partition, &HeuristicJudge);
    let (bundles, _) = build_bundles(&catalog, &refined, &partition, &BTreeMap::new())
        .map_err(|e| (EnvforgeStatus::Build, format!("bundle derivation failed: {e}")))?;
    Ok(EnvforgeWorld { bundles })
}

fn emit_string(value: String, slot: &mut *mut c_char) -> Result<(), (EnvforgeStatus, String)> {
    let cstring = CString::new(value.replace('\0', " "))
        .map_err(|_| (EnvforgeStatus::Internal, "string contained nul".to_string()))?;
    *slot = cstring.into_raw();
    Ok(())
}

/// Build a world from a JSONL tool-catalog file: ingest, similarity graph
/// at threshold `tau`, community partition, dependency refinement, and
/// per-domain schema derivation.
#[no_mangle]
pub extern "C" fn envforge_world_build(
    catalog_path: *const c_char,
    tau: f64,
    seed: u64,
    out_world: *mut *mut EnvforgeWorld,
) -> EnvforgeStatus {
    guarded(|| {
        let path = utf8_arg(catalog_path, "catalog_path")?;
        let out = out_arg(out_world, "out_world")?;
        let file = std::fs::File::open(Path::new(path))
            .map_err(|e| (EnvforgeStatus::Io, format!("cannot open {path}: {e}")))?;
        let world = build_world_from_reader(std::io::BufReader::new(file), tau, seed)?;
        *out = Box::into_raw(Box::new(world));
        Ok(())
    })
}

/// `envforge_world_build` over an in-memory JSONL catalog string.
#[no_mangle]
pub extern "C" fn envforge_world_build_from_str(
    catalog_jsonl: *const c_char,
    tau: f64,
    seed: u64,
    out_world: *mut *mut EnvforgeWorld,
) -> EnvforgeStatus {
    guarded(|| {
        let text = utf8_arg(catalog_jsonl, "catalog_jsonl")?;
        let out = out_arg(out_world, "out_world")?;
        let world = build_world_from_reader(std::io::Cursor::new(text.as_bytes()), tau, seed)?;
        *out = Box::into_raw(Box::new(world));
        Ok(())
    })
}

/// Number of domains in the world; 0 (with an error set) on a null handle.
#[no_mangle]
pub extern "C" fn envforge_world_domain_count(world: *const EnvforgeWorld) -> usize {
    let mut count = 0;
    guarded(|| {
        count = handle_arg(world, "world")?.bundles.len();
        Ok(())
    });
    count
}

/// Identifier of the domain at `index` as a new string.
#[no_mangle]
pub extern "C" fn envforge_world_domain_id(
    world: *const EnvforgeWorld,
    index: usize,
    out_id: *mut *mut c_char,
) -> EnvforgeStatus {
    guarded(|| {
        let world = handle_arg(world, "world")?;
        let out = out_arg(out_id, "out_id")?;
        let bundle = world.bundles.get(index).ok_or_else(|| {
            (
                EnvforgeStatus::NotFound,
                format!("domain index {index} out of range ({} domains)", world.bundles.len()),
            )
        })?;
        emit_string(bundle.domain_id.clone(), out)
    })
}

/// Synthesize the `index`-th verifiable task of the given seed series,
/// assigning tasks to domains round-robin.
#[no_mangle]
pub extern "C" fn envforge_task_synthesize(
    world: *const EnvforgeWorld,
    seed: u64,
    index: usize,
    out_task: *mut *mut EnvforgeTask,
) -> EnvforgeStatus {
    guarded(|| {
        let world = handle_arg(world, "world")?;
        let out = out_arg(out_task, "out_task")?;
        if world.bundles.is_empty() {
            return Err((EnvforgeStatus::Build, "world has no domains".to_string()));
        }
        let bundle = &world.bundles[index % world.bundles.len()];
        let task_seed = derive_seed(seed, "task", index as u64);
        let walk = WalkConfig { min_steps: 2, max_steps: 8, seed: 0 };
        let task = build_task(bundle, task_seed, &walk, &TemplateComposer)
            .map_err(|e| (EnvforgeStatus::Build, format!("synthesis failed: {e}")))?;
        *out = Box::into_raw(Box::new(EnvforgeTask { task }));
        Ok(())
    })
}

/// Serialize a task to JSON (round-trips through `envforge_task_from_json`).
#[no_mangle]
pub extern "C" fn envforge_task_to_json(
    task: *const EnvforgeTask,
    out_json: *mut *mut c_char,
) -> EnvforgeStatus {
    guarded(|| {
        let task = handle_arg(task, "task")?;
        let out = out_arg(out_json, "out_json")?;
        let json = serde_json::to_string(&task.task)
            .map_err(|e| (EnvforgeStatus::Internal, format!("serialization failed: {e}")))?;
        emit_string(json, out)
    })
}

/// Import a task previously serialized with `envforge_task_to_json`.
#[no_mangle]
pub extern "C" fn envforge_task_from_json(
    json: *const c_char,
    out_task: *mut *mut EnvforgeTask,
) -> EnvforgeStatus {
    guarded(|| {
        let text = utf8_arg(json, "json")?;
        let out = out_arg(out_task, "out_task")?;
        let task: AgenticTask = serde_json::from_str(text)
            .map_err(|e| (EnvforgeStatus::Parse, format!("task JSON invalid: {e}")))?;
        *out = Box::into_raw(Box::new(EnvforgeTask { task }));
        Ok(())
    })
}

fn world_bundle<'a>(
    world: &'a EnvforgeWorld,
    domain_id: &str,
) -> Result<&'a DomainBundle, (EnvforgeStatus, String)> {
    world.bundles.iter().find(|b| b.domain_id == domain_id).ok_or_else(|| {
        (EnvforgeStatus::NotFound, format!("task references unknown domain {domain_id}"))
    })
}

/// Re-execute the task's golden actions from its seed state and verify
/// statuses and the final digest.
#[no_mangle]
pub extern "C" fn envforge_task_replay(
    world: *const EnvforgeWorld,
    task: *const EnvforgeTask,
) -> EnvforgeStatus {
    guarded(|| {
        let world = handle_arg(world, "world")?;
        let task = handle_arg(task, "task")?;
        let bundle = world_bundle(world, &task.task.domain_id)?;
        replay_task(bundle, &task.task)
            .map_err(|e| (EnvforgeStatus::Build, format!("replay failed: {e}")))
    })
}

/// Run one deterministic episode (replay agent and scripted user revealing
/// the intent in `chunks` turns) and return the trajectory as JSON.
#[no_mangle]
pub extern "C" fn envforge_episode_run(
    world: *const EnvforgeWorld,
    task: *const EnvforgeTask,
    chunks: usize,
    out_trajectory_json: *mut *mut c_char,
) -> EnvforgeStatus {
    guarded(|| {
        let world = handle_arg(world, "world")?;
        let task = handle_arg(task, "task")?;
        let out = out_arg(out_trajectory_json, "out_trajectory_json")?;
        let bundle = world_bundle(world, &task.task.domain_id)?;
        let mut agent = make_replay_agent(&task.task);
        let mut user = make_scripted_user(&task.task, chunks.max(1));
        let trajectory =
            run_episode(&task.task, bundle, &mut agent, &mut user, &EpisodeLimits::default());
        let json = serde_json::to_string(&trajectory)
            .map_err(|e| (EnvforgeStatus::Internal, format!("serialization failed: {e}")))?;
        emit_string(json, out)
    })
}

/// Validate a trajectory (as JSON) through the three-stage funnel with the
/// default filter settings. `out_kept` receives 1 when the trajectory is
/// kept, 0 otherwise. When `out_verdicts_json` is non-null it receives the
/// full per-stage verdict record as JSON.
#[no_mangle]
pub extern "C" fn envforge_trajectory_check(
    world: *const EnvforgeWorld,
    task: *const EnvforgeTask,
    trajectory_json: *const c_char,
    out_kept: *mut i32,
    out_verdicts_json: *mut *mut c_char,
) -> EnvforgeStatus {
    guarded(|| {
        let world = handle_arg(world, "world")?;
        let task = handle_arg(task, "task")?;
        let text = utf8_arg(trajectory_json, "trajectory_json")?;
        let kept_slot = out_arg(out_kept, "out_kept")?;
        let trajectory: Trajectory = serde_json::from_str(text)
            .map_err(|e| (EnvforgeStatus::Parse, format!("trajectory JSON invalid: {e}")))?;
        let bundle = world_bundle(world, &task.task.domain_id)?;
        let result = run_funnel(&trajectory, &task.task, bundle, &FilterConfig::default());
        *kept_slot = i32::from(result.kept);
        if !out_verdicts_json.is_null() {
            let record = FunnelRecord::new(trajectory.task_id.clone(), result);
            let json = serde_json::to_string(&record)
                .map_err(|e| (EnvforgeStatus::Internal, format!("serialization failed: {e}")))?;
            emit_string(json, unsafe { &mut *out_verdicts_json })?;
        }
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
#[no_mangle]
pub extern "C" fn envforge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Release a task handle. Null is ignored.
#[no_mangle]
pub extern "C" fn envforge_task_free(task: *mut EnvforgeTask) {
    if !task.is_null() {
        drop(unsafe { Box::from_raw(task) });
    }
}

/// Release a world handle. Null is ignored.
#[no_mangle]
pub extern "C" fn envforge_world_free(world: *mut EnvforgeWorld) {
    if !world.is_null() {
        drop(unsafe { Box::from_raw(world) });
    }
}
