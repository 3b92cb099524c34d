//! Exercises the C ABI surface from Rust: handle lifecycles, error codes,
//! the thread-local error message, and JSON round trips.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use envforge_ffi::{
    envforge_episode_run, envforge_last_error, envforge_string_free, envforge_task_free,
    envforge_task_from_json, envforge_task_replay, envforge_task_synthesize,
    envforge_task_to_json, envforge_trajectory_check, envforge_version, envforge_world_build,
    envforge_world_build_from_str, envforge_world_domain_count, envforge_world_domain_id,
    envforge_world_free, EnvforgeStatus, EnvforgeTask, EnvforgeWorld,
};

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/catalog_50.jsonl")
}

fn c_string(s: &str) -> CString {
    CString::new(s).expect("no nul bytes")
}

fn last_error_string() -> Option<String> {
    let ptr = envforge_last_error();
    if ptr.is_null() {
        return None;
    }
    Some(unsafe { CStr::from_ptr(ptr) }.to_string_lossy().into_owned())
}

fn take_string(ptr: *mut std::ffi::c_char) -> String {
    assert!(!ptr.is_null());
    let owned = unsafe { CStr::from_ptr(ptr) }.to_string_lossy().into_owned();
    envforge_string_free(ptr);
    owned
}

fn build_world() -> *mut EnvforgeWorld {
    let path = c_string(fixture_path().to_str().unwrap());
    let mut world: *mut EnvforgeWorld = ptr::null_mut();
    let status = envforge_world_build(path.as_ptr(), 0.5, 42, &mut world);
    assert_eq!(status, EnvforgeStatus::Ok, "error: {:?}", last_error_string());
    assert!(!world.is_null());
    world
}

fn synthesize(world: *const EnvforgeWorld, index: usize) -> *mut EnvforgeTask {
    let mut task: *mut EnvforgeTask = ptr::null_mut();
    let status = envforge_task_synthesize(world, 42, index, &mut task);
    assert_eq!(status, EnvforgeStatus::Ok, "error: {:?}", last_error_string());
    assert!(!task.is_null());
    task
}

#[test]
fn test_world_build_and_domain_listing() {
    let world = build_world();
    let count = envforge_world_domain_count(world);
    assert_eq!(count, 7);
    for index in 0..count {
        let mut id: *mut std::ffi::c_char = ptr::null_mut();
        let status = envforge_world_domain_id(world, index, &mut id);
        assert_eq!(status, EnvforgeStatus::Ok);
        let id = take_string(id);
        assert_eq!(id, format!("domain_{index:03}"));
    }
    let mut id: *mut std::ffi::c_char = ptr::null_mut();
    let status = envforge_world_domain_id(world, count, &mut id);
    assert_eq!(status, EnvforgeStatus::NotFound);
    assert!(last_error_string().unwrap().contains("out of range"));
    envforge_world_free(world);
}

#[test]
fn test_world_build_from_str_matches_file() {
    let text = std::fs::read_to_string(fixture_path()).unwrap();
    let jsonl = c_string(&text);
    let mut world: *mut EnvforgeWorld = ptr::null_mut();
    let status = envforge_world_build_from_str(jsonl.as_ptr(), 0.5, 42, &mut world);
    assert_eq!(status, EnvforgeStatus::Ok);
    assert_eq!(envforge_world_domain_count(world), 7);
    envforge_world_free(world);
}

#[test]
fn test_missing_catalog_reports_io_error_with_path() {
    let path = c_string("/nonexistent/catalog.jsonl");
    let mut world: *mut EnvforgeWorld = ptr::null_mut();
    let status = envforge_world_build(path.as_ptr(), 0.5, 42, &mut world);
    assert_eq!(status, EnvforgeStatus::Io);
    assert!(world.is_null());
    assert!(last_error_string().unwrap().contains("/nonexistent/catalog.jsonl"));
}

#[test]
fn test_null_arguments_are_rejected() {
    let mut world: *mut EnvforgeWorld = ptr::null_mut();
    assert_eq!(
        envforge_world_build(ptr::null(), 0.5, 42, &mut world),
        EnvforgeStatus::NullArg
    );
    let path = c_string(fixture_path().to_str().unwrap());
    assert_eq!(
        envforge_world_build(path.as_ptr(), 0.5, 42, ptr::null_mut()),
        EnvforgeStatus::NullArg
    );
    assert_eq!(envforge_world_domain_count(ptr::null()), 0);
    assert!(last_error_string().unwrap().contains("world"));

    // Frees tolerate null.
    envforge_world_free(ptr::null_mut());
    envforge_task_free(ptr::null_mut());
    envforge_string_free(ptr::null_mut());
}

#[test]
fn test_task_json_round_trip_and_replay() {
    let world = build_world();
    let task = synthesize(world, 3);

    assert_eq!(envforge_task_replay(world, task), EnvforgeStatus::Ok);

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(envforge_task_to_json(task, &mut json), EnvforgeStatus::Ok);
    let json = take_string(json);
    assert!(json.contains("\"task_id\""));

    let wire = c_string(&json);
    let mut imported: *mut EnvforgeTask = ptr::null_mut();
    assert_eq!(envforge_task_from_json(wire.as_ptr(), &mut imported), EnvforgeStatus::Ok);
    let mut json_again: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(envforge_task_to_json(imported, &mut json_again), EnvforgeStatus::Ok);
    assert_eq!(take_string(json_again), json, "round trip must be byte-stable");
    assert_eq!(envforge_task_replay(world, imported), EnvforgeStatus::Ok);

    let garbage = c_string("{\"not\": \"a task\"}");
    let mut bad: *mut EnvforgeTask = ptr::null_mut();
    assert_eq!(envforge_task_from_json(garbage.as_ptr(), &mut bad), EnvforgeStatus::Parse);

    envforge_task_free(imported);
    envforge_task_free(task);
    envforge_world_free(world);
}

#[test]
fn test_episode_and_funnel_check() {
    let world = build_world();
    let task = synthesize(world, 0);

    let mut trajectory: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        envforge_episode_run(world, task, 2, &mut trajectory),
        EnvforgeStatus::Ok
    );
    let trajectory = take_string(trajectory);

    let wire = c_string(&trajectory);
    let mut kept: i32 = -1;
    let mut verdicts: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        envforge_trajectory_check(world, task, wire.as_ptr(), &mut kept, &mut verdicts),
        EnvforgeStatus::Ok
    );
    assert_eq!(kept, 1, "deterministic episode must pass the funnel");
    let verdicts = take_string(verdicts);
    let record: serde_json::Value = serde_json::from_str(&verdicts).unwrap();
    assert_eq!(record["kept"], serde_json::Value::Bool(true));

    // Duplicate the first user message: the funnel must reject validity.
    let mut broken: serde_json::Value = serde_json::from_str(&trajectory).unwrap();
    let messages = broken["messages"].as_array_mut().unwrap();
    let duplicate = messages[1].clone();
    messages.insert(2, duplicate);
    let broken = c_string(&broken.to_string());
    let mut kept: i32 = -1;
    assert_eq!(
        envforge_trajectory_check(world, task, broken.as_ptr(), &mut kept, ptr::null_mut()),
        EnvforgeStatus::Ok
    );
    assert_eq!(kept, 0, "broken alternation must be dropped");

    let invalid = c_string("not json");
    let mut kept: i32 = -1;
    assert_eq!(
        envforge_trajectory_check(world, task, invalid.as_ptr(), &mut kept, ptr::null_mut()),
        EnvforgeStatus::Parse
    );

    envforge_task_free(task);
    envforge_world_free(world);
}

#[test]
fn test_version_and_committed_header() {
    let version = unsafe { CStr::from_ptr(envforge_version()) }.to_str().unwrap();
    assert!(!version.is_empty());
    assert!(version.split('.').count() >= 2);

    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/envforge.h");
    let text = std::fs::read_to_string(header).expect("generated header committed");
    for symbol in [
        "ENVFORGE_STATUS_OK",
        "typedef struct EnvforgeWorld EnvforgeWorld;",
        "typedef struct EnvforgeTask EnvforgeTask;",
        "envforge_world_build",
        "envforge_task_synthesize",
        "envforge_episode_run",
        "envforge_trajectory_check",
        "envforge_last_error",
        "envforge_string_free",
    ] {
        assert!(text.contains(symbol), "header missing `{symbol}`");
    }
}
