//! Loss-masked training export and evaluation analytics.
//!
//! Kept trajectories become [`TrainingSample`]s with message-granularity
//! supervision labels: assistant turns (text and tool calls) are supervised,
//! everything else — user, system, and tool messages — is masked but remains
//! in the context verbatim. Labels are role-level rather than token-level so
//! any trainer can map them onto its own tokenizer.
//!
//! Analytics: `pass_hat_k` (the unbiased combinatorial estimator of solving
//! a task in all of k independent trials) and `accuracy_by_depth` (per
//! tool-call-count accuracy with a least-squares trend).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interplay::{Message, Role, Trajectory};

/// Which curriculum stage an exported sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    /// Broad tool-usage fundamentals across domains.
    Stage1General,
    /// Vertical specialization within one domain.
    Stage2Domain,
}

/// A trajectory message plus its supervision label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMessage {
    #[serde(flatten)]
    pub message: Message,
    /// True exactly for assistant messages.
    pub supervised: bool,
}

/// One loss-masked training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub task_id: String,
    pub stage: StageTag,
    pub messages: Vec<LabeledMessage>,
}

impl TrainingSample {
    /// The underlying message sequence, labels stripped.
    pub fn plain_messages(&self) -> Vec<Message> {
        self.messages.iter().map(|m| m.message.clone()).collect()
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("nothing to supervise: trajectory {0} has no assistant messages")]
    NothingToSupervise(String),
}

/// Label a kept trajectory for training. Message order is preserved and
/// masked messages stay present in full; supervision is purely a per-message
/// flag.
pub fn to_training_sample(
    trajectory: &Trajectory,
    stage: StageTag,
) -> Result<TrainingSample, ExportError> {
    if !trajectory.messages.iter().any(|m| m.role == Role::Assistant) {
        return Err(ExportError::NothingToSupervise(trajectory.task_id.clone()));
    }
    Ok(TrainingSample {
        task_id: trajectory.task_id.clone(),
        stage,
        messages: trajectory
            .messages
            .iter()
            .map(|m| LabeledMessage {
                message: m.clone(),
                supervised: m.role == Role::Assistant,
            })
            .collect(),
    })
}

/// One evaluation trial of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub tool_call_count: usize,
}

/// Per-task evaluation outcomes over repeated independent trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub n_trials: usize,
    pub n_successes: usize,
    /// Aligned per-trial outcomes; `n_trials`/`n_successes` are its totals.
    pub trials: Vec<TrialOutcome>,
}

impl EvalRecord {
    pub fn new(task_id: impl Into<String>, trials: Vec<TrialOutcome>) -> Self {
        let n_trials = trials.len();
        let n_successes = trials.iter().filter(|t| t.success).count();
        Self { task_id: task_id.into(), n_trials, n_successes, trials }
    }

    /// Check the internal consistency invariants.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_trials != self.trials.len()
            || self.n_successes != self.trials.iter().filter(|t| t.success).count()
            || self.n_successes > self.n_trials
        {
            return Err(EvalError::InconsistentRecord(self.task_id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k = {k} exceeds the {n} recorded trials of task {task_id}")]
    KExceedsTrials { task_id: String, k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("record {0} has inconsistent totals")]
    InconsistentRecord(String),
    #[error("no evaluation records")]
    Empty,
}

/// P(all of k uniformly drawn distinct trials succeed) = C(c,k) / C(n,k),
/// computed as a telescoping product; zero when k > c.
fn subset_success_probability(n: usize, c: usize, k: usize) -> f64 {
    if k > c {
        return 0.0;
    }
    let mut p = 1.0;
    for i in 0..k {
        p *= (c - i) as f64 / (n - i) as f64;
    }
    p
}

/// Unbiased pass^k estimate for one task: C(n_successes, k) / C(n_trials, k).
pub fn pass_hat_k(record: &EvalRecord, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::KZero);
    }
    if k > record.n_trials {
        return Err(EvalError::KExceedsTrials {
            task_id: record.task_id.clone(),
            k,
            n: record.n_trials,
        });
    }
    Ok(subset_success_probability(record.n_trials, record.n_successes, k))
}

/// Aggregate pass^k over a task set: the mean of per-task estimates.
pub fn aggregate_pass_hat_k(records: &[EvalRecord], k: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for record in records {
        sum += pass_hat_k(record, k)?;
    }
    Ok(sum / records.len() as f64)
}

/// Accuracy bucketed by per-trial tool-call count, plus a least-squares
/// linear trend over the raw (count, success) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    /// Bucket start (count rounded down to a multiple of the width) →
    /// successes / trials.
    pub buckets: BTreeMap<usize, f64>,
    /// Slope of the least-squares line through (count, success as 0/1);
    /// 0.0 when fewer than two distinct counts exist.
    pub trend_slope: f64,
    pub total_trials: usize,
    pub total_successes: usize,
}

/// Group every trial of every record by tool-call count (bucket width
/// `bucket_width`, ≥ 1) and fit the linear trend. Empty input yields an
/// empty report.
pub fn accuracy_by_depth(records: &[EvalRecord], bucket_width: usize) -> DepthReport {
    assert!(bucket_width >= 1, "bucket width must be at least 1");
    let mut hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for record in records {
        for trial in &record.trials {
            let bucket = trial.tool_call_count / bucket_width * bucket_width;
            let entry = hits.entry(bucket).or_insert((0, 0));
            entry.1 += 1;
            if trial.success {
                entry.0 += 1;
            }
            points.push((trial.tool_call_count as f64, f64::from(u8::from(trial.success))));
        }
    }
    let buckets = hits
        .iter()
        .map(|(b, (s, t))| (*b, *s as f64 / *t as f64))
        .collect();
    DepthReport {
        buckets,
        trend_slope: least_squares_slope(&points),
        total_trials: points.len(),
        total_successes: points.iter().filter(|(_, y)| *y > 0.5).count(),
    }
}

/// Slope of the least-squares line through `points`; 0.0 without variance
/// in x.
fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// The eval subcommand's report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// k → aggregate pass^k, for k = 1 ..= min trials across records.
    pub pass_k: BTreeMap<usize, f64>,
    /// Bucket start → accuracy.
    pub accuracy_by_depth: BTreeMap<usize, f64>,
    pub trend_slope: f64,
    pub total_tasks: usize,
    pub total_trials: usize,
    pub total_successes: usize,
}

/// Validate records and assemble the full report.
pub fn build_eval_report(
    records: &[EvalRecord],
    bucket_width: usize,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    for record in records {
        record.validate()?;
    }
    let max_k = records.iter().map(|r| r.n_trials).min().unwrap_or(0);
    if max_k == 0 {
        return Err(EvalError::Empty);
    }
    let mut pass_k = BTreeMap::new();
    for k in 1..=max_k {
        pass_k.insert(k, aggregate_pass_hat_k(records, k)?);
    }
    let depth = accuracy_by_depth(records, bucket_width);
    Ok(EvalReport {
        pass_k,
        accuracy_by_depth: depth.buckets,
        trend_slope: depth.trend_slope,
        total_tasks: records.len(),
        total_trials: depth.total_trials,
        total_successes: depth.total_successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interplay::{
        make_replay_agent, make_scripted_user, run_episode, AssistantToolCall, EpisodeLimits,
        FunctionCall, TerminalReason,
    };
    use crate::materialize::fixtures::order_bundle;
    use crate::runtime::digest;
    use crate::synth::{build_task, TemplateComposer, WalkConfig};

    fn toy_trajectory() -> Trajectory {
        let bundle = order_bundle();
        let task = build_task(&bundle, 41, &WalkConfig::default(), &TemplateComposer).unwrap();
        let mut agent = make_replay_agent(&task);
        let mut user = make_scripted_user(&task, 1);
        run_episode(&task, &bundle, &mut agent, &mut user, &EpisodeLimits::default())
    }

    #[test]
    fn test_masking_covers_exactly_assistant_messages() {
        // The canonical four-turn shape first.
        let call = AssistantToolCall {
            id: "call_0".to_string(),
            function: FunctionCall { name: "get_order".to_string(), arguments: "{}".to_string() },
        };
        let bundle = order_bundle();
        let task = build_task(&bundle, 1, &WalkConfig::default(), &TemplateComposer).unwrap();
        let trajectory = Trajectory {
            task_id: "t".to_string(),
            messages: vec![
                Message::user("please check my order"),
                Message::assistant_calls("", vec![call]),
                Message::tool("call_0", r#"{"status":"ok"}"#),
                Message::assistant_text("it is on its way"),
            ],
            terminal_reason: TerminalReason::UserDone,
            final_digest: digest(&task.seed_state),
            tool_call_count: 1,
        };
        let sample = to_training_sample(&trajectory, StageTag::Stage1General).unwrap();
        let labels: Vec<bool> = sample.messages.iter().map(|m| m.supervised).collect();
        assert_eq!(labels, vec![false, true, false, true]);

        // And the full-episode invariant: supervised ⇔ assistant.
        let trajectory = toy_trajectory();
        let sample = to_training_sample(&trajectory, StageTag::Stage2Domain).unwrap();
        assert_eq!(sample.messages.len(), trajectory.messages.len());
        for labeled in &sample.messages {
            assert_eq!(labeled.supervised, labeled.message.role == Role::Assistant);
        }
    }

    #[test]
    fn test_nothing_to_supervise() {
        let bundle = order_bundle();
        let task = build_task(&bundle, 1, &WalkConfig::default(), &TemplateComposer).unwrap();
        let trajectory = Trajectory {
            task_id: "only_users".to_string(),
            messages: vec![Message::user("hello"), Message::user("anyone there")],
            terminal_reason: TerminalReason::TurnCap,
            final_digest: digest(&task.seed_state),
            tool_call_count: 0,
        };
        let err = to_training_sample(&trajectory, StageTag::Stage1General).unwrap_err();
        assert!(matches!(err, ExportError::NothingToSupervise(id) if id == "only_users"));
    }

    #[test]
    fn test_export_round_trips_messages_byte_for_byte() {
        let trajectory = toy_trajectory();
        let sample = to_training_sample(&trajectory, StageTag::Stage1General).unwrap();

        // Stripping labels reproduces the exact message sequence.
        assert_eq!(sample.plain_messages(), trajectory.messages);
        assert_eq!(
            serde_json::to_string(&sample.plain_messages()).unwrap(),
            serde_json::to_string(&trajectory.messages).unwrap()
        );

        // And the JSONL wire line itself round-trips.
        let line = serde_json::to_string(&sample).unwrap();
        let back: TrainingSample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, sample);
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["stage"], "stage1_general");
        let first = &value["messages"][0];
        assert!(first.get("role").is_some());
        assert!(first.get("supervised").is_some());
    }

    #[test]
    fn test_supervised_character_fraction_matches_hand_count() {
        let trajectory = Trajectory {
            task_id: "frozen".to_string(),
            messages: vec![
                Message::system("sys"),                 // 3 chars, masked
                Message::user("hello there"),           // 11 chars, masked
                Message::assistant_text("on it"),       // 5 chars, supervised
                Message::user("thanks"),                // 6 chars, masked
                Message::assistant_text("done now"),    // 8 chars, supervised
            ],
            terminal_reason: TerminalReason::UserDone,
            final_digest: crate::runtime::StateDigest {
                hex: String::new(),
                algorithm: "sha256".to_string(),
            },
            tool_call_count: 0,
        };
        let sample = to_training_sample(&trajectory, StageTag::Stage1General).unwrap();
        let supervised: usize = sample
            .messages
            .iter()
            .filter(|m| m.supervised)
            .map(|m| m.message.content.chars().count())
            .sum();
        let total: usize = sample
            .messages
            .iter()
            .map(|m| m.message.content.chars().count())
            .sum();
        // Hand count: (5 + 8) supervised of (3 + 11 + 5 + 6 + 8) total.
        assert_eq!(supervised, 13);
        assert_eq!(total, 33);
        assert!((supervised as f64 / total as f64 - 13.0 / 33.0).abs() < 1e-15);
    }

    #[test]
    fn test_pass_hat_k_frozen_values() {
        let record = |n: usize, c: usize| -> EvalRecord {
            let trials = (0..n)
                .map(|i| TrialOutcome { success: i < c, tool_call_count: 3 })
                .collect();
            EvalRecord::new("t", trials)
        };

        assert!((pass_hat_k(&record(4, 2), 1).unwrap() - 0.5).abs() < 1e-12);
        assert!((pass_hat_k(&record(4, 2), 2).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        for k in 1..=4 {
            assert!((pass_hat_k(&record(4, 4), k).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(pass_hat_k(&record(4, 0), k).unwrap(), 0.0);
        }
        // pass^1 = c/n exactly.
        for n in 1..=8usize {
            for c in 0..=n {
                let p = pass_hat_k(&record(n, c), 1).unwrap();
                assert!((p - c as f64 / n as f64).abs() < 1e-12);
            }
        }
        // Errors.
        assert!(matches!(
            pass_hat_k(&record(4, 2), 5),
            Err(EvalError::KExceedsTrials { k: 5, n: 4, .. })
        ));
        assert!(matches!(pass_hat_k(&record(4, 2), 0), Err(EvalError::KZero)));
    }

    #[test]
    fn test_pass_hat_k_monotone_nonincreasing() {
        for n in 1..=8usize {
            for c in 0..=n {
                let trials = (0..n)
                    .map(|i| TrialOutcome { success: i < c, tool_call_count: 1 })
                    .collect();
                let record = EvalRecord::new("t", trials);
                let mut prev = f64::INFINITY;
                for k in 1..=n {
                    let p = pass_hat_k(&record, k).unwrap();
                    assert!(p <= prev + 1e-15, "n={n} c={c} k={k}: {p} > {prev}");
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn test_aggregate_is_mean_over_tasks() {
        let rec = |c: usize| {
            EvalRecord::new(
                format!("t{c}"),
                (0..4).map(|i| TrialOutcome { success: i < c, tool_call_count: 2 }).collect(),
            )
        };
        let records = vec![rec(2), rec(4)];
        assert!((aggregate_pass_hat_k(&records, 1).unwrap() - 0.75).abs() < 1e-12);
        let expected = (1.0 / 6.0 + 1.0) / 2.0;
        assert!((aggregate_pass_hat_k(&records, 2).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(aggregate_pass_hat_k(&[], 1), Err(EvalError::Empty)));
    }

    #[test]
    fn test_accuracy_by_depth_buckets_and_degenerates() {
        // All trials at count 3, half succeed.
        let record = EvalRecord::new(
            "t",
            (0..10)
                .map(|i| TrialOutcome { success: i % 2 == 0, tool_call_count: 3 })
                .collect(),
        );
        let report = accuracy_by_depth(&[record], 1);
        assert_eq!(report.buckets.len(), 1);
        assert!((report.buckets[&3] - 0.5).abs() < 1e-12);
        // One x value only: no defined trend.
        assert_eq!(report.trend_slope, 0.0);

        // Single trial: one bucket with accuracy exactly 0 or 1.
        let single = EvalRecord::new(
            "s",
            vec![TrialOutcome { success: true, tool_call_count: 7 }],
        );
        let report = accuracy_by_depth(&[single], 1);
        assert_eq!(report.buckets[&7], 1.0);

        // Empty input: empty report.
        let report = accuracy_by_depth(&[], 1);
        assert!(report.buckets.is_empty());
        assert_eq!(report.total_trials, 0);

        // Width 2 groups counts 2 and 3 into bucket 2.
        let spread = EvalRecord::new(
            "w",
            vec![
                TrialOutcome { success: true, tool_call_count: 2 },
                TrialOutcome { success: false, tool_call_count: 3 },
            ],
        );
        let report = accuracy_by_depth(&[spread], 2);
        assert_eq!(report.buckets.len(), 1);
        assert!((report.buckets[&2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn test_depth_trend_matches_independent_least_squares() {
        // Success iff depth ≤ 5, depths 1..=10, three trials each.
        let mut trials = Vec::new();
        for depth in 1..=10usize {
            for _ in 0..3 {
                trials.push(TrialOutcome { success: depth <= 5, tool_call_count: depth });
            }
        }
        let record = EvalRecord::new("t", trials.clone());
        let report = accuracy_by_depth(&[record], 1);
        assert!(report.trend_slope < 0.0);

        // Independent oracle with the unscaled normal-equation arrangement.
        let n = trials.len() as f64;
        let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
        for t in &trials {
            let x = t.tool_call_count as f64;
            let y = if t.success { 1.0 } else { 0.0 };
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
        }
        let oracle = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((report.trend_slope - oracle).abs() < 1e-9);
    }

    #[test]
    fn test_eval_report_assembly() {
        let rec = |id: &str, c: usize| {
            EvalRecord::new(
                id,
                (0..4)
                    .map(|i| TrialOutcome { success: i < c, tool_call_count: i + 1 })
                    .collect(),
            )
        };
        let records = vec![rec("a", 2), rec("b", 3)];
        let report = build_eval_report(&records, 1).unwrap();
        assert_eq!(report.pass_k.len(), 4);
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let v = report.pass_k[&k];
            assert!(v <= prev);
            prev = v;
        }
        assert_eq!(report.total_tasks, 2);
        assert_eq!(report.total_trials, 8);
        assert_eq!(report.total_successes, 5);

        let value = serde_json::to_value(&report).unwrap();
        for key in ["pass_k", "accuracy_by_depth", "trend_slope"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }

        // Inconsistent totals are rejected.
        let mut bad = rec("c", 2);
        bad.n_successes = 4;
        assert!(matches!(
            build_eval_report(&[bad], 1),
            Err(EvalError::InconsistentRecord(_))
        ));
    }
}
