//! Evaluation: backdoor accuracy (erasure efficacy), clean accuracy
//! (fidelity), parameter distance to the retraining oracle (structural
//! erasure), and the instant-versus-post-recovery reverting analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DatasetShard;
use crate::error::{Error, Result};
use crate::federation::{run_post_learning, ClientState, FederationConfig, Timeline};
use crate::nn::{forward, l2_distance, predicted_classes, ModelSpec, ParamVector};

/// Which checkpoint a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordTag {
    Instant,
    PostRecovery,
    Trajectory,
}

/// Per-checkpoint metric snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub sim_time: f64,
    /// Backdoor accuracy, percent.
    pub ba: f64,
    /// Clean accuracy, percent.
    pub ca: f64,
    pub l2_to_oracle: f64,
    pub tag: RecordTag,
}

fn top1_percent(spec: &ModelSpec, w: &ParamVector, test: &DatasetShard) -> Result<f64> {
    let batch = test.as_batch();
    let logits = forward(spec, w, &batch)?;
    let preds = predicted_classes(&logits);
    let correct = preds
        .iter()
        .zip(batch.labels.iter())
        .filter(|(p, l)| p == l)
        .count();
    Ok(100.0 * correct as f64 / test.len() as f64)
}

/// Accuracy on the trigger-patched, target-labelled test set, percent.
/// High values mean the backdoor (and thus the target's influence) persists.
pub fn backdoor_accuracy(
    spec: &ModelSpec,
    w: &ParamVector,
    poisoned_test: &DatasetShard,
) -> Result<f64> {
    if poisoned_test.is_empty() {
        return Err(Error::Eval("backdoor test set is empty".into()));
    }
    top1_percent(spec, w, poisoned_test)
}

/// Top-1 accuracy on the clean test set, percent.
pub fn clean_accuracy(spec: &ModelSpec, w: &ParamVector, clean_test: &DatasetShard) -> Result<f64> {
    if clean_test.is_empty() {
        return Err(Error::Eval("clean test set is empty".into()));
    }
    top1_percent(spec, w, clean_test)
}

/// One method's instant and post-recovery checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevertingRow {
    pub method: String,
    pub instant: MetricsRecord,
    pub post: MetricsRecord,
}

/// Result of [`reverting_analysis`]: checkpoint rows plus the full
/// per-round trajectories they were cut from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevertingAnalysis {
    pub rows: Vec<RevertingRow>,
    pub trajectories: BTreeMap<String, Vec<MetricsRecord>>,
}

/// Monitors behavioural (BA, CA) and structural (L2 distance to the
/// retraining oracle) state immediately after unlearning and again after
/// `post_rounds` of retained-only training.
///
/// The oracle itself is advanced through the same post rounds, so every
/// candidate's L2 at round `r` is measured against the oracle at round `r`;
/// the oracle's own row consequently has L2 = 0 at both checkpoints.
#[allow(clippy::too_many_arguments)]
pub fn reverting_analysis(
    spec: &ModelSpec,
    candidates: &BTreeMap<String, ParamVector>,
    oracle: &ParamVector,
    retained: &[ClientState],
    post_rounds: usize,
    cfg: &FederationConfig,
    seed: u64,
    start_time: f64,
    clean_test: &DatasetShard,
    poisoned_test: &DatasetShard,
) -> Result<RevertingAnalysis> {
    // Advance the oracle first, keeping a snapshot per round.
    let mut oracle_snapshots: Vec<ParamVector> = Vec::with_capacity(post_rounds + 1);
    let mut oracle_clients: Vec<ClientState> = retained.to_vec();
    let (oracle_traj, _) = run_post_learning(
        spec,
        oracle,
        &mut oracle_clients,
        post_rounds,
        cfg,
        seed,
        start_time,
        |round, time, w| {
            oracle_snapshots.push(w.clone());
            Ok(MetricsRecord {
                round,
                sim_time: time,
                ba: backdoor_accuracy(spec, w, poisoned_test)?,
                ca: clean_accuracy(spec, w, clean_test)?,
                l2_to_oracle: 0.0,
                tag: RecordTag::Trajectory,
            })
        },
    )?;

    let mut trajectories = BTreeMap::new();
    let mut rows = Vec::new();
    rows.push(row_from_trajectory("retrain", &oracle_traj));
    trajectories.insert("retrain".to_string(), oracle_traj);

    for (name, start) in candidates {
        let mut clients: Vec<ClientState> = retained.to_vec();
        let (traj, _) = run_post_learning(
            spec,
            start,
            &mut clients,
            post_rounds,
            cfg,
            seed,
            start_time,
            |round, time, w| {
                Ok(MetricsRecord {
                    round,
                    sim_time: time,
                    ba: backdoor_accuracy(spec, w, poisoned_test)?,
                    ca: clean_accuracy(spec, w, clean_test)?,
                    l2_to_oracle: l2_distance(w, &oracle_snapshots[round])?,
                    tag: RecordTag::Trajectory,
                })
            },
        )?;
        rows.push(row_from_trajectory(name, &traj));
        trajectories.insert(name.clone(), traj);
    }
    Ok(RevertingAnalysis { rows, trajectories })
}

fn row_from_trajectory(method: &str, traj: &[MetricsRecord]) -> RevertingRow {
    let mut instant = traj.first().expect("trajectory non-empty").clone();
    instant.tag = RecordTag::Instant;
    let mut post = traj.last().expect("trajectory non-empty").clone();
    post.tag = RecordTag::PostRecovery;
    RevertingRow {
        method: method.to_string(),
        instant,
        post,
    }
}

/// Latency and blocking comparison between the two protocol modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub sync_latency_s: f64,
    pub async_latency_s: f64,
    /// `sync / async`.
    pub speedup: f64,
    pub sync_blocked: BTreeMap<usize, f64>,
    pub async_blocked: BTreeMap<usize, f64>,
}

/// Builds the efficiency comparison from two timelines of the same seed.
pub fn efficiency_report(sync: &Timeline, asynchronous: &Timeline) -> Result<EfficiencyReport> {
    if sync.seed != asynchronous.seed {
        return Err(Error::Eval(format!(
            "timelines come from different seeds ({} vs {})",
            sync.seed, asynchronous.seed
        )));
    }
    let sync_latency = sync
        .unlearn_latency()
        .ok_or_else(|| Error::Eval("sync timeline has no unlearn events".into()))?;
    let async_latency = asynchronous
        .unlearn_latency()
        .ok_or_else(|| Error::Eval("async timeline has no unlearn events".into()))?;
    Ok(EfficiencyReport {
        sync_latency_s: sync_latency,
        async_latency_s: async_latency,
        speedup: sync_latency / async_latency,
        sync_blocked: sync.blocked_time_per_client.clone(),
        async_blocked: asynchronous.blocked_time_per_client.clone(),
    })
}
