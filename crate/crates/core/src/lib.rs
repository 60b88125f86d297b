//! Deterministic simulator of cross-silo federated learning with client
//! unlearning.
//!
//! The crate provides:
//!
//! - a minimal dense/conv neural-network core with manual backprop ([`nn`]),
//! - synthetic image data generation, Dirichlet partitioning, backdoor
//!   injection and the perturbation augmentation ([`data`]),
//! - the unlearning algorithms: reference-model construction, projected
//!   gradient ascent, server-side invariance calibration, plus the retrain
//!   oracle and the PGA-only comparator ([`unlearn`]),
//! - a discrete-event federation simulator with synchronous training and
//!   synchronous/asynchronous unlearning protocols ([`federation`]),
//! - backdoor/clean accuracy metrics and the reverting analysis ([`metrics`]),
//! - scenario orchestration gluing all of the above together ([`scenario`]).
//!
//! Everything is a pure function of `(config, seed)`: identical inputs produce
//! bitwise-identical models, metrics and timelines, independent of thread
//! count.

pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod unlearn;

pub use data::{
    augment, dirichlet_partition, generate_synthetic, inject_backdoor, AugmentSpec, DatasetShard,
    Sample, TriggerSpec,
};
pub use error::{Error, Result};
pub use federation::{
    run_async_unlearning, run_post_learning, run_sync_round, run_sync_unlearning, run_training,
    ClientState, EventKind, FederationConfig, Mode, SimEvent, Timeline, TrainedFederation,
};
pub use metrics::{
    backdoor_accuracy, clean_accuracy, efficiency_report, reverting_analysis, EfficiencyReport,
    MetricsRecord, RecordTag, RevertingAnalysis,
};
pub use nn::{
    forward, kl_divergence, l2_distance, loss_and_grad, optimizer_step, Batch, Direction, Logits,
    Loss, ModelKind, ModelSpec, OptimizerState, ParamVector,
};
pub use scenario::{DataConfig, Method, PreparedScenario, ScenarioConfig, SeedOutcome};
pub use unlearn::{
    afu_ic, compute_reference_model, local_gradient_ascent, pga_only, project_l2_ball,
    retrain_oracle, server_calibrate, ContributionWeighting, DeltaSetting, EarlyStop,
    UnlearnConfig, UnlearnOutcome,
};
