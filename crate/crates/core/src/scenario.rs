//! End-to-end scenario orchestration: data preparation, federated training
//! with a poisoning target, unlearning by each method, post-learning and
//! metric collection. This is the engine behind the CLI verbs and the
//! acceptance suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{
    dirichlet_partition, generate_synthetic, inject_backdoor, split_test_stratified, AugmentSpec,
    DatasetShard, TriggerSpec,
};
use crate::error::{Error, Result};
use crate::federation::{
    run_async_unlearning, run_sync_unlearning, run_training, ClientState, FederationConfig, Mode,
    Timeline, TrainedFederation, UnlearnRun,
};
use crate::metrics::{clean_accuracy, reverting_analysis, RevertingAnalysis};
use crate::nn::{ModelKind, ModelSpec, ParamVector};
use crate::rng;
use crate::unlearn::{retrain_oracle, UnlearnConfig};

/// Synthetic data parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub num_classes: usize,
    /// Samples per class before the train/test split.
    pub per_class: usize,
    pub test_fraction: f64,
    /// Size of the server-held calibration set.
    pub calib_size: usize,
    /// Minimum target-shard size as a fraction of the fair share
    /// (`train size / n_clients`). Partitions are redrawn until the target
    /// client holds at least this much; a silo with a handful of samples is
    /// not a meaningful unlearning subject.
    pub min_target_share: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_classes: 3,
            per_class: 200,
            test_fraction: 0.25,
            calib_size: 256,
            min_target_share: 0.5,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.per_class < 1 {
            return Err(Error::Config("per_class must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must be in [0, 1)".into()));
        }
        if self.calib_size < 1 {
            return Err(Error::Config("calib_size must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&self.min_target_share) {
            return Err(Error::Config("min_target_share must be in [0, 2]".into()));
        }
        Ok(())
    }
}

/// Unlearning method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Retrain,
    Pga,
    AfuIc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Retrain => "retrain",
            Method::Pga => "pga",
            Method::AfuIc => "afu_ic",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "retrain" => Ok(Method::Retrain),
            "pga" => Ok(Method::Pga),
            "afu_ic" => Ok(Method::AfuIc),
            _ => Err(Error::Config(format!(
                "unknown method '{s}' (expected retrain, pga or afu_ic)"
            ))),
        }
    }
}

/// Full scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub data: DataConfig,
    pub model: ModelKind,
    pub federation: FederationConfig,
    pub unlearn: UnlearnConfig,
    pub trigger: TriggerSpec,
    pub augment: AugmentSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            data: DataConfig::default(),
            model: ModelKind::Dense,
            federation: FederationConfig::default(),
            unlearn: UnlearnConfig::default(),
            trigger: TriggerSpec::uniform(3, 1.0, (0, 0), 0, 0.5),
            augment: AugmentSpec {
                noise_stddev: 0.1,
                block_size: 3,
                block_intensity: 1.0,
            },
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.federation.validate()?;
        self.unlearn.validate()?;
        let spec = self.model.spec(self.data.num_classes);
        self.trigger.validate(spec.input_shape(), self.data.num_classes)?;
        self.augment.validate(spec.input_shape())?;
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model.spec(self.data.num_classes)
    }
}

/// Data and model artifacts for one seed, before training.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub spec: ModelSpec,
    /// Per-client shards; the target's shard is already poisoned.
    pub shards: Vec<DatasetShard>,
    pub clean_test: DatasetShard,
    pub poisoned_test: DatasetShard,
    /// Server-held calibration set, disjoint from all client data.
    pub calib: DatasetShard,
}

/// Generates, splits, partitions and poisons the data for one seed.
pub fn prepare(cfg: &ScenarioConfig, seed: u64) -> Result<PreparedScenario> {
    cfg.validate()?;
    let spec = cfg.model_spec();
    let full = generate_synthetic(cfg.data.num_classes, cfg.data.per_class, seed);
    let (train_pool, clean_test) = split_test_stratified(&full, cfg.data.test_fraction, seed)?;
    let target = cfg.federation.target_client;
    let min_target = ((train_pool.len() as f64 / cfg.federation.n_clients as f64)
        * cfg.data.min_target_share)
        .ceil() as usize;
    let mut shards = None;
    for attempt in 0..50u64 {
        let draw = dirichlet_partition(
            &train_pool,
            cfg.federation.n_clients,
            cfg.federation.alpha,
            rng::mix3(seed, 0x7A26_E7, attempt),
        )?;
        if draw[target].len() >= min_target {
            shards = Some(draw);
            break;
        }
    }
    let mut shards = shards.ok_or_else(|| {
        Error::Scenario(format!(
            "target shard below {min_target} samples in 50 partition draws \
             (alpha {} too skewed for this scenario)",
            cfg.federation.alpha
        ))
    })?;
    let (poisoned_shard, poisoned_test) =
        inject_backdoor(&shards[target], &clean_test, &cfg.trigger, seed)?;
    shards[target] = poisoned_shard;

    let calib_seed = rng::mix3(seed, 0xCA11_B0A7, 1);
    let per_class = cfg.data.calib_size.div_ceil(cfg.data.num_classes);
    let mut calib = generate_synthetic(cfg.data.num_classes, per_class, calib_seed);
    calib.samples.truncate(cfg.data.calib_size);

    Ok(PreparedScenario {
        spec,
        shards,
        clean_test,
        poisoned_test,
        calib,
    })
}

/// Trains the federation with the poisoning target in place.
pub fn train(
    cfg: &ScenarioConfig,
    prepared: &PreparedScenario,
    seed: u64,
) -> Result<TrainedFederation> {
    run_training(
        &prepared.spec,
        prepared.shards.clone(),
        &prepared.poisoned_test,
        &cfg.federation,
        seed,
    )
}

/// Everything measured for one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Backdoor and clean accuracy of the trained global model.
    pub pre_ba: f64,
    pub pre_ca: f64,
    pub train_time_s: f64,
    /// Resolved L2-ball radius used by the unlearning runs.
    pub delta: f64,
    pub analysis: RevertingAnalysis,
    /// Reported efficiency time per method: unlearn latency for the
    /// unlearning methods, full retraining duration for the oracle.
    pub times_s: BTreeMap<String, f64>,
    pub timelines: BTreeMap<String, Timeline>,
}

fn retained_round_time(clients: &[ClientState], cfg: &FederationConfig, target: usize) -> f64 {
    clients
        .iter()
        .filter(|c| c.id != target)
        .map(|c| {
            cfg.local_epochs as f64 * c.shard.len() as f64 * cfg.unit_cost_s * c.speed_factor
        })
        .fold(0.0f64, f64::max)
        + 2.0 * cfg.comm_latency_s
}

/// Runs the complete pipeline for one seed: train, unlearn with each
/// requested method, post-learn and evaluate.
pub fn run_seed(cfg: &ScenarioConfig, methods: &[Method], seed: u64) -> Result<SeedOutcome> {
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let prepared = prepare(cfg, seed)?;
    let trained = train(cfg, &prepared, seed)?;
    let target = cfg.federation.target_client;
    let pre_ca = clean_accuracy(&prepared.spec, &trained.w_g, &prepared.clean_test)?;
    let delta = cfg.unlearn.delta.resolve(trained.mean_update_norm)?;

    let mut timelines = BTreeMap::new();
    timelines.insert("train".to_string(), trained.timeline.clone());
    let mut times_s = BTreeMap::new();
    let mut candidates = BTreeMap::new();

    let retained: Vec<ClientState> = trained
        .clients
        .iter()
        .filter(|c| c.id != target)
        .cloned()
        .collect();
    let retained_shards: Vec<DatasetShard> =
        retained.iter().map(|c| c.shard.clone()).collect();

    let want = |m: Method| methods.contains(&m);
    let needs_oracle = true; // L2-to-oracle is part of every analysis row

    for method in [Method::AfuIc, Method::Pga] {
        if !want(method) {
            continue;
        }
        let ucfg = match method {
            Method::Pga => {
                let mut c = cfg.unlearn.clone();
                c.gamma_calib = 0.0;
                c
            }
            _ => cfg.unlearn.clone(),
        };
        let run = UnlearnRun {
            spec: &prepared.spec,
            calib: &prepared.calib,
            augment: &cfg.augment,
            cfg: &cfg.federation,
            ucfg: &ucfg,
        };
        let (params, timeline) = match cfg.federation.mode {
            Mode::Async => run_async_unlearning(&trained, target, &run, seed)?,
            Mode::Sync => run_sync_unlearning(&trained, target, &run, seed)?,
        };
        let latency = timeline
            .unlearn_latency()
            .ok_or_else(|| Error::Eval("unlearn timeline missing events".into()))?;
        times_s.insert(method.as_str().to_string(), latency);
        timelines.insert(format!("unlearn_{}", method.as_str()), timeline);
        candidates.insert(method.as_str().to_string(), params);
    }

    let oracle = if needs_oracle {
        let w = retrain_oracle(&prepared.spec, &retained_shards, &cfg.federation, seed)?;
        let round_time = retained_round_time(&trained.clients, &cfg.federation, target);
        times_s.insert(
            Method::Retrain.as_str().to_string(),
            cfg.federation.rounds as f64 * round_time,
        );
        w
    } else {
        unreachable!("oracle always computed")
    };

    let mut analysis = reverting_analysis(
        &prepared.spec,
        &candidates,
        &oracle,
        &retained,
        cfg.federation.post_rounds,
        &cfg.federation,
        seed,
        trained.sim_time,
        &prepared.clean_test,
        &prepared.poisoned_test,
    )?;
    if !want(Method::Retrain) {
        analysis.rows.retain(|r| r.method != "retrain");
        analysis.trajectories.remove("retrain");
        times_s.remove("retrain");
    }

    Ok(SeedOutcome {
        seed,
        pre_ba: trained.implant_ba,
        pre_ca,
        train_time_s: trained.sim_time,
        delta,
        analysis,
        times_s,
        timelines,
    })
}

/// Trains once and runs both unlearning protocols for the efficiency
/// comparison. Returns `(sync timeline, async timeline, sync params,
/// async params)`.
pub fn run_both_modes(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<(Timeline, Timeline, ParamVector, ParamVector)> {
    let prepared = prepare(cfg, seed)?;
    let trained = train(cfg, &prepared, seed)?;
    let run = UnlearnRun {
        spec: &prepared.spec,
        calib: &prepared.calib,
        augment: &cfg.augment,
        cfg: &cfg.federation,
        ucfg: &cfg.unlearn,
    };
    let target = cfg.federation.target_client;
    let (w_sync, tl_sync) = run_sync_unlearning(&trained, target, &run, seed)?;
    let (w_async, tl_async) = run_async_unlearning(&trained, target, &run, seed)?;
    Ok((tl_sync, tl_async, w_sync, w_async))
}
