//! Client unlearning: reference-model construction, projected gradient
//! ascent on the target data, server-side invariance calibration, and the
//! two comparators (retraining oracle, projection-only gradient ascent).

use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentSpec, DatasetShard};
use crate::error::{Error, Result};
use crate::federation::{fedavg_rounds, FederationConfig};
use crate::nn::{
    batch_accuracy, forward, loss_and_grad, optimizer_step, Batch, Direction, Loss,
    ModelSpec, OptimKind, OptimizerState, ParamVector,
};
use crate::rng;

/// How contribution sizes in the reference-model formula are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributionWeighting {
    /// Sample counts (size-weighted aggregation).
    Samples,
    /// Plain client counts (equivalent under equal shard sizes).
    Clients,
}

/// L2-ball radius: fixed, or derived from the observed training dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaSetting {
    /// `3 x` the mean per-round local update norm observed during training.
    Auto,
    Fixed(f64),
}

impl DeltaSetting {
    pub fn resolve(&self, mean_update_norm: f64) -> Result<f64> {
        let delta = match *self {
            DeltaSetting::Fixed(d) => d,
            DeltaSetting::Auto => 3.0 * mean_update_norm,
        };
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!(
                "resolved ball radius must be positive and finite, got {delta}"
            )));
        }
        Ok(delta)
    }
}

/// Ascent early-stop threshold on target-shard accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyStop {
    /// `1/num_classes + 0.05` (near-chance accuracy).
    Auto,
    Fixed(f64),
}

impl EarlyStop {
    pub fn resolve(&self, num_classes: usize) -> f64 {
        match *self {
            EarlyStop::Fixed(v) => v,
            EarlyStop::Auto => 1.0 / num_classes as f64 + 0.05,
        }
    }
}

/// Hyperparameters of the unlearning procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnConfig {
    /// Ascent learning rate.
    pub eta_asc: f64,
    /// Calibration learning rate.
    pub eta_calib: f64,
    /// L2-ball radius around the reference model.
    pub delta: DeltaSetting,
    /// Maximum ascent epochs.
    pub t_asc: usize,
    /// Calibration epochs.
    pub t_calib: usize,
    /// Weight of the calibration objective; 0 disables calibration.
    pub gamma_calib: f64,
    /// Stop ascent once target-shard accuracy falls to this level.
    pub early_stop_acc: EarlyStop,
    pub weighting: ContributionWeighting,
    pub ascent_optimizer: OptimKind,
    pub calib_optimizer: OptimKind,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            eta_asc: 0.01,
            eta_calib: 0.001,
            delta: DeltaSetting::Auto,
            t_asc: 20,
            t_calib: 5,
            gamma_calib: 1.0,
            early_stop_acc: EarlyStop::Auto,
            weighting: ContributionWeighting::Samples,
            ascent_optimizer: OptimKind::Sgd,
            calib_optimizer: OptimKind::Adam,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_asc > 0.0) {
            return Err(Error::Config("eta_asc must be > 0".into()));
        }
        if !(self.eta_calib > 0.0) {
            return Err(Error::Config("eta_calib must be > 0".into()));
        }
        if let DeltaSetting::Fixed(d) = self.delta {
            if !(d > 0.0) {
                return Err(Error::Config("delta must be > 0".into()));
            }
        }
        if self.gamma_calib < 0.0 {
            return Err(Error::Config("gamma_calib must be >= 0".into()));
        }
        if let EarlyStop::Fixed(v) = self.early_stop_acc {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config("early_stop_acc must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Result of one unlearning execution.
#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    /// Parameters after projected gradient ascent.
    pub w_unlearn: ParamVector,
    /// Parameters after server-side calibration (the adopted model).
    pub w_calibrated: ParamVector,
    pub ascent_epochs_run: usize,
    pub calib_epochs_run: usize,
    /// Simulated seconds of local compute spent by the target client.
    pub local_compute_cost: f64,
}

/// Inputs shared by the unlearning entry points.
pub struct UnlearnContext<'a> {
    pub spec: &'a ModelSpec,
    pub shards: &'a [DatasetShard],
    pub target: usize,
    /// Server-held auxiliary set used by calibration.
    pub calib: &'a DatasetShard,
    pub augment: &'a AugmentSpec,
    pub batch_size: usize,
    /// Resolved L2-ball radius.
    pub delta: f64,
    /// Simulated seconds per ascent epoch on the target client.
    pub cost_per_epoch_s: f64,
}

/// Estimate of the retained clients' average model, derived by removing the
/// target's cached contribution from the global parameters:
/// `(n_total * w_g - n_u * w_u_prev) / (n_total - n_u)`.
pub fn compute_reference_model(
    w_g: &ParamVector,
    w_u_prev: &ParamVector,
    n_total: f64,
    n_u: f64,
) -> Result<ParamVector> {
    if w_g.len() != w_u_prev.len() {
        return Err(Error::Config(format!(
            "reference model: length mismatch ({} vs {})",
            w_g.len(),
            w_u_prev.len()
        )));
    }
    if !(n_u > 0.0) || n_u >= n_total {
        return Err(Error::Config(format!(
            "cannot unlearn weight {n_u} out of total {n_total}"
        )));
    }
    let denom = n_total - n_u;
    let values: Vec<f64> = w_g
        .iter()
        .zip(w_u_prev.iter())
        .map(|(g, u)| (n_total * g - n_u * u) / denom)
        .collect();
    let out = ParamVector::new(values);
    if !out.is_finite() {
        return Err(Error::Numerical("reference model is non-finite".into()));
    }
    Ok(out)
}

/// Radial projection onto the closed L2 ball `B(center, delta)`.
///
/// Points inside the ball are returned unchanged (bit-for-bit), which makes
/// the projection idempotent; the inside test carries a 1e-10 relative slack
/// so that a vector just projected does not get rescaled again by its own
/// norm-recomputation rounding.
pub fn project_l2_ball(w: &ParamVector, center: &ParamVector, delta: f64) -> ParamVector {
    assert_eq!(w.len(), center.len(), "projection: length mismatch");
    assert!(delta > 0.0, "projection: delta must be > 0");
    let mut dist_sq = 0.0;
    for (a, b) in w.iter().zip(center.iter()) {
        let d = a - b;
        dist_sq += d * d;
    }
    let dist = dist_sq.sqrt();
    if dist <= delta * (1.0 + 1e-10) {
        return w.clone();
    }
    let scale = delta / dist;
    let values: Vec<f64> = w
        .iter()
        .zip(center.iter())
        .map(|(a, b)| b + scale * (a - b))
        .collect();
    ParamVector::new(values)
}

/// Outcome of the local ascent phase.
#[derive(Debug, Clone)]
pub struct AscentOutcome {
    pub w_unlearn: ParamVector,
    pub epochs_run: usize,
}

/// Minibatch gradient ascent on cross-entropy over the target shard,
/// projected onto `B(w_ref, delta)` after every optimizer step.
///
/// Starts from `w_ref`, runs at most `cfg.t_asc` epochs and stops early once
/// accuracy on the shard falls to the configured threshold.
pub fn local_gradient_ascent(
    spec: &ModelSpec,
    w_ref: &ParamVector,
    d_u: &DatasetShard,
    cfg: &UnlearnConfig,
    delta: f64,
    batch_size: usize,
    seed: u64,
) -> Result<AscentOutcome> {
    local_gradient_ascent_observed(spec, w_ref, d_u, cfg, delta, batch_size, seed, |_| {})
}

/// [`local_gradient_ascent`] with a hook invoked on every projected iterate,
/// used to instrument the ball constraint.
#[allow(clippy::too_many_arguments)]
pub fn local_gradient_ascent_observed(
    spec: &ModelSpec,
    w_ref: &ParamVector,
    d_u: &DatasetShard,
    cfg: &UnlearnConfig,
    delta: f64,
    batch_size: usize,
    seed: u64,
    mut observer: impl FnMut(&ParamVector),
) -> Result<AscentOutcome> {
    if d_u.is_empty() {
        return Err(Error::Config("ascent: target shard is empty".into()));
    }
    cfg.validate()?;
    let threshold = cfg.early_stop_acc.resolve(spec.num_classes());
    let full = d_u.as_batch();
    let mut w = w_ref.clone();
    let mut opt = OptimizerState::new(cfg.ascent_optimizer, cfg.eta_asc, w.len());
    let mut epochs_run = 0;
    for epoch in 0..cfg.t_asc {
        if batch_accuracy(spec, &w, &full)? <= threshold {
            break;
        }
        let mut shuffle = rng::stream(seed, "ascent-shuffle", epoch as u64, 0);
        for indices in rng::shuffled_batches(d_u.len(), batch_size, &mut shuffle) {
            let batch = d_u.batch_of(&indices);
            let (loss, grad) = loss_and_grad(spec, &w, &batch, &Loss::CrossEntropy)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "ascent loss diverged at epoch {epoch} (eta_asc too large?)"
                )));
            }
            w = optimizer_step(&mut opt, &w, &grad, Direction::Ascent)?;
            w = project_l2_ball(&w, w_ref, delta);
            observer(&w);
        }
        epochs_run += 1;
    }
    Ok(AscentOutcome {
        w_unlearn: w,
        epochs_run,
    })
}

/// Server-side invariance calibration.
///
/// Per minibatch, predictions on clean inputs are computed once and treated
/// as a detached target; a descent step then minimises
/// `KL(P(.|x) || P(.|x'))` where `x'` is the perturbation-augmented view.
/// The weight `gamma_calib` scales the objective, which is applied as a
/// learning-rate multiplier so it stays meaningful for adaptive optimizers;
/// `gamma_calib = 0` returns the input unchanged without taking any step.
pub fn server_calibrate(
    spec: &ModelSpec,
    w_unlearn: &ParamVector,
    calib_data: &DatasetShard,
    aug: &AugmentSpec,
    cfg: &UnlearnConfig,
    batch_size: usize,
    seed: u64,
) -> Result<ParamVector> {
    server_calibrate_traced(spec, w_unlearn, calib_data, aug, cfg, batch_size, seed)
        .map(|(w, _)| w)
}

/// [`server_calibrate`] returning the mean per-epoch KL values alongside.
pub fn server_calibrate_traced(
    spec: &ModelSpec,
    w_unlearn: &ParamVector,
    calib_data: &DatasetShard,
    aug: &AugmentSpec,
    cfg: &UnlearnConfig,
    batch_size: usize,
    seed: u64,
) -> Result<(ParamVector, Vec<f64>)> {
    if calib_data.is_empty() {
        return Err(Error::Config("calibration set is empty".into()));
    }
    cfg.validate()?;
    aug.validate(calib_data.shape)?;
    if cfg.gamma_calib == 0.0 {
        return Ok((w_unlearn.clone(), Vec::new()));
    }
    let dim = calib_data.pixel_dim();
    let mut w = w_unlearn.clone();
    let mut opt = OptimizerState::new(
        cfg.calib_optimizer,
        cfg.eta_calib * cfg.gamma_calib,
        w.len(),
    );
    let mut epoch_kl = Vec::with_capacity(cfg.t_calib);
    for epoch in 0..cfg.t_calib {
        let mut shuffle = rng::stream(seed, "calib-shuffle", epoch as u64, 0);
        let mut kl_sum = 0.0;
        let mut kl_batches = 0usize;
        for (bidx, indices) in rng::shuffled_batches(calib_data.len(), batch_size, &mut shuffle)
            .into_iter()
            .enumerate()
        {
            let clean = calib_data.batch_of(&indices);
            let reference = forward(spec, &w, &clean)?;
            let mut aug_inputs = Vec::with_capacity(clean.inputs.len());
            for (k, &i) in indices.iter().enumerate() {
                let view_seed = rng::mix3(seed, (epoch * 1_000_003 + bidx) as u64, (i + k) as u64);
                let view = augment(&calib_data.samples[i], calib_data.shape, aug, view_seed);
                aug_inputs.extend_from_slice(&view.pixels);
            }
            let aug_batch = Batch::new(aug_inputs, clean.labels.clone(), dim)?;
            let (kl, grad) =
                loss_and_grad(spec, &w, &aug_batch, &Loss::KlToReference(reference))?;
            if !kl.is_finite() {
                return Err(Error::Numerical(format!(
                    "calibration loss diverged at epoch {epoch}"
                )));
            }
            kl_sum += kl;
            kl_batches += 1;
            w = optimizer_step(&mut opt, &w, &grad, Direction::Descent)?;
        }
        epoch_kl.push(kl_sum / kl_batches as f64);
    }
    Ok((w, epoch_kl))
}

fn contribution_weights(
    ctx: &UnlearnContext<'_>,
    weighting: ContributionWeighting,
) -> (f64, f64) {
    match weighting {
        ContributionWeighting::Samples => {
            let total: usize = ctx.shards.iter().map(|s| s.len()).sum();
            (total as f64, ctx.shards[ctx.target].len() as f64)
        }
        ContributionWeighting::Clients => (ctx.shards.len() as f64, 1.0),
    }
}

/// The full unlearning procedure: reference model, projected ascent, then
/// server calibration. Server adoption of the result is performed by the
/// federation scheduler, not here.
pub fn afu_ic(
    ctx: &UnlearnContext<'_>,
    w_g: &ParamVector,
    w_u_prev: &ParamVector,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<UnlearnOutcome> {
    if ctx.target >= ctx.shards.len() {
        return Err(Error::Config(format!(
            "target client {} out of range ({} clients)",
            ctx.target,
            ctx.shards.len()
        )));
    }
    let (n_total, n_u) = contribution_weights(ctx, cfg.weighting);
    let w_ref = compute_reference_model(w_g, w_u_prev, n_total, n_u)?;
    let ascent = local_gradient_ascent(
        ctx.spec,
        &w_ref,
        &ctx.shards[ctx.target],
        cfg,
        ctx.delta,
        ctx.batch_size,
        seed,
    )?;
    let w_calibrated = server_calibrate(
        ctx.spec,
        &ascent.w_unlearn,
        ctx.calib,
        ctx.augment,
        cfg,
        ctx.batch_size,
        seed,
    )?;
    Ok(UnlearnOutcome {
        local_compute_cost: ascent.epochs_run as f64 * ctx.cost_per_epoch_s,
        calib_epochs_run: if cfg.gamma_calib == 0.0 { 0 } else { cfg.t_calib },
        ascent_epochs_run: ascent.epochs_run,
        w_unlearn: ascent.w_unlearn,
        w_calibrated,
    })
}

/// Projection-only comparator: identical to [`afu_ic`] with the calibration
/// weight forced to zero.
pub fn pga_only(
    ctx: &UnlearnContext<'_>,
    w_g: &ParamVector,
    w_u_prev: &ParamVector,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<UnlearnOutcome> {
    let mut pga_cfg = cfg.clone();
    pga_cfg.gamma_calib = 0.0;
    afu_ic(ctx, w_g, w_u_prev, &pga_cfg, seed)
}

/// Gold-standard comparator: fresh initialisation, then synchronous
/// size-weighted averaging over the retained shards for the full round
/// budget.
pub fn retrain_oracle(
    spec: &ModelSpec,
    retained: &[DatasetShard],
    cfg: &FederationConfig,
    seed: u64,
) -> Result<ParamVector> {
    if retained.is_empty() {
        return Err(Error::Config("retraining needs at least one shard".into()));
    }
    let start = spec.init_params(seed);
    let (w, _) = fedavg_rounds(spec, &start, retained, cfg, cfg.rounds, "retrain", seed)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::nn::{l2_distance, LayerSpec};

    fn small_spec() -> ModelSpec {
        ModelSpec::new(
            (1, 16, 16),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 16 },
                LayerSpec::Relu,
                LayerSpec::Dense { outputs: 3 },
            ],
            3,
        )
        .unwrap()
    }

    fn small_ctx<'a>(
        spec: &'a ModelSpec,
        shards: &'a [DatasetShard],
        calib: &'a DatasetShard,
        aug: &'a AugmentSpec,
    ) -> UnlearnContext<'a> {
        UnlearnContext {
            spec,
            shards,
            target: 0,
            calib,
            augment: aug,
            batch_size: 32,
            delta: 1.0,
            cost_per_epoch_s: 0.5,
        }
    }

    #[test]
    fn reference_model_fixed_point() {
        let w = ParamVector::new(vec![0.25, -1.5, 3.0]);
        let out = compute_reference_model(&w, &w, 5.0, 1.0).unwrap();
        for (a, b) in out.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_model_algebra() {
        let w_g = ParamVector::new(vec![1.0, 1.0]);
        let w_u = ParamVector::new(vec![0.0, 0.0]);
        let out = compute_reference_model(&w_g, &w_u, 2.0, 1.0).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn reference_model_recovers_weighted_mean() {
        // Build an aggregate of three clients by hand and check the formula
        // recovers the weighted mean of the other two.
        let mut state = 77u64;
        let mut gen = |n: usize| -> ParamVector {
            ParamVector::new(
                (0..n)
                    .map(|_| 2.0 * crate::rng::uniform01(crate::rng::splitmix64(&mut state)) - 1.0)
                    .collect(),
            )
        };
        let (w0, w1, w2) = (gen(40), gen(40), gen(40));
        let (n0, n1, n2) = (30.0, 50.0, 20.0);
        let total = n0 + n1 + n2;
        let mut w_g = ParamVector::zeros(40);
        w_g.scaled_add(n0 / total, &w0);
        w_g.scaled_add(n1 / total, &w1);
        w_g.scaled_add(n2 / total, &w2);
        let w_ref = compute_reference_model(&w_g, &w1, total, n1).unwrap();
        let mut expected = ParamVector::zeros(40);
        expected.scaled_add(n0 / (n0 + n2), &w0);
        expected.scaled_add(n2 / (n0 + n2), &w2);
        for (a, b) in w_ref.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn reference_model_rejects_unlearning_everything() {
        let w = ParamVector::zeros(3);
        assert!(matches!(
            compute_reference_model(&w, &w, 2.0, 2.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            compute_reference_model(&w, &w, 2.0, 3.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn projection_inside_is_identity() {
        let c = ParamVector::new(vec![1.0, 2.0]);
        let w = ParamVector::new(vec![1.1, 2.1]);
        let out = project_l2_ball(&w, &c, 1.0);
        assert!(out.bitwise_eq(&w));
    }

    #[test]
    fn projection_rescales_radially() {
        let c = ParamVector::zeros(2);
        let w = ParamVector::new(vec![3.0, 4.0]);
        let out = project_l2_ball(&w, &c, 1.0);
        assert!((out[0] - 0.6).abs() < 1e-12);
        assert!((out[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ascent_zero_epochs_returns_reference() {
        let spec = small_spec();
        let shard = generate_synthetic(3, 5, 3);
        let w_ref = spec.init_params(3);
        let cfg = UnlearnConfig {
            t_asc: 0,
            ..UnlearnConfig::default()
        };
        let out = local_gradient_ascent(&spec, &w_ref, &shard, &cfg, 1.0, 8, 3).unwrap();
        assert!(out.w_unlearn.bitwise_eq(&w_ref));
        assert_eq!(out.epochs_run, 0);
    }

    #[test]
    fn ascent_iterates_stay_in_ball() {
        let spec = small_spec();
        let shard = generate_synthetic(3, 10, 4);
        let w_ref = spec.init_params(4);
        let cfg = UnlearnConfig {
            t_asc: 5,
            eta_asc: 0.5,
            early_stop_acc: EarlyStop::Fixed(0.0),
            ..UnlearnConfig::default()
        };
        let delta = 0.05;
        let mut max_dist: f64 = 0.0;
        let out = local_gradient_ascent_observed(&spec, &w_ref, &shard, &cfg, delta, 8, 4, |w| {
            max_dist = max_dist.max(l2_distance(w, &w_ref).unwrap());
        })
        .unwrap();
        assert!(max_dist <= delta + 1e-9, "max distance {max_dist}");
        assert!(l2_distance(&out.w_unlearn, &w_ref).unwrap() <= delta + 1e-9);
        assert_eq!(out.epochs_run, 5);
    }

    #[test]
    fn calibration_gamma_zero_is_bitwise_noop() {
        let spec = small_spec();
        let calib = generate_synthetic(3, 10, 5);
        let w = spec.init_params(5);
        let cfg = UnlearnConfig {
            gamma_calib: 0.0,
            ..UnlearnConfig::default()
        };
        let aug = AugmentSpec {
            noise_stddev: 0.1,
            block_size: 3,
            block_intensity: 1.0,
        };
        let out = server_calibrate(&spec, &w, &calib, &aug, &cfg, 8, 5).unwrap();
        assert!(out.bitwise_eq(&w));
    }

    #[test]
    fn calibration_identity_transform_is_bitwise_noop() {
        let spec = small_spec();
        let calib = generate_synthetic(3, 10, 6);
        let w = spec.init_params(6);
        let cfg = UnlearnConfig::default();
        let out =
            server_calibrate(&spec, &w, &calib, &AugmentSpec::identity(), &cfg, 8, 6).unwrap();
        assert!(out.bitwise_eq(&w));
    }

    #[test]
    fn calibration_reduces_mean_kl() {
        let spec = small_spec();
        let calib = generate_synthetic(3, 40, 7);
        let w = spec.init_params(7);
        let cfg = UnlearnConfig {
            t_calib: 6,
            eta_calib: 0.02,
            calib_optimizer: OptimKind::Sgd,
            ..UnlearnConfig::default()
        };
        let aug = AugmentSpec {
            noise_stddev: 0.15,
            block_size: 3,
            block_intensity: 1.0,
        };
        let (_, kl) = server_calibrate_traced(&spec, &w, &calib, &aug, &cfg, 32, 7).unwrap();
        assert_eq!(kl.len(), 6);
        assert!(
            kl.last().unwrap() < kl.first().unwrap(),
            "KL trace did not decrease: {kl:?}"
        );
    }

    #[test]
    fn composition_identity_when_both_phases_inert() {
        let spec = small_spec();
        let data = generate_synthetic(3, 30, 8);
        let shards = crate::data::dirichlet_partition(&data, 3, 1.0, 8).unwrap();
        let calib = generate_synthetic(3, 5, 88);
        let aug = AugmentSpec::identity();
        let ctx = small_ctx(&spec, &shards, &calib, &aug);
        let cfg = UnlearnConfig {
            t_asc: 0,
            gamma_calib: 0.0,
            ..UnlearnConfig::default()
        };
        let w_g = spec.init_params(8);
        let w_u_prev = spec.init_params(9);
        let out = afu_ic(&ctx, &w_g, &w_u_prev, &cfg, 8).unwrap();
        let (n_total, n_u) = contribution_weights(&ctx, cfg.weighting);
        let w_ref = compute_reference_model(&w_g, &w_u_prev, n_total, n_u).unwrap();
        assert!(out.w_unlearn.bitwise_eq(&w_ref));
        assert!(out.w_calibrated.bitwise_eq(&w_ref));
        assert_eq!(out.local_compute_cost, 0.0);
    }

    #[test]
    fn pga_matches_afu_with_gamma_zero() {
        let spec = small_spec();
        let data = generate_synthetic(3, 30, 9);
        let shards = crate::data::dirichlet_partition(&data, 3, 1.0, 9).unwrap();
        let calib = generate_synthetic(3, 5, 99);
        let aug = AugmentSpec {
            noise_stddev: 0.1,
            block_size: 3,
            block_intensity: 1.0,
        };
        let ctx = small_ctx(&spec, &shards, &calib, &aug);
        let cfg = UnlearnConfig {
            gamma_calib: 0.0,
            t_asc: 3,
            ..UnlearnConfig::default()
        };
        let w_g = spec.init_params(10);
        let w_u_prev = spec.init_params(11);
        let a = afu_ic(&ctx, &w_g, &w_u_prev, &cfg, 9).unwrap();
        let base = UnlearnConfig {
            t_asc: 3,
            ..UnlearnConfig::default()
        };
        let b = pga_only(&ctx, &w_g, &w_u_prev, &base, 9).unwrap();
        assert!(a.w_calibrated.bitwise_eq(&b.w_calibrated));
        assert!(a.w_unlearn.bitwise_eq(&b.w_unlearn));
    }
}
