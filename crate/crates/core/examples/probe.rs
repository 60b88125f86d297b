// Scratch probe of the unlearning phase dynamics. Not part of the public surface.
use fusim_core::nn::{batch_accuracy, OptimKind};
use fusim_core::unlearn::{local_gradient_ascent_observed, server_calibrate_traced};
use fusim_core::metrics::{MetricsRecord, RecordTag};
use fusim_core::*;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let env_f = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let env_u = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);

    let mut cfg = ScenarioConfig::default();
    cfg.federation.min_implant_ba = 0.0;
    cfg.federation.rounds = env_u("ROUNDS", cfg.federation.rounds);
    cfg.federation.lr = env_f("LR", cfg.federation.lr);
    cfg.unlearn.eta_asc = env_f("ETA_ASC", cfg.unlearn.eta_asc);
    cfg.unlearn.eta_calib = env_f("ETA_CALIB", cfg.unlearn.eta_calib);
    cfg.unlearn.t_calib = env_u("T_CALIB", cfg.unlearn.t_calib);
    cfg.unlearn.t_asc = env_u("T_ASC", cfg.unlearn.t_asc);
    cfg.unlearn.gamma_calib = env_f("GAMMA", cfg.unlearn.gamma_calib);
    if let Ok(v) = std::env::var("EARLY") {
        cfg.unlearn.early_stop_acc = EarlyStop::Fixed(v.parse().unwrap());
    }
    if let Ok(v) = std::env::var("DELTA") {
        cfg.unlearn.delta = DeltaSetting::Fixed(v.parse().unwrap());
    }
    if let Ok(v) = std::env::var("BLOCK") {
        cfg.augment.block_size = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("AUG_NOISE") {
        cfg.augment.noise_stddev = v.parse().unwrap();
    }
    if std::env::var("CALIB_SGD").is_ok() {
        cfg.unlearn.calib_optimizer = OptimKind::Sgd;
    }

    let prepared = scenario::prepare(&cfg, seed).unwrap();
    let trained = scenario::train(&cfg, &prepared, seed).unwrap();
    let spec = prepared.spec.clone();
    let eval = |w: &ParamVector, tag: &str| {
        let ba = backdoor_accuracy(&spec, w, &prepared.poisoned_test).unwrap();
        let ca = clean_accuracy(&spec, w, &prepared.clean_test).unwrap();
        println!("  {tag:<24} BA {ba:6.2}  CA {ca:6.2}");
    };
    println!("train: mean_upd_norm {:.4}", trained.mean_update_norm);
    eval(&trained.w_g, "w_g");

    let target = cfg.federation.target_client;
    let d_u = trained.clients[target].shard.clone();
    let shards: Vec<_> = trained.clients.iter().map(|c| c.shard.clone()).collect();
    let n_total: usize = shards.iter().map(|s| s.len()).sum();
    let w_ref = compute_reference_model(
        &trained.w_g,
        &trained.clients[target].w_local_prev,
        n_total as f64,
        d_u.len() as f64,
    )
    .unwrap();
    eval(&w_ref, "w_ref");
    println!(
        "  |D_u| = {}, poisoned = {}",
        d_u.len(),
        d_u.samples.iter().filter(|s| s.poisoned).count()
    );
    let delta = cfg.unlearn.delta.resolve(trained.mean_update_norm).unwrap();
    println!("  delta = {delta:.4}");

    let full = d_u.as_batch();
    let mut step = 0usize;
    let out = local_gradient_ascent_observed(
        &spec,
        &w_ref,
        &d_u,
        &cfg.unlearn,
        delta,
        cfg.federation.batch_size,
        seed,
        |w| {
            step += 1;
            let acc = batch_accuracy(&spec, w, &full).unwrap();
            let ba = backdoor_accuracy(&spec, w, &prepared.poisoned_test).unwrap();
            let ca = clean_accuracy(&spec, w, &prepared.clean_test).unwrap();
            let dist = l2_distance(w, &w_ref).unwrap();
            println!(
                "  ascent step {step:3}: D_u acc {acc:.3}  BA {ba:6.2}  CA {ca:6.2}  dist {dist:.4}"
            );
        },
    )
    .unwrap();
    println!("  ascent epochs run: {}", out.epochs_run);
    eval(&out.w_unlearn, "w_unlearn (pga)");

    let (w_cal, kl) = server_calibrate_traced(
        &spec,
        &out.w_unlearn,
        &prepared.calib,
        &cfg.augment,
        &cfg.unlearn,
        cfg.federation.batch_size,
        seed,
    )
    .unwrap();
    println!(
        "  calib KL trace: {:?}",
        kl.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
    eval(&w_cal, "w_calibrated (afu)");
    println!(
        "  |w_cal - w_unlearn| = {:.4}",
        l2_distance(&w_cal, &out.w_unlearn).unwrap()
    );

    // post-learning traces for pga / afu / oracle
    let retained: Vec<_> = trained
        .clients
        .iter()
        .filter(|c| c.id != target)
        .cloned()
        .collect();
    let retained_shards: Vec<_> = retained.iter().map(|c| c.shard.clone()).collect();
    let oracle = retrain_oracle(&spec, &retained_shards, &cfg.federation, seed).unwrap();
    eval(&oracle, "oracle (retrain)");
    for (name, start) in [("pga", &out.w_unlearn), ("afu", &w_cal), ("oracle", &oracle)] {
        let mut clients = retained.clone();
        let mut bas = Vec::new();
        let mut cas = Vec::new();
        let _ = federation::run_post_learning(
            &spec,
            start,
            &mut clients,
            cfg.federation.post_rounds,
            &cfg.federation,
            seed,
            0.0,
            |round, time, w| {
                bas.push(backdoor_accuracy(&spec, w, &prepared.poisoned_test).unwrap());
                cas.push(clean_accuracy(&spec, w, &prepared.clean_test).unwrap());
                Ok(MetricsRecord {
                    round,
                    sim_time: time,
                    ba: 0.0,
                    ca: 0.0,
                    l2_to_oracle: 0.0,
                    tag: RecordTag::Trajectory,
                })
            },
        )
        .unwrap();
        println!(
            "  post BA[{name:>6}]: {}",
            bas.iter().map(|x| format!("{x:5.1}")).collect::<Vec<_>>().join(" ")
        );
        println!(
            "  post CA[{name:>6}]: {}",
            cas.iter().map(|x| format!("{x:5.1}")).collect::<Vec<_>>().join(" ")
        );
    }
}
