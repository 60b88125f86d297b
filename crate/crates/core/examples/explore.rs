// Scratch harness for scenario tuning. Not part of the public surface.
use fusim_core::*;
use std::collections::BTreeMap;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = ScenarioConfig::default();
    // knobs via env
    let env_f = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let env_u = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    cfg.federation.rounds = env_u("ROUNDS", cfg.federation.rounds);
    cfg.federation.lr = env_f("LR", cfg.federation.lr);
    cfg.federation.alpha = env_f("ALPHA", cfg.federation.alpha);
    cfg.federation.n_clients = env_u("NCLIENTS", cfg.federation.n_clients);
    if cfg.federation.n_clients != cfg.federation.speed_factors.len() {
        cfg.federation.speed_factors = vec![1.0; cfg.federation.n_clients];
        *cfg.federation.speed_factors.last_mut().unwrap() = 4.0;
    }
    cfg.federation.min_implant_ba = env_f("MIN_BA", 0.0);
    cfg.unlearn.eta_asc = env_f("ETA_ASC", cfg.unlearn.eta_asc);
    cfg.unlearn.eta_calib = env_f("ETA_CALIB", cfg.unlearn.eta_calib);
    cfg.unlearn.t_calib = env_u("T_CALIB", cfg.unlearn.t_calib);
    cfg.unlearn.t_asc = env_u("T_ASC", cfg.unlearn.t_asc);
    cfg.unlearn.gamma_calib = env_f("GAMMA", cfg.unlearn.gamma_calib);
    if let Ok(v) = std::env::var("DELTA") {
        cfg.unlearn.delta = DeltaSetting::Fixed(v.parse().unwrap());
    }

    let t0 = std::time::Instant::now();
    let prepared = scenario::prepare(&cfg, seed).unwrap();
    let trained = scenario::train(&cfg, &prepared, seed).unwrap();
    let pre_ca = clean_accuracy(&prepared.spec, &trained.w_g, &prepared.clean_test).unwrap();
    println!(
        "seed {seed}: TRAIN done in {:.1}s wall | BA {:.2} CA {:.2} | mean_upd_norm {:.4} -> delta {:.4}",
        t0.elapsed().as_secs_f64(),
        trained.implant_ba,
        pre_ca,
        trained.mean_update_norm,
        cfg.unlearn.delta.resolve(trained.mean_update_norm).unwrap()
    );

    let outcome = scenario::run_seed(&cfg, &[Method::Retrain, Method::Pga, Method::AfuIc], seed).unwrap();
    let mut traj_ba: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut traj_ca: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut traj_l2: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (name, t) in &outcome.analysis.trajectories {
        traj_ba.insert(name, t.iter().map(|r| r.ba).collect());
        traj_ca.insert(name, t.iter().map(|r| r.ca).collect());
        traj_l2.insert(name, t.iter().map(|r| r.l2_to_oracle).collect());
    }
    for row in &outcome.analysis.rows {
        println!(
            "  {:<8} instant BA {:7.2} CA {:7.2} L2 {:8.4} | post BA {:7.2} CA {:7.2} L2 {:8.4} | time {:8.2}s",
            row.method,
            row.instant.ba, row.instant.ca, row.instant.l2_to_oracle,
            row.post.ba, row.post.ca, row.post.l2_to_oracle,
            outcome.times_s.get(&row.method).copied().unwrap_or(f64::NAN),
        );
    }
    for (name, v) in &traj_ba {
        println!("  BA[{name}]: {}", v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" "));
    }
    for (name, v) in &traj_ca {
        println!("  CA[{name}]: {}", v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" "));
    }
    for (name, v) in &traj_l2 {
        println!("  L2[{name}]: {}", v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" "));
    }
    println!("total wall: {:.1}s", t0.elapsed().as_secs_f64());
}
