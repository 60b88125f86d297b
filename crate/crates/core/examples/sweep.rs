// Scratch multi-seed criteria sweep. Not part of the public surface.
use fusim_core::nn::OptimKind;
use fusim_core::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() {
    let env_f = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let env_u = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let mut cfg = ScenarioConfig::default();
    cfg.federation.rounds = env_u("ROUNDS", 30);
    cfg.federation.lr = env_f("LR", 0.2);
    cfg.data.min_target_share = env_f("MIN_SHARE", 1.2);
    cfg.federation.alpha = env_f("ALPHA", 1.0);
    cfg.federation.min_implant_ba = 0.0;
    cfg.unlearn.eta_asc = env_f("ETA_ASC", 0.01);
    cfg.unlearn.early_stop_acc = EarlyStop::Fixed(env_f("EARLY", 0.7));
    cfg.unlearn.eta_calib = env_f("ETA_CALIB", 0.1);
    cfg.unlearn.t_calib = env_u("T_CALIB", 60);
    cfg.unlearn.calib_optimizer = OptimKind::Sgd;
    cfg.augment.noise_stddev = env_f("AUG_NOISE", 0.15);
    cfg.augment.block_size = env_u("BLOCK", 3);
    cfg.data.calib_size = env_u("CALIB_SIZE", 256);
    if let Ok(v) = std::env::var("DELTA") {
        cfg.unlearn.delta = DeltaSetting::Fixed(v.parse().unwrap());
    }

    let seeds: Vec<u64> = (0..env_u("NSEEDS", 5) as u64).collect();
    let methods = [Method::Retrain, Method::Pga, Method::AfuIc];
    let outcomes: Vec<SeedOutcome> = seeds
        .iter()
        .map(|&s| scenario::run_seed(&cfg, &methods, s).unwrap())
        .collect();

    let get = |m: &str, f: &dyn Fn(&fusim_core::metrics::RevertingRow) -> f64| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| {
                let row = o.analysis.rows.iter().find(|r| r.method == m).unwrap();
                f(row)
            })
            .collect()
    };
    let pre_ba: Vec<f64> = outcomes.iter().map(|o| o.pre_ba).collect();
    let pre_ca: Vec<f64> = outcomes.iter().map(|o| o.pre_ca).collect();
    println!("pre BA per seed: {pre_ba:.1?}  pre CA per seed: {pre_ca:.1?}");

    let m = |v: Vec<f64>| median(v);
    let afu_i_ba = m(get("afu_ic", &|r| r.instant.ba));
    let afu_p_ba = m(get("afu_ic", &|r| r.post.ba));
    let pga_i_ba = m(get("pga", &|r| r.instant.ba));
    let pga_p_ba = m(get("pga", &|r| r.post.ba));
    let ret_p_ba = m(get("retrain", &|r| r.post.ba));
    let afu_i_ca = m(get("afu_ic", &|r| r.instant.ca));
    let afu_p_ca = m(get("afu_ic", &|r| r.post.ca));
    let ret_i_ca = m(get("retrain", &|r| r.instant.ca));
    let ret_p_ca = m(get("retrain", &|r| r.post.ca));
    let pre_ca_med = m(pre_ca.clone());
    let afu_i_l2 = m(get("afu_ic", &|r| r.instant.l2_to_oracle));
    let afu_p_l2 = m(get("afu_ic", &|r| r.post.l2_to_oracle));
    let pga_p_l2 = m(get("pga", &|r| r.post.l2_to_oracle));

    println!("medians: afu BA {afu_i_ba:.1}->{afu_p_ba:.1}  pga BA {pga_i_ba:.1}->{pga_p_ba:.1}  retrain post BA {ret_p_ba:.1}");
    println!("         afu CA {afu_i_ca:.1}->{afu_p_ca:.1}  retrain CA {ret_i_ca:.1}->{ret_p_ca:.1}  pre CA {pre_ca_med:.1}");
    println!("         L2 afu {afu_i_l2:.2}->{afu_p_l2:.2}  pga post {pga_p_l2:.2}");

    // every-checkpoint CA comparison
    let mut worst_ca_margin = f64::INFINITY;
    for r in 0..=cfg.federation.post_rounds {
        let afu: Vec<f64> = outcomes.iter().map(|o| o.analysis.trajectories["afu_ic"][r].ca).collect();
        let ret: Vec<f64> = outcomes.iter().map(|o| o.analysis.trajectories["retrain"][r].ca).collect();
        worst_ca_margin = worst_ca_margin.min(m(afu) - (m(ret) - 5.0));
    }

    let checks = [
        ("C2 implant BA>=80 (all seeds)", pre_ba.iter().all(|b| *b >= 80.0) as i32 as f64, 0.0),
        ("C2 implant CA>=80 (all seeds)", pre_ca.iter().all(|c| *c >= 80.0) as i32 as f64, 0.0),
        ("C3 afu<=retrain+10", ret_p_ba + 10.0 - afu_p_ba, 0.0),
        ("C3 pga>=afu+30", pga_p_ba - afu_p_ba - 30.0, 0.0),
        ("INV pga revert>=+30", pga_p_ba - pga_i_ba - 30.0, 0.0),
        ("INV afu stable<=+10", afu_i_ba + 10.0 - afu_p_ba, 0.0),
        ("C4 worst CA margin>=0", worst_ca_margin, 0.0),
        ("C4 recover to pre-5", afu_p_ca - (pre_ca_med - 5.0), 0.0),
        ("C5 L2 post<instant", afu_i_l2 - afu_p_l2, 0.0),
        ("C5 L2 afu<pga", pga_p_l2 - afu_p_l2, 0.0),
    ];
    for (name, margin, _) in checks {
        println!("  {:<28} {}  (margin {:+.2})", name, if margin > 0.0 { "PASS" } else { "FAIL" }, margin);
    }
}
