use fusim_core::*;
fn main() {
    let env_f = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let env_u = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let mut cfg = ScenarioConfig::default();
    cfg.federation.rounds = env_u("ROUNDS", 30);
    cfg.federation.lr = env_f("LR", cfg.federation.lr);
    cfg.federation.local_epochs = env_u("EPOCHS", cfg.federation.local_epochs);
    cfg.data.min_target_share = env_f("MIN_SHARE", cfg.data.min_target_share);
    cfg.federation.min_implant_ba = 0.0;
    for seed in 0..5u64 {
        let p = scenario::prepare(&cfg, seed).unwrap();
        let t = scenario::train(&cfg, &p, seed).unwrap();
        let ca = clean_accuracy(&p.spec, &t.w_g, &p.clean_test).unwrap();
        println!(
            "seed {seed}: target {} / {} total, poisoned {} -> BA {:6.2} CA {:6.2}",
            p.shards[0].len(),
            p.shards.iter().map(|s| s.len()).sum::<usize>(),
            p.shards[0].samples.iter().filter(|s| s.poisoned).count(),
            t.implant_ba,
            ca
        );
    }
}
