//! Trains the role-conditioned policy on CleanUp and reports how often each
//! role cleans the river and harvests when paired with a harvest-only partner.
//!
//! cargo run --release --example cleanup_roles -- [iterations] [seed] [trial_length] [horizon]

use std::time::Instant;

use roleplay::envs::{EnvConfig, EventKind};
use roleplay::evaluation::{crossplay, EvalOptions, Partner, ScriptedPartner};
use roleplay::roles::RoleSpaceConfig;
use roleplay::training::{train_with, TrainConfig, TrainedPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut next = |d: usize| args.next().map(|s| s.parse::<usize>()).transpose().map(|v| v.unwrap_or(d));
    let iterations = next(60)?;
    let seed = next(1)? as u64;
    let trial_length = next(2)?;
    let horizon = next(100)?;

    let mut env = EnvConfig::named("cleanup");
    env.cleanup.horizon = horizon;
    let cfg = TrainConfig {
        env,
        roles: RoleSpaceConfig {
            name: "svo8".into(),
            ..Default::default()
        },
        iterations,
        seed,
        trial_length,
        trials_per_iteration: 8,
        lr: 1e-3,
        predictor_lr: 3e-3,
        entropy_coef: 0.03,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train_with(&cfg, None, |m| {
        if m.iteration % 10 == 9 {
            println!(
                "it {:4} {:6.1}s raw {:7.3} ent {:.3}",
                m.iteration,
                start.elapsed().as_secs_f64(),
                m.mean_raw_reward,
                m.entropy
            );
        }
    })?;

    let policy = TrainedPolicy::from_learner(&out.learner, &cfg)?;
    let envi = cfg.env.build()?;
    let partner = Partner::Scripted(ScriptedPartner::AlwaysHarvest);
    let opts = EvalOptions::new(100, trial_length, seed);
    println!("{:16} {:>8} {:>8} {:>8}", "role", "cleans", "harvests", "reward");
    for role in 0..policy.space.len() {
        let r = crossplay(&policy, role, &partner, &envi, &opts)?;
        println!(
            "{:16} {:8.2} {:8.2} {:8.2}",
            r.role,
            r.event_mean(EventKind::Clean),
            r.event_mean(EventKind::Harvest),
            r.individual_mean
        );
    }
    Ok(())
}
