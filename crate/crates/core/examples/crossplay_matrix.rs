//! Trains briefly on the matrix social dilemma, then evaluates every role
//! against the four scripted matrix partners and writes the run's records,
//! `results.csv` and `summary.json` into a directory.
//!
//! cargo run --release --example crossplay_matrix -- [iterations] [out_dir]

use std::path::PathBuf;

use roleplay::evaluation::{crossplay_all, export_run, EvalOptions, Partner, ScriptedPartner};
use roleplay::training::{train, TrainConfig, TrainedPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| "runs/crossplay_example".into());
    std::fs::create_dir_all(&out)?;

    let cfg = TrainConfig {
        iterations,
        lr: 1e-3,
        predictor_lr: 3e-3,
        entropy_coef: 0.03,
        ..TrainConfig::default()
    };
    let learner = train(&cfg, None)?.learner;
    let policy = TrainedPolicy::from_learner(&learner, &cfg)?;
    let env = cfg.env.build()?;
    let partners: Vec<Partner> = [
        ScriptedPartner::AlwaysShare,
        ScriptedPartner::AlwaysSpite,
        ScriptedPartner::AlwaysTake,
        ScriptedPartner::AlwaysGive,
    ]
    .into_iter()
    .map(Partner::Scripted)
    .collect();
    let roles: Vec<usize> = (0..policy.space.len()).collect();
    let results = crossplay_all(&policy, &roles, &partners, &env, &EvalOptions::new(50, cfg.trial_length, 0))?;

    println!("{:14} {:16} {:>8} {:>8}", "partner", "role", "own", "partner");
    let mut lines = String::new();
    for r in &results {
        println!("{:14} {:16} {:8.2} {:8.2}", r.partner, r.role, r.individual_mean, r.partner_mean);
        for rec in r.records("crossplay") {
            lines.push_str(&serde_json::to_string(&rec)?);
            lines.push('\n');
        }
    }
    std::fs::write(out.join("records.jsonl"), lines)?;
    for f in export_run(&out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
