//! Meta-trains the role-conditioned policy on the matrix social dilemma and
//! prints one summary line per iteration.
//!
//! cargo run --release --example train_matrix -- [iterations] [seed]

use std::time::Instant;

use roleplay::training::{train_with, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cfg = TrainConfig {
        iterations,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    train_with(&cfg, None, |m| {
        let per_role: Vec<String> = m
            .roles
            .iter()
            .map(|r| format!("{:.2}", r.mean_raw_reward.unwrap_or(f64::NAN)))
            .collect();
        println!(
            "it {:4} {:6.1}s raw {:6.3} acc {:.3} ent {:.3} pl {:.3} | {}",
            m.iteration,
            start.elapsed().as_secs_f64(),
            m.mean_raw_reward,
            m.predictor_accuracy.unwrap_or(f64::NAN),
            m.entropy,
            m.predictor_loss,
            per_role.join(" ")
        );
    })?;
    Ok(())
}
