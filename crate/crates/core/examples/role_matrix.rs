//! Trains on the matrix social dilemma, then prints the role-versus-role
//! payoff matrix and the role predictor's confusion matrix.
//!
//! cargo run --release --example role_matrix -- [iterations] [seed]

use roleplay::evaluation::{role_matrix, EvalOptions};
use roleplay::predictor::{confusion_matrix, diagonal_mass};
use roleplay::training::{train, TrainConfig, TrainedPolicy};

fn print_matrix(labels: &[String], m: &[Vec<f64>], digits: usize) {
    print!("{:>16}", "");
    for l in labels {
        print!(" {:>6.6}", l);
    }
    println!();
    for (l, row) in labels.iter().zip(m) {
        print!("{l:>16}");
        for v in row {
            print!(" {v:6.digits$}");
        }
        println!();
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cfg = TrainConfig {
        iterations,
        seed,
        lr: 1e-3,
        predictor_lr: 3e-3,
        entropy_coef: 0.03,
        ..TrainConfig::default()
    };
    let learner = train(&cfg, None)?.learner;
    let policy = TrainedPolicy::from_learner(&learner, &cfg)?;
    let env = cfg.env.build()?;
    let opts = EvalOptions::new(20, cfg.trial_length, seed);

    let rm = role_matrix(&policy, &env, 20, &opts)?;
    println!("mean episode reward of the row role against the column role");
    print_matrix(&rm.labels, &rm.means, 2);

    let cm = confusion_matrix(&policy, &env, 24, &opts)?;
    println!("\nconfusion (row: true role, column: predicted), diagonal mass {:.3}", diagonal_mass(&cm));
    print_matrix(policy.space.labels(), &cm, 2);
    Ok(())
}
