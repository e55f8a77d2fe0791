//! Exact check of the role-perturbation bound on random finite games: the
//! partner's policy is perturbed by at most epsilon in ratio and the focal
//! agent's expected shaped return is recomputed by enumeration.
//!
//! cargo run --release --example verify_theorem -- [games] [epsilon] [horizon]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roleplay::theory::{verify_random, VerifyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = VerifyConfig::default();
    if let Some(m) = args.next() {
        cfg.mdps = m.parse()?;
    }
    if let Some(e) = args.next() {
        cfg.epsilon = e.parse()?;
    }
    if let Some(h) = args.next() {
        cfg.horizon = h.parse()?;
    }
    let reports = verify_random(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("{:>5} {:>10} {:>12} {:>12} {:>12}", "game", "eps", "|dJ|/J", "linear", "exact");
    for r in reports.iter().take(10) {
        println!(
            "{:5} {:10.3e} {:12.3e} {:12.3e} {:12.3e}",
            r.trial, r.epsilon_actual, r.ratio_deviation, r.linear_bound, r.exact_bound
        );
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} games within both bounds", reports.len());
    Ok(())
}
