//! Compares reverse-mode gradients of random small recurrent networks with
//! central finite differences.
//!
//! cargo run --release --example gradient_check -- [networks]

use roleplay::numgrad::random_network_check;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for seed in 0..n {
        let c = random_network_check(seed)?;
        worst = worst.max(c.max_rel_error);
        entries += c.entries;
    }
    println!("{n} networks, {entries} parameters checked, max relative error {worst:.3e}");
    Ok(())
}
