//! Pairs two scripted kitchen partners and counts soups delivered.
//!
//! cargo run --release --example kitchen_scripted -- [episodes]

use roleplay::envs::{EnvConfig, EventKind};
use roleplay::evaluation::ScriptedPartner;
use roleplay::training::{run_trial, trial_rng, Controller, RolloutOptions, TrialPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let episodes: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let env = EnvConfig::named("kitchen").build()?;
    let pairs = [
        (ScriptedPartner::PlaceOnion, ScriptedPartner::DeliverSoup),
        (ScriptedPartner::PlaceAndDeliver, ScriptedPartner::PlaceAndDeliver),
        (ScriptedPartner::DeliverSoup, ScriptedPartner::DeliverSoup),
    ];
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        let plan = TrialPlan {
            seats: vec![Controller::Scripted(a), Controller::Scripted(b)],
            true_roles: vec![None, None],
            rng: trial_rng(0, i as u64),
        };
        let rec = run_trial(&env, plan, RolloutOptions { episodes, reset_hidden_each_episode: false })?;
        let team: f64 = rec.episode_raw.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / episodes as f64;
        let deliveries: u32 = rec
            .episode_events
            .iter()
            .flat_map(|e| e.iter().map(|c| c[EventKind::Delivery.index()]))
            .sum();
        println!(
            "{:>18} + {:<18} team reward {:7.2}/episode, {:5.2} deliveries/episode",
            a.name(),
            b.name(),
            team,
            f64::from(deliveries) / episodes as f64
        );
    }
    Ok(())
}
