//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always shown. The
//! learning criteria train from the shipped `configs/*.toml` recipes and take
//! most of the runtime (about an hour on one core). Set
//! `ROLEPLAY_ACCEPTANCE=1,3,8` to run a subset.

mod common;

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roleplay::cli::RunConfig;
use roleplay::envs::EventKind;
use roleplay::evaluation::{crossplay, role_matrix, EvalOptions, Partner, ScriptedPartner};
use roleplay::numgrad::random_network_check;
use roleplay::policy::ActMode;
use roleplay::predictor::{confusion_matrix, diagonal_mass};
use roleplay::roles::{psi_event, psi_svo, svo_angle, svo_shaped_reward, RoleSpace, EVENT_REWARDS};
use roleplay::theory::{verify_random, VerifyConfig};
use roleplay::training::{compute_gae, train, TrainConfig, TrainedPolicy};

const SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn recipe(name: &str, seed: u64) -> TrainConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.seed = seed;
    cfg.train_config()
}

fn trained(cfg: &TrainConfig) -> TrainedPolicy {
    let out = train(cfg, None).expect("training run");
    TrainedPolicy::from_learner(&out.learner, cfg).expect("policy")
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Variant {
    Full,
    NoPredictor,
    NoMeta,
}

/// Matrix-game policies, trained once and shared by criteria 5 and 7.
fn matrix_policy(variant: Variant, seed: u64) -> TrainedPolicy {
    static CACHE: OnceLock<std::sync::Mutex<HashMap<(Variant, u64), TrainedPolicy>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().unwrap().get(&(variant, seed)) {
        return p.clone();
    }
    let mut cfg = recipe("matrix.toml", seed);
    cfg.no_predictor = variant == Variant::NoPredictor;
    cfg.no_meta = variant == Variant::NoMeta;
    let p = trained(&cfg);
    cache.lock().unwrap().insert((variant, seed), p.clone());
    p
}

fn role_index(policy: &TrainedPolicy, label: &str) -> usize {
    policy.space.labels().iter().position(|l| l == label).expect("ring role")
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        worst = worst.max(random_network_check(seed)?.max_rel_error);
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 100 networks (< 1e-4)")))
}

fn theorem_verification() -> Outcome {
    let cfg = VerifyConfig::default();
    let reports = verify_random(&cfg, &mut ChaCha8Rng::seed_from_u64(2024))?;
    // perturbed action factors per trajectory: every partner, every step
    let n = (cfg.horizon * (cfg.agents - 1)) as f64;
    let mut bad = 0;
    let mut worst_mass: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for r in &reports {
        let linear = r.epsilon_actual * n;
        let exact = (1.0 + r.epsilon_actual).powf(n) - 1.0;
        let mass = (r.mass_base - 1.0).abs().max((r.mass_perturbed - 1.0).abs());
        worst_mass = worst_mass.max(mass);
        worst_ratio = worst_ratio.max(r.ratio_deviation / linear.max(f64::MIN_POSITIVE));
        if r.ratio_deviation > linear || r.ratio_deviation > exact || mass > 1e-9 || r.epsilon_actual > cfg.epsilon {
            bad += 1;
        }
    }
    Ok((
        bad == 0 && reports.len() == cfg.mdps,
        format!(
            "{} games at T={}, {bad} violations, max deviation/bound {worst_ratio:.3}, max |mass - 1| {worst_mass:.1e}",
            reports.len(),
            cfg.horizon
        ),
    ))
}

fn psi_suite() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0);
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |ok: bool, name: &'static str| {
        if !ok {
            failed.push(name);
        }
    };
    check(svo_angle(1.0, 1.0) == FRAC_PI_4, "angle(1,1)");
    check(svo_angle(0.0, 1.0) == 0.0, "angle(0,1)");
    check(svo_angle(1.0, 0.0) == FRAC_PI_2, "angle(1,0)");
    check(svo_angle(0.0, 0.0) == 0.0, "angle(0,0)");
    for (r, rb) in [(2.5, -7.0), (0.0, 3.0), (-1.0, 4.0)] {
        check(svo_shaped_reward(r, rb, 0.0) == r, "theta=0 identity");
    }
    check(close(svo_shaped_reward(3.0, 2.0, FRAC_PI_2), 2.0), "theta=pi/2");
    check(close(svo_shaped_reward(1.0, 1.0, FRAC_PI_4), 2f64.sqrt()), "theta=pi/4");
    for z in [-PI, -FRAC_PI_4, 0.0, 1.0, FRAC_PI_2, 3.0] {
        check(psi_svo(1.7, -3.0, z, 1.0) == 1.7, "w=1 degenerate");
    }
    check(close(psi_svo(1.0, 0.0, 0.0, 0.3), 1.0), "psi(1,0,0)");
    check(close(psi_svo(0.0, 2.0, FRAC_PI_2, 0.3), 1.4), "psi(0,2,pi/2)");
    check(EVENT_REWARDS == [5.0, 5.0, 3.0, 10.0], "event table");
    check(psi_event(4.0, &[0; 4], &EVENT_REWARDS, &[3, 1, 2, 5])? == 4.0, "zero prefs");
    let delivery = EventKind::Delivery.index();
    let mut counts = [0u32; 4];
    counts[delivery] = 1;
    check(psi_event(10.0, &[0, 0, 0, 1], &EVENT_REWARDS, &counts)? == 20.0, "delivery +1");
    let mut counts = [0u32; 4];
    counts[EventKind::PlaceInPot.index()] = 1;
    check(psi_event(0.0, &[0, 0, -1, 0], &EVENT_REWARDS, &counts)? == -3.0, "pot -1");
    let space = RoleSpace::svo8();
    check(space.encode(&space.roles()[0])?[0] == 1.0 && space.label(0) == "Masochistic", "k=-4 first");
    let single = RoleSpace::svo_custom(&[0.5])?;
    let draws = single.sample(50, &mut ChaCha8Rng::seed_from_u64(0))?;
    check(draws.iter().all(|r| r.class_index == 0), "single-role space");
    let a = space.sample(20, &mut ChaCha8Rng::seed_from_u64(5))?;
    let b = space.sample(20, &mut ChaCha8Rng::seed_from_u64(5))?;
    check(a == b, "seeded sampling");
    let n = 80_000;
    let mut freq = [0usize; 8];
    for r in space.sample(n, &mut ChaCha8Rng::seed_from_u64(6))? {
        freq[r.class_index] += 1;
    }
    let sigma = (n as f64 * 0.125 * 0.875).sqrt();
    check(freq.iter().all(|&c| (c as f64 - n as f64 / 8.0).abs() <= 3.0 * sigma), "uniform within 3 sigma");
    Ok((failed.is_empty(), if failed.is_empty() { "all role examples hold".into() } else { format!("failed: {failed:?}") }))
}

fn gae_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=60);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let term: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let boot = rng.gen_range(-3.0..3.0);
        let gamma = rng.gen_range(0.0..=1.0);
        let lambda = rng.gen_range(0.0..=1.0);
        let (adv, _) = compute_gae(&r, &v, &term, boot, gamma, lambda)?;
        let want = common::gae_oracle(&r, &v, &term, boot, gamma, lambda);
        for (a, b) in adv.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max |difference| {worst:.1e} over 1000 instances (<= 1e-10)")))
}

fn matrix_learning() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let policy = matrix_policy(Variant::Full, seed);
        let env = policy.env.build()?;
        let opts = EvalOptions {
            episodes: 100,
            trial_length: policy.trial_length,
            seed,
            mode: ActMode::Sample,
            workers: 1,
        };
        let acc = diagonal_mass(&confusion_matrix(&policy, &env, 24, &opts)?);
        let partner = Partner::Scripted(ScriptedPartner::AlwaysShare);
        let pro = crossplay(&policy, role_index(&policy, "Prosocial"), &partner, &env, &opts)?.partner_mean;
        let comp = crossplay(&policy, role_index(&policy, "Competitive"), &partner, &env, &opts)?.partner_mean;
        ok &= acc > 0.375 && pro > comp;
        parts.push(format!("seed {seed}: acc {acc:.3}, partner payoff P {pro:.2} vs C {comp:.2}"));
    }
    Ok((ok, parts.join("; ")))
}

fn cleanup_direction() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let cfg = recipe("cleanup.toml", seed);
        let policy = trained(&cfg);
        let env = policy.env.build()?;
        let opts = EvalOptions::new(100, policy.trial_length, seed);
        let partner = Partner::Scripted(ScriptedPartner::AlwaysHarvest);
        let alt = crossplay(&policy, role_index(&policy, "Altruistic"), &partner, &env, &opts)?.event_mean(EventKind::Clean);
        let comp = crossplay(&policy, role_index(&policy, "Competitive"), &partner, &env, &opts)?.event_mean(EventKind::Clean);
        ok &= alt > comp;
        parts.push(format!("seed {seed}: cleans A {alt:.2} vs C {comp:.2}"));
    }
    Ok((ok, parts.join("; ")))
}

/// Mean raw episode reward of each role over all partner roles and seeds.
fn per_role_reward(variant: Variant) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let mut sums = vec![0.0; 8];
    for seed in SEEDS {
        let policy = matrix_policy(variant, seed);
        let env = policy.env.build()?;
        let opts = EvalOptions::new(20, policy.trial_length, seed);
        let m = role_matrix(&policy, &env, 20, &opts)?;
        for (s, row) in sums.iter_mut().zip(&m.means) {
            *s += row.iter().sum::<f64>() / row.len() as f64 / SEEDS.len() as f64;
        }
    }
    Ok(sums)
}

fn ablation_ordering() -> Outcome {
    let full = per_role_reward(Variant::Full)?;
    let mut ok = true;
    let mut parts = vec![format!("full {:?}", rounded(&full))];
    for (name, v) in [("no_predictor", Variant::NoPredictor), ("no_meta", Variant::NoMeta)] {
        let ab = per_role_reward(v)?;
        let wins = full.iter().zip(&ab).filter(|(f, a)| f >= a).count();
        ok &= wins >= 5;
        parts.push(format!("{name} {:?} ({wins}/8 roles full >=)", rounded(&ab)));
    }
    Ok((ok, parts.join("; ")))
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir()?;
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, env, workers) in [("matrix", "matrix", 1), ("matrix-w2", "matrix", 2), ("cleanup", "cleanup", 1)] {
        let mut cfg = TrainConfig {
            iterations: 3,
            trials_per_iteration: 4,
            trial_length: 2,
            checkpoint_every: 1,
            seed: 11,
            workers,
            ..TrainConfig::default()
        };
        cfg.env = roleplay::envs::EnvConfig::named(env);
        cfg.roles.name = "svo8".into();
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        train(&cfg, Some(&a))?;
        train(&cfg, Some(&b))?;
        let mut names: Vec<_> = std::fs::read_dir(&a)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
        names.sort();
        for f in names {
            files += 1;
            if std::fs::read(a.join(&f))? != std::fs::read(b.join(&f))? {
                mismatched.push(format!("{name}/{}", f.to_string_lossy()));
            }
        }
    }
    Ok((
        mismatched.is_empty() && files > 0,
        if mismatched.is_empty() { format!("{files} files byte-identical across repeated runs") } else { format!("differ: {mismatched:?}") },
    ))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ROLEPLAY_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    // libtest-style flags (e.g. --list) are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "perturbation bound", theorem_verification),
        (3, "psi suite", psi_suite),
        (4, "GAE oracle", gae_equivalence),
        (5, "matrix learning", matrix_learning),
        (6, "CleanUp direction", cleanup_direction),
        (7, "ablation ordering", ablation_ordering),
        (8, "reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        failures += usize::from(!ok);
        println!(
            "[{}] {n}. {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
