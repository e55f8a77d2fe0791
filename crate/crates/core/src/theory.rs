//! Exact checks of the ε-closeness bound on small finite games by
//! enumerating every trajectory.
//!
//! Agent 0 is the focal agent with policy π(z); the remaining agents play
//! either π(z′) or an ε-close perturbation π′ of it. The quantity compared is
//! the exact expected shaped return J = Σ_τ p(τ)·ψ(R(τ), z), with ψ applied
//! to the summed returns of the trajectory.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvError, EventKind, FiniteMDP};
use crate::roles::{RoleKind, Shaper};

/// Largest number of trajectories [`exact_j`] will enumerate.
pub const ENUMERATION_BUDGET: f64 = 1e7;

#[derive(Debug, thiserror::Error)]
pub enum TheoryError {
    #[error("{0} trajectories exceed the enumeration budget")]
    Budget(f64),
    #[error("invalid input: {0}")]
    Usage(String),
    #[error("degenerate instance: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `probs[s][a]` = π(a | s), with an optional role tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
    pub role: Option<f64>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>, role: Option<f64>) -> Result<Self, TheoryError> {
        let p = Self { probs, role };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / actions as f64; actions]; states],
            role: None,
        }
    }

    /// Strictly positive random rows.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, role: Option<f64>, rng: &mut R) -> Self {
        let probs = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..actions).map(|_| rng.gen_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect();
        Self { probs, role }
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        for (s, row) in self.probs.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(TheoryError::Usage(format!("row {s} has a negative or non-finite entry")));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(TheoryError::Usage(format!("row {s} does not sum to 1")));
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.probs.len()
    }

    /// Largest `|other(a|s) / self(a|s) − 1|`.
    pub fn max_ratio_deviation(&self, other: &TabularPolicy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (q / p - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

/// Number of trajectories enumerated for `mdp`.
pub fn trajectory_count(mdp: &FiniteMDP) -> f64 {
    let s = mdp.num_states as f64;
    let j = mdp.joint_count() as f64;
    s * (j * s).powi(mdp.horizon as i32 - 1) * j
}

fn check_policies(mdp: &FiniteMDP, pols: &[&TabularPolicy]) -> Result<(), TheoryError> {
    if pols.len() != mdp.num_agents() {
        return Err(TheoryError::Usage(format!(
            "{} policies for {} agents",
            pols.len(),
            mdp.num_agents()
        )));
    }
    for (k, p) in pols.iter().enumerate() {
        p.validate()?;
        if p.states() != mdp.num_states || p.probs.iter().any(|r| r.len() != mdp.action_counts[k]) {
            return Err(TheoryError::Usage(format!("policy {k} does not match the game's shape")));
        }
    }
    Ok(())
}

fn joint_prob(mdp: &FiniteMDP, pols: &[&TabularPolicy], s: usize, joint: usize) -> f64 {
    mdp.decode_joint(joint)
        .iter()
        .zip(pols)
        .map(|(&a, p)| p.probs[s][a])
        .product()
}

/// Visits every trajectory under two policy profiles at once, calling
/// `leaf(p_a, p_b, returns)` with both trajectory probabilities.
fn enumerate_pair(
    mdp: &FiniteMDP,
    a: &[&TabularPolicy],
    b: &[&TabularPolicy],
    mut leaf: impl FnMut(f64, f64, &[f64]),
) -> Result<(), TheoryError> {
    let count = trajectory_count(mdp);
    if count > ENUMERATION_BUDGET {
        return Err(TheoryError::Budget(count));
    }
    check_policies(mdp, a)?;
    check_policies(mdp, b)?;
    let m = mdp.num_agents();
    let jc = mdp.joint_count();
    // Joint-action probabilities per state for both profiles.
    let pa: Vec<Vec<f64>> = (0..mdp.num_states)
        .map(|s| (0..jc).map(|j| joint_prob(mdp, a, s, j)).collect())
        .collect();
    let pb: Vec<Vec<f64>> = (0..mdp.num_states)
        .map(|s| (0..jc).map(|j| joint_prob(mdp, b, s, j)).collect())
        .collect();

    struct Walk<'a, F> {
        mdp: &'a FiniteMDP,
        pa: &'a [Vec<f64>],
        pb: &'a [Vec<f64>],
        returns: Vec<f64>,
        leaf: F,
    }
    impl<F: FnMut(f64, f64, &[f64])> Walk<'_, F> {
        fn visit(&mut self, t: usize, s: usize, prob_a: f64, prob_b: f64) {
            let jc = self.mdp.joint_count();
            let m = self.returns.len();
            for j in 0..jc {
                let qa = prob_a * self.pa[s][j];
                let qb = prob_b * self.pb[s][j];
                for i in 0..m {
                    self.returns[i] += self.mdp.reward(i, s, j);
                }
                if t + 1 == self.mdp.horizon {
                    (self.leaf)(qa, qb, &self.returns);
                } else {
                    for s2 in 0..self.mdp.num_states {
                        let p = self.mdp.transition(s, j, s2);
                        self.visit(t + 1, s2, qa * p, qb * p);
                    }
                }
                for i in 0..m {
                    self.returns[i] -= self.mdp.reward(i, s, j);
                }
            }
        }
    }
    let mut w = Walk {
        mdp,
        pa: &pa,
        pb: &pb,
        returns: vec![0.0; m],
        leaf: &mut leaf,
    };
    for s0 in 0..mdp.num_states {
        let p0 = mdp.initial[s0];
        w.visit(0, s0, p0, p0);
    }
    Ok(())
}

fn shaped_return(shaper: &Shaper, z: f64, returns: &[f64]) -> f64 {
    shaper.shape(&RoleKind::SvoAngle(z), returns, 0, &[0; EventKind::COUNT])
}

/// Exact expected shaped return of agent 0 under π(z) against `others`,
/// with the trajectory probability mass.
pub fn exact_j_with_mass(
    mdp: &FiniteMDP,
    pol_i: &TabularPolicy,
    others: &[TabularPolicy],
    shaper: &Shaper,
    z: f64,
) -> Result<(f64, f64), TheoryError> {
    let pols: Vec<&TabularPolicy> = std::iter::once(pol_i).chain(others).collect();
    let mut j = 0.0;
    let mut mass = 0.0;
    enumerate_pair(mdp, &pols, &pols, |p, _, r| {
        j += p * shaped_return(shaper, z, r);
        mass += p;
    })?;
    Ok((j, mass))
}

pub fn exact_j(
    mdp: &FiniteMDP,
    pol_i: &TabularPolicy,
    others: &[TabularPolicy],
    shaper: &Shaper,
    z: f64,
) -> Result<f64, TheoryError> {
    Ok(exact_j_with_mass(mdp, pol_i, others, shaper, z)?.0)
}

/// Multiplies each entry of `base` by noise in `[1 − ε/2, 1 + ε/2]` and
/// renormalizes. The realized `ε_actual = max |π′/π − 1|` is returned and is
/// certified `< ε`; draws that violate it are retried with halved noise.
pub fn make_epsilon_close<R: Rng + ?Sized>(
    base: &TabularPolicy,
    epsilon: f64,
    rng: &mut R,
) -> Result<(TabularPolicy, f64), TheoryError> {
    base.validate()?;
    if base.probs.iter().flatten().any(|&p| p <= 0.0) {
        return Err(TheoryError::Usage("base policy has a zero entry; ratios are undefined".into()));
    }
    if epsilon == 0.0 {
        return Ok((base.clone(), 0.0));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(TheoryError::Usage(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let mut width = epsilon;
    loop {
        let probs: Vec<Vec<f64>> = base
            .probs
            .iter()
            .map(|row| {
                let noisy: Vec<f64> = row
                    .iter()
                    .map(|&p| p * (1.0 + rng.gen_range(-width / 2.0..=width / 2.0)))
                    .collect();
                let total: f64 = noisy.iter().sum();
                noisy.into_iter().map(|v| v / total).collect()
            })
            .collect();
        let out = TabularPolicy {
            probs,
            role: base.role,
        };
        let actual = base.max_ratio_deviation(&out);
        if actual < epsilon {
            return Ok((out, actual));
        }
        width /= 2.0;
    }
}

/// One perturbation trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub trial: usize,
    pub epsilon_nominal: f64,
    pub epsilon_actual: f64,
    pub horizon: usize,
    /// J(π(z), π′).
    pub j_perturbed: f64,
    /// J(π(z), π(z′)).
    pub j_base: f64,
    pub ratio_deviation: f64,
    /// ε_actual · n, with n the number of perturbed action factors per trajectory.
    pub linear_bound: f64,
    /// (1 + ε_actual)^n − 1.
    pub exact_bound: f64,
    pub mass_perturbed: f64,
    pub mass_base: f64,
    /// Extremes of p′(τ)/p(τ) over trajectories with p(τ) > 0.
    pub trajectory_ratio_min: f64,
    pub trajectory_ratio_max: f64,
    pub pass_linear: bool,
    pub pass_exact: bool,
    pub pass_mass: bool,
    pub pass_trajectory: bool,
}

impl EpsilonReport {
    pub fn passed(&self) -> bool {
        self.pass_linear && self.pass_exact && self.pass_mass && self.pass_trajectory
    }
}

/// Compares J under the base partner profile and under an ε-close
/// perturbation of it, with the focal policy fixed.
pub fn compare_profiles(
    mdp: &FiniteMDP,
    focal: &TabularPolicy,
    base: &[TabularPolicy],
    perturbed: &[TabularPolicy],
    shaper: &Shaper,
    z: f64,
    epsilon_nominal: f64,
    epsilon_actual: f64,
    trial: usize,
) -> Result<EpsilonReport, TheoryError> {
    let a: Vec<&TabularPolicy> = std::iter::once(focal).chain(base).collect();
    let b: Vec<&TabularPolicy> = std::iter::once(focal).chain(perturbed).collect();
    let (mut jb, mut jp, mut mb, mut mp) = (0.0, 0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut negative = false;
    enumerate_pair(mdp, &a, &b, |pa, pb, r| {
        let psi = shaped_return(shaper, z, r);
        negative |= psi < 0.0;
        jb += pa * psi;
        jp += pb * psi;
        mb += pa;
        mp += pb;
        if pa > 0.0 {
            lo = lo.min(pb / pa);
            hi = hi.max(pb / pa);
        }
    })?;
    if negative {
        return Err(TheoryError::Degenerate("shaped returns must be nonnegative".into()));
    }
    if jb == 0.0 {
        return Err(TheoryError::Degenerate("J under the base profile is 0".into()));
    }
    let n = (mdp.horizon * base.len()) as i32;
    let dev = (jp / jb - 1.0).abs();
    let linear = epsilon_actual * f64::from(n);
    let exact = (1.0 + epsilon_actual).powi(n) - 1.0;
    // Rounding slack for quantities that are equal in exact arithmetic.
    let slack = 1e-12;
    Ok(EpsilonReport {
        trial,
        epsilon_nominal,
        epsilon_actual,
        horizon: mdp.horizon,
        j_perturbed: jp,
        j_base: jb,
        ratio_deviation: dev,
        linear_bound: linear,
        exact_bound: exact,
        mass_perturbed: mp,
        mass_base: mb,
        trajectory_ratio_min: lo,
        trajectory_ratio_max: hi,
        pass_linear: dev <= linear + slack,
        pass_exact: dev <= exact + slack,
        pass_mass: (mb - 1.0).abs() <= 1e-9 && (mp - 1.0).abs() <= 1e-9,
        pass_trajectory: lo >= (1.0 - epsilon_actual).powi(n) - slack && hi <= (1.0 + epsilon_actual).powi(n) + slack,
    })
}

/// `trials` independent draws of π(z), π(z′) and an ε-close π′ on one game.
pub fn check_theorem<R: Rng + ?Sized>(
    mdp: &FiniteMDP,
    shaper: &Shaper,
    z: f64,
    z_prime: f64,
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<EpsilonReport>, TheoryError> {
    let s = mdp.num_states;
    (0..trials)
        .map(|t| {
            let focal = TabularPolicy::random(s, mdp.action_counts[0], Some(z), rng);
            let mut base = Vec::new();
            let mut pert = Vec::new();
            let mut eps = 0.0f64;
            for &n in &mdp.action_counts[1..] {
                let b = TabularPolicy::random(s, n, Some(z_prime), rng);
                let (p, e) = make_epsilon_close(&b, epsilon, rng)?;
                eps = eps.max(e);
                base.push(b);
                pert.push(p);
            }
            compare_profiles(mdp, &focal, &base, &pert, shaper, z, epsilon, eps, t)
        })
        .collect()
}

/// Random game with strictly positive initial and transition rows and
/// rewards uniform in `[0, 1]`.
pub fn random_mdp<R: Rng + ?Sized>(
    states: usize,
    action_counts: Vec<usize>,
    horizon: usize,
    rng: &mut R,
) -> Result<FiniteMDP, TheoryError> {
    let j: usize = action_counts.iter().product();
    let mut row = |n: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    };
    let initial = row(states);
    let transitions: Vec<f64> = (0..states * j).flat_map(|_| row(states)).collect();
    let rewards = (0..action_counts.len())
        .map(|_| (0..states * j).map(|_| rng.gen_range(0.0..=1.0)).collect())
        .collect();
    Ok(FiniteMDP::new(states, action_counts, transitions, rewards, initial, horizon)?)
}

/// Settings of a batch verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub mdps: usize,
    pub epsilon: f64,
    pub horizon: usize,
    pub max_states: usize,
    pub actions: usize,
    pub agents: usize,
    /// SVO angles of the focal role and of the partner role.
    pub z: f64,
    pub z_prime: f64,
    pub w: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            mdps: 100,
            epsilon: 0.01,
            horizon: 4,
            max_states: 3,
            actions: 2,
            agents: 2,
            z: std::f64::consts::FRAC_PI_4,
            z_prime: 0.0,
            w: crate::roles::DEFAULT_W,
        }
    }
}

/// One random game per trial, state counts drawn from `1..=max_states`.
pub fn verify_random<R: Rng + ?Sized>(cfg: &VerifyConfig, rng: &mut R) -> Result<Vec<EpsilonReport>, TheoryError> {
    if cfg.agents < 2 || cfg.max_states == 0 || cfg.actions == 0 {
        return Err(TheoryError::Usage("need at least 2 agents, 1 state and 1 action".into()));
    }
    let shaper = Shaper::Svo { w: cfg.w };
    (0..cfg.mdps)
        .map(|t| {
            let s = rng.gen_range(1..=cfg.max_states);
            let mdp = random_mdp(s, vec![cfg.actions; cfg.agents], cfg.horizon, rng)?;
            let mut r = check_theorem(&mdp, &shaper, cfg.z, cfg.z_prime, cfg.epsilon, 1, rng)?.remove(0);
            r.trial = t;
            Ok(r)
        })
        .collect()
}

pub fn write_reports_csv<W: Write>(reports: &[EpsilonReport], w: W) -> Result<(), TheoryError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in reports {
        wr.serialize(r)?;
    }
    if reports.is_empty() {
        wr.write_record([
            "trial",
            "epsilon_nominal",
            "epsilon_actual",
            "horizon",
            "j_perturbed",
            "j_base",
            "ratio_deviation",
            "linear_bound",
            "exact_bound",
            "mass_perturbed",
            "mass_base",
            "trajectory_ratio_min",
            "trajectory_ratio_max",
            "pass_linear",
            "pass_exact",
            "pass_mass",
            "pass_trajectory",
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix_game(a: [[f64; 2]; 2]) -> FiniteMDP {
        let rewards = vec![a.iter().flatten().copied().collect(), vec![0.0; 4]];
        FiniteMDP::new(1, vec![2, 2], vec![1.0; 4], rewards, vec![1.0], 1).unwrap()
    }

    #[test]
    fn uniform_one_shot_is_mean_payoff() {
        let mdp = matrix_game([[1.0, 2.0], [3.0, 6.0]]);
        let u = TabularPolicy::uniform(1, 2);
        let j = exact_j(&mdp, &u, &[u.clone()], &Shaper::Raw, 0.0).unwrap();
        assert!((j - 3.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_play_is_one_trajectory() {
        let mdp = matrix_game([[1.0, 2.0], [3.0, 6.0]]);
        let p = TabularPolicy::new(vec![vec![0.0, 1.0]], None).unwrap();
        let q = TabularPolicy::new(vec![vec![1.0, 0.0]], None).unwrap();
        assert_eq!(exact_j(&mdp, &p, &[q], &Shaper::Raw, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = TabularPolicy::random(3, 2, None, &mut rng);
        let (p, e) = make_epsilon_close(&base, 0.0, &mut rng).unwrap();
        assert_eq!(p, base);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn zero_entries_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = TabularPolicy::new(vec![vec![0.0, 1.0]], None).unwrap();
        assert!(matches!(make_epsilon_close(&base, 0.1, &mut rng), Err(TheoryError::Usage(_))));
    }

    #[test]
    fn budget_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(3, vec![2, 2], 12, &mut rng).unwrap();
        let u = TabularPolicy::uniform(3, 2);
        assert!(matches!(
            exact_j(&mdp, &u, &[u.clone()], &Shaper::Raw, 0.0),
            Err(TheoryError::Budget(_))
        ));
    }

    #[test]
    fn identical_profiles_have_zero_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = random_mdp(2, vec![2, 2], 3, &mut rng).unwrap();
        let f = TabularPolicy::random(2, 2, None, &mut rng);
        let b = TabularPolicy::random(2, 2, None, &mut rng);
        let r = compare_profiles(&mdp, &f, &[b.clone()], &[b], &Shaper::Raw, 0.0, 0.01, 0.0, 0).unwrap();
        assert_eq!(r.ratio_deviation, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn signed_returns_are_rejected() {
        let mdp = matrix_game([[-1.0, -1.0], [-1.0, -1.0]]);
        let u = TabularPolicy::uniform(1, 2);
        let err = compare_profiles(&mdp, &u, &[u.clone()], &[u.clone()], &Shaper::Raw, 0.0, 0.0, 0.0, 0);
        assert!(matches!(err, Err(TheoryError::Degenerate(_))));
    }
}
