use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{beam_target, moore_count, resolve_moves, write_window, Dir, GridAgent};
use super::{check_actions, EnvError, EnvSpec, Environment, EventKind, StepResult};

pub const STAY: usize = 0;
pub const HARVEST: usize = 5;
pub const BEAM: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub rows: usize,
    pub cols: usize,
    pub agents: usize,
    pub horizon: usize,
    pub initial_apples: usize,
    /// Spawn probability by number of apple neighbours; the last entry covers
    /// every larger count.
    pub regrowth: Vec<f64>,
    pub beam_length: usize,
    pub freeze_steps: u32,
    pub view_radius: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            agents: 2,
            horizon: 100,
            initial_apples: 16,
            regrowth: vec![0.0, 0.01, 0.05, 0.1],
            beam_length: 3,
            freeze_steps: 5,
            view_radius: 2,
        }
    }
}

impl HarvestConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.regrowth.is_empty() || self.regrowth.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EnvError::Config("regrowth probabilities must lie in [0, 1]".into()));
        }
        if self.regrowth.windows(2).any(|w| w[1] < w[0]) {
            return Err(EnvError::Config("regrowth table must be nondecreasing".into()));
        }
        if self.initial_apples + self.agents > self.rows * self.cols {
            return Err(EnvError::Config("grid too small for apples and agents".into()));
        }
        Ok(())
    }

    pub fn regrowth_probability(&self, neighbours: usize) -> f64 {
        self.regrowth[neighbours.min(self.regrowth.len() - 1)]
    }
}

/// Spawns apples on empty, unblocked cells with a probability given by the
/// table entry for the cell's Moore-neighbour apple count. Spawning is
/// simultaneous: counts are taken before any new apple appears. Returns the
/// number of apples added.
pub fn harvest_regrowth<R: Rng + ?Sized>(
    apples: &mut [bool],
    rows: usize,
    cols: usize,
    table: &[f64],
    rng: &mut R,
    blocked: impl Fn(usize) -> bool,
) -> usize {
    let before = apples.to_vec();
    let mut spawned = 0;
    for k in 0..apples.len() {
        if before[k] || blocked(k) {
            continue;
        }
        let n = moore_count(&before, rows, cols, k / cols, k % cols);
        let p = table[n.min(table.len() - 1)];
        if p > 0.0 && rng.gen::<f64>() < p {
            apples[k] = true;
            spawned += 1;
        }
    }
    spawned
}

/// Common-pool resource gridworld: apples regrow only near other apples.
#[derive(Clone, Debug)]
pub struct HarvestMini {
    cfg: HarvestConfig,
    spec: EnvSpec,
    agents: Vec<GridAgent>,
    apples: Vec<bool>,
    rng: ChaCha8Rng,
    t: usize,
    spawned_total: usize,
    harvested_total: usize,
}

impl HarvestMini {
    pub fn new(cfg: HarvestConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let side = 2 * cfg.view_radius + 1;
        let spec = EnvSpec {
            name: "harvest".into(),
            num_agents: cfg.agents,
            action_sizes: vec![7; cfg.agents],
            obs_len: 3 * side * side + 4 + 3,
            horizon: cfg.horizon,
        };
        spec.validate()?;
        let mut env = Self {
            spec,
            agents: Vec::new(),
            apples: vec![false; cfg.rows * cfg.cols],
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
            spawned_total: 0,
            harvested_total: 0,
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &HarvestConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[GridAgent] {
        &self.agents
    }

    pub fn has_apple(&self, r: usize, c: usize) -> bool {
        self.apples[r * self.cfg.cols + c]
    }

    pub fn apple_count(&self) -> usize {
        self.apples.iter().filter(|&&a| a).count()
    }

    pub fn spawned_total(&self) -> usize {
        self.spawned_total
    }

    pub fn harvested_total(&self) -> usize {
        self.harvested_total
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..self.agents.len())
            .map(|i| {
                let a = &self.agents[i];
                if !a.active() {
                    return vec![0.0; self.spec.obs_len];
                }
                let mut o = Vec::with_capacity(self.spec.obs_len);
                let apple = |r: usize, c: usize| self.has_apple(r, c);
                let other = |r: usize, c: usize| {
                    self.agents
                        .iter()
                        .enumerate()
                        .any(|(j, b)| j != i && b.active() && b.pos() == (r, c))
                };
                write_window(&mut o, a.pos(), self.cfg.view_radius, self.cfg.rows, self.cfg.cols, &[&apple, &other]);
                push_agent_features(&mut o, a, self.cfg.rows, self.cfg.cols);
                o
            })
            .collect()
    }
}

pub(crate) fn push_agent_features(o: &mut Vec<f64>, a: &GridAgent, rows: usize, cols: usize) {
    let mut facing = [0.0; 4];
    facing[a.facing.index()] = 1.0;
    o.extend_from_slice(&facing);
    o.push(a.last_reward);
    o.push(a.row as f64 / (rows.max(2) - 1) as f64);
    o.push(a.col as f64 / (cols.max(2) - 1) as f64);
}

pub(crate) fn spawn_agents(rng: &mut ChaCha8Rng, cells: &[usize], cols: usize) -> Vec<GridAgent> {
    cells
        .iter()
        .map(|&k| GridAgent {
            row: k / cols,
            col: k % cols,
            facing: Dir::ALL[rng.gen_range(0..4)],
            frozen: 0,
            last_reward: 0.0,
        })
        .collect()
}

impl Environment for HarvestMini {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<usize> = (0..self.cfg.rows * self.cfg.cols).collect();
        cells.shuffle(&mut self.rng);
        let m = self.cfg.agents;
        self.agents = spawn_agents(&mut self.rng, &cells[..m], self.cfg.cols);
        self.apples.iter_mut().for_each(|a| *a = false);
        for &k in &cells[m..m + self.cfg.initial_apples] {
            self.apples[k] = true;
        }
        self.t = 0;
        self.spawned_total = 0;
        self.harvested_total = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.horizon {
            return Err(EnvError::AfterDone);
        }
        check_actions(&self.spec, actions)?;
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);
        let m = self.agents.len();
        let acting: Vec<bool> = self.agents.iter().map(GridAgent::active).collect();
        let mut rewards = vec![0.0; m];
        let mut events = vec![[0u32; EventKind::COUNT]; m];

        let moves: Vec<Option<Dir>> = actions
            .iter()
            .zip(&acting)
            .map(|(&a, &on)| if on { Dir::from_move_action(a) } else { None })
            .collect();
        resolve_moves(&mut self.agents, &moves, rows, cols, |_, _| true);

        for i in 0..m {
            if acting[i] && actions[i] == HARVEST {
                let k = self.agents[i].row * cols + self.agents[i].col;
                if self.apples[k] {
                    self.apples[k] = false;
                    rewards[i] += 1.0;
                    self.harvested_total += 1;
                    events[i][EventKind::Harvest.index()] += 1;
                }
            }
        }

        let hits: Vec<Option<usize>> = (0..m)
            .map(|i| {
                (acting[i] && actions[i] == BEAM)
                    .then(|| beam_target(&self.agents, i, self.cfg.beam_length, rows, cols))
                    .flatten()
            })
            .collect();
        for i in 0..m {
            if acting[i] && actions[i] == BEAM {
                events[i][EventKind::Beam.index()] += 1;
            }
        }
        // Agents frozen before this step count down; fresh hits start a full freeze.
        for (i, a) in self.agents.iter_mut().enumerate() {
            if !acting[i] {
                a.frozen -= 1;
            }
        }
        for j in hits.into_iter().flatten() {
            self.agents[j].frozen = self.cfg.freeze_steps;
        }

        let occupied: Vec<usize> = self
            .agents
            .iter()
            .filter(|a| a.active())
            .map(|a| a.row * cols + a.col)
            .collect();
        self.spawned_total += harvest_regrowth(
            &mut self.apples,
            rows,
            cols,
            &self.cfg.regrowth,
            &mut self.rng,
            |k| occupied.contains(&k),
        );

        for (a, &r) in self.agents.iter_mut().zip(&rewards) {
            a.last_reward = r;
        }
        self.t += 1;
        Ok(StepResult {
            observations: self.observe(),
            rewards,
            events,
            done: self.t == self.spec.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> HarvestMini {
        HarvestMini::new(HarvestConfig::default()).unwrap()
    }

    #[test]
    fn reset_places_configured_apples() {
        let mut e = env();
        for seed in 0..20 {
            e.reset(seed);
            assert_eq!(e.apple_count(), e.config().initial_apples);
        }
    }

    #[test]
    fn same_seed_same_observations() {
        let mut e = env();
        let a = e.reset(42);
        let b = e.reset(42);
        assert_eq!(a, b);
    }

    #[test]
    fn harvesting_an_apple_pays_one() {
        let mut e = env();
        e.reset(3);
        let (r, c) = e.agents[0].pos();
        e.apples[r * 8 + c] = true;
        let res = e.step(&[HARVEST, STAY]).unwrap();
        assert_eq!(res.rewards[0], 1.0);
        assert!(!e.has_apple(r, c) || e.spawned_total() > 0);
        assert_eq!(res.events[0][EventKind::Harvest.index()], 1);
    }

    #[test]
    fn regrowth_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let table = [0.0, 0.01, 0.05, 0.1];
        let mut empty = vec![false; 16];
        assert_eq!(harvest_regrowth(&mut empty, 4, 4, &table, &mut rng, |_| false), 0);
        let mut full = vec![true; 16];
        assert_eq!(harvest_regrowth(&mut full, 4, 4, &table, &mut rng, |_| false), 0);
        assert!(full.iter().all(|&a| a));
    }

    #[test]
    fn beam_freezes_target_for_freeze_steps() {
        let mut e = env();
        e.reset(0);
        e.agents[0].row = 2;
        e.agents[0].col = 2;
        e.agents[0].facing = Dir::Right;
        e.agents[1].row = 2;
        e.agents[1].col = 4;
        e.step(&[BEAM, STAY]).unwrap();
        assert_eq!(e.agents[1].frozen, 5);
        for k in 0..5 {
            let before = e.agents[1].clone();
            let res = e.step(&[STAY, HARVEST]).unwrap();
            assert!(res.observations[1].iter().all(|&v| v == 0.0) || k == 4);
            assert_eq!(e.agents[1].pos(), before.pos());
            assert_eq!(res.rewards[1], 0.0);
        }
        assert!(e.agents[1].active());
    }
}
