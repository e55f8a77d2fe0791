use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{beam_target, resolve_moves, write_window, Dir, GridAgent};
use super::harvest::{push_agent_features, spawn_agents};
use super::{check_actions, EnvError, EnvSpec, Environment, EventKind, StepResult};

pub const STAY: usize = 0;
pub const HARVEST: usize = 5;
pub const CLEAN: usize = 6;
pub const BEAM: usize = 7;

/// Rows `0..river_rows` are the river; the last `orchard_rows` rows are the
/// orchard where apples grow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanUpConfig {
    pub rows: usize,
    pub cols: usize,
    pub agents: usize,
    pub horizon: usize,
    pub river_rows: usize,
    pub orchard_rows: usize,
    pub accretion: f64,
    pub clean_amount: f64,
    pub max_pollution: f64,
    /// Pollution at which spawning stops, as a fraction of `max_pollution`.
    pub threshold_fraction: f64,
    pub max_spawn: f64,
    pub initial_apples: usize,
    pub beam_length: usize,
    pub freeze_steps: u32,
    pub view_radius: usize,
    /// Rows beyond the river's edge from which the cleaning beam still reaches it.
    pub clean_reach: usize,
}

impl Default for CleanUpConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            agents: 2,
            horizon: 100,
            river_rows: 2,
            orchard_rows: 3,
            accretion: 0.5,
            clean_amount: 5.0,
            max_pollution: 25.0,
            threshold_fraction: 0.4,
            max_spawn: 0.1,
            initial_apples: 0,
            beam_length: 3,
            freeze_steps: 5,
            view_radius: 2,
            clean_reach: 2,
        }
    }
}

impl CleanUpConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.river_rows + self.orchard_rows >= self.rows {
            return Err(EnvError::Config("river and orchard must leave a corridor".into()));
        }
        if self.river_rows + self.clean_reach > self.rows - self.orchard_rows {
            return Err(EnvError::Config("the cleaning beam must not reach from the orchard".into()));
        }
        if self.threshold() <= 0.0 || !(0.0..=1.0).contains(&self.max_spawn) {
            return Err(EnvError::Config("bad pollution threshold or spawn rate".into()));
        }
        if self.initial_apples > self.orchard_rows * self.cols {
            return Err(EnvError::Config("too many initial apples for the orchard".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_fraction * self.max_pollution
    }

    /// Per-cell spawn probability at pollution `p`.
    pub fn spawn_probability(&self, p: f64) -> f64 {
        (self.max_spawn * (1.0 - p / self.threshold())).max(0.0)
    }

    pub fn in_river(&self, r: usize) -> bool {
        r < self.river_rows
    }

    /// Whether a clean action fired from row `r` reaches the river.
    pub fn can_clean(&self, r: usize) -> bool {
        r < self.river_rows + self.clean_reach
    }

    pub fn in_orchard(&self, r: usize) -> bool {
        r >= self.rows - self.orchard_rows
    }
}

/// One step of pollution dynamics: accretion, then `cleaners` cleaning
/// actions, clamped to `[0, max_pollution]`.
pub fn cleanup_pollution(pollution: f64, cleaners: usize, cfg: &CleanUpConfig) -> f64 {
    (pollution + cfg.accretion - cfg.clean_amount * cleaners as f64).clamp(0.0, cfg.max_pollution)
}

/// Public-goods gridworld: apples grow in the orchard only while the river is
/// kept clean.
#[derive(Clone, Debug)]
pub struct CleanUpMini {
    cfg: CleanUpConfig,
    spec: EnvSpec,
    agents: Vec<GridAgent>,
    apples: Vec<bool>,
    pollution: f64,
    rng: ChaCha8Rng,
    t: usize,
}

impl CleanUpMini {
    pub fn new(cfg: CleanUpConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let side = 2 * cfg.view_radius + 1;
        let spec = EnvSpec {
            name: "cleanup".into(),
            num_agents: cfg.agents,
            action_sizes: vec![8; cfg.agents],
            obs_len: 4 * side * side + 4 + 3 + 1,
            horizon: cfg.horizon,
        };
        spec.validate()?;
        let mut env = Self {
            spec,
            agents: Vec::new(),
            apples: vec![false; cfg.rows * cfg.cols],
            pollution: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &CleanUpConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[GridAgent] {
        &self.agents
    }

    pub fn pollution(&self) -> f64 {
        self.pollution
    }

    pub fn set_pollution(&mut self, p: f64) {
        self.pollution = p.clamp(0.0, self.cfg.max_pollution);
    }

    pub fn has_apple(&self, r: usize, c: usize) -> bool {
        self.apples[r * self.cfg.cols + c]
    }

    pub fn apple_count(&self) -> usize {
        self.apples.iter().filter(|&&a| a).count()
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
                let river = |r: usize, _c: usize| self.cfg.in_river(r);
                write_window(
                    &mut o,
                    a.pos(),
                    self.cfg.view_radius,
                    self.cfg.rows,
                    self.cfg.cols,
                    &[&apple, &other, &river],
                );
                push_agent_features(&mut o, a, self.cfg.rows, self.cfg.cols);
                o.push(self.pollution / self.cfg.max_pollution);
                o
            })
            .collect()
    }
}

impl Environment for CleanUpMini {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);
        let mut corridor: Vec<usize> = (self.cfg.river_rows * cols..(rows - self.cfg.orchard_rows) * cols).collect();
        corridor.shuffle(&mut self.rng);
        self.agents = spawn_agents(&mut self.rng, &corridor[..self.cfg.agents], cols);
        self.apples.iter_mut().for_each(|a| *a = false);
        let mut orchard: Vec<usize> = ((rows - self.cfg.orchard_rows) * cols..rows * cols).collect();
        orchard.shuffle(&mut self.rng);
        for &k in &orchard[..self.cfg.initial_apples] {
            self.apples[k] = true;
        }
        self.pollution = 0.0;
        self.t = 0;
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

        let mut cleaners = 0;
        for i in 0..m {
            if !acting[i] {
                continue;
            }
            let (r, c) = self.agents[i].pos();
            match actions[i] {
                HARVEST if self.apples[r * cols + c] => {
                    self.apples[r * cols + c] = false;
                    rewards[i] += 1.0;
                    events[i][EventKind::Harvest.index()] += 1;
                }
                CLEAN if self.cfg.can_clean(r) => {
                    cleaners += 1;
                    events[i][EventKind::Clean.index()] += 1;
                }
                BEAM => events[i][EventKind::Beam.index()] += 1,
                _ => {}
            }
        }

        let hits: Vec<usize> = (0..m)
            .filter(|&i| acting[i] && actions[i] == BEAM)
            .filter_map(|i| beam_target(&self.agents, i, self.cfg.beam_length, rows, cols))
            .collect();
        for (i, a) in self.agents.iter_mut().enumerate() {
            if !acting[i] {
                a.frozen -= 1;
            }
        }
        for j in hits {
            self.agents[j].frozen = self.cfg.freeze_steps;
        }

        self.pollution = cleanup_pollution(self.pollution, cleaners, &self.cfg);
        let p = self.cfg.spawn_probability(self.pollution);
        if p > 0.0 {
            for r in rows - self.cfg.orchard_rows..rows {
                for c in 0..cols {
                    let k = r * cols + c;
                    let occupied = self.agents.iter().any(|a| a.active() && a.pos() == (r, c));
                    if !self.apples[k] && !occupied && self.rng.gen::<f64>() < p {
                        self.apples[k] = true;
                    }
                }
            }
        }

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

    #[test]
    fn pollution_floor_and_threshold() {
        let cfg = CleanUpConfig::default();
        assert_eq!(cleanup_pollution(0.0, 1, &cfg), 0.0);
        let mut p = 0.0;
        for _ in 0..20 {
            p = cleanup_pollution(p, 0, &cfg);
        }
        assert_eq!(p, cfg.threshold());
        assert_eq!(cfg.spawn_probability(p), 0.0);
        assert_eq!(cleanup_pollution(24.9, 0, &cfg), 25.0);
    }

    #[test]
    fn no_spawn_above_threshold() {
        let mut e = CleanUpMini::new(CleanUpConfig::default()).unwrap();
        e.reset(1);
        e.set_pollution(20.0);
        let before = e.apple_count();
        e.step(&[STAY, STAY]).unwrap();
        assert_eq!(e.apple_count(), before);
    }

    #[test]
    fn clean_only_counts_within_reach() {
        let mut e = CleanUpMini::new(CleanUpConfig::default()).unwrap();
        e.reset(2);
        e.agents[0].row = 0;
        e.agents[1].row = 4;
        e.set_pollution(10.0);
        let res = e.step(&[CLEAN, CLEAN]).unwrap();
        assert_eq!(res.events[0][EventKind::Clean.index()], 1);
        assert_eq!(res.events[1][EventKind::Clean.index()], 0);
        assert_eq!(e.pollution(), 5.5);
    }
}
