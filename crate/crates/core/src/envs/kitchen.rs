use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{offset, resolve_moves, Dir, GridAgent};
use super::{check_actions, EnvError, EnvSpec, Environment, EventKind, StepResult};

pub const STAY: usize = 0;
pub const INTERACT: usize = 5;

const LAYOUT: [&str; 5] = ["#O#P###", "#.....#", "#.....#", "#.....#", "##D#S##"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Wall,
    OnionDispenser,
    Pot,
    DishDispenser,
    Serve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Held {
    Nothing,
    Onion,
    Dish,
    Soup,
}

impl Held {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KitchenConfig {
    pub horizon: usize,
    /// Onions needed to start cooking.
    pub recipe_onions: u32,
    pub cook_time: u32,
    pub delivery_reward: f64,
}

impl Default for KitchenConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            recipe_onions: 3,
            cook_time: 5,
            delivery_reward: 10.0,
        }
    }
}

/// Single-recipe cooking layout on a 5×7 map.
///
/// Interacting with the faced tile picks up from dispensers, places onions in
/// the pot, takes finished soup with a dish, or delivers soup at the serving
/// tile. A delivery pays the team reward to every agent.
#[derive(Clone, Debug)]
pub struct KitchenMini {
    cfg: KitchenConfig,
    spec: EnvSpec,
    tiles: Vec<Tile>,
    agents: Vec<GridAgent>,
    held: Vec<Held>,
    pot_onions: u32,
    cook_left: u32,
    rng: ChaCha8Rng,
    t: usize,
}

pub const ROWS: usize = LAYOUT.len();
pub const COLS: usize = 7;

impl KitchenMini {
    pub fn new(cfg: KitchenConfig) -> Result<Self, EnvError> {
        if cfg.recipe_onions == 0 {
            return Err(EnvError::Config("recipe needs at least one onion".into()));
        }
        let tiles = LAYOUT
            .iter()
            .flat_map(|row| {
                row.chars().map(|ch| match ch {
                    '.' => Tile::Floor,
                    'O' => Tile::OnionDispenser,
                    'P' => Tile::Pot,
                    'D' => Tile::DishDispenser,
                    'S' => Tile::Serve,
                    _ => Tile::Wall,
                })
            })
            .collect();
        let cells = ROWS * COLS;
        let spec = EnvSpec {
            name: "kitchen".into(),
            num_agents: 2,
            action_sizes: vec![6, 6],
            obs_len: 2 * cells + 4 + 4 + 4 + 3 + 1,
            horizon: cfg.horizon,
        };
        spec.validate()?;
        let mut env = Self {
            cfg,
            spec,
            tiles,
            agents: Vec::new(),
            held: vec![Held::Nothing; 2],
            pot_onions: 0,
            cook_left: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &KitchenConfig {
        &self.cfg
    }

    pub fn tile(&self, r: usize, c: usize) -> Tile {
        self.tiles[r * COLS + c]
    }

    pub fn agents(&self) -> &[GridAgent] {
        &self.agents
    }

    pub fn held(&self, agent: usize) -> Held {
        self.held[agent]
    }

    pub fn pot_onions(&self) -> u32 {
        self.pot_onions
    }

    pub fn pot_cooking(&self) -> bool {
        self.pot_onions == self.cfg.recipe_onions && self.cook_left > 0
    }

    pub fn pot_ready(&self) -> bool {
        self.pot_onions == self.cfg.recipe_onions && self.cook_left == 0
    }

    /// Places agents and held items directly; used by tests and scripted setups.
    pub fn set_agent(&mut self, agent: usize, row: usize, col: usize, facing: Dir, held: Held) {
        let a = &mut self.agents[agent];
        a.row = row;
        a.col = col;
        a.facing = facing;
        self.held[agent] = held;
    }

    pub fn set_pot(&mut self, onions: u32, cook_left: u32) {
        self.pot_onions = onions.min(self.cfg.recipe_onions);
        self.cook_left = cook_left;
    }

    fn faced(&self, agent: usize) -> Option<(usize, usize)> {
        let a = &self.agents[agent];
        offset(a.pos(), a.facing.delta(), ROWS, COLS)
    }

    /// Next action that moves `agent` toward interacting with the nearest tile
    /// of kind `target`: a move along a shortest path, a turn, or `INTERACT`
    /// once the tile is faced. Returns `STAY` if no such tile is reachable.
    pub fn action_toward(&self, agent: usize, target: Tile) -> usize {
        if self.faced(agent).map(|(r, c)| self.tile(r, c)) == Some(target) {
            return INTERACT;
        }
        let start = self.agents[agent].pos();
        let other: Vec<(usize, usize)> = self
            .agents
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != agent)
            .map(|(_, a)| a.pos())
            .collect();
        // Breadth-first search over floor cells; remember the first move taken.
        let mut first: Vec<Option<Option<Dir>>> = vec![None; ROWS * COLS];
        let mut queue = VecDeque::new();
        first[start.0 * COLS + start.1] = Some(None);
        queue.push_back(start);
        while let Some(pos) = queue.pop_front() {
            let how = first[pos.0 * COLS + pos.1].expect("visited");
            for d in Dir::ALL {
                let Some(n) = offset(pos, d.delta(), ROWS, COLS) else { continue };
                if self.tile(n.0, n.1) == target {
                    // Standing at `pos`, facing `d` reaches the target.
                    return match how {
                        Some(step) => step.move_action(),
                        None => d.move_action(),
                    };
                }
                if self.tile(n.0, n.1) != Tile::Floor || other.contains(&n) || first[n.0 * COLS + n.1].is_some() {
                    continue;
                }
                first[n.0 * COLS + n.1] = Some(Some(how.unwrap_or(d)));
                queue.push_back(n);
            }
        }
        STAY
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let cells = ROWS * COLS;
        (0..2)
            .map(|i| {
                let j = 1 - i;
                let mut o = vec![0.0; self.spec.obs_len];
                let me = &self.agents[i];
                let you = &self.agents[j];
                o[me.row * COLS + me.col] = 1.0;
                o[cells + you.row * COLS + you.col] = 1.0;
                let mut off = 2 * cells;
                o[off + me.facing.index()] = 1.0;
                off += 4;
                o[off + self.held[i].index()] = 1.0;
                off += 4;
                o[off + self.held[j].index()] = 1.0;
                off += 4;
                o[off] = self.pot_onions as f64 / self.cfg.recipe_onions as f64;
                o[off + 1] = f64::from(u8::from(self.pot_cooking()));
                o[off + 2] = f64::from(u8::from(self.pot_ready()));
                o[off + 3] = me.last_reward / self.cfg.delivery_reward;
                o
            })
            .collect()
    }
}

/// Events produced by `agent` interacting with the tile it faces.
pub(crate) fn interact(env: &mut KitchenMini, agent: usize, events: &mut [u32; EventKind::COUNT]) -> bool {
    let Some((r, c)) = env.faced(agent) else { return false };
    let recipe = env.cfg.recipe_onions;
    match (env.tile(r, c), env.held[agent]) {
        (Tile::OnionDispenser, Held::Nothing) => {
            env.held[agent] = Held::Onion;
            events[EventKind::PickupIngredient.index()] += 1;
        }
        // Dish pickups count as dispenser pickups too.
        (Tile::DishDispenser, Held::Nothing) => {
            env.held[agent] = Held::Dish;
            events[EventKind::PickupIngredient.index()] += 1;
        }
        (Tile::Pot, Held::Onion) if env.pot_onions < recipe => {
            env.held[agent] = Held::Nothing;
            env.pot_onions += 1;
            events[EventKind::PlaceInPot.index()] += 1;
            if env.pot_onions == recipe {
                env.cook_left = env.cfg.cook_time;
            }
        }
        (Tile::Pot, Held::Dish) if env.pot_ready() => {
            env.held[agent] = Held::Soup;
            env.pot_onions = 0;
            env.cook_left = 0;
            events[EventKind::PickupSoup.index()] += 1;
        }
        (Tile::Serve, Held::Soup) => {
            env.held[agent] = Held::Nothing;
            events[EventKind::Delivery.index()] += 1;
            return true;
        }
        _ => {}
    }
    false
}

impl Environment for KitchenMini {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let mut floor: Vec<usize> = (0..ROWS * COLS).filter(|&k| self.tiles[k] == Tile::Floor).collect();
        floor.shuffle(&mut self.rng);
        self.agents = floor[..2]
            .iter()
            .map(|&k| GridAgent {
                row: k / COLS,
                col: k % COLS,
                facing: Dir::ALL[self.rng.gen_range(0..4)],
                frozen: 0,
                last_reward: 0.0,
            })
            .collect();
        self.held = vec![Held::Nothing; 2];
        self.pot_onions = 0;
        self.cook_left = 0;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.horizon {
            return Err(EnvError::AfterDone);
        }
        check_actions(&self.spec, actions)?;
        // The pot finishes cooking at the start of a step.
        if self.pot_cooking() {
            self.cook_left -= 1;
        }
        let moves: Vec<Option<Dir>> = actions.iter().map(|&a| Dir::from_move_action(a)).collect();
        let tiles = self.tiles.clone();
        resolve_moves(&mut self.agents, &moves, ROWS, COLS, |r, c| tiles[r * COLS + c] == Tile::Floor);

        let mut events = vec![[0u32; EventKind::COUNT]; 2];
        let mut delivered = false;
        for (i, &a) in actions.iter().enumerate() {
            if a == INTERACT {
                delivered |= interact(self, i, &mut events[i]);
            }
        }
        let deliveries: u32 = events.iter().map(|e| e[EventKind::Delivery.index()]).sum();
        let team = if delivered { self.cfg.delivery_reward * deliveries as f64 } else { 0.0 };
        let rewards = vec![team; 2];
        for a in &mut self.agents {
            a.last_reward = team;
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

    fn env() -> KitchenMini {
        let mut e = KitchenMini::new(KitchenConfig::default()).unwrap();
        e.reset(0);
        e
    }

    #[test]
    fn placing_onion_in_pot() {
        let mut e = env();
        e.set_agent(0, 1, 3, Dir::Up, Held::Onion);
        e.set_agent(1, 3, 1, Dir::Down, Held::Nothing);
        let res = e.step(&[INTERACT, STAY]).unwrap();
        assert_eq!(res.events[0][EventKind::PlaceInPot.index()], 1);
        assert_eq!(e.pot_onions(), 1);
        assert_eq!(res.rewards, vec![0.0, 0.0]);
    }

    #[test]
    fn delivery_pays_ten() {
        let mut e = env();
        e.set_agent(0, 3, 4, Dir::Down, Held::Soup);
        e.set_agent(1, 1, 1, Dir::Up, Held::Nothing);
        let res = e.step(&[INTERACT, STAY]).unwrap();
        assert_eq!(res.events[0][EventKind::Delivery.index()], 1);
        assert_eq!(res.rewards, vec![10.0, 10.0]);
    }

    #[test]
    fn no_interaction_no_events() {
        let mut e = env();
        let res = e.step(&[1, 2]).unwrap();
        assert!(res.events.iter().all(|ev| ev.iter().all(|&c| c == 0)));
    }

    #[test]
    fn full_cycle_by_path_following() {
        let mut e = env();
        e.set_agent(1, 3, 5, Dir::Down, Held::Nothing);
        let mut delivered = 0;
        for _ in 0..100 {
            let target = match e.held(0) {
                Held::Nothing if e.pot_onions() < 3 => Tile::OnionDispenser,
                Held::Nothing => Tile::DishDispenser,
                Held::Onion => Tile::Pot,
                Held::Dish => Tile::Pot,
                Held::Soup => Tile::Serve,
            };
            let a = e.action_toward(0, target);
            let res = e.step(&[a, STAY]).unwrap();
            delivered += res.events[0][EventKind::Delivery.index()];
            if res.done {
                break;
            }
        }
        assert!(delivered >= 1, "delivered {delivered}");
    }
}
