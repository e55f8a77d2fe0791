use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::envs::{cleanup, harvest, kitchen, AnyEnv, Dir, GridAgent, Held, Signature, Tile};

/// Deterministic rule-based partners, one rule table per environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPartner {
    /// Fetch a dish, collect the finished soup, deliver it. Never touches onions.
    DeliverSoup,
    /// Carry onions from the dispenser to the pot.
    PlaceOnion,
    /// Fill the pot, then serve it.
    PlaceAndDeliver,
    /// Harvest any apple underfoot; otherwise walk to the nearest apple.
    GreedyHarvester,
    /// Like the greedy rule but only takes apples with at least two
    /// neighbouring apples, which keeps regrowth going.
    SustainableHarvester,
    /// Walk to the river and clean.
    AlwaysClean,
    /// Walk to the orchard and harvest.
    AlwaysHarvest,
    AlwaysShare,
    AlwaysSpite,
    AlwaysTake,
    AlwaysGive,
}

impl ScriptedPartner {
    pub const ALL: [ScriptedPartner; 11] = [
        Self::DeliverSoup,
        Self::PlaceOnion,
        Self::PlaceAndDeliver,
        Self::GreedyHarvester,
        Self::SustainableHarvester,
        Self::AlwaysClean,
        Self::AlwaysHarvest,
        Self::AlwaysShare,
        Self::AlwaysSpite,
        Self::AlwaysTake,
        Self::AlwaysGive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DeliverSoup => "deliver_soup",
            Self::PlaceOnion => "place_onion",
            Self::PlaceAndDeliver => "place_and_deliver",
            Self::GreedyHarvester => "greedy_harvester",
            Self::SustainableHarvester => "sustainable_harvester",
            Self::AlwaysClean => "always_clean",
            Self::AlwaysHarvest => "always_harvest",
            Self::AlwaysShare => "always_share",
            Self::AlwaysSpite => "always_spite",
            Self::AlwaysTake => "always_take",
            Self::AlwaysGive => "always_give",
        }
    }

    /// Environment the rule table is written for.
    pub fn env_name(self) -> &'static str {
        match self {
            Self::DeliverSoup | Self::PlaceOnion | Self::PlaceAndDeliver => "kitchen",
            Self::GreedyHarvester | Self::SustainableHarvester => "harvest",
            Self::AlwaysClean | Self::AlwaysHarvest => "cleanup",
            _ => "matrix",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, EvalError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| EvalError::UnknownPartner(name.to_string()))
    }

    /// Looks up `name` and checks it belongs to `env`.
    pub fn for_env(name: &str, env: &AnyEnv) -> Result<Self, EvalError> {
        let p = Self::from_name(name)?;
        let want = match env {
            AnyEnv::Matrix(_) => "matrix",
            AnyEnv::Harvest(_) => "harvest",
            AnyEnv::CleanUp(_) => "cleanup",
            AnyEnv::Kitchen(_) => "kitchen",
        };
        if p.env_name() != want {
            return Err(EvalError::Mismatch(format!("partner {name} plays {}, not {want}", p.env_name())));
        }
        Ok(p)
    }

    /// Action for `agent` in the current state. Falls back to action 0
    /// (stay, or Share in the matrix game) in a foreign environment.
    pub fn act(&mut self, env: &AnyEnv, agent: usize) -> usize {
        match (*self, env) {
            (Self::AlwaysShare, AnyEnv::Matrix(_)) => Signature::Share.action(false),
            (Self::AlwaysSpite, AnyEnv::Matrix(_)) => Signature::Spite.action(false),
            (Self::AlwaysTake, AnyEnv::Matrix(_)) => Signature::Take.action(false),
            (Self::AlwaysGive, AnyEnv::Matrix(_)) => Signature::Give.action(false),
            (Self::GreedyHarvester, AnyEnv::Harvest(e)) => {
                let cfg = e.config();
                let me = &e.agents()[agent];
                harvest_rule(me, cfg.rows, cfg.cols, |r, c| e.has_apple(r, c), harvest::HARVEST)
            }
            (Self::SustainableHarvester, AnyEnv::Harvest(e)) => {
                let cfg = e.config();
                let me = &e.agents()[agent];
                let neighbours = |r: usize, c: usize| {
                    let mut n = 0;
                    for dr in -1isize..=1 {
                        for dc in -1isize..=1 {
                            let (rr, cc) = (r as isize + dr, c as isize + dc);
                            if (dr, dc) != (0, 0)
                                && rr >= 0
                                && cc >= 0
                                && (rr as usize) < cfg.rows
                                && (cc as usize) < cfg.cols
                                && e.has_apple(rr as usize, cc as usize)
                            {
                                n += 1;
                            }
                        }
                    }
                    n
                };
                harvest_rule(
                    me,
                    cfg.rows,
                    cfg.cols,
                    |r, c| e.has_apple(r, c) && neighbours(r, c) >= 2,
                    harvest::HARVEST,
                )
            }
            (Self::AlwaysClean, AnyEnv::CleanUp(e)) => {
                let me = &e.agents()[agent];
                if e.config().can_clean(me.row) {
                    cleanup::CLEAN
                } else {
                    Dir::Up.move_action()
                }
            }
            (Self::AlwaysHarvest, AnyEnv::CleanUp(e)) => {
                let cfg = e.config();
                let me = &e.agents()[agent];
                if !cfg.in_orchard(me.row) {
                    return Dir::Down.move_action();
                }
                harvest_rule(
                    me,
                    cfg.rows,
                    cfg.cols,
                    |r, c| cfg.in_orchard(r) && e.has_apple(r, c),
                    cleanup::HARVEST,
                )
            }
            (Self::DeliverSoup, AnyEnv::Kitchen(e)) => match e.held(agent) {
                Held::Soup => e.action_toward(agent, Tile::Serve),
                Held::Dish if e.pot_ready() => e.action_toward(agent, Tile::Pot),
                Held::Nothing => e.action_toward(agent, Tile::DishDispenser),
                _ => kitchen::STAY,
            },
            (Self::PlaceOnion, AnyEnv::Kitchen(e)) => match e.held(agent) {
                Held::Nothing => e.action_toward(agent, Tile::OnionDispenser),
                Held::Onion if !e.pot_cooking() && !e.pot_ready() && e.pot_onions() < e.config().recipe_onions => {
                    e.action_toward(agent, Tile::Pot)
                }
                _ => kitchen::STAY,
            },
            (Self::PlaceAndDeliver, AnyEnv::Kitchen(e)) => {
                let pot_busy = e.pot_cooking() || e.pot_ready();
                match e.held(agent) {
                    Held::Soup => e.action_toward(agent, Tile::Serve),
                    Held::Dish if e.pot_ready() => e.action_toward(agent, Tile::Pot),
                    Held::Dish => kitchen::STAY,
                    Held::Onion if !pot_busy => e.action_toward(agent, Tile::Pot),
                    Held::Onion => kitchen::STAY,
                    Held::Nothing if pot_busy => e.action_toward(agent, Tile::DishDispenser),
                    Held::Nothing => e.action_toward(agent, Tile::OnionDispenser),
                }
            }
            _ => 0,
        }
    }
}

/// Harvest underfoot if `wanted`, otherwise step toward the nearest wanted
/// cell (Manhattan distance, row-major tie-break), otherwise stay.
fn harvest_rule(
    me: &GridAgent,
    rows: usize,
    cols: usize,
    wanted: impl Fn(usize, usize) -> bool,
    harvest_action: usize,
) -> usize {
    if !me.active() {
        return 0;
    }
    if wanted(me.row, me.col) {
        return harvest_action;
    }
    let mut best: Option<(usize, usize, usize)> = None;
    for r in 0..rows {
        for c in 0..cols {
            if wanted(r, c) {
                let d = me.row.abs_diff(r) + me.col.abs_diff(c);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, r, c));
                }
            }
        }
    }
    match best {
        Some((_, r, c)) => step_toward(me.pos(), (r, c)).move_action(),
        None => 0,
    }
}

fn step_toward(from: (usize, usize), to: (usize, usize)) -> Dir {
    if to.0 < from.0 {
        Dir::Up
    } else if to.0 > from.0 {
        Dir::Down
    } else if to.1 < from.1 {
        Dir::Left
    } else {
        Dir::Right
    }
}
