//! Pieces shared by the two commons gridworlds.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
            Dir::Right => (0, 1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Movement actions are 1..=4 in `ALL` order.
    pub fn from_move_action(action: usize) -> Option<Dir> {
        (1..=4).contains(&action).then(|| Self::ALL[action - 1])
    }

    pub fn move_action(self) -> usize {
        self.index() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAgent {
    pub row: usize,
    pub col: usize,
    pub facing: Dir,
    /// Remaining steps out of the game after a beam hit.
    pub frozen: u32,
    pub last_reward: f64,
}

impl GridAgent {
    pub fn active(&self) -> bool {
        self.frozen == 0
    }

    pub fn pos(&self) -> (usize, usize) {
        (self.row, self.col)
    }
}

pub(crate) fn offset(
    (r, c): (usize, usize),
    (dr, dc): (isize, isize),
    rows: usize,
    cols: usize,
) -> Option<(usize, usize)> {
    let nr = r as isize + dr;
    let nc = c as isize + dc;
    (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols).then(|| (nr as usize, nc as usize))
}

/// Applies move actions simultaneously. A move fails if it leaves the grid,
/// enters a cell held by another active agent, or collides with another
/// agent's target. Facing always turns toward the requested direction.
pub(crate) fn resolve_moves(
    agents: &mut [GridAgent],
    moves: &[Option<Dir>],
    rows: usize,
    cols: usize,
    walkable: impl Fn(usize, usize) -> bool,
) {
    let targets: Vec<Option<(usize, usize)>> = agents
        .iter()
        .zip(moves)
        .map(|(a, m)| {
            let d = (*m)?;
            if !a.active() {
                return None;
            }
            offset(a.pos(), d.delta(), rows, cols).filter(|&(r, c)| walkable(r, c))
        })
        .collect();
    let n = agents.len();
    let mut ok = vec![false; n];
    for i in 0..n {
        let Some(t) = targets[i] else { continue };
        let blocked = (0..n).any(|j| {
            j != i && agents[j].active() && (agents[j].pos() == t || targets[j] == Some(t))
        });
        ok[i] = !blocked;
    }
    for (i, a) in agents.iter_mut().enumerate() {
        if let Some(d) = moves[i] {
            if a.active() {
                a.facing = d;
            }
        }
        if ok[i] {
            let (r, c) = targets[i].expect("checked");
            a.row = r;
            a.col = c;
        }
    }
}

/// Beam from `shooter` along its facing; returns the first active agent within
/// `length` cells.
pub(crate) fn beam_target(
    agents: &[GridAgent],
    shooter: usize,
    length: usize,
    rows: usize,
    cols: usize,
) -> Option<usize> {
    let a = &agents[shooter];
    let mut pos = a.pos();
    for _ in 0..length {
        pos = offset(pos, a.facing.delta(), rows, cols)?;
        if let Some(j) = agents
            .iter()
            .enumerate()
            .position(|(j, b)| j != shooter && b.active() && b.pos() == pos)
        {
            return Some(j);
        }
    }
    None
}

/// Writes a `(2·radius+1)²` window per layer centred on `(r, c)`. Cells outside
/// the grid are reported only through the `wall` layer.
pub(crate) fn write_window(
    out: &mut Vec<f64>,
    (r, c): (usize, usize),
    radius: usize,
    rows: usize,
    cols: usize,
    layers: &[&dyn Fn(usize, usize) -> bool],
) {
    let side = 2 * radius + 1;
    let start = out.len();
    out.resize(start + (layers.len() + 1) * side * side, 0.0);
    let rad = radius as isize;
    for dr in -rad..=rad {
        for dc in -rad..=rad {
            let cell = ((dr + rad) as usize) * side + (dc + rad) as usize;
            match offset((r, c), (dr, dc), rows, cols) {
                None => out[start + layers.len() * side * side + cell] = 1.0,
                Some((rr, cc)) => {
                    for (l, f) in layers.iter().enumerate() {
                        if f(rr, cc) {
                            out[start + l * side * side + cell] = 1.0;
                        }
                    }
                }
            }
        }
    }
}

/// Number of apples in the Moore neighbourhood of `(r, c)`.
pub(crate) fn moore_count(apples: &[bool], rows: usize, cols: usize, r: usize, c: usize) -> usize {
    let mut n = 0;
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if (dr, dc) == (0, 0) {
                continue;
            }
            if let Some((rr, cc)) = offset((r, c), (dr, dc), rows, cols) {
                n += usize::from(apples[rr * cols + cc]);
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(row: usize, col: usize, facing: Dir) -> GridAgent {
        GridAgent {
            row,
            col,
            facing,
            frozen: 0,
            last_reward: 0.0,
        }
    }

    #[test]
    fn head_on_moves_into_same_cell_both_fail() {
        let mut agents = vec![agent(0, 0, Dir::Up), agent(0, 2, Dir::Up)];
        resolve_moves(&mut agents, &[Some(Dir::Right), Some(Dir::Left)], 3, 3, |_, _| true);
        assert_eq!(agents[0].pos(), (0, 0));
        assert_eq!(agents[1].pos(), (0, 2));
        assert_eq!(agents[0].facing, Dir::Right);
    }

    #[test]
    fn beam_hits_first_agent_in_range() {
        let agents = vec![agent(0, 0, Dir::Right), agent(0, 3, Dir::Up)];
        assert_eq!(beam_target(&agents, 0, 3, 5, 5), Some(1));
        assert_eq!(beam_target(&agents, 0, 2, 5, 5), None);
    }

    #[test]
    fn window_marks_walls_outside_grid() {
        let mut out = Vec::new();
        write_window(&mut out, (0, 0), 1, 2, 2, &[&|r, c| (r, c) == (1, 1)]);
        // layer 0: apple at centre+(1,1); layer 1: walls.
        assert_eq!(out.len(), 18);
        assert_eq!(out[8], 1.0);
        assert_eq!(&out[9..12], &[1.0, 1.0, 1.0]);
        assert_eq!(out[9 + 4], 0.0);
    }
}
