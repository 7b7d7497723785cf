//! Greedy local repair that pulls a separated level back into the pattern
//! dictionary without reconnecting start and end.

use std::collections::VecDeque;

use rand::Rng as _;

use super::PatternDict;
use crate::levelgrid::Grid;
use crate::seeding::Rng;

pub(super) struct Repairer<'a> {
    pub patterns: &'a PatternDict,
    /// Passability per tile index under the game's move model.
    pub passable: Vec<bool>,
    pub wall: u8,
    pub empty: u8,
    pub start: (usize, usize),
    pub end: (usize, usize),
}

impl Repairer<'_> {
    fn block_ok(&self, grid: &Grid, r: usize, c: usize, buf: &mut Vec<u8>) -> bool {
        let w = self.patterns.window();
        buf.clear();
        for dr in 0..w {
            for dc in 0..w {
                buf.push(grid.get(r + dr, c + dc));
            }
        }
        self.patterns.contains(buf)
    }

    /// Block origins whose block covers `(r, c)`.
    fn covering(&self, grid: &Grid, r: usize, c: usize) -> impl Iterator<Item = (usize, usize)> {
        let w = self.patterns.window();
        let r_hi = r.min(grid.rows() - w);
        let c_hi = c.min(grid.cols() - w);
        let r_lo = r.saturating_sub(w - 1);
        let c_lo = c.saturating_sub(w - 1);
        (r_lo..=r_hi).flat_map(move |br| (c_lo..=c_hi).map(move |bc| (br, bc)))
    }

    fn local_violations(&self, grid: &Grid, r: usize, c: usize, buf: &mut Vec<u8>) -> usize {
        self.covering(grid, r, c)
            .filter(|&(br, bc)| !self.block_ok(grid, br, bc, buf))
            .count()
    }

    pub fn connected(&self, grid: &Grid) -> bool {
        let (rows, cols) = (grid.rows(), grid.cols());
        let open = |r: usize, c: usize| self.passable[grid.get(r, c) as usize];
        let mut seen = vec![false; rows * cols];
        seen[self.start.0 * cols + self.start.1] = true;
        let mut queue = VecDeque::from([self.start]);
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) == self.end {
                return true;
            }
            let mut visit = |rr: usize, cc: usize| {
                if open(rr, cc) && !seen[rr * cols + cc] {
                    seen[rr * cols + cc] = true;
                    queue.push_back((rr, cc));
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < rows {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < cols {
                visit(r, c + 1);
            }
        }
        false
    }

    /// Toggles wall/empty cells inside violating blocks while that strictly
    /// lowers the violation count. Returns true when no violation is left.
    /// Start and end stay 4-disconnected throughout.
    pub fn run(&self, grid: &mut Grid, max_steps: usize, rng: &mut Rng) -> bool {
        let w = self.patterns.window();
        let mut buf = Vec::with_capacity(w * w);
        for _ in 0..max_steps {
            let mut bad = Vec::new();
            for r in 0..=grid.rows() - w {
                for c in 0..=grid.cols() - w {
                    if !self.block_ok(grid, r, c, &mut buf) {
                        bad.push((r, c));
                    }
                }
            }
            if bad.is_empty() {
                return true;
            }
            let mut cells: Vec<(usize, usize)> = bad
                .iter()
                .flat_map(|&(r, c)| {
                    (0..w).flat_map(move |dr| (0..w).map(move |dc| (r + dr, c + dc)))
                })
                .filter(|&(r, c)| {
                    let t = grid.get(r, c);
                    t == self.wall || t == self.empty
                })
                .collect();
            cells.sort_unstable();
            cells.dedup();

            let mut moves: Vec<(isize, u32, (usize, usize))> = Vec::new();
            for &(r, c) in &cells {
                let before = self.local_violations(grid, r, c, &mut buf) as isize;
                let old = grid.get(r, c);
                grid.set(
                    r,
                    c,
                    if old == self.wall {
                        self.empty
                    } else {
                        self.wall
                    },
                );
                let after = self.local_violations(grid, r, c, &mut buf) as isize;
                grid.set(r, c, old);
                if after < before {
                    moves.push((after - before, rng.random(), (r, c)));
                }
            }
            moves.sort_unstable();
            let mut applied = false;
            for &(_, _, (r, c)) in &moves {
                let old = grid.get(r, c);
                if old == self.wall {
                    grid.set(r, c, self.empty);
                    if self.connected(grid) {
                        grid.set(r, c, old);
                        continue;
                    }
                } else {
                    grid.set(r, c, self.wall);
                }
                applied = true;
                break;
            }
            if !applied {
                return false;
            }
        }
        false
    }
}
