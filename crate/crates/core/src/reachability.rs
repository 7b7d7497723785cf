//! Playability (start to end path existence) and feature counting.
//!
//! Caves are 4-connected top-down maps. Mario uses a small platformer model:
//! the player occupies one tile, walks on supported cells, falls straight or
//! drifting one column per row, and jumps along fixed rectangular arcs of up
//! to four rows and four columns. Every move traces a 4-connected chain of
//! passable cells, so a vertex cut of the passable-cell graph blocks it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::levelgrid::{validate_grid, Game, Grid, TileKind, TileSet};

pub type Cell = (usize, usize);

pub const MAX_JUMP_RISE: i32 = 4;
pub const MAX_JUMP_SPAN: i32 = 4;
pub const MAX_JUMP_DROP: i32 = 4;

/// A jump: cells visited relative to the take-off cell, the last one being
/// the landing cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JumpTemplate {
    pub arc: Vec<(i32, i32)>,
}

impl JumpTemplate {
    fn rectangular(rise: i32, span: i32, landing_row: i32) -> Self {
        let step = span.signum();
        let mut arc = Vec::new();
        for dr in 1..=rise {
            arc.push((-dr, 0));
        }
        for dc in 1..=span.abs() {
            arc.push((-rise, dc * step));
        }
        for row in (-rise + 1)..=landing_row {
            arc.push((row, span));
        }
        JumpTemplate { arc }
    }

    pub fn landing(&self) -> (i32, i32) {
        *self.arc.last().expect("jump arcs are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveModel {
    game: Game,
    jumps: Vec<JumpTemplate>,
}

impl MoveModel {
    pub fn for_game(game: Game) -> Self {
        match game {
            Game::Cave => MoveModel::cave(),
            Game::Mario => MoveModel::mario(),
        }
    }

    pub fn cave() -> Self {
        MoveModel {
            game: Game::Cave,
            jumps: Vec::new(),
        }
    }

    pub fn mario() -> Self {
        let mut jumps = Vec::new();
        for rise in 1..=MAX_JUMP_RISE {
            for span in (1..=MAX_JUMP_SPAN).flat_map(|s| [-s, s]) {
                // landing row offset: -rise (on top of the apex) down to MAX_JUMP_DROP below take-off
                for landing_row in -rise..=MAX_JUMP_DROP {
                    jumps.push(JumpTemplate::rectangular(rise, span, landing_row));
                }
            }
        }
        MoveModel {
            game: Game::Mario,
            jumps,
        }
    }

    pub fn game(&self) -> Game {
        self.game
    }

    pub fn jump_templates(&self) -> &[JumpTemplate] {
        &self.jumps
    }

    pub fn passable(&self, kind: TileKind) -> bool {
        match self.game {
            Game::Cave => kind != TileKind::Solid,
            Game::Mario => matches!(kind, TileKind::Empty | TileKind::Start | TileKind::End),
        }
    }
}

/// Precomputed per-grid lookup used by the search.
struct View<'a> {
    grid: &'a Grid,
    passable: Vec<bool>,
    start: u8,
    end: u8,
}

impl<'a> View<'a> {
    fn new(grid: &'a Grid, tileset: &TileSet, model: &MoveModel) -> Self {
        let lut: Vec<bool> = tileset
            .symbols()
            .iter()
            .map(|&(kind, _)| model.passable(kind))
            .collect();
        View {
            grid,
            passable: grid
                .cells()
                .iter()
                .map(|&c| lut.get(c as usize).copied().unwrap_or(false))
                .collect(),
            start: tileset.start(),
            end: tileset.end(),
        }
    }

    #[inline]
    fn open(&self, r: isize, c: isize) -> bool {
        if r < 0 || c < 0 || r as usize >= self.grid.rows() || c as usize >= self.grid.cols() {
            return false;
        }
        self.passable[r as usize * self.grid.cols() + c as usize]
    }

    #[inline]
    fn supported(&self, r: isize, c: isize) -> bool {
        (r + 1) < self.grid.rows() as isize && !self.open(r + 1, c)
    }

    #[inline]
    fn tile(&self, r: isize, c: isize) -> u8 {
        self.grid.get(r as usize, c as usize)
    }

    fn can_stand(&self, r: isize, c: isize) -> bool {
        self.supported(r, c) || self.tile(r, c) == self.start
    }

    fn can_land(&self, r: isize, c: isize) -> bool {
        self.supported(r, c) || self.tile(r, c) == self.end
    }
}

fn cave_moves(view: &View, (r, c): Cell, out: &mut Vec<Cell>) {
    let (r, c) = (r as isize, c as isize);
    for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
        if view.open(r + dr, c + dc) {
            out.push(((r + dr) as usize, (c + dc) as usize));
        }
    }
}

fn mario_moves(view: &View, model: &MoveModel, (r, c): Cell, out: &mut Vec<Cell>) {
    let (r, c) = (r as isize, c as isize);
    let push = |out: &mut Vec<Cell>, rr: isize, cc: isize| out.push((rr as usize, cc as usize));
    let standing = view.can_stand(r, c);
    let airborne = !view.supported(r, c);

    if airborne && view.open(r + 1, c) {
        push(out, r + 1, c);
    }
    if standing {
        for dc in [-1, 1] {
            if view.open(r, c + dc) && view.can_land(r, c + dc) {
                push(out, r, c + dc);
            }
        }
    }
    for dc in [-1, 1] {
        // drift while falling, or step off a ledge
        let via_side = view.open(r, c + dc);
        let via_below = airborne && view.open(r + 1, c);
        if view.open(r + 1, c + dc) && (via_side || via_below) && (airborne || via_side) {
            push(out, r + 1, c + dc);
        }
    }
    if standing {
        for jump in &model.jumps {
            if jump
                .arc
                .iter()
                .all(|&(dr, dc)| view.open(r + dr as isize, c + dc as isize))
            {
                let (lr, lc) = jump.landing();
                let (lr, lc) = (r + lr as isize, c + lc as isize);
                if view.can_land(lr, lc) {
                    push(out, lr, lc);
                }
            }
        }
    }
}

/// Every cell reachable from `cell` in one move, in the fixed expansion order.
pub fn legal_moves(grid: &Grid, tileset: &TileSet, model: &MoveModel, cell: Cell) -> Vec<Cell> {
    let view = View::new(grid, tileset, model);
    let mut out = Vec::new();
    expand(&view, model, cell, &mut out);
    out
}

fn expand(view: &View, model: &MoveModel, cell: Cell, out: &mut Vec<Cell>) {
    match model.game {
        Game::Cave => cave_moves(view, cell, out),
        Game::Mario => mario_moves(view, model, cell, out),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathResult {
    pub playable: bool,
    pub path: Option<Vec<Cell>>,
    pub length: Option<usize>,
}

impl PathResult {
    fn blocked() -> Self {
        PathResult {
            playable: false,
            path: None,
            length: None,
        }
    }
}

/// Breadth-first search from the unique start to the unique end. Levels
/// without exactly one start and one end are unplayable outright.
pub fn is_playable(grid: &Grid, tileset: &TileSet, model: &MoveModel) -> PathResult {
    if !validate_grid(grid, tileset).structurally_valid {
        return PathResult::blocked();
    }
    let view = View::new(grid, tileset, model);
    let start = grid.positions_of(view.start).next().expect("validated");
    let goal = grid.positions_of(view.end).next().expect("validated");
    let cols = grid.cols();
    let idx = |(r, c): Cell| r * cols + c;

    let mut parent = vec![usize::MAX; grid.rows() * cols];
    parent[idx(start)] = idx(start);
    let mut queue = VecDeque::from([start]);
    let mut next = Vec::with_capacity(16);
    while let Some(cell) = queue.pop_front() {
        if cell == goal {
            let mut path = vec![goal];
            let mut at = idx(goal);
            while at != idx(start) {
                at = parent[at];
                path.push((at / cols, at % cols));
            }
            path.reverse();
            let length = path.len() - 1;
            return PathResult {
                playable: true,
                path: Some(path),
                length: Some(length),
            };
        }
        next.clear();
        expand(&view, model, cell, &mut next);
        for &n in &next {
            if parent[idx(n)] == usize::MAX {
                parent[idx(n)] = idx(cell);
                queue.push_back(n);
            }
        }
    }
    PathResult::blocked()
}

/// Pipes (counted by their top-left tile) in Mario, treasures in caves.
/// Reachability of the features is irrelevant.
pub fn count_features(grid: &Grid, game: Game) -> usize {
    let tileset = game.tileset();
    let kind = match game {
        Game::Mario => TileKind::PipeTopLeft,
        Game::Cave => TileKind::Treasure,
    };
    grid.count(tileset.index_of(kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subspace {
    PlayableCorrect,
    PlayableIncorrect,
    UnplayableCorrect,
    UnplayableIncorrect,
}

impl Subspace {
    pub fn playable(self) -> bool {
        matches!(
            self,
            Subspace::PlayableCorrect | Subspace::PlayableIncorrect
        )
    }

    pub fn correct(self) -> bool {
        matches!(
            self,
            Subspace::PlayableCorrect | Subspace::UnplayableCorrect
        )
    }
}

pub fn classify(
    grid: &Grid,
    tileset: &TileSet,
    model: &MoveModel,
    target_count: usize,
) -> Subspace {
    let playable = is_playable(grid, tileset, model).playable;
    let correct = count_features(grid, tileset.game()) == target_count;
    match (playable, correct) {
        (true, true) => Subspace::PlayableCorrect,
        (true, false) => Subspace::PlayableIncorrect,
        (false, true) => Subspace::UnplayableCorrect,
        (false, false) => Subspace::UnplayableIncorrect,
    }
}
