//! Tile sets, level grids, the plain-text level format and the one-hot
//! bridge between symbolic levels and generator samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("empty level text")]
    EmptyInput,
    #[error("row {row} has {found} glyphs, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("tile index {index} out of range for a tile set of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("tensor has {found} channels, tile set has {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("malformed corpus file: {0}")]
    MalformedCorpus(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Game {
    Cave,
    Mario,
}

impl Game {
    pub const ALL: [Game; 2] = [Game::Cave, Game::Mario];

    pub fn tileset(self) -> TileSet {
        match self {
            Game::Cave => TileSet::cave(),
            Game::Mario => TileSet::mario(),
        }
    }

    /// Segment size used in the published corpora: 14x14 caves, 14x32 Mario.
    pub fn preset_dims(self) -> (usize, usize) {
        match self {
            Game::Cave => (14, 14),
            Game::Mario => (14, 32),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Game::Cave => "cave",
            Game::Mario => "mario",
        }
    }
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Game {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cave" => Ok(Game::Cave),
            "mario" => Ok(Game::Mario),
            other => Err(format!("unknown game {other:?} (expected cave or mario)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileKind {
    Ground,
    Solid,
    Breakable,
    Empty,
    Question,
    PipeTopLeft,
    PipeTopRight,
    PipeLeft,
    PipeRight,
    Treasure,
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSet {
    game: Game,
    symbols: Vec<(TileKind, char)>,
}

impl TileSet {
    pub fn mario() -> Self {
        use TileKind::*;
        TileSet {
            game: Game::Mario,
            symbols: vec![
                (Ground, 'X'),
                (Breakable, 'S'),
                (Empty, '-'),
                (Question, 'Q'),
                (PipeTopLeft, '<'),
                (PipeTopRight, '>'),
                (PipeLeft, '['),
                (PipeRight, ']'),
                (Start, '{'),
                (End, '}'),
            ],
        }
    }

    pub fn cave() -> Self {
        use TileKind::*;
        TileSet {
            game: Game::Cave,
            symbols: vec![
                (Solid, 'X'),
                (Empty, '-'),
                (Treasure, '2'),
                (Start, '{'),
                (End, '}'),
            ],
        }
    }

    pub fn game(&self) -> Game {
        self.game
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[(TileKind, char)] {
        &self.symbols
    }

    pub fn glyph(&self, index: u8) -> Option<char> {
        self.symbols.get(index as usize).map(|&(_, g)| g)
    }

    pub fn kind(&self, index: u8) -> Option<TileKind> {
        self.symbols.get(index as usize).map(|&(k, _)| k)
    }

    pub fn index_of_glyph(&self, glyph: char) -> Option<u8> {
        self.symbols
            .iter()
            .position(|&(_, g)| g == glyph)
            .map(|i| i as u8)
    }

    /// Index of the first tile of the given kind.
    ///
    /// Panics when the tile set has no such tile; callers ask only for kinds
    /// that the game defines.
    pub fn index_of(&self, kind: TileKind) -> u8 {
        self.symbols
            .iter()
            .position(|&(k, _)| k == kind)
            .unwrap_or_else(|| panic!("{kind:?} is not part of the {} tile set", self.game))
            as u8
    }

    pub fn try_index_of(&self, kind: TileKind) -> Option<u8> {
        self.symbols
            .iter()
            .position(|&(k, _)| k == kind)
            .map(|i| i as u8)
    }

    pub fn start(&self) -> u8 {
        self.index_of(TileKind::Start)
    }

    pub fn end(&self) -> u8 {
        self.index_of(TileKind::End)
    }

    pub fn start_glyph(&self) -> char {
        '{'
    }

    pub fn end_glyph(&self) -> char {
        '}'
    }

    /// The tile used to fill walls: Ground in Mario, Solid in caves.
    pub fn wall(&self) -> u8 {
        match self.game {
            Game::Cave => self.index_of(TileKind::Solid),
            Game::Mario => self.index_of(TileKind::Ground),
        }
    }
}

/// A rectangular level segment. Cells are row-major tile indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn filled(rows: usize, cols: usize, tile: u8) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Grid {
            rows,
            cols,
            cells: vec![tile; rows * cols],
        }
    }

    pub fn from_cells(rows: usize, cols: usize, cells: Vec<u8>) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        assert_eq!(
            cells.len(),
            rows * cols,
            "cell count does not match dimensions"
        );
        Grid { rows, cols, cells }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, tile: u8) {
        self.cells[row * self.cols + col] = tile;
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn at(&self, row: isize, col: isize) -> Option<u8> {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn count(&self, tile: u8) -> usize {
        self.cells.iter().filter(|&&c| c == tile).count()
    }

    pub fn positions_of(&self, tile: u8) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == tile)
            .map(|(i, _)| (i / self.cols, i % self.cols))
    }

    pub fn mirrored(&self) -> Grid {
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, self.cols - 1 - c));
            }
        }
        out
    }

    pub fn check_indices(&self, tileset: &TileSet) -> Result<(), LevelError> {
        match self.cells.iter().find(|&&c| c as usize >= tileset.len()) {
            Some(&bad) => Err(LevelError::IndexOutOfRange {
                index: bad as usize,
                size: tileset.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Per-cell channel tensor, stored channel-major (`channels x rows x cols`).
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl OneHot {
    #[inline]
    pub fn value(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.values[(channel * self.rows + row) * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationReport {
    pub start_count: usize,
    pub end_count: usize,
    pub structurally_valid: bool,
}

pub fn parse_level(text: &str, tileset: &TileSet) -> Result<Grid, LevelError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() || lines.iter().all(|l| l.is_empty()) {
        return Err(LevelError::EmptyInput);
    }
    let cols = lines[0].chars().count();
    if cols == 0 {
        return Err(LevelError::EmptyInput);
    }
    let mut cells = Vec::with_capacity(lines.len() * cols);
    for (row, line) in lines.iter().enumerate() {
        let found = line.chars().count();
        if found != cols {
            return Err(LevelError::RaggedRows {
                row,
                expected: cols,
                found,
            });
        }
        for (col, glyph) in line.chars().enumerate() {
            let index = tileset
                .index_of_glyph(glyph)
                .ok_or(LevelError::UnknownGlyph { row, col, glyph })?;
            cells.push(index);
        }
    }
    Ok(Grid::from_cells(lines.len(), cols, cells))
}

/// Renders rows joined by `\n`, without a trailing newline.
pub fn render_level(grid: &Grid, tileset: &TileSet) -> Result<String, LevelError> {
    grid.check_indices(tileset)?;
    let mut out = String::with_capacity(grid.rows * (grid.cols + 1));
    for r in 0..grid.rows {
        if r > 0 {
            out.push('\n');
        }
        for c in 0..grid.cols {
            out.push(tileset.glyph(grid.get(r, c)).expect("checked above"));
        }
    }
    Ok(out)
}

pub fn encode_onehot(grid: &Grid, tileset: &TileSet) -> Result<OneHot, LevelError> {
    grid.check_indices(tileset)?;
    let channels = tileset.len();
    let plane = grid.rows * grid.cols;
    let mut values = vec![0.0; channels * plane];
    for (i, &tile) in grid.cells.iter().enumerate() {
        values[tile as usize * plane + i] = 1.0;
    }
    Ok(OneHot {
        channels,
        rows: grid.rows,
        cols: grid.cols,
        values,
    })
}

/// Argmax decoding; ties go to the lowest channel index.
pub fn decode_onehot(t: &OneHot, tileset: &TileSet) -> Result<Grid, LevelError> {
    decode_planes(&t.values, t.channels, t.rows, t.cols, tileset)
}

/// Decodes a raw `channels x rows x cols` slice, as produced by the generator.
pub fn decode_planes(
    values: &[f64],
    channels: usize,
    rows: usize,
    cols: usize,
    tileset: &TileSet,
) -> Result<Grid, LevelError> {
    if channels != tileset.len() {
        return Err(LevelError::ChannelMismatch {
            expected: tileset.len(),
            found: channels,
        });
    }
    assert_eq!(values.len(), channels * rows * cols);
    let plane = rows * cols;
    let cells = (0..plane)
        .map(|i| {
            let mut best = 0;
            for ch in 1..channels {
                if values[ch * plane + i] > values[best * plane + i] {
                    best = ch;
                }
            }
            best as u8
        })
        .collect();
    Ok(Grid::from_cells(rows, cols, cells))
}

pub fn validate_grid(grid: &Grid, tileset: &TileSet) -> ValidationReport {
    let start_count = grid.count(tileset.start());
    let end_count = grid.count(tileset.end());
    ValidationReport {
        start_count,
        end_count,
        structurally_valid: start_count == 1 && end_count == 1,
    }
}

/// One level in a corpus or sample file, with its optional header comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRecord {
    pub header: Option<String>,
    pub grid: Grid,
}

/// Header used by corpus files: `# playable=<0|1> features=<k>`.
pub fn corpus_header(playable: bool, features: usize) -> String {
    format!("# playable={} features={}", u8::from(playable), features)
}

/// Parses a `# playable=<0|1> features=<k>` header line.
pub fn parse_corpus_header(line: &str) -> Option<(bool, usize)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut playable = None;
    let mut features = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("playable", v)) => {
                playable = match v {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => return None,
                }
            }
            Some(("features", v)) => features = v.parse().ok(),
            _ => {}
        }
    }
    Some((playable?, features?))
}

/// Writes levels separated by a single blank line. Each record carries its
/// header (if any) on the line directly above the glyph rows.
pub fn write_levels(records: &[LevelRecord], tileset: &TileSet) -> Result<String, LevelError> {
    let mut out = String::new();
    for (i, rec) in records.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        if let Some(h) = &rec.header {
            out.push_str(h);
            out.push('\n');
        }
        out.push_str(&render_level(&rec.grid, tileset)?);
    }
    out.push('\n');
    Ok(out)
}

pub fn read_levels(text: &str, tileset: &TileSet) -> Result<Vec<LevelRecord>, LevelError> {
    let mut records = Vec::new();
    let mut header = None;
    let mut body: Vec<&str> = Vec::new();
    let flush = |header: &mut Option<String>,
                 body: &mut Vec<&str>,
                 records: &mut Vec<LevelRecord>|
     -> Result<(), LevelError> {
        if body.is_empty() {
            if header.is_some() {
                return Err(LevelError::MalformedCorpus("header without level".into()));
            }
            return Ok(());
        }
        let grid = parse_level(&body.join("\n"), tileset)?;
        records.push(LevelRecord {
            header: header.take(),
            grid,
        });
        body.clear();
        Ok(())
    };
    for line in text.lines() {
        if line.is_empty() {
            flush(&mut header, &mut body, &mut records)?;
        } else if line.starts_with('#') && body.is_empty() {
            if header.is_some() {
                return Err(LevelError::MalformedCorpus(
                    "two headers for one level".into(),
                ));
            }
            header = Some(line.to_string());
        } else {
            body.push(line);
        }
    }
    flush(&mut header, &mut body, &mut records)?;
    Ok(records)
}
