//! Per-cell percentages and the tables built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpusgen::ModelKind;
use crate::levelgrid::{Game, Grid};
use crate::reachability::{count_features, is_playable, MoveModel};

/// Rounds to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn percent(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        round1(100.0 * k as f64 / n as f64)
    }
}

/// Scores for one (model, class) cell. `correct` and `playable_correct` are
/// only present when a target feature count was given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub samples: usize,
    pub playable: f64,
    pub correct: Option<f64>,
    pub playable_correct: Option<f64>,
}

impl CellMetrics {
    pub fn check(&self) -> Result<(), String> {
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        let values = [Some(self.playable), self.correct, self.playable_correct];
        if values.iter().flatten().any(|&v| !in_range(v)) {
            return Err(format!("value outside [0, 100]: {self:?}"));
        }
        if let (Some(c), Some(pc)) = (self.correct, self.playable_correct) {
            if pc > c.min(self.playable) {
                return Err(format!("playable-correct exceeds its parts: {self:?}"));
            }
        }
        Ok(())
    }
}

/// Scores raw samples. Without a target only playability is reported.
pub fn evaluate_samples(grids: &[Grid], game: Game, target: Option<usize>) -> CellMetrics {
    let tileset = game.tileset();
    let model = MoveModel::for_game(game);
    let (playable, correct, both) = grids
        .par_iter()
        .map(|g| {
            let p = is_playable(g, &tileset, &model).playable;
            let c = target.is_some_and(|k| count_features(g, game) == k);
            (usize::from(p), usize::from(c), usize::from(p && c))
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = grids.len();
    CellMetrics {
        samples: n,
        playable: percent(playable, n),
        correct: target.map(|_| percent(correct, n)),
        playable_correct: target.map(|_| percent(both, n)),
    }
}

fn mean_of(values: &[f64]) -> f64 {
    round1(values.iter().sum::<f64>() / values.len() as f64)
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        round1((values[m - 1] + values[m]) / 2.0)
    }
}

/// Combines cells field by field. `None` when any input is absent.
fn combine(cells: &[Option<CellMetrics>], f: fn(&mut [f64]) -> f64) -> Option<CellMetrics> {
    let cells: Vec<CellMetrics> = cells.iter().copied().collect::<Option<_>>()?;
    if cells.is_empty() {
        return None;
    }
    let field = |get: &dyn Fn(&CellMetrics) -> Option<f64>| -> Option<f64> {
        let mut v: Vec<f64> = cells.iter().map(get).collect::<Option<_>>()?;
        Some(f(&mut v))
    };
    Some(CellMetrics {
        samples: cells.iter().map(|c| c.samples).sum(),
        playable: field(&|c| Some(c.playable))?,
        correct: field(&|c| c.correct),
        playable_correct: field(&|c| c.playable_correct),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub kind: ModelKind,
    /// One cell per table column; `None` marks a model that failed.
    pub cells: Vec<Option<CellMetrics>>,
    /// Mean of the cells, absent if any cell is.
    pub average: Option<CellMetrics>,
}

impl MetricsRow {
    pub fn new(kind: ModelKind, cells: Vec<Option<CellMetrics>>) -> Self {
        let average = combine(&cells, |v| mean_of(v));
        MetricsRow {
            kind,
            cells,
            average,
        }
    }
}

/// One experiment's results for one game. Columns are the target classes,
/// or a single playability column when `classes` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub game: Game,
    pub classes: Vec<usize>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn columns(&self) -> usize {
        self.classes.len().max(1)
    }

    pub fn row(&self, kind: ModelKind) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Checks ranges, containment and that averages match their cells.
    pub fn check(&self) -> Result<(), String> {
        for row in &self.rows {
            if row.cells.len() != self.columns() {
                return Err(format!("{}: wrong number of cells", row.kind));
            }
            for cell in row.cells.iter().chain([&row.average]).flatten() {
                cell.check().map_err(|e| format!("{}: {e}", row.kind))?;
            }
            if let Some(avg) = row.average {
                let cells: Vec<CellMetrics> = row.cells.iter().flatten().copied().collect();
                let mean = cells.iter().map(|c| c.playable).sum::<f64>() / cells.len() as f64;
                if (avg.playable - mean).abs() > 0.05 + 1e-9 {
                    return Err(format!(
                        "{}: average {} vs mean {mean}",
                        row.kind, avg.playable
                    ));
                }
            }
        }
        Ok(())
    }

    /// Cell-wise median over tables of identical shape. A cell is kept if at
    /// least one table has it.
    pub fn median(tables: &[MetricsTable]) -> Option<MetricsTable> {
        let first = tables.first()?;
        let rows = first
            .rows
            .iter()
            .enumerate()
            .map(|(ri, row)| {
                let cells = (0..first.columns())
                    .map(|ci| {
                        let present: Vec<Option<CellMetrics>> = tables
                            .iter()
                            .filter_map(|t| t.rows.get(ri).and_then(|r| r.cells.get(ci)).copied())
                            .filter(Option::is_some)
                            .collect();
                        combine(&present, median_of)
                    })
                    .collect();
                MetricsRow::new(row.kind, cells)
            })
            .collect();
        Some(MetricsTable {
            game: first.game,
            classes: first.classes.clone(),
            rows,
        })
    }
}
