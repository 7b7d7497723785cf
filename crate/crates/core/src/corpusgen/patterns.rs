use std::collections::HashSet;

use crate::levelgrid::Grid;

use super::CorpusError;

/// Set of all `window x window` interior blocks seen in a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDict {
    window: usize,
    patterns: HashSet<Vec<u8>>,
}

fn block(grid: &Grid, r: usize, c: usize, window: usize, out: &mut Vec<u8>) {
    out.clear();
    for dr in 0..window {
        for dc in 0..window {
            out.push(grid.get(r + dr, c + dc));
        }
    }
}

impl PatternDict {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn contains(&self, pattern: &[u8]) -> bool {
        self.patterns.contains(pattern)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u8>> {
        self.patterns.iter()
    }

    /// Top-left corners of blocks in `grid` that are not in the dictionary.
    pub fn violations(&self, grid: &Grid) -> Vec<(usize, usize)> {
        self.violations_near(grid, None)
    }

    /// Like [`violations`](Self::violations) but only inspects blocks that
    /// overlap one of `cells`, when given.
    pub fn violations_near(
        &self,
        grid: &Grid,
        cells: Option<&[(usize, usize)]>,
    ) -> Vec<(usize, usize)> {
        let w = self.window;
        if grid.rows() < w || grid.cols() < w {
            return vec![(0, 0)];
        }
        let mut buf = Vec::with_capacity(w * w);
        let mut bad = Vec::new();
        for r in 0..=grid.rows() - w {
            for c in 0..=grid.cols() - w {
                if let Some(cells) = cells {
                    let touches = cells
                        .iter()
                        .any(|&(cr, cc)| cr >= r && cr < r + w && cc >= c && cc < c + w);
                    if !touches {
                        continue;
                    }
                }
                block(grid, r, c, w, &mut buf);
                if !self.patterns.contains(&buf) {
                    bad.push((r, c));
                }
            }
        }
        bad
    }

    pub fn contains_all(&self, grid: &Grid) -> bool {
        self.violations(grid).is_empty()
    }
}

pub fn extract_patterns<'a, I>(corpus: I, window: usize) -> Result<PatternDict, CorpusError>
where
    I: IntoIterator<Item = &'a Grid>,
{
    if window < 2 {
        return Err(CorpusError::InvalidWindow(window));
    }
    let mut patterns = HashSet::new();
    let mut seen_any = false;
    let mut buf = Vec::with_capacity(window * window);
    for grid in corpus {
        seen_any = true;
        if grid.rows() < window || grid.cols() < window {
            return Err(CorpusError::WindowTooLarge {
                window,
                rows: grid.rows(),
                cols: grid.cols(),
            });
        }
        for r in 0..=grid.rows() - window {
            for c in 0..=grid.cols() - window {
                block(grid, r, c, window, &mut buf);
                if !patterns.contains(&buf) {
                    patterns.insert(buf.clone());
                }
            }
        }
    }
    if !seen_any {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(PatternDict { window, patterns })
}
