//! On-disk corpus layout:
//! `<root>/<game>/<playable|unplayable>/class_<k>/levels.txt` plus
//! `<root>/<game>/manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusEntry, CorpusError, CorpusSpec};
use crate::levelgrid::{
    corpus_header, parse_corpus_header, read_levels, write_levels, Game, LevelRecord,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: CorpusSpec,
    pub playable: usize,
    pub unplayable: usize,
    pub corpus_hash: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io(format!("{}: {e}", path.display()))
}

pub fn game_dir(root: &Path, game: Game) -> PathBuf {
    root.join(game.name())
}

pub fn class_file(root: &Path, game: Game, playable: bool, k: usize) -> PathBuf {
    game_dir(root, game)
        .join(if playable { "playable" } else { "unplayable" })
        .join(format!("class_{k}"))
        .join("levels.txt")
}

fn render_group(
    entries: &[CorpusEntry],
    game: Game,
    playable: bool,
    k: usize,
) -> Result<String, CorpusError> {
    let records: Vec<LevelRecord> = entries
        .iter()
        .filter(|e| e.playable == playable && e.class_label == k)
        .map(|e| LevelRecord {
            header: Some(corpus_header(e.playable, e.feature_count)),
            grid: e.grid.clone(),
        })
        .collect();
    write_levels(&records, &game.tileset()).map_err(|e| CorpusError::Io(e.to_string()))
}

/// SHA-256 over every class file in layout order.
pub fn corpus_hash(entries: &[CorpusEntry], spec: &CorpusSpec) -> Result<String, CorpusError> {
    let mut hasher = Sha256::new();
    for playable in [true, false] {
        for &k in &spec.classes {
            hasher.update(render_group(entries, spec.game, playable, k)?.as_bytes());
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_corpus(
    root: &Path,
    spec: &CorpusSpec,
    entries: &[CorpusEntry],
) -> Result<CorpusManifest, CorpusError> {
    for playable in [true, false] {
        for &k in &spec.classes {
            let path = class_file(root, spec.game, playable, k);
            fs::create_dir_all(path.parent().expect("class file has a parent"))
                .map_err(|e| io_err(&path, e))?;
            fs::write(&path, render_group(entries, spec.game, playable, k)?)
                .map_err(|e| io_err(&path, e))?;
        }
    }
    let manifest = CorpusManifest {
        spec: spec.clone(),
        playable: entries.iter().filter(|e| e.playable).count(),
        unplayable: entries.iter().filter(|e| !e.playable).count(),
        corpus_hash: corpus_hash(entries, spec)?,
    };
    let path = game_dir(root, spec.game).join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path, game: Game) -> Result<CorpusManifest, CorpusError> {
    let path = game_dir(root, game).join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&path, e))
}

/// Loads a corpus and re-verifies every entry; stale metadata is an error.
pub fn read_corpus(
    root: &Path,
    game: Game,
) -> Result<(CorpusManifest, Vec<CorpusEntry>), CorpusError> {
    let manifest = read_manifest(root, game)?;
    let tileset = game.tileset();
    let mut entries = Vec::new();
    for playable in [true, false] {
        for &k in &manifest.spec.classes {
            let path = class_file(root, game, playable, k);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            for rec in read_levels(&text, &tileset).map_err(|e| io_err(&path, e))? {
                let entry = CorpusEntry::verified(rec.grid, game);
                let header = rec.header.as_deref().and_then(parse_corpus_header);
                if header != Some((entry.playable, entry.feature_count))
                    || entry.playable != playable
                    || entry.class_label != k
                {
                    return Err(io_err(&path, "level metadata does not match recomputation"));
                }
                entries.push(entry);
            }
        }
    }
    Ok((manifest, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpusgen::build_corpus;

    #[test]
    fn write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::new(Game::Cave, 30, 5);
        let corpus = build_corpus(&spec).unwrap();
        let manifest = write_corpus(dir.path(), &spec, &corpus).unwrap();
        assert_eq!((manifest.playable, manifest.unplayable), (90, 90));
        let (m2, back) = read_corpus(dir.path(), Game::Cave).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(back, corpus);

        let f = class_file(dir.path(), Game::Cave, true, 1);
        let text = fs::read_to_string(&f)
            .unwrap()
            .replacen("playable=1", "playable=0", 1);
        fs::write(&f, text).unwrap();
        assert!(read_corpus(dir.path(), Game::Cave).is_err());
    }
}
