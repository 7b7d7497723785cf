//! Model files: parameters in the tensor parameter format, metadata in a
//! JSON sidecar next to them (`<file>.json`).

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::arch::{build_critic, build_generator, CriticArch, GeneratorArch};
use super::train::{TrainConfig, TrainHistory, TrainedModel};
use super::GanError;
use crate::corpusgen::{ModelKind, Objective};
use crate::levelgrid::Game;
use crate::seeding::rng_from;
use crate::tensor::{read_params, write_params, Dtype};

pub const MODEL_FORMAT: &str = "levelsmith-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub kind: ModelKind,
    pub game: Game,
    pub objective: Objective,
    pub classes: Vec<usize>,
    pub seed: u64,
    pub config: TrainConfig,
    pub corpus_hash: Option<String>,
    pub generator: GeneratorArch,
    pub critic: CriticArch,
    pub history: TrainHistory,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GanError {
    GanError::Io(format!("{}: {e}", path.display()))
}

/// Saves with 64-bit parameters.
pub fn save_model(
    model: &TrainedModel,
    path: &Path,
    corpus_hash: Option<&str>,
) -> Result<ModelMeta, GanError> {
    save_model_as(model, path, corpus_hash, Dtype::F64)
}

/// Saves with the given parameter precision. Loading detects it.
pub fn save_model_as(
    model: &TrainedModel,
    path: &Path,
    corpus_hash: Option<&str>,
    dtype: Dtype,
) -> Result<ModelMeta, GanError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut blocks = model.generator.params.to_named("gen.");
    blocks.extend(model.critic.params.to_named("critic."));
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_params(BufWriter::new(file), &blocks, dtype)?;

    let meta = ModelMeta {
        format: MODEL_FORMAT.to_string(),
        kind: model.kind,
        game: model.game,
        objective: model.objective,
        classes: model.classes.clone(),
        seed: model.config.seed,
        config: model.config.clone(),
        corpus_hash: corpus_hash.map(str::to_string),
        generator: model.generator.arch.clone(),
        critic: model.critic.arch.clone(),
        history: model.history.clone(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| io_err(&side, e))?;
    fs::write(&side, json + "\n").map_err(|e| io_err(&side, e))?;
    Ok(meta)
}

pub fn load_model(path: &Path) -> Result<(TrainedModel, ModelMeta), GanError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)
        .map_err(|e| GanError::Format(format!("{}: {e}", side.display())))?;
    if meta.format != MODEL_FORMAT {
        return Err(GanError::Format(format!(
            "unsupported model format {:?}",
            meta.format
        )));
    }
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let blocks = read_params(BufReader::new(file))?;

    let ga = &meta.generator;
    // the init rng only fills values that are overwritten below
    let mut generator = build_generator(
        ga.rows,
        ga.cols,
        ga.channels,
        ga.latent_dim,
        ga.label_dim,
        &mut rng_from(0),
    )?;
    let ca = &meta.critic;
    let mut critic = build_critic(
        ca.rows,
        ca.cols,
        ca.channels,
        ca.label_dim,
        &mut rng_from(0),
    )?;
    if generator.arch != meta.generator || critic.arch != meta.critic {
        return Err(GanError::Format(
            "architecture in sidecar does not match this build".into(),
        ));
    }
    generator.params.load_named("gen.", &blocks)?;
    critic.params.load_named("critic.", &blocks)?;
    let expected = generator.params.names.len()
        + 2 * generator.params.running.len()
        + critic.params.names.len()
        + 2 * critic.params.running.len();
    if blocks.len() != expected {
        return Err(GanError::Format(format!(
            "{} parameter blocks, expected {expected}",
            blocks.len()
        )));
    }
    let model = TrainedModel {
        kind: meta.kind,
        game: meta.game,
        objective: meta.objective,
        classes: meta.classes.clone(),
        config: meta.config.clone(),
        generator,
        critic,
        history: meta.history.clone(),
    };
    Ok((model, meta))
}
