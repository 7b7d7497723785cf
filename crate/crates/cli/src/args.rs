//! Command-line flags and the matching config-file sections.
//!
//! A config file is TOML with one table per command (`[corpus]`, `[train]`,
//! `[sample]`, `[eval]`, `[experiment]`, `[render]`). Keys are the long flag
//! names with underscores; flags given on the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use levelsmith_core::ganmodels::{LossHead, TrainConfig};
use levelsmith_core::{CorpusSpec, Game, ModelKind};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, EXIT_MISSING};

#[derive(Debug, Parser)]
#[command(
    name = "levelsmith",
    version,
    about = "Train and evaluate tile-level GANs"
)]
pub struct Cli {
    /// Config file with per-command sections
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled corpus of playable and unplayable levels
    Corpus(CorpusArgs),
    /// Train one model per requested kind and objective
    Train(TrainArgs),
    /// Sample levels from a trained model
    Sample(SampleArgs),
    /// Score a directory of sampled levels
    Eval(EvalArgs),
    /// Run a full experiment plan and write a report
    Experiment(ExperimentArgs),
    /// Print levels as glyph art
    Render(RenderArgs),
}

/// Copies every field that is `None` in `self` from `base`.
macro_rules! merge_fields {
    ($self:ident, $base:ident; $($f:ident),* $(,)?) => {
        $( if $self.$f.is_none() { $self.$f = $base.$f; } )*
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct CorpusArgs {
    /// Game: cave or mario
    #[arg(long)]
    pub game: Option<Game>,
    /// Playable levels per class [default: 100]
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Feature classes [default: 1,2,3]
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<usize>>,
    /// Corpus seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pattern window for the unplayable mutation [default: 3]
    #[arg(long)]
    pub window: Option<usize>,
    /// Attempts per level before giving up [default: 200]
    #[arg(long)]
    pub attempt_budget: Option<usize>,
    /// Output directory [default: corpus]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CorpusArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; game, per_class, classes, seed, window, attempt_budget, out);
        self
    }

    pub fn spec(&self, game: Game) -> CorpusSpec {
        let mut spec = CorpusSpec::new(game, self.per_class.unwrap_or(100), self.seed.unwrap_or(7));
        if let Some(c) = &self.classes {
            spec.classes = c.clone();
        }
        if let Some(w) = self.window {
            spec.window = w;
        }
        if let Some(b) = self.attempt_budget {
            spec.attempt_budget = b;
        }
        spec
    }
}

/// Training hyperparameters shared by `train` and `experiment`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct HyperArgs {
    /// Generator iterations [default: 200]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Minibatch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// RMSprop learning rate [default: 0.00005]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Critic updates per generator update [default: 5]
    #[arg(long)]
    pub critic_steps: Option<usize>,
    /// Critic weight clipping bound [default: 0.01]
    #[arg(long)]
    pub clip: Option<f64>,
    /// Weight on positive real samples [default: 1]
    #[arg(long)]
    pub alpha_plus: Option<f64>,
    /// Weight on negative real samples [default: 0.5]
    #[arg(long)]
    pub alpha_minus: Option<f64>,
    /// Loss head: wasserstein or loggan [default: wasserstein]
    #[arg(long)]
    pub loss_head: Option<LossHead>,
    /// Latent vector size [default: 32]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// RMSprop decay [default: 0.99]
    #[arg(long)]
    pub rms_decay: Option<f64>,
    /// RMSprop epsilon [default: 1e-8]
    #[arg(long)]
    pub rms_epsilon: Option<f64>,
}

impl HyperArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; iterations, batch_size, learning_rate, critic_steps, clip,
            alpha_plus, alpha_minus, loss_head, latent_dim, rms_decay, rms_epsilon);
        self
    }

    pub fn config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            iterations: self.iterations.unwrap_or(d.iterations),
            critic_steps: self.critic_steps.unwrap_or(d.critic_steps),
            clip: self.clip.unwrap_or(d.clip),
            alpha_plus: self.alpha_plus.unwrap_or(d.alpha_plus),
            alpha_minus: self.alpha_minus.unwrap_or(d.alpha_minus),
            loss_head: self.loss_head.unwrap_or(d.loss_head),
            seed,
            latent_dim: self.latent_dim.unwrap_or(d.latent_dim),
            rms_decay: self.rms_decay.unwrap_or(d.rms_decay),
            rms_epsilon: self.rms_epsilon.unwrap_or(d.rms_epsilon),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct TrainArgs {
    /// Corpus directory written by `corpus` [default: corpus]
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Game: cave or mario
    #[arg(long)]
    pub game: Option<Game>,
    /// Model kinds: vanilla, rumi, cgan [default: vanilla]
    #[arg(long = "kind", value_delimiter = ',')]
    pub kind: Option<Vec<ModelKind>>,
    /// Objectives: playability or class:<k> [default: playability]
    #[arg(long = "objective", value_delimiter = ',')]
    pub objective: Option<Vec<String>>,
    /// Training seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for model files [default: models]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub hyper: HyperArgs,
}

impl TrainArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; corpus, game, kind, objective, seed, out);
        self.hyper = self.hyper.merge(base.hyper);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct SampleArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of levels [default: 500]
    #[arg(long)]
    pub n: Option<usize>,
    /// Target class; conditional models are sampled with label (class, 0)
    #[arg(long)]
    pub class: Option<usize>,
    /// Latent seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: samples]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SampleArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; model, n, class, seed, out);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct EvalArgs {
    /// Sample directory (levels.txt and meta.json) or a levels file
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Game; read from meta.json when omitted
    #[arg(long)]
    pub game: Option<Game>,
    /// Required feature count; omit to score playability only
    #[arg(long)]
    pub target: Option<usize>,
    /// Print JSON instead of text
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
    /// Also write the JSON cell to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; samples, game, target, out);
        self.json |= base.json;
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct ExperimentArgs {
    /// Plan file: a config file whose [experiment], [train] and [corpus]
    /// sections describe the run
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Experiment: one or two [default: one]
    #[arg(long)]
    pub experiment: Option<String>,
    /// Game: cave or mario
    #[arg(long)]
    pub game: Option<Game>,
    /// Model kinds [default: vanilla,rumi,cgan]
    #[arg(long, value_delimiter = ',')]
    pub model_kinds: Option<Vec<ModelKind>>,
    /// Target classes [default: 1,2,3]
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<usize>>,
    /// Levels sampled per model [default: 500]
    #[arg(long)]
    pub samples_per_model: Option<usize>,
    /// Seeds, one full set of models each [default: 1,2,3]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Parent directory for timestamped run directories [default: runs]
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    /// Exact run directory, instead of a timestamped one
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub hyper: HyperArgs,
}

impl ExperimentArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; plan, experiment, game, model_kinds, classes,
            samples_per_model, seeds, runs_dir, run_dir);
        self.hyper = self.hyper.merge(base.hyper);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct RenderArgs {
    /// Levels file, or a directory holding levels.txt
    #[arg(long)]
    pub levels: Option<PathBuf>,
    /// Game: cave or mario
    #[arg(long)]
    pub game: Option<Game>,
    /// Zero-based level index; all levels when omitted
    #[arg(long)]
    pub index: Option<usize>,
}

impl RenderArgs {
    pub(crate) fn merge(mut self, base: Self) -> Self {
        merge_fields!(self, base; levels, game, index);
        self
    }
}

/// Parsed config file, one raw table per command.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

const SECTIONS: [&str; 6] = ["corpus", "train", "sample", "eval", "experiment", "render"];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::new(
                EXIT_MISSING,
                format!("config file not found: {}", path.display()),
            ));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
            .map_err(|e| CliError::validation(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::validation(e.to_string()))?;
        for (name, value) in &table {
            let cmd = Cli::command();
            let sub = cmd
                .find_subcommand(name)
                .filter(|_| SECTIONS.contains(&name.as_str()))
                .ok_or_else(|| CliError::validation(format!("unknown config section [{name}]")))?;
            let section = value
                .as_table()
                .ok_or_else(|| CliError::validation(format!("[{name}] must be a table")))?;
            for key in section.keys() {
                let known = sub.get_arguments().any(|a| a.get_id().as_str() == key);
                let known = known && !["config", "help", "version"].contains(&key.as_str());
                if !known {
                    return Err(CliError::validation(format!(
                        "unknown key `{key}` in [{name}]"
                    )));
                }
            }
        }
        Ok(ConfigFile { table })
    }

    fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, CliError> {
        match self.table.get(name) {
            None => Ok(T::default()),
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| {
                CliError::validation(format!("[{name}]: {}", e.message()))
            }),
        }
    }

    pub fn corpus(&self) -> Result<CorpusArgs, CliError> {
        self.section("corpus")
    }

    pub fn hyper(&self, name: &str) -> Result<HyperArgs, CliError> {
        self.section(name)
    }

    pub fn train(&self) -> Result<TrainArgs, CliError> {
        let mut t: TrainArgs = self.section("train")?;
        t.hyper = self.hyper("train")?;
        Ok(t)
    }

    pub fn experiment(&self) -> Result<ExperimentArgs, CliError> {
        let mut e: ExperimentArgs = self.section("experiment")?;
        e.hyper = self.hyper("experiment")?.merge(self.hyper("train")?);
        Ok(e)
    }
}

/// Applies config-file values under the flags of the chosen command.
pub fn resolve(command: Command, file: &ConfigFile) -> Result<Command, CliError> {
    Ok(match command {
        Command::Corpus(a) => Command::Corpus(a.merge(file.corpus()?)),
        Command::Train(a) => Command::Train(a.merge(file.train()?)),
        Command::Sample(a) => Command::Sample(a.merge(file.section("sample")?)),
        Command::Eval(a) => Command::Eval(a.merge(file.section("eval")?)),
        Command::Experiment(a) => Command::Experiment(a.merge(file.experiment()?)),
        Command::Render(a) => Command::Render(a.merge(file.section("render")?)),
    })
}
