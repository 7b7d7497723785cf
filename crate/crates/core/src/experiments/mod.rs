//! End-to-end experiment runs: partition the corpus, train every model of a
//! plan, sample and persist levels, score them and build the reports.
//!
//! Run directory layout:
//!
//! ```text
//! <run>/models/<model>.bin (+ .bin.json)
//! <run>/samples/<kind>-seed<s>/<all|class_k>/levels.txt (+ meta.json)
//! <run>/report.txt
//! <run>/report.json
//! ```

mod metrics;
mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpusgen::io::corpus_hash;
use crate::corpusgen::{
    build_corpus, partition_samples, CorpusEntry, CorpusError, CorpusSpec, LabelPair, ModelKind,
    Objective,
};
use crate::ganmodels::{save_model, train, GanError, TrainConfig, TrainedModel};
use crate::levelgrid::{read_levels, write_levels, Game, Grid, LevelRecord};
use crate::seeding::child_rng;

pub use metrics::{evaluate_samples, round1, CellMetrics, MetricsRow, MetricsTable};
pub use report::{
    emit_report, reference_table, write_report, ExperimentReport, JobFailure, ReferenceTable,
    ReportFormat, SeedTable, REPORT_FORMAT,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Io(String),
    #[error("report: {0}")]
    WriteFailure(String),
}

fn io_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Playability only.
    One,
    /// Playability plus an exact feature count per class.
    Two,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::One => "one",
            Experiment::Two => "two",
        })
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one" | "1" => Ok(Experiment::One),
            "two" | "2" => Ok(Experiment::Two),
            other => Err(format!(
                "unknown experiment {other:?} (expected one or two)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub experiment: Experiment,
    pub game: Game,
    pub model_kinds: Vec<ModelKind>,
    pub classes: Vec<usize>,
    pub samples_per_model: usize,
    pub train_config: TrainConfig,
    pub corpus_spec: CorpusSpec,
    pub seeds: Vec<u64>,
}

impl ExperimentPlan {
    /// All three model kinds, classes 1 to 3, 500 samples per model, a
    /// 100-per-class corpus and three seeds.
    pub fn new(experiment: Experiment, game: Game) -> Self {
        ExperimentPlan {
            experiment,
            game,
            model_kinds: ModelKind::ALL.to_vec(),
            classes: vec![1, 2, 3],
            samples_per_model: 500,
            train_config: TrainConfig::default(),
            corpus_spec: CorpusSpec::new(game, 100, 7),
            seeds: vec![1, 2, 3],
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidPlan(m));
        if self.samples_per_model == 0 {
            return bad("samples_per_model must be at least 1".into());
        }
        if self.model_kinds.is_empty() {
            return bad("no model kinds".into());
        }
        let mut kinds = self.model_kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.model_kinds.len() {
            return bad("model kinds repeat".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.experiment == Experiment::Two && self.classes.len() < 2 {
            return bad("experiment two needs at least two classes".into());
        }
        if self.corpus_spec.game != self.game {
            return bad(format!(
                "corpus is for {} but the plan is for {}",
                self.corpus_spec.game, self.game
            ));
        }
        if let Some(k) = self
            .classes
            .iter()
            .find(|k| !self.corpus_spec.classes.contains(k))
        {
            return bad(format!("class {k} is not in the corpus"));
        }
        self.corpus_spec.validate()?;
        self.train_config
            .validate()
            .map_err(|e| ExperimentError::InvalidPlan(e.to_string()))
    }

    /// Short content hash, used to name run directories.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..12].to_string()
    }

    /// Table columns: the classes for experiment two, one column otherwise.
    pub fn columns(&self) -> Vec<Option<usize>> {
        match self.experiment {
            Experiment::One => vec![None],
            Experiment::Two => self.classes.iter().map(|&k| Some(k)).collect(),
        }
    }

    fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &seed in &self.seeds {
            for &kind in &self.model_kinds {
                for target in self.columns() {
                    jobs.push(Job { seed, kind, target });
                }
            }
        }
        jobs
    }
}

/// One trained model: a seed, a kind and an optional class target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Job {
    seed: u64,
    kind: ModelKind,
    target: Option<usize>,
}

impl Job {
    fn objective(&self) -> Objective {
        self.target.map_or(Objective::Playability, Objective::Class)
    }

    fn model_name(&self) -> String {
        match self.target {
            None => format!("{}-seed{}", self.kind, self.seed),
            Some(k) => format!("{}-class{k}-seed{}", self.kind, self.seed),
        }
    }
}

pub fn model_path(run_dir: &Path, name: &str) -> PathBuf {
    run_dir.join("models").join(format!("{name}.bin"))
}

pub fn sample_dir(run_dir: &Path, kind: ModelKind, seed: u64, target: Option<usize>) -> PathBuf {
    let class = target.map_or_else(|| "all".to_string(), |k| format!("class_{k}"));
    run_dir
        .join("samples")
        .join(format!("{kind}-seed{seed}"))
        .join(class)
}

/// Sidecar written next to every sample file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub model: String,
    pub game: Game,
    pub kind: ModelKind,
    pub seed: u64,
    pub target: Option<usize>,
    /// Labels fed to a conditional generator with how many samples each.
    pub labels: Vec<LabelCount>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: LabelPair,
    pub count: usize,
}

/// Samples for one job. Class targets use the label `(k, 0)`; a conditional
/// model trained for playability cycles through `(k, 0)` for every class in
/// order, splitting `n` as evenly as possible.
fn draw_samples(
    model: &TrainedModel,
    job: &Job,
    classes: &[usize],
    n: usize,
) -> Result<(Vec<Grid>, Vec<LabelCount>), GanError> {
    let stream = |i: u64| child_rng(job.seed, &[3, i]);
    if !model.kind.is_conditional() {
        return Ok((model.sample(n, None, &mut stream(0))?, Vec::new()));
    }
    let targets: Vec<usize> = match job.target {
        Some(k) => vec![k],
        None => classes.to_vec(),
    };
    let mut grids = Vec::with_capacity(n);
    let mut labels = Vec::new();
    for (i, &k) in targets.iter().enumerate() {
        let count = n / targets.len() + usize::from(i < n % targets.len());
        let label = model.sampling_label(k).expect("conditional model");
        grids.extend(model.sample(count, Some(label), &mut stream(i as u64))?);
        labels.push(LabelCount { label, count });
    }
    Ok((grids, labels))
}

pub fn write_samples(dir: &Path, grids: &[Grid], meta: &SampleMeta) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let records: Vec<LevelRecord> = grids
        .iter()
        .map(|g| LevelRecord {
            header: None,
            grid: g.clone(),
        })
        .collect();
    let path = dir.join("levels.txt");
    let text = write_levels(&records, &meta.game.tileset()).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    let path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(meta).map_err(|e| io_err(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
}

pub fn read_samples(dir: &Path, game: Game) -> Result<(Vec<Grid>, SampleMeta), ExperimentError> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let path = dir.join("levels.txt");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let grids = read_levels(&text, &game.tileset())
        .map_err(|e| io_err(&path, e))?
        .into_iter()
        .map(|r| r.grid)
        .collect();
    Ok((grids, meta))
}

/// What one job produced: its cell, or the reason it has none.
struct JobOutcome {
    job: Job,
    cell: Result<CellMetrics, String>,
}

fn run_job(
    plan: &ExperimentPlan,
    corpus: &[CorpusEntry],
    hash: &str,
    job: Job,
    run_dir: Option<&Path>,
) -> Result<JobOutcome, ExperimentError> {
    let outcome = |cell| Ok(JobOutcome { job, cell });
    let partition = match partition_samples(corpus, job.objective(), job.kind, job.seed) {
        Ok(p) => p,
        Err(e) => return outcome(Err(e.to_string())),
    };
    let config = TrainConfig {
        seed: job.seed,
        ..plan.train_config.clone()
    };
    let model = match train(job.kind, plan.game, &partition, &config) {
        Ok(m) => m,
        Err(e) => return outcome(Err(e.to_string())),
    };
    let name = job.model_name();
    if let Some(dir) = run_dir {
        let path = model_path(dir, &name);
        save_model(&model, &path, Some(hash)).map_err(|e| io_err(&path, e))?;
    }
    let (grids, labels) =
        match draw_samples(&model, &job, &partition.classes, plan.samples_per_model) {
            Ok(s) => s,
            Err(e) => return outcome(Err(e.to_string())),
        };
    if let Some(dir) = run_dir {
        let meta = SampleMeta {
            model: name,
            game: plan.game,
            kind: job.kind,
            seed: job.seed,
            target: job.target,
            labels,
            count: grids.len(),
        };
        write_samples(
            &sample_dir(dir, job.kind, job.seed, job.target),
            &grids,
            &meta,
        )?;
    }
    outcome(Ok(evaluate_samples(&grids, plan.game, job.target)))
}

/// Runs a plan on a prepared corpus. Models train concurrently; a model
/// that fails leaves its cell absent and is listed under `failures`. When
/// `run_dir` is given, models, samples and both reports are written there.
pub fn run_with_corpus(
    plan: &ExperimentPlan,
    corpus: &[CorpusEntry],
    corpus_hash: &str,
    run_dir: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    plan.validate()?;
    let outcomes = plan
        .jobs()
        .into_par_iter()
        .map(|job| run_job(plan, corpus, corpus_hash, job, run_dir))
        .collect::<Result<Vec<_>, _>>()?;

    let mut failures = Vec::new();
    let per_seed = plan
        .seeds
        .iter()
        .map(|&seed| {
            let rows = plan
                .model_kinds
                .iter()
                .map(|&kind| {
                    let cells = outcomes
                        .iter()
                        .filter(|o| o.job.seed == seed && o.job.kind == kind)
                        .map(|o| match &o.cell {
                            Ok(c) => Some(*c),
                            Err(e) => {
                                failures.push(JobFailure {
                                    seed,
                                    kind,
                                    target: o.job.target,
                                    error: e.clone(),
                                });
                                None
                            }
                        })
                        .collect();
                    MetricsRow::new(kind, cells)
                })
                .collect();
            SeedTable {
                seed,
                table: MetricsTable {
                    game: plan.game,
                    classes: table_classes(plan),
                    rows,
                },
            }
        })
        .collect();
    let report = ExperimentReport::new(plan, corpus_hash, per_seed, failures);
    if let Some(dir) = run_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn table_classes(plan: &ExperimentPlan) -> Vec<usize> {
    match plan.experiment {
        Experiment::One => Vec::new(),
        Experiment::Two => plan.classes.clone(),
    }
}

/// Builds the plan's corpus, then runs it.
pub fn run_experiment(
    plan: &ExperimentPlan,
    run_dir: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    plan.validate()?;
    let corpus = build_corpus(&plan.corpus_spec)?;
    let hash = corpus_hash(&corpus, &plan.corpus_spec)?;
    run_with_corpus(plan, &corpus, &hash, run_dir)
}

fn require(plan: &ExperimentPlan, want: Experiment) -> Result<(), ExperimentError> {
    if plan.experiment == want {
        Ok(())
    } else {
        Err(ExperimentError::InvalidPlan(format!(
            "plan is for experiment {}, not {want}",
            plan.experiment
        )))
    }
}

/// Playability of every model kind (one column per model).
pub fn run_experiment_one(
    plan: &ExperimentPlan,
    run_dir: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    require(plan, Experiment::One)?;
    run_experiment(plan, run_dir)
}

/// Correct, playable and playable-correct per class and model kind.
pub fn run_experiment_two(
    plan: &ExperimentPlan,
    run_dir: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    require(plan, Experiment::Two)?;
    run_experiment(plan, run_dir)
}

/// Recomputes every table of a finished run from its persisted samples.
pub fn rescore_run(run_dir: &Path) -> Result<ExperimentReport, ExperimentError> {
    let path = run_dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let stored: ExperimentReport = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let plan = &stored.plan;
    let mut per_seed = Vec::new();
    for st in &stored.per_seed {
        let mut rows = Vec::new();
        for row in &st.table.rows {
            let mut cells = Vec::new();
            for (cell, target) in row.cells.iter().zip(plan.columns()) {
                cells.push(match cell {
                    None => None,
                    Some(_) => {
                        let dir = sample_dir(run_dir, row.kind, st.seed, target);
                        let (grids, meta) = read_samples(&dir, plan.game)?;
                        if meta.count != grids.len() || meta.target != target {
                            return Err(io_err(&dir, "sample metadata does not match levels"));
                        }
                        Some(evaluate_samples(&grids, plan.game, target))
                    }
                });
            }
            rows.push(MetricsRow::new(row.kind, cells));
        }
        per_seed.push(SeedTable {
            seed: st.seed,
            table: MetricsTable {
                game: plan.game,
                classes: st.table.classes.clone(),
                rows,
            },
        });
    }
    Ok(ExperimentReport::new(
        plan,
        &stored.corpus_hash,
        per_seed,
        stored.failures.clone(),
    ))
}
