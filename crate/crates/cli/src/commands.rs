use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use levelsmith_core::corpusgen::io::{read_corpus, read_manifest, write_corpus};
use levelsmith_core::corpusgen::{build_corpus, partition_samples};
use levelsmith_core::experiments::{
    emit_report, evaluate_samples, read_samples, run_experiment, write_samples, ExperimentPlan,
    LabelCount, ReportFormat, SampleMeta,
};
use levelsmith_core::ganmodels::{load_model, save_model, train, GanError};
use levelsmith_core::levelgrid::{read_levels, render_level};
use levelsmith_core::seeding::rng_from;
use levelsmith_core::{Game, ModelKind, Objective};
use rayon::prelude::*;

use crate::args::{
    ConfigFile, CorpusArgs, EvalArgs, ExperimentArgs, RenderArgs, SampleArgs, TrainArgs,
};
use crate::error::{CliError, EXIT_LABEL_REQUIRED};

fn require_game(game: Option<Game>) -> Result<Game, CliError> {
    game.ok_or_else(|| CliError::validation("--game is required (cave or mario)"))
}

fn require_path(p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::missing(p))
    }
}

pub fn corpus(args: CorpusArgs, out: &mut impl Write) -> Result<(), CliError> {
    let game = require_game(args.game)?;
    let spec = args.spec(game);
    spec.validate()?;
    let root = args.out.unwrap_or_else(|| PathBuf::from("corpus"));
    let entries = build_corpus(&spec)?;
    let manifest = write_corpus(&root, &spec, &entries)?;
    writeln!(
        out,
        "{}: {} playable, {} unplayable levels in {} (hash {})",
        game,
        manifest.playable,
        manifest.unplayable,
        root.display(),
        manifest.corpus_hash
    )?;
    Ok(())
}

fn objective_slug(o: Objective) -> String {
    match o {
        Objective::Playability => "playability".to_string(),
        Objective::Class(k) => format!("class{k}"),
    }
}

pub fn train_models(args: TrainArgs, out: &mut impl Write) -> Result<(), CliError> {
    let game = require_game(args.game)?;
    let root = args.corpus.unwrap_or_else(|| PathBuf::from("corpus"));
    let manifest_path = levelsmith_core::corpusgen::io::game_dir(&root, game).join("manifest.json");
    require_path(&manifest_path)?;
    let kinds = args.kind.unwrap_or_else(|| vec![ModelKind::Vanilla]);
    let objectives = args
        .objective
        .unwrap_or_else(|| vec!["playability".to_string()])
        .iter()
        .map(|s| s.parse::<Objective>().map_err(CliError::validation))
        .collect::<Result<Vec<_>, _>>()?;
    let config = args.hyper.config(args.seed.unwrap_or(0));
    config.validate()?;
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("models"));

    let (manifest, corpus) = read_corpus(&root, game)?;
    let mut jobs = Vec::new();
    for &kind in &kinds {
        for &objective in &objectives {
            jobs.push((kind, objective));
        }
    }
    let results: Vec<Result<PathBuf, CliError>> = jobs
        .par_iter()
        .map(|&(kind, objective)| {
            let name = format!("{kind}-{}", objective_slug(objective));
            let partition = partition_samples(&corpus, objective, kind, config.seed)?;
            let model = match train(kind, game, &partition, &config) {
                Ok(m) => m,
                Err(GanError::NonFiniteLoss { iteration, history }) => {
                    let path = out_dir.join(format!("{name}.history.json"));
                    fs::create_dir_all(&out_dir)?;
                    fs::write(
                        &path,
                        serde_json::to_string_pretty(&history).unwrap_or_default(),
                    )?;
                    return Err(GanError::NonFiniteLoss { iteration, history }.into());
                }
                Err(e) => return Err(e.into()),
            };
            let path = out_dir.join(format!("{name}.bin"));
            save_model(&model, &path, Some(&manifest.corpus_hash))?;
            Ok(path)
        })
        .collect();
    let mut first_err = None;
    for ((kind, objective), r) in jobs.iter().zip(results) {
        match r {
            Ok(path) => writeln!(out, "{kind} {objective}: {}", path.display())?,
            Err(e) => {
                eprintln!("{kind} {objective}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

pub fn sample(args: SampleArgs, out: &mut impl Write) -> Result<(), CliError> {
    let path = args
        .model
        .ok_or_else(|| CliError::validation("--model is required"))?;
    require_path(&path)?;
    let (model, _) = load_model(&path)?;
    let n = args.n.unwrap_or(500);
    if n == 0 {
        return Err(CliError::validation("--n must be at least 1"));
    }
    let label = match (model.kind.is_conditional(), args.class) {
        (true, None) => {
            return Err(CliError::new(
                EXIT_LABEL_REQUIRED,
                "conditional model needs --class (sampled with label (class, 0))",
            ))
        }
        (true, Some(k)) if !model.classes.contains(&k) => {
            return Err(CliError::validation(format!(
                "class {k} is not one of the model's classes {:?}",
                model.classes
            )))
        }
        (true, Some(k)) => model.sampling_label(k),
        (false, _) => None,
    };
    let seed = args.seed.unwrap_or(0);
    let grids = model.sample(n, label, &mut rng_from(seed))?;
    let dir = args.out.unwrap_or_else(|| PathBuf::from("samples"));
    let meta = SampleMeta {
        model: path.display().to_string(),
        game: model.game,
        kind: model.kind,
        seed,
        target: args.class,
        labels: label
            .map(|label| vec![LabelCount { label, count: n }])
            .unwrap_or_default(),
        count: n,
    };
    write_samples(&dir, &grids, &meta)?;
    writeln!(
        out,
        "{n} levels written to {}",
        dir.join("levels.txt").display()
    )?;
    Ok(())
}

pub fn eval(args: EvalArgs, out: &mut impl Write) -> Result<(), CliError> {
    let path = args
        .samples
        .ok_or_else(|| CliError::validation("--samples is required"))?;
    require_path(&path)?;
    let (grids, game, target) = if path.is_dir() {
        require_path(&path.join("levels.txt"))?;
        if path.join("meta.json").exists() {
            let meta_game = {
                let text = fs::read_to_string(path.join("meta.json"))?;
                serde_json::from_str::<SampleMeta>(&text)
                    .map_err(|e| CliError::validation(format!("meta.json: {e}")))?
                    .game
            };
            let game = args.game.unwrap_or(meta_game);
            let (grids, meta) = read_samples(&path, game)?;
            (grids, game, args.target.or(meta.target))
        } else {
            let game = require_game(args.game)?;
            (
                read_level_file(&path.join("levels.txt"), game)?,
                game,
                args.target,
            )
        }
    } else {
        let game = require_game(args.game)?;
        (read_level_file(&path, game)?, game, args.target)
    };
    if grids.is_empty() {
        return Err(CliError::validation("no levels to score"));
    }
    let cell = evaluate_samples(&grids, game, target);
    let json = serde_json::to_string_pretty(&cell).expect("cell serializes");
    if let Some(file) = &args.out {
        fs::write(file, json.clone() + "\n")?;
    }
    if args.json {
        writeln!(out, "{json}")?;
    } else {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        writeln!(
            out,
            "levels {}  correct {}  playable {:.1}  playable-correct {}",
            cell.samples,
            show(cell.correct),
            cell.playable,
            show(cell.playable_correct)
        )?;
    }
    Ok(())
}

fn read_level_file(path: &Path, game: Game) -> Result<Vec<levelsmith_core::Grid>, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(read_levels(&text, &game.tileset())
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .into_iter()
        .map(|r| r.grid)
        .collect())
}

/// Builds the plan from the plan file, the `--config` file and the flags.
pub fn build_plan(
    args: ExperimentArgs,
    corpus_base: CorpusArgs,
) -> Result<(ExperimentPlan, ExperimentArgs), CliError> {
    let (args, corpus) = match &args.plan {
        Some(p) => {
            let file = ConfigFile::load(p)?;
            let args = args.clone().merge(file.experiment()?);
            (args, corpus_base.merge(file.corpus()?))
        }
        None => (args, corpus_base),
    };
    let experiment = args
        .experiment
        .as_deref()
        .unwrap_or("one")
        .parse()
        .map_err(CliError::validation)?;
    let game = require_game(args.game.or(corpus.game))?;
    if corpus.game.is_some_and(|g| g != game) {
        return Err(CliError::validation(
            "[corpus] game differs from the experiment game",
        ));
    }
    let mut plan = ExperimentPlan::new(experiment, game);
    if let Some(k) = &args.model_kinds {
        plan.model_kinds = k.clone();
    }
    if let Some(c) = &args.classes {
        plan.classes = c.clone();
    }
    if let Some(n) = args.samples_per_model {
        plan.samples_per_model = n;
    }
    if let Some(s) = &args.seeds {
        plan.seeds = s.clone();
    }
    plan.train_config = args.hyper.config(0);
    plan.corpus_spec = corpus.spec(game);
    plan.validate()?;
    Ok((plan, args))
}

fn fresh_run_dir(parent: &Path, hash: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = parent.join(format!("{stamp}-{hash}"));
    let mut dir = base.clone();
    let mut i = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{i}", base.display()));
        i += 1;
    }
    dir
}

pub fn experiment(
    args: ExperimentArgs,
    corpus_base: CorpusArgs,
    out: &mut impl Write,
) -> Result<(), CliError> {
    if let Some(p) = &args.plan {
        require_path(p)?;
    }
    let (plan, args) = build_plan(args, corpus_base)?;
    let dir = match &args.run_dir {
        Some(d) => d.clone(),
        None => fresh_run_dir(
            args.runs_dir.as_deref().unwrap_or(Path::new("runs")),
            &plan.hash(),
        ),
    };
    fs::create_dir_all(&dir)?;
    let report = run_experiment(&plan, Some(&dir))?;
    out.write_all(emit_report(&report, ReportFormat::Text).as_bytes())?;
    writeln!(out, "\nrun directory: {}", dir.display())?;
    Ok(())
}

pub fn render(args: RenderArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut path = args
        .levels
        .ok_or_else(|| CliError::validation("--levels is required"))?;
    require_path(&path)?;
    if path.is_dir() {
        path = path.join("levels.txt");
        require_path(&path)?;
    }
    let game = match args.game {
        Some(g) => g,
        None => guess_game(&path)?,
    };
    let grids = read_level_file(&path, game)?;
    let ts = game.tileset();
    let chosen: Vec<(usize, &levelsmith_core::Grid)> = match args.index {
        Some(i) => vec![(
            i,
            grids.get(i).ok_or_else(|| {
                CliError::validation(format!("index {i} out of range ({} levels)", grids.len()))
            })?,
        )],
        None => grids.iter().enumerate().collect(),
    };
    for (n, (_, g)) in chosen.iter().enumerate() {
        if n > 0 {
            writeln!(out)?;
        }
        let art = render_level(g, &ts).map_err(|e| CliError::validation(e.to_string()))?;
        out.write_all(art.as_bytes())?;
        if !art.ends_with('\n') {
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Game of a sample or corpus file, from the sidecar or a corpus manifest.
fn guess_game(levels: &Path) -> Result<Game, CliError> {
    let dir = levels.parent().unwrap_or(Path::new("."));
    if let Ok(text) = fs::read_to_string(dir.join("meta.json")) {
        if let Ok(meta) = serde_json::from_str::<SampleMeta>(&text) {
            return Ok(meta.game);
        }
    }
    for game in [Game::Cave, Game::Mario] {
        for anc in dir.ancestors() {
            if anc.file_name().is_some_and(|n| n == game.name()) {
                let root = anc.parent().unwrap_or(Path::new("."));
                if read_manifest(root, game).is_ok() {
                    return Ok(game);
                }
            }
        }
    }
    Err(CliError::validation("--game is required for this file"))
}
