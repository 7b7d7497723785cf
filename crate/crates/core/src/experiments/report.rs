//! Text and JSON reports. Both renderings are deterministic: no clocks, no
//! hash-map iteration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{CellMetrics, MetricsTable};
use super::{Experiment, ExperimentError, ExperimentPlan};
use crate::corpusgen::ModelKind;
use crate::levelgrid::Game;

pub const REPORT_FORMAT: &str = "levelsmith-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTable {
    pub seed: u64,
    pub table: MetricsTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub seed: u64,
    pub kind: ModelKind,
    pub target: Option<usize>,
    pub error: String,
}

/// Published numbers printed next to ours for orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

/// Reference values for an experiment. Experiment one lists both games;
/// experiment two lists the given game's per-class table.
pub fn reference_table(experiment: Experiment, game: Game) -> ReferenceTable {
    let s = |v: &[&str]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    match experiment {
        Experiment::One => ReferenceTable {
            columns: s(&["vanilla", "rumi", "cgan"]),
            rows: vec![
                ("mario".into(), vec![67.8, 72.0, 75.4]),
                ("cave".into(), vec![87.0, 89.6, 66.6]),
            ],
        },
        Experiment::Two => {
            let rows = match game {
                Game::Mario => [
                    [
                        44.8, 41.2, 19.0, 35.0, 67.6, 65.0, 64.4, 65.6, 30.4, 28.8, 12.8, 24.0,
                    ],
                    [
                        41.2, 41.0, 0.6, 27.6, 65.2, 71.2, 56.8, 64.4, 25.4, 31.0, 0.0, 18.8,
                    ],
                    [
                        44.4, 31.2, 34.8, 36.6, 65.4, 69.8, 62.4, 65.8, 29.4, 22.4, 23.4, 25.0,
                    ],
                ],
                Game::Cave => [
                    [
                        24.4, 20.6, 4.6, 16.5, 85.0, 79.0, 81.8, 81.9, 20.6, 16.2, 4.0, 13.6,
                    ],
                    [
                        18.4, 24.6, 1.8, 14.9, 83.6, 84.0, 82.2, 83.2, 16.2, 21.4, 1.8, 13.1,
                    ],
                    [
                        38.6, 30.0, 19.6, 29.4, 41.7, 31.9, 32.2, 35.3, 16.0, 9.6, 12.8, 12.8,
                    ],
                ],
            };
            let mut columns = Vec::new();
            for group in ["correct", "playable", "playable-correct"] {
                for c in ["1", "2", "3", "avg"] {
                    columns.push(format!("{group} {c}"));
                }
            }
            ReferenceTable {
                columns,
                rows: ["vanilla", "rumi", "cgan"]
                    .iter()
                    .zip(rows)
                    .map(|(k, r)| (k.to_string(), r.to_vec()))
                    .collect(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub experiment: Experiment,
    pub game: Game,
    pub plan_hash: String,
    pub corpus_hash: String,
    pub seeds: Vec<u64>,
    pub plan: ExperimentPlan,
    pub median: MetricsTable,
    pub per_seed: Vec<SeedTable>,
    pub failures: Vec<JobFailure>,
    pub reference: ReferenceTable,
}

impl ExperimentReport {
    pub fn new(
        plan: &ExperimentPlan,
        corpus_hash: &str,
        per_seed: Vec<SeedTable>,
        failures: Vec<JobFailure>,
    ) -> Self {
        let tables: Vec<MetricsTable> = per_seed.iter().map(|s| s.table.clone()).collect();
        let median = MetricsTable::median(&tables).expect("plans have at least one seed");
        ExperimentReport {
            format: REPORT_FORMAT.to_string(),
            experiment: plan.experiment,
            game: plan.game,
            plan_hash: plan.hash(),
            corpus_hash: corpus_hash.to_string(),
            seeds: plan.seeds.clone(),
            plan: plan.clone(),
            median,
            per_seed,
            failures,
            reference: reference_table(plan.experiment, plan.game),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn table_one(out: &mut String, table: &MetricsTable) {
    let _ = write!(out, "{:<16}", "");
    for row in &table.rows {
        let _ = write!(out, "{:>9}", row.kind.name());
    }
    out.push('\n');
    let _ = write!(out, "{:<16}", table.game.name());
    for row in &table.rows {
        let _ = write!(out, "{:>9}", fmt_value(row.cells[0].map(|c| c.playable)));
    }
    out.push('\n');
}

type Column = fn(&CellMetrics) -> Option<f64>;

fn table_two(out: &mut String, table: &MetricsTable) {
    let groups: [(&str, Column); 3] = [
        ("correct", |c| c.correct),
        ("playable", |c| Some(c.playable)),
        ("playable-correct", |c| c.playable_correct),
    ];
    let width = 7 * (table.classes.len() + 1);
    let _ = write!(out, "{:<16}", "");
    for (name, _) in &groups {
        let _ = write!(out, " |{name:^width$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<16}", "");
    for _ in &groups {
        out.push_str(" |");
        for k in &table.classes {
            let _ = write!(out, "{k:>7}");
        }
        let _ = write!(out, "{:>7}", "avg");
    }
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "{:<16}", row.kind.name());
        for (_, get) in &groups {
            out.push_str(" |");
            for cell in row.cells.iter().chain([&row.average]) {
                let _ = write!(out, "{:>7}", fmt_value(cell.as_ref().and_then(get)));
            }
        }
        out.push('\n');
    }
}

fn table(out: &mut String, experiment: Experiment, table: &MetricsTable) {
    match experiment {
        Experiment::One => table_one(out, table),
        Experiment::Two => table_two(out, table),
    }
}

fn reference(out: &mut String, r: &ReferenceTable) {
    let _ = write!(out, "{:<16}", "");
    for c in &r.columns {
        let _ = write!(out, "{:>9}", c.split(' ').next_back().unwrap_or(c));
    }
    out.push('\n');
    for (label, values) in &r.rows {
        let _ = write!(out, "{:<16}", format!("ref {label}"));
        for v in values {
            let _ = write!(out, "{v:>9.1}");
        }
        out.push('\n');
    }
}

fn render_text(r: &ExperimentReport) -> String {
    let mut out = String::new();
    let title = match r.experiment {
        Experiment::One => "playable %",
        Experiment::Two => "correct / playable / playable-correct %",
    };
    let _ = writeln!(
        out,
        "experiment {} ({}): {title}",
        r.experiment,
        r.game.name()
    );
    let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "seeds: {}", seeds.join(","));
    let _ = writeln!(out, "plan: {}", r.plan_hash);
    let _ = writeln!(out, "corpus: {}", r.corpus_hash);
    let c = &r.plan.train_config;
    let _ = writeln!(
        out,
        "train: head={} iterations={} critic_steps={} batch={} lr={} clip={} alpha+={} alpha-={} latent={}",
        c.loss_head,
        c.iterations,
        c.critic_steps,
        c.batch_size,
        c.learning_rate,
        c.clip,
        c.alpha_plus,
        c.alpha_minus,
        c.latent_dim
    );
    let s = &r.plan.corpus_spec;
    let _ = writeln!(
        out,
        "corpus spec: per_class={} classes={:?} seed={} samples/model={}",
        s.per_class, s.classes, s.seed, r.plan.samples_per_model
    );

    let _ = writeln!(out, "\nmedian over {} seed(s)", r.per_seed.len());
    table(&mut out, r.experiment, &r.median);
    let _ = writeln!(out, "\nreference values");
    reference(&mut out, &r.reference);
    for st in &r.per_seed {
        let _ = writeln!(out, "\nseed {}", st.seed);
        table(&mut out, r.experiment, &st.table);
    }
    out.push('\n');
    if r.failures.is_empty() {
        let _ = writeln!(out, "failures: none");
    } else {
        let _ = writeln!(out, "failures:");
        for f in &r.failures {
            let target = f
                .target
                .map_or_else(|| "all".to_string(), |k| k.to_string());
            let _ = writeln!(
                out,
                "  seed {} {} class {target}: {}",
                f.seed, f.kind, f.error
            );
        }
    }
    out
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
    }
}

/// Writes `report.txt` and `report.json` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    let fail = |e: std::io::Error| ExperimentError::WriteFailure(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    fs::write(
        dir.join("report.txt"),
        emit_report(report, ReportFormat::Text),
    )
    .map_err(fail)?;
    fs::write(
        dir.join("report.json"),
        emit_report(report, ReportFormat::Json),
    )
    .map_err(fail)
}
