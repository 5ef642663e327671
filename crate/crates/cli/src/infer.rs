use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use policykit::forest::{random_forest, ForestArrays, RandomForestSpec};
use policykit::frame::{read_csv, AssignmentRule, ColumnFrame, CsvRoles, PartitionedFrame};
use policykit::inference::{
    compare_scores, BackendKind, Engine, InferenceBackend, ParityReport, ScoreColumn, Throughput, DEFAULT_BATCH_SIZE,
};
use policykit::synth::{generate, FeatureFamily, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    Block,
    Hash,
}

impl From<Rule> for AssignmentRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Block => AssignmentRule::ByRowIndexBlock,
            Rule::Hash => AssignmentRule::ByRowIdHash,
        }
    }
}

/// Every flag has a config key of the same name with `-` spelled `_`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSettings {
    pub backend: BackendKind,
    pub reference: BackendKind,
    pub batch_size: usize,
    pub partitions: usize,
    pub rule: Rule,
    pub report: ReportKind,
    pub tolerance: f64,
    pub repeats: usize,
    pub workers: Option<usize>,
    pub input: Option<PathBuf>,
    pub features: Vec<String>,
    pub treatment_column: String,
    pub outcome_column: String,
    pub row_id_column: Option<String>,
    pub forest: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub rows: usize,
    pub n_features: usize,
    pub n_treatments: usize,
    pub n_trees: usize,
    pub depth: usize,
    pub seed: u64,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            backend: BackendKind::VectorizedColumnar,
            reference: BackendKind::BroadcastRowwise,
            batch_size: DEFAULT_BATCH_SIZE,
            partitions: 8,
            rule: Rule::Block,
            report: ReportKind::Text,
            tolerance: 1e-9,
            repeats: 3,
            workers: None,
            input: None,
            features: Vec::new(),
            treatment_column: "treatment".to_owned(),
            outcome_column: "outcome".to_owned(),
            row_id_column: None,
            forest: None,
            scores: None,
            rows: 100_000,
            n_features: 32,
            n_treatments: 4,
            n_trees: 50,
            depth: 7,
            seed: 7,
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// TOML file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Backend the scores are checked against.
    #[arg(long, value_parser = parse_backend)]
    reference: Option<BackendKind>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    #[arg(long, value_enum)]
    report: Option<ReportKind>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV frame; a synthetic frame is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated feature columns; defaults to the forest's features.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    treatment_column: Option<String>,
    #[arg(long)]
    outcome_column: Option<String>,
    #[arg(long)]
    row_id_column: Option<String>,
    /// Forest text file; a random forest is generated when absent.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Write per-row scores here as CSV.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    #[arg(long)]
    n_treatments: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse().map_err(|e: policykit::Error| e.to_string())
}

macro_rules! overlay {
    ($settings:ident, $args:ident; $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $settings.$field = v; })*
    };
}

impl InferArgs {
    pub fn settings(self) -> anyhow::Result<InferSettings> {
        let mut s = match &self.config {
            Some(path) => toml::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?,
            None => InferSettings::default(),
        };
        let args = self;
        overlay!(s, args; backend, reference, batch_size, partitions, rule, report, tolerance, repeats,
            features, treatment_column, outcome_column, rows, n_features, n_treatments, n_trees, depth, seed);
        if args.workers.is_some() {
            s.workers = args.workers;
        }
        if args.input.is_some() {
            s.input = args.input;
        }
        if args.row_id_column.is_some() {
            s.row_id_column = args.row_id_column;
        }
        if args.forest.is_some() {
            s.forest = args.forest;
        }
        if args.scores.is_some() {
            s.scores = args.scores;
        }
        Ok(s)
    }
}

#[derive(Debug, Serialize)]
pub struct InferReport {
    pub backend: BackendKind,
    pub batch_size: usize,
    pub partitions: usize,
    pub rows: usize,
    pub n_trees: usize,
    pub n_treatments: usize,
    pub init_count: usize,
    pub checksum: String,
    pub parity: ParityReport,
    pub throughput: Throughput,
}

fn load(s: &InferSettings) -> anyhow::Result<(ColumnFrame, ForestArrays)> {
    let forest = match &s.forest {
        Some(path) => {
            ForestArrays::from_text(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let names = if s.features.is_empty() {
                FeatureFamily::Generic(s.n_features).column_names()
            } else {
                s.features.clone()
            };
            random_forest(&RandomForestSpec {
                n_trees: s.n_trees,
                depth: s.depth,
                n_features: names.len(),
                n_treatments: s.n_treatments,
                seed: s.seed,
                feature_names: Some(names),
                ..RandomForestSpec::default()
            })
        }
    };
    let frame = match &s.input {
        Some(path) => {
            let roles = CsvRoles {
                row_id: s.row_id_column.clone(),
                features: if s.features.is_empty() {
                    forest.feature_names.clone()
                } else {
                    s.features.clone()
                },
                treatment: s.treatment_column.clone(),
                outcome: s.outcome_column.clone(),
            };
            read_csv(path, &roles).with_context(|| format!("reading {}", path.display()))?
        }
        None => generate(&SynthSpec {
            n_rows: s.rows,
            n_treatments: forest.n_treatments,
            seed: s.seed,
            feature_families: vec![FeatureFamily::Generic(forest.n_features())],
            ..SynthSpec::default()
        })?,
    };
    Ok((frame, forest))
}

pub fn infer(s: &InferSettings) -> anyhow::Result<(InferReport, ScoreColumn)> {
    let (frame, forest) = load(s)?;
    let data = PartitionedFrame::partition(&frame, s.partitions, s.rule.into())?;
    let engine = Engine::new(s.workers)?;
    let backend = InferenceBackend::new(s.backend).with_batch_size(s.batch_size);
    let run = engine.score(&data, &forest, backend)?;
    let reference = engine.score(
        &data,
        &forest,
        InferenceBackend::new(s.reference).with_batch_size(s.batch_size),
    )?;
    let parity = compare_scores(
        s.reference.as_str(),
        &reference.scores,
        s.backend.as_str(),
        &run.scores,
        s.tolerance,
    )?;
    let throughput = engine.measure_throughput(&data, &forest, backend, s.repeats)?;
    let report = InferReport {
        backend: s.backend,
        batch_size: s.batch_size,
        partitions: s.partitions,
        rows: frame.n_rows(),
        n_trees: forest.trees.len(),
        n_treatments: forest.n_treatments,
        init_count: run.init_count,
        checksum: run.scores.checksum(),
        parity,
        throughput,
    };
    Ok((report, run.scores))
}

fn write_scores(path: &PathBuf, scores: &ScoreColumn) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["row_id".to_owned()];
    header.extend((0..scores.width()).map(|t| format!("score_{t}")));
    w.write_record(&header)?;
    for (i, id) in scores.row_ids().iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(scores.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: InferArgs) -> anyhow::Result<ExitCode> {
    let s = args.settings()?;
    if s.repeats == 0 {
        bail!("repeats must be at least 1");
    }
    let (report, scores) = infer(&s)?;
    if let Some(path) = &s.scores {
        write_scores(path, &scores)?;
    }
    match s.report {
        ReportKind::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        ReportKind::Text => {
            let p = &report.parity;
            println!(
                "{} on {} rows, {} partitions, batch {}: {:.0} rows/s (median of {})",
                report.backend,
                report.rows,
                report.partitions,
                report.batch_size,
                report.throughput.rows_per_second,
                report.throughput.samples.len()
            );
            println!(
                "parity vs {}: {} mismatched rows, max |delta| {:e}, checksum equal {}",
                p.reference_backend, p.mismatch_rows, p.max_abs_delta, p.checksum_equal
            );
        }
    }
    Ok(if report.parity.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<InferSettings>("backend = \"anti_pattern\"\nbatch = 4").is_err());
        let s: InferSettings = toml::from_str("backend = \"anti_pattern\"\nbatch_size = 4").unwrap();
        assert_eq!(s.backend, BackendKind::AntiPattern);
        assert_eq!(s.partitions, 8);
    }

    #[test]
    fn readme_config_parses() {
        let readme = include_str!("../../../README.md");
        let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
        let end = start + readme[start..].find("```").unwrap();
        let s: InferSettings = toml::from_str(&readme[start..end]).unwrap();
        assert_eq!(s.backend, BackendKind::VectorizedRowmajor);
        assert_eq!(s.rule, Rule::Hash);
    }

    #[test]
    fn small_synthetic_run_is_exact() {
        let s = InferSettings {
            rows: 300,
            n_features: 4,
            n_trees: 3,
            depth: 3,
            partitions: 3,
            repeats: 1,
            ..InferSettings::default()
        };
        let (report, scores) = infer(&s).unwrap();
        assert_eq!(report.rows, 300);
        assert_eq!(scores.len(), 300);
        assert_eq!(report.parity.mismatch_rows, 0);
        assert_eq!(report.parity.max_abs_delta, 0.0);
        assert_eq!(report.init_count, 3);
    }
}
