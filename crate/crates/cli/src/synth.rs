use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use policykit::forest::{random_forest, RandomForestSpec};
use policykit::frame::{Cell, ColumnFrame};
use policykit::synth::{generate, FeatureFamily, MissingEncoding, MissingFocus, Skew, SynthSpec};

use crate::read_text;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file holding a generator spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_rows: Option<usize>,
    #[arg(long)]
    n_treatments: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = serde_enum::<Skew>)]
    skew: Option<Skew>,
    #[arg(long)]
    p_miss: Option<f64>,
    #[arg(long, value_parser = serde_enum::<MissingEncoding>)]
    missing_encoding: Option<MissingEncoding>,
    #[arg(long, value_parser = serde_enum::<MissingFocus>)]
    missing_focus: Option<MissingFocus>,
    /// Comma-separated, e.g. `x_tie,x_boundary,generic:8`.
    #[arg(long, value_delimiter = ',')]
    feature_families: Option<Vec<FeatureFamily>>,
    /// Print the resolved spec as TOML instead of generating.
    #[arg(long)]
    print_spec: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses a unit variant through its serde name.
fn serde_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

pub fn write_frame(frame: &ColumnFrame, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["row_id".to_owned()];
    header.extend(frame.feature_names());
    header.extend(["treatment".to_owned(), "outcome".to_owned()]);
    w.write_record(&header)?;
    for i in 0..frame.n_rows() {
        let mut rec = vec![frame.row_ids()[i].to_string()];
        rec.extend(frame.features().iter().map(|f| match f.cell(i) {
            Cell::Value(v) => format!("{v:?}"),
            Cell::Null => String::new(),
            Cell::Nan => "NaN".to_owned(),
        }));
        rec.push(frame.treatment().label(i).to_owned());
        rec.push(frame.outcome()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: SynthArgs) -> anyhow::Result<ExitCode> {
    let mut spec = match &args.config {
        Some(path) => SynthSpec::from_toml(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => SynthSpec::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { spec.$field = v; })* };
    }
    overlay!(
        n_rows,
        n_treatments,
        seed,
        skew,
        p_miss,
        missing_encoding,
        missing_focus,
        feature_families
    );
    if args.print_spec {
        print!("{}", spec.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let frame = generate(&spec)?;
    match &args.out {
        Some(path) => write_frame(&frame, path)?,
        None => anyhow::bail!("pass --out or --print-spec"),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 50)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    depth: usize,
    /// Features are named like the generator's `generic:N` columns.
    #[arg(long, default_value_t = 32)]
    features: usize,
    #[arg(long, default_value_t = 4)]
    treatments: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn forest(args: ForestArgs) -> anyhow::Result<ExitCode> {
    let forest = random_forest(&RandomForestSpec {
        n_trees: args.trees,
        depth: args.depth,
        n_features: args.features,
        n_treatments: args.treatments,
        seed: args.seed,
        feature_names: Some(FeatureFamily::Generic(args.features).column_names()),
        ..RandomForestSpec::default()
    });
    forest.validate(None).into_result()?;
    std::fs::write(&args.out, forest.to_text()).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}
