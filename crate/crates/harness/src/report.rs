use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bundle::{ResultBundle, SummaryTable};
use crate::error::{io, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(HarnessError::Spec(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn render(bundles: &[ResultBundle], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(bundles).expect("bundles serialize");
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(bundles),
        ReportFormat::Markdown => Ok(render_markdown(bundles)),
    }
}

/// Writes `report.<ext>` into `dir` and returns its path.
pub fn emit_report(bundles: &[ResultBundle], format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let text = render(bundles, format)?;
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(format!("report.{}", format.extension()));
    fs::write(&path, text).map_err(io(&path))?;
    Ok(path)
}

fn render_csv(bundles: &[ResultBundle]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block", "seed", "case", "status", "detail", "inputs", "outputs"])?;
    for b in bundles {
        for c in &b.cases {
            w.write_record([
                b.block.as_str(),
                &b.seed.to_string(),
                &c.id,
                c.status.label(),
                &c.status.detail(),
                &serde_json::to_string(&c.inputs).expect("inputs serialize"),
                &serde_json::to_string(&c.outputs).expect("outputs serialize"),
            ])?;
        }
    }
    let bytes = w.into_inner().expect("in-memory csv flush");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn table_markdown(out: &mut String, t: &SummaryTable) {
    let _ = writeln!(out, "### {}\n", t.title);
    let _ = writeln!(
        out,
        "| {} |",
        t.columns.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | ")
    );
    let _ = writeln!(out, "|{}", "---|".repeat(t.columns.len()));
    for row in &t.rows {
        let _ = writeln!(
            out,
            "| {} |",
            row.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | ")
        );
    }
    out.push('\n');
}

fn render_markdown(bundles: &[ResultBundle]) -> String {
    let mut out = String::from("# Contract harness report\n\n");
    if bundles.is_empty() {
        out.push_str("No result bundles.\n");
        return out;
    }
    out.push_str("| block | seed | passed | failed | skipped | overall |\n|---|---|---|---|---|---|\n");
    for b in bundles {
        let (p, f, s) = b.counts();
        let overall = if b.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "| {} | {} | {p} | {f} | {s} | {overall} |", b.block, b.seed);
    }
    out.push('\n');
    for b in bundles {
        let _ = writeln!(out, "## {} {} (seed {})\n", b.block, b.block.title(), b.seed);
        if b.cases.is_empty() {
            out.push_str("No cases.\n\n");
            continue;
        }
        for t in &b.tables {
            table_markdown(&mut out, t);
        }
        let mut cases = SummaryTable::new("Cases", &["case", "status", "detail"]);
        for c in &b.cases {
            cases.row(vec![c.id.clone(), c.status.label().to_owned(), c.status.detail()]);
        }
        table_markdown(&mut out, &cases);
    }
    out
}
