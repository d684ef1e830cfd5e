//! Cross-run tables and the accuracy bar chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use rubricbench::evaluation::{BootstrapOptions, EvalReport};
use rubricbench::manifest::RunManifest;
use rubricbench::prompting::PromptMode;
use serde::Serialize;
use serde_json::json;

use crate::commands::{create_out, read_results, write_text};
use crate::config::{self, out_dir};
use crate::{ReportArgs, RunConfig};

/// One results file, summarized.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub dataset: String,
    pub run: String,
    pub model: String,
    pub n: usize,
    pub n_unscored: usize,
    pub accuracy: f64,
    pub accuracy_lo: f64,
    pub accuracy_hi: f64,
    pub macro_f1: f64,
    pub f1_lo: f64,
    pub f1_hi: f64,
    #[serde(skip)]
    order: u8,
}

fn run_label(mode: PromptMode) -> (String, u8) {
    match mode {
        PromptMode::Examples { k } => (format!("k{k}"), k),
        PromptMode::Rubric => ("rubric".to_string(), u8::MAX),
    }
}

fn summarize(path: &Path, opts: BootstrapOptions) -> anyhow::Result<RunRow> {
    let records = read_results(path)?;
    let first = &records[0];
    let report = EvalReport::compute(&records, first.scheme, opts).with_context(|| format!("evaluating {}", path.display()))?;
    let (run, order) = run_label(first.mode);
    Ok(RunRow {
        dataset: first.dataset.clone(),
        run,
        model: first.model.clone(),
        n: report.n,
        n_unscored: report.n_unscored,
        accuracy: report.accuracy,
        accuracy_lo: report.accuracy_ci.0,
        accuracy_hi: report.accuracy_ci.1,
        macro_f1: report.macro_f1,
        f1_lo: report.f1_ci.0,
        f1_hi: report.f1_ci.1,
        order,
    })
}

fn markdown(rows: &[RunRow]) -> String {
    let mut s = String::from("| Dataset | Run | Model | n | Accuracy | 95% CI | Macro-F1 | 95% CI |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | [{:.4}, {:.4}] | {:.4} | [{:.4}, {:.4}] |",
            r.dataset, r.run, r.model, r.n, r.accuracy, r.accuracy_lo, r.accuracy_hi, r.macro_f1, r.f1_lo, r.f1_hi
        );
    }
    s
}

fn write_csv(path: &Path, rows: &[RunRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const BAR_W: f64 = 28.0;
const GROUP_GAP: f64 = 36.0;
const PLOT_H: f64 = 240.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 24.0;

/// Grouped accuracy bars, one group per dataset, with CI whiskers.
pub fn render_chart(rows: &[RunRow]) -> String {
    let mut groups: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.dataset.as_str()).or_default().push(r);
    }
    let bars: usize = groups.values().map(Vec::len).sum();
    let width = LEFT + bars as f64 * BAR_W + (groups.len() + 1) as f64 * GROUP_GAP;
    let height = TOP + PLOT_H + 64.0;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    for tick in 0..=5 {
        let v = f64::from(tick) * 0.2;
        let ty = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{ty:.1}" x2="{width:.0}" y2="{ty:.1}" stroke="#ddd"/><text x="{:.0}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            LEFT - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.0}" transform="rotate(-90 14 {:.0})" text-anchor="middle">Accuracy</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    let mut x = LEFT + GROUP_GAP;
    for (dataset, members) in &groups {
        let start = x;
        for r in members {
            let shade = if r.run == "rubric" { "#c0504d" } else { "#4f81bd" };
            let top = y(r.accuracy);
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{shade}"><title>{} {} {:.4}</title></rect>"#,
                BAR_W - 4.0,
                TOP + PLOT_H - top,
                escape(dataset),
                escape(&r.run),
                r.accuracy
            );
            let cx = x + (BAR_W - 4.0) / 2.0;
            let _ = writeln!(
                s,
                r##"<line class="ci" x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#222"/>"##,
                y(r.accuracy_lo),
                y(r.accuracy_hi)
            );
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                TOP + PLOT_H + 14.0,
                escape(&r.run)
            );
            x += BAR_W;
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-weight="bold">{}</text>"#,
            (start + x) / 2.0,
            TOP + PLOT_H + 34.0,
            escape(dataset)
        );
        x += GROUP_GAP;
    }
    s.push_str("</svg>\n");
    s
}

pub fn report(a: ReportArgs, run: &RunConfig) -> anyhow::Result<()> {
    let opts = BootstrapOptions {
        resamples: a.resamples,
        seed: config::seed(a.seed, run),
        ..BootstrapOptions::default()
    };
    let mut rows = Vec::with_capacity(a.results.len());
    for path in &a.results {
        rows.push(summarize(path, opts)?);
    }
    // stable: runs of the same kind keep their command-line order
    rows.sort_by(|x, y| x.dataset.cmp(&y.dataset).then(x.order.cmp(&y.order)));

    let md = markdown(&rows);
    print!("{md}");
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let outputs = [dir.join("report.md"), dir.join("report.csv"), dir.join("chart.svg")];
    write_text(&outputs[0], &md)?;
    write_csv(&outputs[1], &rows)?;
    fs::write(&outputs[2], render_chart(&rows)).with_context(|| format!("writing {}", outputs[2].display()))?;

    let mut m = RunManifest::new(
        "report",
        json!({
            "results": a.results.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "bootstrap": opts,
        }),
    );
    for p in &a.results {
        m.add_input(p)?;
    }
    m.stats = json!({"runs": rows.len()});
    for p in &outputs {
        m.add_output(p)?;
    }
    m.write(dir.join("manifest.json"))?;
    Ok(())
}
