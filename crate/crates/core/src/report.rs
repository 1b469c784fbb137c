//! Tables, class summaries, rankings and plot data built from saved reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::CorruptionClass;
use crate::error::{Error, Result};
use crate::metrics::{compensated_mean, rank_models, KindResult, RankEntry, RankKey, RobustnessReport};

pub const PLOT_DATA_SCHEMA_VERSION: u32 = 1;

pub fn load_report(path: impl AsRef<Path>) -> Result<RobustnessReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_report(report: &RobustnessReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: CorruptionClass,
    pub kinds: usize,
    pub epe: Option<f64>,
    pub cre: Option<f64>,
    pub rcre: Option<f64>,
}

/// Kind-level results averaged within each corruption class present in the report.
pub fn class_summaries(report: &RobustnessReport) -> Vec<ClassSummary> {
    CorruptionClass::ALL
        .into_iter()
        .filter_map(|class| {
            let kinds: Vec<&KindResult> = report.per_kind.iter().filter(|k| k.class == class).collect();
            if kinds.is_empty() {
                return None;
            }
            let mean = |f: fn(&KindResult) -> Option<f64>| {
                let v: Option<Vec<f64>> = kinds.iter().map(|k| f(k)).collect();
                v.and_then(compensated_mean)
            };
            Some(ClassSummary {
                class,
                kinds: kinds.len(),
                epe: mean(|k| k.epe),
                cre: mean(|k| k.cre),
                rcre: mean(|k| k.rcre),
            })
        })
        .collect()
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn csv_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
            out.push('\n');
        }
    }
    out
}

/// One row per model: clean EPE, per-kind CRE (or RCRE without ground truth),
/// then the averages.
pub fn text_table(reports: &[RobustnessReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let use_cre = reports.iter().all(|r| r.cre.is_some());
    let mut header = vec!["Model".to_string(), "EPE".to_string()];
    header.extend(first.per_kind.iter().map(|k| k.kind.short_name().to_string()));
    header.extend(["AVG".into(), "CREr".into(), "RCRE".into()]);
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.model_id.clone(), num(r.epe_clean)];
        row.extend(r.per_kind.iter().map(|k| num(if use_cre { k.cre } else { k.rcre })));
        row.push(num(if use_cre { r.cre } else { r.rcre }));
        row.push(num(r.crer));
        row.push(num(r.rcre));
        rows.push(row);
    }
    let mut out = format!(
        "{} per-kind {}\n",
        first.benchmark,
        if use_cre { "CRE" } else { "RCRE" }
    );
    out.push_str(&render(&rows));
    out
}

pub fn class_table(reports: &[RobustnessReport]) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(CorruptionClass::ALL.iter().map(|c| c.name().to_string()));
    let mut rows = vec![header];
    for r in reports {
        let summaries = class_summaries(r);
        let mut row = vec![r.model_id.clone()];
        for class in CorruptionClass::ALL {
            let s = summaries.iter().find(|s| s.class == class);
            row.push(num(s.and_then(|s| s.cre.or(s.rcre))));
        }
        rows.push(row);
    }
    render(&rows)
}

pub fn ranking_table(entries: &[RankEntry], key: RankKey) -> String {
    let mut rows = vec![vec!["Rank".to_string(), "Model".to_string(), key.label().to_string()]];
    for e in entries {
        rows.push(vec![e.rank.to_string(), e.model_id.clone(), format!("{:.2}", e.value)]);
    }
    render(&rows)
}

/// Long format, one line per (model, kind, severity) cell.
pub fn cells_csv(reports: &[RobustnessReport]) -> String {
    let mut out = String::from("model,benchmark,kind,class,severity,epe,cre,rcre\n");
    for r in reports {
        for c in &r.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.model_id,
                r.benchmark,
                c.kind.name(),
                c.kind.class().name(),
                c.severity,
                csv_num(c.epe),
                csv_num(c.cre),
                csv_num(c.rcre)
            );
        }
    }
    out
}

pub fn summary_csv(reports: &[RobustnessReport]) -> String {
    let mut out = String::from("model,benchmark,epe_clean,epe_corrupt,cre,crer,rcre\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model_id,
            r.benchmark,
            csv_num(r.epe_clean),
            csv_num(r.epe_corrupt),
            csv_num(r.cre),
            csv_num(r.crer),
            csv_num(r.rcre)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotModel {
    pub model_id: String,
    pub epe_clean: Option<f64>,
    pub epe_corrupt: Option<f64>,
    pub cre: Option<f64>,
    pub crer: Option<f64>,
    pub rcre: Option<f64>,
    pub classes: Vec<ClassSummary>,
    pub kinds: Vec<KindResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub schema_version: u32,
    pub benchmark: String,
    pub models: Vec<PlotModel>,
    /// Only keys every report carries.
    pub rankings: BTreeMap<String, Vec<RankEntry>>,
}

const RANK_KEYS: [RankKey; 4] = [RankKey::Epe, RankKey::Cre, RankKey::Crer, RankKey::Rcre];

pub fn plot_data(reports: &[RobustnessReport]) -> Result<PlotData> {
    let first = reports.first().ok_or(Error::NoReports)?;
    let mut rankings = BTreeMap::new();
    for key in RANK_KEYS {
        if reports.iter().all(|r| key.of(r).is_some()) {
            rankings.insert(key.label().to_string(), rank_models(reports, key)?);
        }
    }
    Ok(PlotData {
        schema_version: PLOT_DATA_SCHEMA_VERSION,
        benchmark: first.benchmark.clone(),
        models: reports
            .iter()
            .map(|r| PlotModel {
                model_id: r.model_id.clone(),
                epe_clean: r.epe_clean,
                epe_corrupt: r.epe_corrupt,
                cre: r.cre,
                crer: r.crer,
                rcre: r.rcre,
                classes: class_summaries(r),
                kinds: r.per_kind.clone(),
            })
            .collect(),
        rankings,
    })
}

/// Writes `table.txt`, `classes.txt`, `rankings.txt`, `summary.csv`,
/// `cells.csv` and `plot_data.json` into `out`.
pub fn write_report_bundle(reports: &[RobustnessReport], out: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = out.as_ref();
    let data = plot_data(reports)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rankings = String::new();
    for key in RANK_KEYS {
        if let Some(entries) = data.rankings.get(key.label()) {
            let _ = writeln!(rankings, "{} ranking", key.label());
            rankings.push_str(&ranking_table(entries, key));
            rankings.push('\n');
        }
    }
    let mut json = serde_json::to_string_pretty(&data)?;
    json.push('\n');
    let files = [
        ("table.txt", text_table(reports)),
        ("classes.txt", class_table(reports)),
        ("rankings.txt", rankings),
        ("summary.csv", summary_csv(reports)),
        ("cells.csv", cells_csv(reports)),
        ("plot_data.json", json),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
