//! Batches of runs described by a manifest:
//!
//! ```toml
//! base = "base.toml"        # config every row starts from (optional)
//! output_dir = "sweep-out"  # relative to the manifest
//! error_time = 0.2          # defaults to each row's last output time
//!
//! [[run]]
//! name = "c0.5-ei-cfl0.25"
//! config = "other.toml"     # replaces `base` for this row (optional)
//! set = { "material.contrast" = 0.5, "integrator.scheme" = "ei-ssm" }
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{parse_config, RunConfig};
use crate::error::CliError;
use crate::experiment::run_experiment;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    base: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    error_time: Option<f64>,
    #[serde(default)]
    run: Vec<RawRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    name: String,
    config: Option<PathBuf>,
    #[serde(default)]
    set: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub contrast: Option<f64>,
    pub scheme: Option<String>,
    pub n_ef: Option<usize>,
    pub cfl: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub time: Option<f64>,
    pub error: Option<f64>,
    /// `ok`, or the failure message.
    pub status: String,
}

impl SummaryRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub output_dir: PathBuf,
}

impl Summary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

const COLUMNS: [&str; 9] = [
    "name",
    "contrast",
    "scheme",
    "n_ef",
    "cfl",
    "wall_seconds",
    "time",
    "error",
    "status",
];

fn cells(row: &SummaryRow) -> [String; 9] {
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map_or("-".into(), T::to_string)
    }
    [
        row.name.clone(),
        opt(&row.contrast),
        opt(&row.scheme),
        opt(&row.n_ef),
        opt(&row.cfl),
        row.wall_seconds.map_or("-".into(), |w| format!("{w:.2}")),
        opt(&row.time),
        opt(&row.error),
        row.status.clone(),
    ]
}

/// Column-aligned text table.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let body: Vec<[String; 9]> = rows.iter().map(cells).collect();
    let mut width = COLUMNS.map(str::len);
    for r in &body {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: &[String]| {
        let mut l = String::new();
        for (i, c) in cols.iter().enumerate() {
            let _ = write!(l, "{c:<w$}  ", w = width[i]);
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(&COLUMNS.map(String::from));
    for r in &body {
        line(r);
    }
    out
}

fn write_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let to_io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(COLUMNS).map_err(to_io)?;
    for r in rows {
        let mut c = cells(r);
        if let Some(e) = r.error {
            c[7] = crate::output::full_precision(e);
        }
        w.write_record(&c).map_err(to_io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or("empty key")?;
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(Default::default()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{p}` is not a section"))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn row_config(
    root: &Path,
    base: Option<&Path>,
    row: &RawRow,
    out: PathBuf,
) -> Result<RunConfig, CliError> {
    let mut table = match row.config.as_deref().or(base) {
        Some(p) => {
            let path = root.join(p);
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            text.parse::<toml::Table>().map_err(|e| CliError::Parse {
                line: None,
                message: format!("{}: {}", path.display(), e.message()),
            })?
        }
        None => toml::Table::new(),
    };
    for (k, v) in &row.set {
        set_dotted(&mut table, k, v.clone()).map_err(|m| CliError::Parse {
            line: None,
            message: format!("set.{k}: {m}"),
        })?;
    }
    set_dotted(
        &mut table,
        "output.dir",
        toml::Value::String(out.to_string_lossy().into_owned()),
    )
    .expect("output is a section");
    parse_config(&toml::to_string(&table).expect("table serializes"))
}

fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every row in order and writes `summary.txt` and `summary.csv`.
/// A failing row is recorded and the rest still run; only an unreadable or
/// malformed manifest is an error.
pub fn run_matrix(manifest_path: &Path) -> Result<Summary, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CliError::Parse {
        line: None,
        message: format!("{}: {e}", manifest_path.display()),
    })?;
    let manifest: RawManifest = toml::from_str(&text).map_err(|e| CliError::Parse {
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for r in &manifest.run {
        if !seen.insert(dir_name(&r.name)) {
            problems.push(format!("duplicate run name `{}`", r.name));
        }
    }
    if let Some(t) = manifest.error_time {
        if !(t >= 0.0 && t.is_finite()) {
            problems.push(format!("error_time must be non-negative, got {t}"));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let out = root.join(manifest.output_dir.clone().unwrap_or_else(|| {
        let stem = manifest_path
            .file_stem()
            .map_or("matrix".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(format!("{stem}-out"))
    }));
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;

    let mut rows = Vec::new();
    for raw in &manifest.run {
        let dir = out.join(dir_name(&raw.name));
        let mut row = SummaryRow {
            name: raw.name.clone(),
            contrast: None,
            scheme: None,
            n_ef: None,
            cfl: None,
            wall_seconds: None,
            time: None,
            error: None,
            status: "ok".into(),
        };
        let config = match row_config(root, manifest.base.as_deref(), raw, dir) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("run {}: {e}", raw.name);
                row.status = format!("invalid: {}", one_line(&e));
                rows.push(row);
                continue;
            }
        };
        row.contrast = Some(config.microstructure.contrast);
        row.scheme = Some(config.integrator.scheme.to_string());
        row.n_ef = Some(config.n_ef);
        row.cfl = Some(config.integrator.cfl);
        log::info!("run {}", raw.name);
        match run_experiment(&config) {
            Ok(report) => {
                row.wall_seconds = report
                    .vme
                    .as_ref()
                    .or(report.dns.as_ref())
                    .map(|r| r.wall_seconds);
                let t = manifest.error_time.or(config.output_times.last().copied());
                if let Some(e) = t.and_then(|t| report.error_at(t)) {
                    row.time = Some(e.time_vme);
                    row.error = e.error;
                }
            }
            Err(e) => {
                log::warn!("run {}: {e}", raw.name);
                row.status = format!("failed: {}", one_line(&e));
            }
        }
        rows.push(row);
    }

    let table = format_table(&rows);
    let txt = out.join("summary.txt");
    fs::write(&txt, &table).map_err(|e| CliError::io(&txt, e))?;
    write_csv(&out.join("summary.csv"), &rows)?;
    Ok(Summary {
        rows,
        output_dir: out,
    })
}

fn one_line(e: &CliError) -> String {
    e.to_string()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_create_sections() {
        let mut t = toml::Table::new();
        set_dotted(&mut t, "material.contrast", toml::Value::Float(0.5)).unwrap();
        set_dotted(&mut t, "solver", toml::Value::String("both".into())).unwrap();
        assert_eq!(t["material"]["contrast"].as_float(), Some(0.5));
        assert!(set_dotted(&mut t, "solver.x", toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn table_columns_align() {
        let row = SummaryRow {
            name: "a-long-name".into(),
            contrast: Some(0.5),
            scheme: Some("ee-ssm".into()),
            n_ef: Some(8),
            cfl: Some(1.0),
            wall_seconds: Some(1.234),
            time: Some(0.2),
            error: Some(0.01),
            status: "ok".into(),
        };
        let t = format_table(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].find("contrast"), lines[1].find("0.5"));
        assert!(lines[1].contains("1.23"));
    }
}
