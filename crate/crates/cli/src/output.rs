//! CSV and JSON writers. Every file starts with the same provenance block:
//! tool version, hash of the effective configuration, master seed and
//! schema version.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use kt_core::harness::SCHEMA_VERSION;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, Output, RunConfig};
use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Header {
    pub fn new(
        command: &'static str,
        config: Option<&RunConfig>,
        extra: &impl Serialize,
        seed: Option<u64>,
    ) -> Self {
        Header {
            schema_version: SCHEMA_VERSION,
            tool: "kt",
            tool_version: TOOL_VERSION,
            command,
            config_sha256: config_hash(config, extra),
            seed,
        }
    }
}

/// SHA-256 of the effective configuration (after flag overrides) and the
/// subcommand's own settings. The output section is excluded so that the
/// same run written to two directories carries the same hash.
pub fn config_hash(config: Option<&RunConfig>, extra: &impl Serialize) -> String {
    #[derive(Serialize)]
    struct Hashed<'a, E: Serialize> {
        config: Option<RunConfig>,
        settings: &'a E,
    }
    let config = config.map(|c| RunConfig {
        output: Output::default(),
        ..c.clone()
    });
    let text = serde_json::to_string(&Hashed {
        config,
        settings: extra,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    header: &'a Header,
    result: &'a T,
}

/// Column-oriented table; cells are preformatted.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Formats a cell; floats use the shortest representation that round-trips.
pub fn cell(x: impl Display) -> String {
    x.to_string()
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(header: &Header, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# tool: {} {}\n",
        header.tool, header.tool_version
    ));
    out.push_str(&format!("# command: {}\n", header.command));
    out.push_str(&format!("# config_sha256: {}\n", header.config_sha256));
    match header.seed {
        Some(seed) => out.push_str(&format!("# seed: {seed}\n")),
        None => out.push_str("# seed: none\n"),
    }
    out.push_str(&format!("# schema_version: {}\n", header.schema_version));
    let line = |cells: &[String]| {
        cells
            .iter()
            .map(|c| csv_field(c))
            .collect::<Vec<_>>()
            .join(",")
    };
    out.push_str(&line(&table.columns));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Writes `<dir>/<command>.csv` and/or `<dir>/<command>.json`, returning the
/// paths written.
pub fn write_outputs<T: Serialize>(
    output: &Output,
    header: &Header,
    table: &Table,
    result: &T,
) -> Result<Vec<PathBuf>, CliError> {
    let dir: &Path = &output.directory;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(&format!("cannot create {}", dir.display()), e))?;
    let mut written = Vec::new();
    for format in &output.formats {
        let (path, body) = match format {
            Format::Csv => (
                dir.join(format!("{}.csv", header.command)),
                render_csv(header, table),
            ),
            Format::Json => {
                let mut text = serde_json::to_string_pretty(&Envelope { header, result })
                    .map_err(|e| CliError::Runtime(format!("serializing result: {e}")))?;
                text.push('\n');
                (dir.join(format!("{}.json", header.command)), text)
            }
        };
        fs::write(&path, body)
            .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_only_when_needed() {
        assert_eq!(csv_field("line1[cos:1]"), "line1[cos:1]");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn hash_ignores_output_directory() {
        let mut a = RunConfig::parse("[model]\nbeta1 = 1.0\nbeta2 = 1.0\nlambda = 0.5\n").unwrap();
        let h1 = config_hash(Some(&a), &());
        a.output.directory = "elsewhere".into();
        assert_eq!(h1, config_hash(Some(&a), &()));
        a.model.lambda = 0.6;
        assert_ne!(h1, config_hash(Some(&a), &()));
    }

    #[test]
    fn csv_layout() {
        let header = Header::new("pde", None, &(), Some(3));
        let mut t = Table::new(["time", "m1"]);
        t.push(vec![cell(0.0), cell(0.25)]);
        let text = render_csv(&header, &t);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[..5].iter().all(|l| l.starts_with("# ")));
        assert_eq!(lines[5], "time,m1");
        assert_eq!(lines[6], "0,0.25");
    }
}
