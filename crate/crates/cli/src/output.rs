//! Rendering shared by every subcommand: CSV tables and JSON documents,
//! with rationals carried in both spellings.
//!
//! Rationals print exactly as `p/q` (the denominator is omitted when it
//! is 1). Wherever a rational appears, a 12-digit decimal rendering is
//! placed next to it under an `approx12` label; the decimal is for
//! plotting only and the exact field is authoritative. CSV tables put
//! the decimal in a sibling column named `<column>_approx12`.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use cantorlab_core::num::format_decimal;
use cantorlab_core::Rational;
use serde_json::{json, Value};

pub const APPROX_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn exact(v: &Rational) -> String {
    v.to_string()
}

pub fn approx12(v: &Rational) -> String {
    format_decimal(v, APPROX_DIGITS)
}

/// JSON spelling of a rational: exact plus the labelled decimal.
pub fn rat_value(v: &Rational) -> Value {
    json!({ "exact": exact(v), "approx12": approx12(v) })
}

pub fn opt_rat_value(v: &Option<Rational>) -> Value {
    match v {
        Some(v) => rat_value(v),
        None => Value::Null,
    }
}

/// A CSV table with a fixed header. Zero rows still emit the header
/// line, so an empty result is a header-only file.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let cells: Vec<String> = cells.into_iter().map(Into::into).collect();
        assert_eq!(cells.len(), self.header.len(), "row width must match the header");
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&join_csv(&self.header));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&join_csv(row));
            out.push('\n');
        }
        out
    }
}

fn join_csv(cells: &[String]) -> String {
    let escaped: Vec<String> = cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        })
        .collect();
    escaped.join(",")
}

/// Two exact-plus-decimal cells for one rational column.
pub fn rat_cells(v: &Rational) -> [String; 2] {
    [exact(v), approx12(v)]
}

pub fn opt_rat_cells(v: &Option<Rational>) -> [String; 2] {
    match v {
        Some(v) => rat_cells(v),
        None => [String::new(), String::new()],
    }
}

/// Where the main artifact goes: the `--out` path or stdout.
pub struct Sink {
    target: Option<PathBuf>,
}

impl Sink {
    pub fn new(target: Option<PathBuf>) -> Self {
        Self { target }
    }

    fn write(&self, text: &str) -> Result<()> {
        match &self.target {
            Some(path) => {
                let mut file = File::create(path)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                file.write_all(text.as_bytes())
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            None => {
                std::io::stdout().write_all(text.as_bytes()).context("cannot write stdout")?;
            }
        }
        Ok(())
    }

    pub fn table(&self, table: &Table) -> Result<()> {
        self.write(&table.render())
    }

    pub fn json(&self, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("rendering JSON")?;
        text.push('\n');
        self.write(&text)
    }

    /// Emits a report in the selected format.
    pub fn report(&self, format: Format, value: &Value, table: &Table) -> Result<()> {
        match format {
            Format::Json => self.json(value),
            Format::Csv => self.table(table),
        }
    }

    /// Emits a bare serialized object (always JSON, so that the file
    /// re-parses into an equal object).
    pub fn object<T: serde::Serialize>(&self, object: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(object).context("rendering JSON")?;
        text.push('\n');
        self.write(&text)
    }
}

/// A reproduction bundle for a failed check: written to stderr as JSON
/// so the main artifact stays clean, next to exit status 1.
pub fn emit_bundle(command: &str, violation: &str, inputs: Value) {
    let bundle = json!({
        "command": command,
        "violation": violation,
        "inputs": inputs,
    });
    let text = serde_json::to_string_pretty(&bundle).expect("bundle is plain data");
    eprintln!("{text}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use cantorlab_core::num::rat;

    #[test]
    fn empty_table_is_header_only() {
        let table = Table::new(["n", "value", "value_approx12"]);
        assert_eq!(table.render(), "n,value,value_approx12\n");
    }

    #[test]
    fn cells_carry_both_spellings() {
        let [e, a] = rat_cells(&rat(4, 25));
        assert_eq!(e, "4/25");
        assert_eq!(a, "0.160000000000");
    }

    #[test]
    fn commas_are_quoted() {
        let mut table = Table::new(["detail"]);
        table.row(["a, b"]);
        assert_eq!(table.render(), "detail\n\"a, b\"\n");
    }
}
