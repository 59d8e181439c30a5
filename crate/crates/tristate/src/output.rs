//! Report emission. Every artifact carries its run manifest: JSON under a
//! `manifest` key, CSV as a leading `#` comment line, text as a trailer.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::RunManifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// A further file written next to the main artifact when an output
/// directory is set.
pub enum Extra {
    Json(&'static str, Value),
    Csv(&'static str, Table),
}

impl Extra {
    fn file_name(&self) -> String {
        match self {
            Extra::Json(stem, _) => format!("{stem}.json"),
            Extra::Csv(stem, _) => format!("{stem}.csv"),
        }
    }

    fn render(&self, manifest: &RunManifest) -> Result<Vec<u8>> {
        match self {
            Extra::Json(_, v) => Ok(to_json_string(&with_manifest(manifest, v))?.into_bytes()),
            Extra::Csv(_, t) => render_csv(manifest, t),
        }
    }
}

/// One command's result in all three renderings.
pub struct Artifact {
    /// File stem used under the output directory.
    pub name: &'static str,
    pub json: Value,
    pub table: Table,
    pub text: String,
}

pub struct Emitter {
    pub format: Format,
    pub out_dir: Option<PathBuf>,
}

fn manifest_comment(manifest: &RunManifest) -> Result<String> {
    Ok(format!("# manifest: {}\n", serde_json::to_string(manifest)?))
}

fn with_manifest(manifest: &RunManifest, body: &Value) -> Value {
    json!({ "manifest": manifest, "result": body })
}

fn render_csv(manifest: &RunManifest, table: &Table) -> Result<Vec<u8>> {
    let mut buf = manifest_comment(manifest)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn render_text(manifest: &RunManifest, text: &str) -> String {
    let mut s = text.trim_end().to_string();
    s.push_str(&format!(
        "\n\ncommand {} (tristate {}), seed {}, at {}\n",
        manifest.command,
        manifest.tool_version,
        manifest.seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
        manifest.timestamp
    ));
    for out in &manifest.outputs {
        s.push_str(&format!("wrote {}\n", out.display()));
    }
    s
}

pub fn to_json_string<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

impl Emitter {
    fn output_path(&self, name: &str, ext: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(format!("{name}.{ext}")))
    }

    fn ensure_dir(&self) -> Result<()> {
        if let Some(d) = &self.out_dir {
            fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
        }
        Ok(())
    }

    /// Writes `<name>.json` and `<name>.csv` under the output directory, if
    /// any, then prints the artifact to stdout in the selected format.
    pub fn emit(&self, mut manifest: RunManifest, artifact: &Artifact, extra: &[Extra]) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            let json_path = dir.join(format!("{}.json", artifact.name));
            let csv_path = dir.join(format!("{}.csv", artifact.name));
            let extra_paths: Vec<PathBuf> = extra.iter().map(|e| dir.join(e.file_name())).collect();
            manifest.outputs.push(json_path.clone());
            manifest.outputs.push(csv_path.clone());
            manifest.outputs.extend(extra_paths.iter().cloned());
            self.ensure_dir()?;
            write_file(&json_path, to_json_string(&with_manifest(&manifest, &artifact.json))?.as_bytes())?;
            write_file(&csv_path, &render_csv(&manifest, &artifact.table)?)?;
            for (e, path) in extra.iter().zip(&extra_paths) {
                write_file(path, &e.render(&manifest)?)?;
            }
        }
        let rendered = match self.format {
            Format::Json => to_json_string(&with_manifest(&manifest, &artifact.json))?.into_bytes(),
            Format::Csv => render_csv(&manifest, &artifact.table)?,
            Format::Text => render_text(&manifest, &artifact.text).into_bytes(),
        };
        io::stdout().write_all(&rendered)?;
        Ok(())
    }

    /// Opens a CSV stream for a sweep: rows reach stdout and `<name>.csv`
    /// as soon as they are computed.
    pub fn row_stream(&self, mut manifest: RunManifest, name: &'static str, header: &[&str]) -> Result<RowStream> {
        let csv_path = self.output_path(name, "csv");
        let json_path = self.output_path(name, "json");
        manifest.outputs.extend(csv_path.iter().cloned());
        manifest.outputs.extend(json_path.iter().cloned());
        let mut sinks: Vec<Box<dyn Write>> = Vec::new();
        if self.format != Format::Json {
            sinks.push(Box::new(io::stdout()));
        }
        if let Some(p) = &csv_path {
            self.ensure_dir()?;
            sinks.push(Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?));
        }
        let comment = manifest_comment(&manifest)?;
        let mut writers = Vec::new();
        for mut sink in sinks {
            sink.write_all(comment.as_bytes())?;
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(header)?;
            w.flush()?;
            writers.push(w);
        }
        Ok(RowStream {
            manifest,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            writers,
            json_path,
            print_json: self.format == Format::Json,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub struct RowStream {
    manifest: RunManifest,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    writers: Vec<csv::Writer<Box<dyn Write>>>,
    json_path: Option<PathBuf>,
    print_json: bool,
}

impl RowStream {
    pub fn row(&mut self, row: Vec<String>) -> Result<()> {
        for w in &mut self.writers {
            w.write_record(&row)?;
            w.flush()?;
        }
        self.rows.push(row);
        Ok(())
    }

    /// Writes the JSON rendering of the rows seen so far, with `error` set
    /// when the sweep stopped early.
    pub fn finish(self, error: Option<&anyhow::Error>) -> Result<()> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.header.iter().cloned().zip(r.iter().map(|v| cell_value(v))).collect()))
            .collect();
        let mut body = json!({ "rows": rows });
        if let Some(e) = error {
            body["error"] = Value::String(format!("{e:#}"));
        }
        let doc = to_json_string(&with_manifest(&self.manifest, &body))?;
        if let Some(p) = &self.json_path {
            write_file(p, doc.as_bytes())?;
        }
        if self.print_json {
            io::stdout().write_all(doc.as_bytes())?;
        }
        Ok(())
    }
}

/// Numbers and booleans keep their type in the JSON rendering of a CSV row.
fn cell_value(s: &str) -> Value {
    if let Ok(b) = s.parse::<bool>() {
        return Value::Bool(b);
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    match s.parse::<f64>() {
        Ok(f) if f.is_finite() => Value::from(f),
        _ if s.is_empty() => Value::Null,
        _ => Value::String(s.to_string()),
    }
}

/// Shortest round-trip rendering of a float for CSV cells.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}
