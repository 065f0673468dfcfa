//! Versioned comma-separated tables.

use std::path::Path;

use crate::error::{Error, Result};

use super::{check_version, read_text, write_text, FORMAT_VERSION};

pub(crate) struct Table {
    pub header: Vec<String>,
    /// `(1-based line number in the file, fields)`.
    pub rows: Vec<(usize, Vec<String>)>,
}

pub(crate) fn write_table(path: &Path, kind: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    let body = writer.into_inner().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = format!("# format_version={FORMAT_VERSION} kind={kind}\n");
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    write_text(path, &out)
}

pub(crate) fn read_table(path: &Path, kind: &str) -> Result<Table> {
    let text = read_text(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let mut version = None;
    let mut found_kind = None;
    for token in first.trim_start_matches('#').split_whitespace() {
        match token.split_once('=') {
            Some(("format_version", v)) => version = Some(v),
            Some(("kind", k)) => found_kind = Some(k),
            _ => {}
        }
    }
    if !first.starts_with('#') {
        return Err(parse_err("missing `# format_version=…` header line".into()));
    }
    check_version(path, version.ok_or_else(|| parse_err("header line has no format_version".into()))?)?;
    if found_kind != Some(kind) {
        return Err(parse_err(format!("expected a `{kind}` table, found {found_kind:?}")));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        // +1 for the version line, +1 for the header, +1 for 1-based numbering
        rows.push((i + 3, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

pub(crate) fn parse_f64(path: &Path, line: usize, column: &str, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}, column `{column}`: cannot parse `{field}` as a number"),
    })
}
