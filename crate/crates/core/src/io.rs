//! JSON-lines persistence for types, samples and rankings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::query::TypeRecord;

/// Reads one JSON value per non-blank line. Malformed lines are reported
/// with their 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Schema { line, message } => Error::Parse {
            path: path.to_owned(),
            line,
            message,
        },
        other => other,
    })
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), items)
}

/// Loads a types file and validates every graph in it.
pub fn read_types(path: &Path) -> Result<Vec<TypeRecord>> {
    let types: Vec<TypeRecord> = read_jsonl_file(path)?;
    for (i, t) in types.iter().enumerate() {
        t.graph.validate().map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(types)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
