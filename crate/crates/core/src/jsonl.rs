//! JSONL reading and writing.
//!
//! Writers emit one record per line. The reader ignores an incomplete
//! trailing line (no terminating newline) so files truncated by an
//! interrupted run stay loadable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let display = path.display().to_string();
    let mut file = File::open(path).map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
    let mut content = String::new();
    file.read_to_string(&mut content)
        .map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
    let terminated = content.ends_with('\n');
    let lines: Vec<&str> = content.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(v) => out.push(v),
            Err(e) => {
                let last = i + 1 == lines.len();
                if last && !terminated {
                    // Truncated final line from an interrupted writer.
                    break;
                }
                return Err(JsonlError::Parse { path: display, line: i + 1, message: e.to_string() });
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| JsonlError::Parse { path: display.clone(), line: 0, message: e.to_string() })?;
        writeln!(w, "{line}").map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
    }
    w.flush().map_err(|e| JsonlError::Io { path: display, source: e })
}

/// Streaming variant for large inputs; applies `f` per record.
pub fn for_each_jsonl<T: DeserializeOwned>(
    path: &Path,
    mut f: impl FnMut(T) -> Result<(), JsonlError>,
) -> Result<(), JsonlError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
    let reader = BufReader::new(file);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| JsonlError::Io { path: display.clone(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str::<T>(&line).map_err(|e| JsonlError::Parse {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        f(v)?;
    }
    Ok(())
}
