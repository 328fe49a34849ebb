//! JSON Lines persistence, one record per line.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl JsonlError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Write `records` to `path`, replacing any existing file.
pub fn write_jsonl<R: Serialize>(path: &Path, records: &[R]) -> Result<(), JsonlError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| JsonlError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(w, "{line}").map_err(|e| JsonlError::io(path, e))?;
    }
    w.flush().map_err(|e| JsonlError::io(path, e))
}

/// Append a single record.
pub fn append_jsonl<R: Serialize>(path: &Path, record: &R) -> Result<(), JsonlError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| JsonlError::io(path, e))?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| JsonlError::io(path, e))
}

/// Read every record; blank lines are skipped, line numbers are 1-based.
pub fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    parse_lines(path, BufReader::new(file))
}

/// Like [`read_jsonl`], but a line that fails to parse is collected as an
/// error instead of aborting the read.
pub fn read_jsonl_lenient<R: DeserializeOwned>(path: &Path) -> Result<(Vec<R>, Vec<JsonlError>), JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let (mut out, mut bad) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push(rec),
            Err(source) => bad.push(JsonlError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            }),
        }
    }
    Ok((out, bad))
}

pub(crate) fn parse_lines<R: DeserializeOwned>(path: &Path, reader: impl BufRead) -> Result<Vec<R>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        id: u32,
        name: String,
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        write_jsonl::<Rec>(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
        assert!(read_jsonl::<Rec>(&p).unwrap().is_empty());
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"id\":1,\"name\":\"a\"}\n{\"id\":2,\"na\n").unwrap();
        match read_jsonl::<Rec>(&p) {
            Err(JsonlError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn append_adds_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        append_jsonl(
            &p,
            &Rec {
                id: 1,
                name: "x".into(),
            },
        )
        .unwrap();
        append_jsonl(
            &p,
            &Rec {
                id: 2,
                name: "y".into(),
            },
        )
        .unwrap();
        let back: Vec<Rec> = read_jsonl(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].id, 2);
    }

    #[test]
    fn lenient_read_collects_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, "{\"id\":1,\"name\":\"a\"}\n{\"id\":\n\n{\"id\":3,\"name\":\"c\"}\n").unwrap();
        let (ok, bad) = read_jsonl_lenient::<Rec>(&p).unwrap();
        assert_eq!(ok.iter().map(|r| r.id).collect::<Vec<_>>(), [1, 3]);
        assert!(matches!(bad.as_slice(), [JsonlError::Parse { line: 2, .. }]));
    }
}
