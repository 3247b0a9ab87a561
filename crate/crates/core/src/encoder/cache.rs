use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// One line of an embedding JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub encoder: String,
    pub sentence: String,
    pub vec: Vector,
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    append(path, file, records.iter())
}

fn append<'a>(
    path: &Path,
    file: File,
    records: impl Iterator<Item = &'a EmbeddingRecord>,
) -> Result<()> {
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Embeddings keyed by encoder name and exact sentence bytes, persisted as JSONL.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    entries: HashMap<(String, String), Vector>,
    pending: Vec<EmbeddingRecord>,
}

impl EmbeddingCache {
    /// Opens `path`, loading existing entries if the file exists. Later lines win.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            for r in read_records(&path)? {
                entries.insert((r.encoder, r.sentence), r.vec);
            }
        }
        Ok(EmbeddingCache {
            path,
            entries,
            pending: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, encoder: &str, sentence: &str) -> Option<&Vector> {
        self.entries
            .get(&(encoder.to_string(), sentence.to_string()))
    }

    pub fn insert(&mut self, encoder: &str, sentence: &str, vec: Vector) {
        let key = (encoder.to_string(), sentence.to_string());
        if self.entries.get(&key) == Some(&vec) {
            return;
        }
        self.pending.push(EmbeddingRecord {
            encoder: key.0.clone(),
            sentence: key.1.clone(),
            vec: vec.clone(),
        });
        self.entries.insert(key, vec);
    }

    /// Appends entries added since the last flush.
    pub fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        append(&self.path, file, self.pending.iter())?;
        self.pending.clear();
        Ok(())
    }
}

impl Drop for EmbeddingCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("failed to flush embedding cache: {e}");
        }
    }
}
