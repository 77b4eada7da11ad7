use crate::augment::Image;
use crate::datagen::ppm::read_ppm;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

pub const LABEL_REAL: u8 = 0;
pub const LABEL_FAKE: u8 = 1;

/// One dataset record. `path` is relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub path: String,
    pub label: u8,
    pub family: String,
    pub split: Split,
}

/// The dataset contract: records plus a lazy image accessor.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    root: PathBuf,
    records: Vec<Record>,
}

/// Read access to manifest records and their images. Training code works
/// against this trait so tests can interpose logging doubles.
pub trait ImageSource {
    fn records_in(&self, split: Split) -> Vec<&Record>;
    fn load(&self, record: &Record) -> Result<Image>;
}

impl CorpusManifest {
    pub fn new(root: PathBuf, records: Vec<Record>) -> Self {
        CorpusManifest { root, records }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn families(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if r.label == LABEL_FAKE && !out.contains(&r.family) {
                out.push(r.family.clone());
            }
        }
        out
    }

    /// Write as JSON-Lines, one record per line. Byte-stable for a fixed
    /// record list.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

impl ImageSource for CorpusManifest {
    fn records_in(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    fn load(&self, record: &Record) -> Result<Image> {
        read_ppm(&self.root.join(&record.path))
    }
}

/// Load and validate a JSON-Lines manifest. Every referenced image must
/// exist; ids must be unique; labels must be 0 or 1.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| {
            Error::Manifest(format!("line {}: malformed record: {e}", lineno + 1))
        })?;
        if record.label > 1 {
            return Err(Error::Manifest(format!(
                "record `{}`: label must be 0 (real) or 1 (fake), got {}",
                record.id, record.label
            )));
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::Manifest(format!("duplicate id `{}`", record.id)));
        }
        let img_path = root.join(&record.path);
        if !img_path.is_file() {
            return Err(Error::Manifest(format!(
                "record `{}`: image file {} is missing",
                record.id,
                img_path.display()
            )));
        }
        records.push(record);
    }
    Ok(CorpusManifest { root, records })
}
