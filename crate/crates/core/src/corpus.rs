//! Append-only JSONL persistence for generation records.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generation::GenerationRecord;

/// Where a corpus came from. `content_sha256` hashes the records with their
/// timestamps left out, so two collections with identical content share it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub file_sha256: String,
    pub content_sha256: String,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<GenerationRecord>,
    pub provenance: Vec<SourceFile>,
    /// Lines skipped in lenient mode, as `(path, line, message)`.
    pub skipped: Vec<(PathBuf, usize, String)>,
}

/// Single-writer handle for appending records to a JSONL file.
pub struct CorpusWriter {
    path: PathBuf,
    file: File,
    ids: HashSet<String>,
}

impl CorpusWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let ids = if path.exists() {
            read_file(path, false)?.0.into_iter().map(|r| r.id).collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            ids,
        })
    }

    pub fn existing_records(&self) -> Result<Vec<GenerationRecord>> {
        Ok(read_file(&self.path, false)?.0)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Appends one record as a single line. Rejects duplicate ids and
    /// invalid records without touching the file.
    pub fn append(&mut self, record: &GenerationRecord) -> Result<()> {
        record.validate()?;
        if self.ids.contains(&record.id) {
            return Err(Error::DuplicateIds(vec![record.id.clone()]));
        }
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.ids.insert(record.id.clone());
        Ok(())
    }
}

/// Appends `record` to the file at `path`.
pub fn append(path: &Path, record: &GenerationRecord) -> Result<()> {
    CorpusWriter::open(path)?.append(record)
}

/// Writes `records` to `path`, replacing any existing file.
pub fn write_all(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    if path.exists() {
        std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    let mut w = CorpusWriter::open(path)?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

type Skipped = Vec<(PathBuf, usize, String)>;

fn read_file(path: &Path, lenient: bool) -> Result<(Vec<GenerationRecord>, Skipped)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<GenerationRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => records.push(r),
            Err(message) if lenient => {
                log::warn!("{}:{}: skipping malformed record: {message}", path.display(), i + 1);
                skipped.push((path.to_path_buf(), i + 1, message));
            }
            Err(message) => {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
        }
    }
    Ok((records, skipped))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of record content excluding `created_at`.
pub fn content_digest(records: &[GenerationRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        let mut v = serde_json::to_value(r).expect("records serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("created_at");
        }
        h.update(serde_json::to_string(&v).expect("values serialize").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Loads and merges corpora. Malformed lines are an error unless `lenient`
/// is set, in which case they are skipped and listed in `Corpus::skipped`.
pub fn load<P: AsRef<Path>>(paths: &[P], lenient: bool) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for p in paths {
        let path = p.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (records, skipped) = read_file(path, lenient)?;
        corpus.provenance.push(SourceFile {
            path: path.to_path_buf(),
            file_sha256: sha256_hex(&bytes),
            content_sha256: content_digest(&records),
            records: records.len(),
        });
        corpus.records.extend(records);
        corpus.skipped.extend(skipped);
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in &corpus.records {
        *seen.entry(r.id.as_str()).or_default() += 1;
    }
    let dups: BTreeSet<String> = seen
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    if !dups.is_empty() {
        return Err(Error::DuplicateIds(dups.into_iter().collect()));
    }

    if let Some(first) = corpus.records.first() {
        let dims: Vec<&str> = first.assignment.iter().map(|(k, _)| k).collect();
        let mut sorted = dims.clone();
        sorted.sort_unstable();
        for r in &corpus.records[1..] {
            let mut other: Vec<&str> = r.assignment.iter().map(|(k, _)| k).collect();
            other.sort_unstable();
            if other != sorted {
                return Err(Error::InvalidInput(format!(
                    "record `{}` has factor dimensions {:?}, expected {:?}",
                    r.id, other, dims
                )));
            }
        }
    }
    Ok(corpus)
}

impl Corpus {
    pub fn from_records(records: Vec<GenerationRecord>) -> Self {
        Self {
            provenance: vec![SourceFile {
                path: PathBuf::from("<memory>"),
                file_sha256: String::new(),
                content_sha256: content_digest(&records),
                records: records.len(),
            }],
            records,
            skipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `status = ok`, which are the ones analyses use.
    pub fn ok_records(&self) -> Corpus {
        let records: Vec<GenerationRecord> = self.records.iter().filter(|r| r.is_ok()).cloned().collect();
        Corpus {
            records,
            provenance: self.provenance.clone(),
            skipped: self.skipped.clone(),
        }
    }

    /// Fingerprint over all sources' content digests.
    pub fn fingerprint(&self) -> String {
        let joined: Vec<&str> = self.provenance.iter().map(|p| p.content_sha256.as_str()).collect();
        sha256_hex(joined.join(":").as_bytes())
    }

    pub fn filter_model(&self, model: &str) -> Corpus {
        self.filter(|r| r.model == model)
    }

    /// Records whose `dimension` is assigned `level`.
    pub fn filter_level(&self, dimension: &str, level: &str) -> Corpus {
        self.filter(|r| r.assignment.get(dimension) == Some(level))
    }

    fn filter(&self, keep: impl Fn(&GenerationRecord) -> bool) -> Corpus {
        Corpus {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance.clone(),
            skipped: Vec::new(),
        }
    }
}

/// Per-record level of `dimension`, aligned with `corpus.records`.
pub fn labels(corpus: &Corpus, dimension: &str) -> Result<Vec<String>> {
    corpus
        .records
        .iter()
        .map(|r| {
            r.assignment
                .get(dimension)
                .map(str::to_string)
                .ok_or_else(|| Error::UnknownDimension(dimension.to_string()))
        })
        .collect()
}
