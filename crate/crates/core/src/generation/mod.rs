//! Response collection: decoding parameters, the record type, pluggable
//! backends and the checkpointed `collect` driver.

mod http;
mod stub;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusWriter;
use crate::error::{Error, Result};
use crate::prompt_factory::{FactorAssignment, PromptItem};

pub use http::{HttpBackend, API_KEY_ENV};
pub use stub::{stub_generate, MarkerInjection, StubBackend};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            max_tokens: 1024,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// One prompt/response exchange. Field names are the JSONL interchange
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub model: String,
    pub assignment: FactorAssignment,
    pub system: String,
    pub user: String,
    pub response: String,
    pub created_at: DateTime<Utc>,
    pub params: DecodingParams,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("record id is empty".into()));
        }
        if self.is_ok() && self.response.is_empty() {
            return Err(Error::InvalidInput(format!("record `{}` is ok but has an empty response", self.id)));
        }
        Ok(())
    }
}

/// Record id for the prompt at `index` answered by `model`.
pub fn record_id(model: &str, index: usize) -> String {
    format!("{model}-{index:06}")
}

#[derive(Debug)]
pub enum BackendError {
    /// Worth retrying: timeouts, 5xx, malformed payloads.
    Transient(String),
    /// Aborts the whole run.
    Auth(String),
}

pub trait Backend: Sync {
    fn model(&self) -> &str;
    fn generate(&self, item: &PromptItem, params: &DecodingParams) -> Result<String, BackendError>;
}

#[derive(Debug, Clone)]
pub struct CollectOptions {
    /// Concurrent in-flight requests.
    pub parallelism: usize,
    /// Attempts per prompt before recording an error.
    pub attempts: u32,
    /// Delay before the first retry; doubled after each failure.
    pub backoff: Duration,
    /// JSONL file that receives records as they complete. Records already
    /// present are reused rather than regenerated.
    pub checkpoint: Option<PathBuf>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            attempts: 3,
            backoff: Duration::from_millis(500),
            checkpoint: None,
        }
    }
}

fn generate_with_retry(
    backend: &dyn Backend,
    item: &PromptItem,
    params: &DecodingParams,
    opts: &CollectOptions,
) -> Result<Result<String, String>> {
    let mut delay = opts.backoff;
    let mut last = String::new();
    for attempt in 0..opts.attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        match backend.generate(item, params) {
            Ok(text) if !text.is_empty() => return Ok(Ok(text)),
            Ok(_) => last = "empty response".to_string(),
            Err(BackendError::Auth(msg)) => return Err(Error::Auth(msg)),
            Err(BackendError::Transient(msg)) => {
                log::warn!("prompt {} attempt {} failed: {msg}", item.index, attempt + 1);
                last = msg;
            }
        }
    }
    Ok(Err(last))
}

fn make_record(
    backend: &dyn Backend,
    item: &PromptItem,
    params: &DecodingParams,
    outcome: Result<String, String>,
) -> GenerationRecord {
    let (response, status, error) = match outcome {
        Ok(text) => (text, Status::Ok, None),
        Err(msg) => (String::new(), Status::Error, Some(msg)),
    };
    GenerationRecord {
        id: record_id(backend.model(), item.index),
        model: backend.model().to_string(),
        assignment: item.assignment.clone(),
        system: item.system.clone(),
        user: item.user.clone(),
        response,
        created_at: Utc::now(),
        params: *params,
        status,
        error,
    }
}

/// Runs every prompt through `backend` and returns one record per prompt in
/// input order.
///
/// Transient failures are retried with exponential backoff and then stored
/// as error records; an authentication failure aborts the run. With a
/// checkpoint file, finished records are appended in input order after each
/// batch, and records already in the file are not requested again.
pub fn collect(
    items: &[PromptItem],
    backend: &dyn Backend,
    params: &DecodingParams,
    opts: &CollectOptions,
) -> Result<Vec<GenerationRecord>> {
    params.validate()?;
    let mut writer = match &opts.checkpoint {
        Some(path) => Some(CorpusWriter::open(path)?),
        None => None,
    };
    let mut done: HashMap<String, GenerationRecord> = match &writer {
        Some(w) => w.existing_records()?.into_iter().map(|r| (r.id.clone(), r)).collect(),
        None => HashMap::new(),
    };
    let pending: Vec<&PromptItem> = items
        .iter()
        .filter(|it| !done.contains_key(&record_id(backend.model(), it.index)))
        .collect();
    if pending.len() < items.len() {
        log::info!("resuming: {} of {} records already collected", items.len() - pending.len(), items.len());
    }

    let workers = opts.parallelism.max(1);
    for batch in pending.chunks(workers * 8) {
        let slots: Vec<Mutex<Option<Result<GenerationRecord>>>> = batch.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(batch.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= batch.len() {
                        break;
                    }
                    let item = batch[i];
                    let rec = generate_with_retry(backend, item, params, opts)
                        .map(|outcome| make_record(backend, item, params, outcome));
                    *slots[i].lock().unwrap() = Some(rec);
                });
            }
        });
        for slot in slots {
            let rec = slot.into_inner().unwrap().expect("every slot is filled")?;
            if let Some(w) = writer.as_mut() {
                w.append(&rec)?;
            }
            done.insert(rec.id.clone(), rec);
        }
    }

    Ok(items
        .iter()
        .map(|it| {
            done.remove(&record_id(backend.model(), it.index))
                .expect("record collected for every prompt")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_factory::{generate_prompts, PromptConfig};
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        fail_first: u32,
        calls: AtomicU32,
    }

    impl Backend for Flaky {
        fn model(&self) -> &str {
            "flaky"
        }
        fn generate(&self, _: &PromptItem, _: &DecodingParams) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(BackendError::Transient("503".into()))
            } else {
                Ok("fine".into())
            }
        }
    }

    struct Denied;

    impl Backend for Denied {
        fn model(&self) -> &str {
            "denied"
        }
        fn generate(&self, _: &PromptItem, _: &DecodingParams) -> Result<String, BackendError> {
            Err(BackendError::Auth("401".into()))
        }
    }

    fn fast(parallelism: usize) -> CollectOptions {
        CollectOptions {
            parallelism,
            attempts: 3,
            backoff: Duration::ZERO,
            checkpoint: None,
        }
    }

    fn prompts(n: usize) -> Vec<PromptItem> {
        generate_prompts(&PromptConfig::default(), n, 1, None).unwrap()
    }

    #[test]
    fn defaults_match_decoding_setup() {
        let p = DecodingParams::default();
        assert_eq!((p.temperature, p.top_p, p.max_tokens), (0.7, 0.9, 1024));
        assert!(DecodingParams { top_p: 0.0, ..p }.validate().is_err());
        assert!(DecodingParams { temperature: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let out = collect(&[], &StubBackend::new(1), &DecodingParams::default(), &fast(2)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn retries_then_succeeds() {
        let b = Flaky {
            fail_first: 2,
            calls: AtomicU32::new(0),
        };
        let out = collect(&prompts(1), &b, &DecodingParams::default(), &fast(1)).unwrap();
        assert!(out[0].is_ok());
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_record_error_status() {
        let b = Flaky {
            fail_first: u32::MAX,
            calls: AtomicU32::new(0),
        };
        let out = collect(&prompts(4), &b, &DecodingParams::default(), &fast(2)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.status == Status::Error && r.response.is_empty()));
        assert_eq!(b.calls.load(Ordering::SeqCst), 12);
    }

    #[test]
    fn auth_failure_aborts() {
        let err = collect(&prompts(3), &Denied, &DecodingParams::default(), &fast(1)).unwrap_err();
        assert!(matches!(err, Error::Auth(_)));
    }

    #[test]
    fn parallel_matches_serial_for_stub() {
        let items = prompts(40);
        let stub = StubBackend::new(9);
        let a = collect(&items, &stub, &DecodingParams::default(), &fast(1)).unwrap();
        let b = collect(&items, &stub, &DecodingParams::default(), &fast(8)).unwrap();
        let strip = |rs: &[GenerationRecord]| -> Vec<(String, String)> {
            rs.iter().map(|r| (r.id.clone(), r.response.clone())).collect()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn checkpoint_resume_does_not_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let items = prompts(30);
        let stub = StubBackend::new(2);
        let opts = CollectOptions {
            checkpoint: Some(path.clone()),
            ..fast(3)
        };
        collect(&items[..12], &stub, &DecodingParams::default(), &opts).unwrap();
        let all = collect(&items, &stub, &DecodingParams::default(), &opts).unwrap();
        assert_eq!(all.len(), 30);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 30);
        let corpus = crate::corpus::load(&[path], false).unwrap();
        assert_eq!(corpus.records.len(), 30);
    }
}
