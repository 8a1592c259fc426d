//! Pipeline stages over a [`RunConfig`], as run by the command-line tool.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    build_report, concordance, default_rules, load_rules, scan_hallucinations, CompiledRules, ConcordanceResult,
    MaskingInfo, ProbeOutcome, ProbeReport, ReportInputs, ScanResult, VocabularyInfo,
};
use crate::config::{BackendKind, RunConfig};
use crate::corpus::{self, Corpus};
use crate::error::{Error, Result};
use crate::generation::{self, Backend, CollectOptions, GenerationRecord, HttpBackend, StubBackend};
use crate::par::Exec;
use crate::preprocess::{
    build_vocabulary, prepare_documents, tfidf_transform, MaskingLexicon, MinCountMode, Tokenizer, Vocabulary,
    DEFAULT_PLACEHOLDER,
};
use crate::probe::{
    chance_level, evaluate, exceeds_chance, majority_baseline, null_band, ovr_attributions, split, train_multiclass,
    FeatureAttribution, LbfgsOptions, ProbeModel, SplitSpec, TrainOptions,
};
use crate::prompt_factory::{generate_prompts, PromptItem};
use crate::synth::{self, SignalSpec};

/// Sidecar written next to every output file, tying it to its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config_fingerprint: String,
    pub generation_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    pub records: usize,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

impl Manifest {
    pub fn new(kind: &str, cfg: &RunConfig, records: usize) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            config_fingerprint: cfg.fingerprint()?,
            generation_fingerprint: cfg.generation_fingerprint()?,
            seeds: seeds(cfg),
            records,
        })
    }

    pub fn write_for(&self, path: &Path) -> Result<()> {
        let p = manifest_path(path);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    /// The manifest next to `path`, if one exists.
    pub fn read_for(path: &Path) -> Result<Option<Self>> {
        let p = manifest_path(path);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

pub fn seeds(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::from([
        ("sampling".to_string(), cfg.seeds.sampling),
        ("split".to_string(), cfg.seeds.split),
        ("stub".to_string(), cfg.seeds.stub),
    ]);
    if let Some(s) = &cfg.synth {
        m.insert("synth".to_string(), s.seed);
    }
    m
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<PromptItem>> {
    let prompts = cfg.prompt_config()?;
    generate_prompts(&prompts, cfg.n, cfg.seeds.sampling, cfg.balanced.as_deref())
}

pub fn write_prompts(path: &Path, items: &[PromptItem]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_prompts(path: &Path) -> Result<Vec<PromptItem>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// The configured backend. The HTTP backend reads its key from the
/// environment and fails with an auth error when one is required but unset.
pub fn backend(cfg: &RunConfig) -> Result<Box<dyn Backend>> {
    let b = &cfg.backend;
    match b.kind {
        BackendKind::Stub => {
            let mut stub = StubBackend::new(cfg.seeds.stub).with_model(cfg.model_name());
            if let Some(m) = &b.markers {
                stub = stub.with_markers(m.clone());
            }
            Ok(Box::new(stub))
        }
        BackendKind::Http => {
            let url = b.url.clone().ok_or_else(|| Error::Config("http backend needs a url".into()))?;
            Ok(Box::new(HttpBackend::from_env(
                url,
                cfg.model_name(),
                b.require_auth,
                Duration::from_secs(b.timeout_secs),
            )?))
        }
    }
}

/// Collects responses for `items` into `out`, resuming from whatever the
/// file already holds. The corpus inherits the fingerprints of
/// `prompts_manifest` when the prompts came from a file.
pub fn collect(
    cfg: &RunConfig,
    items: &[PromptItem],
    out: &Path,
    prompts_manifest: Option<&Manifest>,
) -> Result<Vec<GenerationRecord>> {
    let backend = backend(cfg)?;
    let opts = CollectOptions {
        parallelism: cfg.backend.parallelism,
        attempts: cfg.backend.attempts,
        backoff: Duration::from_millis(cfg.backend.backoff_ms),
        checkpoint: Some(out.to_path_buf()),
    };
    let records = generation::collect(items, backend.as_ref(), &cfg.decoding, &opts)?;
    let manifest = match prompts_manifest {
        Some(m) => Manifest {
            kind: "corpus".into(),
            records: records.len(),
            ..m.clone()
        },
        None => Manifest::new("corpus", cfg, records.len())?,
    };
    manifest.write_for(out)?;
    Ok(records)
}

/// Writes the configured synthetic corpus to `out`.
pub fn synth(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Corpus> {
    let spec: &SignalSpec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `synth` section".into()))?;
    let corpus = synth::generate_corpus(spec, exec)?;
    corpus::write_all(out, &corpus.records)?;
    Manifest::new("corpus", cfg, corpus.len())?.write_for(out)?;
    Ok(corpus)
}

pub fn compiled_rules(cfg: &RunConfig) -> Result<CompiledRules> {
    let rules = match &cfg.rules {
        Some(p) => load_rules(p)?,
        None => default_rules(cfg.gazetteer.as_deref()),
    };
    CompiledRules::compile(&rules)
}

pub fn scan(cfg: &RunConfig, corpus: &Corpus, exec: Exec) -> Result<ScanResult> {
    let rules = compiled_rules(cfg)?;
    Ok(scan_hallucinations(corpus, &rules, &cfg.scan_dimensions, exec))
}

/// The masking lexicon implied by the config: identity levels of the factor
/// space plus any extra terms, or `None` with masking off.
pub fn lexicon(cfg: &RunConfig) -> Result<Option<MaskingLexicon>> {
    if !cfg.preprocess.mask {
        return Ok(None);
    }
    let space = cfg.prompt_config()?.dimensions;
    Ok(Some(MaskingLexicon::from_space(&space).extend(cfg.preprocess.extra_mask_terms.iter())))
}

/// Everything `probe` produces besides the report.
#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub report: ProbeReport,
    pub model: ProbeModel,
    pub vocabulary: Vocabulary,
}

fn concordance_samples(
    cfg: &RunConfig,
    corpus: &Corpus,
    attributions: &[FeatureAttribution],
    exec: Exec,
) -> Result<Vec<ConcordanceResult>> {
    let c = &cfg.concordance;
    let mut out = Vec::new();
    let mut done = BTreeSet::new();
    for a in attributions {
        let terms = a
            .features
            .iter()
            .filter(|f| f.weight > 0.0 && !f.term.contains(char::is_whitespace))
            .take(c.terms_per_group);
        for f in terms {
            if !done.insert((a.group.clone(), f.term.clone())) {
                continue;
            }
            let mut r = concordance(corpus, &f.term, &cfg.target, c.window, usize::MAX, exec)?;
            r.hits.retain(|h| h.group == a.group);
            r.hits.truncate(c.hits_per_term);
            out.push(r);
        }
    }
    Ok(out)
}

/// mask → vocabulary → TF-IDF → split → train → evaluate → one-vs-rest →
/// scan → report.
///
/// `corpus_generation_fingerprint` is the fingerprint recorded with the
/// corpus; a mismatch with the config is an error unless `force` is set.
pub fn probe(
    cfg: &RunConfig,
    corpus: &Corpus,
    corpus_generation_fingerprint: Option<String>,
    force: bool,
    exec: Exec,
) -> Result<ProbeRun> {
    let generation_fingerprint = cfg.generation_fingerprint()?;
    if let Some(found) = &corpus_generation_fingerprint {
        if found != &generation_fingerprint {
            if force {
                log::warn!("corpus was generated under a different config ({found}); continuing because of --force");
            } else {
                return Err(Error::FingerprintMismatch {
                    expected: generation_fingerprint,
                    found: found.clone(),
                });
            }
        }
    }
    let corpus = corpus.ok_records();
    let labels = corpus::labels(&corpus, &cfg.target)?;
    let chance = chance_level(&labels)?;

    let lex = lexicon(cfg)?;
    let tokenizer = Tokenizer::default();
    let texts: Vec<&str> = corpus.records.iter().map(|r| r.response.as_str()).collect();
    let docs = prepare_documents(&texts, lex.as_ref(), &tokenizer, exec);
    let exclude: Vec<&str> = tokenizer.placeholder.as_deref().into_iter().collect();
    let vocab = build_vocabulary(&docs, &cfg.preprocess.vocab, &exclude)?;
    let ids: Vec<&str> = corpus.records.iter().map(|r| r.id.as_str()).collect();
    let x = tfidf_transform(&docs, &ids, &vocab, exec);

    let p = &cfg.probe;
    let spec = SplitSpec {
        train_fraction: p.train_fraction,
        seed: cfg.seeds.split,
        stratified: p.stratified,
    };
    let (train, test) = split(x.n_rows(), &spec, Some(&labels))?;
    let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
    let (y_train, y_test) = (pick(&train), pick(&test));
    let (x_train, x_test) = (x.select_rows(&train), x.select_rows(&test));

    let opts = TrainOptions {
        lambda: p.lambda,
        optimizer: LbfgsOptions {
            grad_tol: p.grad_tol,
            max_iter: p.max_iter,
            ..LbfgsOptions::default()
        },
        exec,
        ..TrainOptions::default()
    };
    let mut model = train_multiclass(&x_train, &y_train, &opts)?;
    model.split_seed = Some(cfg.seeds.split);
    let accuracy = evaluate(&model, &x_test, &y_test)?;
    let n_test = y_test.len() as u64;
    let test = exceeds_chance(accuracy, n_test, chance, p.alpha)?;
    let k = chance.recip().round() as usize;
    let band = null_band(k, n_test, 0.99)?;
    let attributions = ovr_attributions(&x_train, &y_train, &vocab, &opts, p.top_k)?;

    let samples = concordance_samples(cfg, &corpus, &attributions, exec)?;
    let hallucinations = scan(cfg, &corpus, exec)?;

    let outcome = ProbeOutcome {
        classes: model.classes.clone(),
        n_train: y_train.len(),
        n_test: y_test.len(),
        lambda: p.lambda,
        accuracy,
        chance,
        majority_baseline: majority_baseline(&y_test),
        p_value: test.p_value,
        alpha: p.alpha,
        significant: test.significant,
        null_band: band,
        trace: model.trace.clone(),
    };
    let v = &cfg.preprocess.vocab;
    let report = build_report(ReportInputs {
        corpus: &corpus,
        target: cfg.target.clone(),
        config_fingerprint: Some(cfg.fingerprint()?),
        generation_fingerprint: Some(generation_fingerprint),
        corpus_generation_fingerprint: corpus_generation_fingerprint.filter(|_| !force),
        masking: MaskingInfo {
            enabled: lex.is_some(),
            placeholder: lex.as_ref().map_or(DEFAULT_PLACEHOLDER, |l| l.placeholder()).to_string(),
            n_terms: lex.as_ref().map_or(0, |l| l.terms().len()),
        },
        vocabulary: VocabularyInfo {
            size: vocab.len(),
            sha256: vocab.checksum(),
            max_df: v.max_df,
            min_count: v.min_count,
            min_count_mode: match v.min_count_mode {
                MinCountMode::Total => "total",
                MinCountMode::Documents => "documents",
            }
            .to_string(),
        },
        outcome,
        attributions,
        concordance: samples,
        hallucinations: Some(hallucinations),
        seeds: seeds(cfg),
    })?;
    Ok(ProbeRun {
        report,
        model,
        vocabulary: vocab,
    })
}

/// Writes `report.json`, `report.md`, `model.json` and `vocabulary.json`
/// into `dir`.
pub fn write_probe_outputs(run: &ProbeRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.json", run.report.to_json()?)?;
    write("report.md", run.report.to_markdown())?;
    write("model.json", serde_json::to_string_pretty(&run.model)? + "\n")?;
    write("vocabulary.json", serde_json::to_string_pretty(&run.vocabulary)? + "\n")?;
    Ok(())
}
