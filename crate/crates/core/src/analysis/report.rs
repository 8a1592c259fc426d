//! The probe report: a JSON model plus a Markdown rendering derived from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{ConcordanceResult, ScanResult};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::probe::{FeatureAttribution, OptimizerTrace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One corpus file as cited by the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub file: String,
    pub records: usize,
    pub content_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_fingerprint: String,
    pub n_records: usize,
    pub sources: Vec<CorpusSource>,
    pub skipped_lines: usize,
}

impl Provenance {
    pub fn of(corpus: &Corpus) -> Self {
        Self {
            corpus_fingerprint: corpus.fingerprint(),
            n_records: corpus.len(),
            sources: corpus
                .provenance
                .iter()
                .map(|s| CorpusSource {
                    file: s
                        .path
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    records: s.records,
                    content_sha256: s.content_sha256.clone(),
                })
                .collect(),
            skipped_lines: corpus.skipped.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingInfo {
    pub enabled: bool,
    pub placeholder: String,
    pub n_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyInfo {
    pub size: usize,
    pub sha256: String,
    pub max_df: f64,
    pub min_count: u64,
    pub min_count_mode: String,
}

/// Held-out performance of the multiclass probe against chance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub accuracy: f64,
    pub chance: f64,
    pub majority_baseline: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
    /// Central 99% band of accuracy under the uniform null.
    pub null_band: (f64, f64),
    pub trace: OptimizerTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub config_fingerprint: Option<String>,
    /// Hash of the settings the corpus was generated under.
    pub generation_fingerprint: Option<String>,
    pub target: String,
    pub provenance: Provenance,
    pub masking: MaskingInfo,
    pub vocabulary: VocabularyInfo,
    pub outcome: ProbeOutcome,
    pub attributions: Vec<FeatureAttribution>,
    pub concordance: Vec<ConcordanceResult>,
    pub hallucinations: Option<ScanResult>,
    pub seeds: BTreeMap<String, u64>,
}

/// Everything needed to assemble a report.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub corpus: &'a Corpus,
    pub target: String,
    pub config_fingerprint: Option<String>,
    /// Generation fingerprint implied by the current configuration.
    pub generation_fingerprint: Option<String>,
    /// Generation fingerprint recorded alongside the corpus, if any.
    pub corpus_generation_fingerprint: Option<String>,
    pub masking: MaskingInfo,
    pub vocabulary: VocabularyInfo,
    pub outcome: ProbeOutcome,
    pub attributions: Vec<FeatureAttribution>,
    pub concordance: Vec<ConcordanceResult>,
    pub hallucinations: Option<ScanResult>,
    pub seeds: BTreeMap<String, u64>,
}

/// Assembles the report, refusing evidence computed over another corpus.
pub fn build_report(inputs: ReportInputs<'_>) -> Result<ProbeReport> {
    let provenance = Provenance::of(inputs.corpus);
    let expected = &provenance.corpus_fingerprint;
    let mismatch = |found: &str| Error::FingerprintMismatch {
        expected: expected.clone(),
        found: found.to_string(),
    };
    for c in &inputs.concordance {
        if &c.corpus_fingerprint != expected {
            return Err(mismatch(&c.corpus_fingerprint));
        }
    }
    if let Some(h) = &inputs.hallucinations {
        if &h.corpus_fingerprint != expected {
            return Err(mismatch(&h.corpus_fingerprint));
        }
    }
    if let (Some(cfg), Some(corpus_cfg)) = (&inputs.generation_fingerprint, &inputs.corpus_generation_fingerprint) {
        if cfg != corpus_cfg {
            return Err(Error::FingerprintMismatch {
                expected: cfg.clone(),
                found: corpus_cfg.clone(),
            });
        }
    }
    Ok(ProbeReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_fingerprint: inputs.config_fingerprint,
        generation_fingerprint: inputs.generation_fingerprint,
        target: inputs.target,
        provenance,
        masking: inputs.masking,
        vocabulary: inputs.vocabulary,
        outcome: inputs.outcome,
        attributions: inputs.attributions,
        concordance: inputs.concordance,
        hallucinations: inputs.hallucinations,
        seeds: inputs.seeds,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

impl ProbeReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn headline(&self) -> String {
        format!("accuracy {} vs chance {}", pct(self.outcome.accuracy), pct(self.outcome.chance))
    }

    /// Feature table: one column per group, `term: weight` cells.
    pub fn feature_table(&self, rows: usize) -> String {
        let mut out = String::new();
        if self.attributions.is_empty() {
            return out;
        }
        let header: Vec<String> = self.attributions.iter().map(|a| cell(&a.group)).collect();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        let depth = self.attributions.iter().map(|a| a.features.len()).max().unwrap_or(0).min(rows);
        for i in 0..depth {
            let row: Vec<String> = self
                .attributions
                .iter()
                .map(|a| {
                    a.features
                        .get(i)
                        .map(|f| format!("{}: {:.2}", cell(&f.term), f.weight))
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let o = &self.outcome;
        let mut md = String::new();
        let _ = writeln!(md, "# Identity probe: {}\n", self.target);
        let _ = writeln!(md, "**{}**\n", self.headline());
        let verdict = if o.significant {
            "above chance: the responses carry information about the group"
        } else {
            "not distinguishable from chance"
        };
        let _ = writeln!(md, "- result: {verdict}");
        let _ = writeln!(md, "- p-value (exact binomial, one-sided): {:.3e} at alpha {}", o.p_value, o.alpha);
        let _ = writeln!(md, "- 99% null band: {} to {}", pct(o.null_band.0), pct(o.null_band.1));
        if let Some(m) = o.majority_baseline {
            let _ = writeln!(md, "- majority-class baseline: {}", pct(m));
        }
        let _ = writeln!(md, "- train/test rows: {}/{}", o.n_train, o.n_test);
        let _ = writeln!(md, "- classes: {}", o.classes.join(", "));
        let _ = writeln!(md, "- lambda: {}", o.lambda);
        let _ = writeln!(
            md,
            "- optimizer: {} iterations, gradient norm {:.3e}, converged {}",
            o.trace.iterations, o.trace.grad_norm, o.trace.converged
        );
        let _ = writeln!(
            md,
            "- vocabulary: {} terms (max_df {}, min_count {} by {})",
            self.vocabulary.size, self.vocabulary.max_df, self.vocabulary.min_count, self.vocabulary.min_count_mode
        );
        let _ = writeln!(
            md,
            "- masking: {} ({} terms)",
            if self.masking.enabled { "on" } else { "off" },
            self.masking.n_terms
        );

        let _ = writeln!(md, "\n## Influential features\n");
        md.push_str(&self.feature_table(20));

        if !self.concordance.is_empty() {
            let _ = writeln!(md, "\n## Concordance\n");
            for c in &self.concordance {
                let counts: Vec<String> = c.group_counts.iter().map(|(g, n)| format!("{g}: {n}")).collect();
                let _ = writeln!(md, "### {} ({} matches; {})\n", c.term, c.total, counts.join(", "));
                for h in &c.hits {
                    let _ = writeln!(md, "- [{}] {}: \"{}\"", h.group, h.record_id, h.snippet.replace('\n', " "));
                }
                md.push('\n');
            }
        }

        if let Some(h) = &self.hallucinations {
            let _ = writeln!(md, "\n## Hallucination findings\n");
            let _ = writeln!(md, "{} findings in {} records\n", h.total, h.distinct_records);
            for s in &h.skew {
                let _ = writeln!(md, "| {} | findings | records |", s.dimension);
                let _ = writeln!(md, "|---|---|---|");
                for (level, n) in &s.counts {
                    let r = h.record_counts.get(&s.dimension).and_then(|m| m.get(level)).copied().unwrap_or(0);
                    let _ = writeln!(md, "| {} | {n} | {r} |", cell(level));
                }
                let share = s.modal_share.map(pct).unwrap_or_else(|| "n/a".into());
                let _ = writeln!(
                    md,
                    "\nmodal group: {} ({share})\n",
                    s.modal_group.as_deref().unwrap_or("n/a")
                );
            }
            for w in &h.warnings {
                let _ = writeln!(md, "> warning: {w}");
            }
        }

        let _ = writeln!(md, "\n## Provenance\n");
        let _ = writeln!(md, "- corpus fingerprint: `{}`", self.provenance.corpus_fingerprint);
        let _ = writeln!(md, "- records: {}", self.provenance.n_records);
        for s in &self.provenance.sources {
            let _ = writeln!(md, "- {} ({} records, content `{}`)", s.file, s.records, s.content_sha256);
        }
        if let Some(f) = &self.config_fingerprint {
            let _ = writeln!(md, "- config fingerprint: `{f}`");
        }
        if let Some(f) = &self.generation_fingerprint {
            let _ = writeln!(md, "- generation fingerprint: `{f}`");
        }
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(md, "- seeds: {}", seeds.join(", "));
        }
        md
    }
}
