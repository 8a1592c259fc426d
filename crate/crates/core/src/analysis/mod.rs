//! Evidence built on top of the probe: concordance search, rule-based
//! hallucination scanning, group skew tables and the final report.

mod concordance;
mod hallucination;
mod report;

pub use concordance::{concordance, ConcordanceHit, ConcordanceResult};
pub use hallucination::{
    default_rules, load_rules, misplaced_year_rule, scan_hallucinations, skew_summary, CompiledRules, Gazetteer, HallucinationFinding,
    HallucinationRule, RuleKind, ScanResult, SkewSummary, DEFAULT_VENUE_KEYWORDS,
};
pub use report::{
    build_report, CorpusSource, MaskingInfo, ProbeOutcome, ProbeReport, Provenance, ReportInputs, VocabularyInfo,
    REPORT_SCHEMA_VERSION,
};
