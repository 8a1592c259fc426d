//! Rule-based hallucination scanning: regular-expression rules and
//! gazetteer misses for venue-like proper-noun phrases.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::generation::GenerationRecord;
use crate::par::Exec;
use crate::preprocess::normalize;

pub const DEFAULT_VENUE_KEYWORDS: &[&str] = &[
    "Restaurant", "Museum", "Garden", "Gardens", "Park", "Gallery", "Cafe", "Café", "Bistro", "Grill", "Diner",
    "Theater", "Theatre", "Market", "Zoo", "Hotel", "Inn", "Center", "Centre", "Plaza", "Square", "Pier", "Beach",
    "Lounge", "Bar",
];

/// Capitalized words that often start a sentence or clause and are not
/// part of a venue name.
const LEADING_NOISE: &[&str] = &[
    "The", "A", "An", "Visit", "Explore", "Head", "Try", "Check", "Stop", "Enjoy", "At", "In", "From", "Then", "Start",
    "Spend", "Take", "See", "Tour", "Walk", "Discover", "Consider", "Book", "Stay", "Near", "Afterwards", "Finally",
    "Next", "Also", "Don't", "Be", "Catch", "Grab", "End", "Begin",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleKind {
    Pattern {
        pattern: String,
    },
    GazetteerMiss {
        /// Directory holding `<destination>.json` venue lists.
        gazetteer: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        keywords: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationRule {
    pub id: String,
    #[serde(flatten)]
    pub kind: RuleKind,
    #[serde(default)]
    pub description: String,
}

/// The misplaced-year rule: a bare year set off by punctuation right after
/// a word, as in "reservations in advance, 2019, especially".
pub fn misplaced_year_rule() -> HallucinationRule {
    HallucinationRule {
        id: "misplaced-year".into(),
        kind: RuleKind::Pattern {
            pattern: r"[\p{L})][,;]\s*((?:19|20)\d{2})\s*(?:[,;.!?]|$)".into(),
        },
        description: "four-digit year inserted as its own clause with no temporal context".into(),
    }
}

pub fn default_rules(gazetteer_dir: Option<&Path>) -> Vec<HallucinationRule> {
    let mut rules = vec![misplaced_year_rule()];
    if let Some(dir) = gazetteer_dir {
        rules.push(HallucinationRule {
            id: "unverified-venue".into(),
            kind: RuleKind::GazetteerMiss {
                gazetteer: dir.to_path_buf(),
                keywords: None,
            },
            description: "venue-like name not found in the destination gazetteer".into(),
        });
    }
    rules
}

/// Reads a rules file. Relative gazetteer paths resolve against the rules
/// file's directory.
pub fn load_rules(path: &Path) -> Result<Vec<HallucinationRule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rules: Vec<HallucinationRule> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &mut rules {
        if let RuleKind::GazetteerMiss { gazetteer, .. } = &mut r.kind {
            if gazetteer.is_relative() {
                *gazetteer = base.join(&*gazetteer);
            }
        }
    }
    Ok(rules)
}

fn venue_key(name: &str) -> String {
    let n = normalize(name);
    let n = n.split_whitespace().collect::<Vec<_>>().join(" ");
    n.strip_prefix("the ").map(str::to_string).unwrap_or(n)
}

/// Verified venue names per destination.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    venues: HashMap<String, HashSet<String>>,
}

impl Gazetteer {
    pub fn from_lists<I, S>(lists: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        Self {
            venues: lists
                .into_iter()
                .map(|(d, names)| (d.into(), names.iter().map(|n| venue_key(n)).collect()))
                .collect(),
        }
    }

    /// Loads every `*.json` file in `dir`; the file stem is the destination.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut lists = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if p.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(dest) = p.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let names: Vec<String> =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            lists.push((dest.to_string(), names));
        }
        Ok(Self::from_lists(lists))
    }

    pub fn has_destination(&self, destination: &str) -> bool {
        self.venues.contains_key(destination)
    }

    pub fn contains(&self, destination: &str, venue: &str) -> bool {
        self.venues.get(destination).is_some_and(|s| s.contains(&venue_key(venue)))
    }
}

enum Compiled {
    Pattern(Regex),
    Gazetteer { gazetteer: Gazetteer, candidates: Regex },
}

/// Rules ready to run.
pub struct CompiledRules {
    rules: Vec<(String, Compiled)>,
    pub warnings: Vec<String>,
}

fn venue_regex(keywords: &[String]) -> Result<Regex> {
    let kw: Vec<String> = keywords.iter().map(|k| regex::escape(k)).collect();
    let word = r"[\p{Lu}][\p{L}\p{N}'’&.-]*";
    let pattern = format!(
        r"\b((?:{word}\s+){{1,5}}(?:{})(?:\s+of(?:\s+the)?(?:\s+{word}){{1,3}})?)\b",
        kw.join("|")
    );
    Regex::new(&pattern).map_err(|e| Error::Config(format!("venue keyword pattern: {e}")))
}

impl CompiledRules {
    pub fn compile(rules: &[HallucinationRule]) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut out = Vec::new();
        let mut warnings = Vec::new();
        for r in rules {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Rule {
                    id: r.id.clone(),
                    message: "duplicate rule id".into(),
                });
            }
            match &r.kind {
                RuleKind::Pattern { pattern } => {
                    let re = Regex::new(pattern).map_err(|e| Error::Rule {
                        id: r.id.clone(),
                        message: format!("invalid pattern: {e}"),
                    })?;
                    out.push((r.id.clone(), Compiled::Pattern(re)));
                }
                RuleKind::GazetteerMiss { gazetteer, keywords } => {
                    if !gazetteer.is_dir() {
                        let msg = format!(
                            "rule `{}` disabled: gazetteer directory {} not found",
                            r.id,
                            gazetteer.display()
                        );
                        log::warn!("{msg}");
                        warnings.push(msg);
                        continue;
                    }
                    let g = Gazetteer::load_dir(gazetteer)?;
                    let kws: Vec<String> = keywords
                        .clone()
                        .unwrap_or_else(|| DEFAULT_VENUE_KEYWORDS.iter().map(|s| s.to_string()).collect());
                    let candidates = venue_regex(&kws).map_err(|e| Error::Rule {
                        id: r.id.clone(),
                        message: e.to_string(),
                    })?;
                    out.push((r.id.clone(), Compiled::Gazetteer { gazetteer: g, candidates }));
                }
            }
        }
        Ok(Self { rules: out, warnings })
    }

    /// Gazetteer-miss rule over an in-memory gazetteer.
    pub fn with_gazetteer(mut self, id: &str, gazetteer: Gazetteer) -> Self {
        let kws: Vec<String> = DEFAULT_VENUE_KEYWORDS.iter().map(|s| s.to_string()).collect();
        let candidates = venue_regex(&kws).expect("default keywords compile");
        self.rules.push((id.to_string(), Compiled::Gazetteer { gazetteer, candidates }));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Strips leading sentence words from a candidate, returning the byte
/// offset where the venue name starts.
fn trim_leading_noise(candidate: &str) -> usize {
    let mut offset = 0;
    let mut rest = candidate;
    loop {
        let Some(word) = rest.split_whitespace().next() else {
            return offset;
        };
        let after = &rest[word.len()..];
        // Keep at least a name word plus the keyword.
        if after.split_whitespace().count() < 2 || !LEADING_NOISE.contains(&word) {
            return offset;
        }
        let skip = word.len() + (after.len() - after.trim_start().len());
        offset += skip;
        rest = &rest[skip..];
    }
}

/// True if any word-suffix of `name` (two words or more) is verified.
fn verified(g: &Gazetteer, destination: &str, name: &str) -> bool {
    let words: Vec<&str> = name.split_whitespace().collect();
    (0..words.len().saturating_sub(1)).any(|i| g.contains(destination, &words[i..].join(" ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationFinding {
    pub rule_id: String,
    pub record_id: String,
    /// Identity labels of the record (e.g. ethnicity and gender).
    pub groups: IndexMap<String, String>,
    pub matched: String,
    /// Byte span of `matched` in the raw response.
    pub start: usize,
    pub end: usize,
}

fn scan_record(rules: &CompiledRules, record: &GenerationRecord, dims: &[String]) -> Vec<HallucinationFinding> {
    let text = &record.response;
    let groups: IndexMap<String, String> = dims
        .iter()
        .filter_map(|d| record.assignment.get(d).map(|l| (d.clone(), l.to_string())))
        .collect();
    let mut out = Vec::new();
    let mut push = |rule_id: &str, start: usize, end: usize| {
        out.push(HallucinationFinding {
            rule_id: rule_id.to_string(),
            record_id: record.id.clone(),
            groups: groups.clone(),
            matched: text[start..end].to_string(),
            start,
            end,
        });
    };
    for (id, rule) in &rules.rules {
        match rule {
            Compiled::Pattern(re) => {
                for caps in re.captures_iter(text) {
                    let m = caps.get(1).or_else(|| caps.get(0)).expect("group 0 exists");
                    push(id, m.start(), m.end());
                }
            }
            Compiled::Gazetteer { gazetteer, candidates } => {
                let Some(dest) = record.assignment.get("destination") else {
                    continue;
                };
                if !gazetteer.has_destination(dest) {
                    continue;
                }
                for caps in candidates.captures_iter(text) {
                    let m = caps.get(1).expect("venue group");
                    let start = m.start() + trim_leading_noise(m.as_str());
                    let name = &text[start..m.end()];
                    if !verified(gazetteer, dest, name) {
                        push(id, start, m.end());
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewSummary {
    pub dimension: String,
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    pub modal_group: Option<String>,
    /// Share of findings in the most affected group; `None` with no findings.
    pub modal_share: Option<f64>,
}

/// Per-level finding counts for `dimension` and the modal group's share.
/// Ties for the modal group go to the lexicographically first level.
pub fn skew_summary(findings: &[HallucinationFinding], dimension: &str) -> SkewSummary {
    let mut counts = BTreeMap::new();
    for f in findings {
        if let Some(level) = f.groups.get(dimension) {
            *counts.entry(level.clone()).or_insert(0) += 1;
        }
    }
    let total: usize = counts.values().sum();
    let modal = counts
        .iter()
        .fold(None::<(&String, usize)>, |best, (k, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        });
    SkewSummary {
        dimension: dimension.to_string(),
        total,
        modal_group: modal.map(|(k, _)| k.clone()),
        modal_share: modal.filter(|_| total > 0).map(|(_, v)| v as f64 / total as f64),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub findings: Vec<HallucinationFinding>,
    pub total: usize,
    pub distinct_records: usize,
    /// Per dimension: findings per level (counted per matched span).
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    /// Per dimension: distinct records with at least one finding, per level.
    pub record_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub skew: Vec<SkewSummary>,
    pub warnings: Vec<String>,
    pub corpus_fingerprint: String,
}

/// Runs every rule over every record. `dims` names the identity dimensions
/// attached to findings and tabulated.
pub fn scan_hallucinations(corpus: &Corpus, rules: &CompiledRules, dims: &[String], exec: Exec) -> ScanResult {
    let per_record = exec.map(&corpus.records, |r| scan_record(rules, r, dims));
    let findings: Vec<HallucinationFinding> = per_record.into_iter().flatten().collect();
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut record_sets: BTreeMap<String, BTreeMap<String, BTreeSet<&str>>> = BTreeMap::new();
    for d in dims {
        counts.insert(d.clone(), BTreeMap::new());
        record_sets.insert(d.clone(), BTreeMap::new());
    }
    for f in &findings {
        for (d, level) in &f.groups {
            *counts.get_mut(d).expect("dims seeded").entry(level.clone()).or_insert(0) += 1;
            record_sets
                .get_mut(d)
                .expect("dims seeded")
                .entry(level.clone())
                .or_default()
                .insert(f.record_id.as_str());
        }
    }
    let record_counts = record_sets
        .into_iter()
        .map(|(d, m)| (d, m.into_iter().map(|(l, s)| (l, s.len())).collect()))
        .collect();
    let distinct_records = findings.iter().map(|f| f.record_id.as_str()).collect::<HashSet<_>>().len();
    let skew = dims.iter().map(|d| skew_summary(&findings, d)).collect();
    ScanResult {
        total: findings.len(),
        distinct_records,
        counts,
        record_counts,
        skew,
        warnings: rules.warnings.clone(),
        corpus_fingerprint: corpus.fingerprint(),
        findings,
    }
}
