use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How `min_count` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinCountMode {
    /// Total occurrences across the corpus.
    #[default]
    Total,
    /// Number of documents containing the term.
    Documents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    /// Terms in more than this fraction of documents are dropped.
    pub max_df: f64,
    /// Terms seen fewer times than this are dropped.
    pub min_count: u64,
    #[serde(default)]
    pub min_count_mode: MinCountMode,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            max_df: 0.8,
            min_count: 5,
            min_count_mode: MinCountMode::Total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub term: String,
    pub index: usize,
    pub df: u64,
    pub count: u64,
}

/// Term ↔ column map with document statistics. Indices follow
/// lexicographic term order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    n_documents: u64,
    terms: Vec<TermStats>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    n_documents: u64,
    terms: Vec<TermStats>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_terms(r.n_documents, r.terms)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            n_documents: v.n_documents,
            terms: v.terms,
        }
    }
}

impl Vocabulary {
    fn from_terms(n_documents: u64, mut terms: Vec<TermStats>) -> Self {
        terms.sort_by(|a, b| a.term.cmp(&b.term));
        for (i, t) in terms.iter_mut().enumerate() {
            t.index = i;
        }
        let index = terms.iter().map(|t| (t.term.clone(), t.index)).collect();
        Self {
            n_documents,
            terms,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_documents(&self) -> u64 {
        self.n_documents
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index].term
    }

    pub fn stats(&self) -> &[TermStats] {
        &self.terms
    }

    /// Smoothed inverse document frequency, `ln((1 + n) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_documents as f64;
        let df = self.terms[index].df as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    pub fn checksum(&self) -> String {
        let json = serde_json::to_string(self).expect("vocabulary serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Counts terms over tokenized documents and keeps those passing both
/// frequency filters. `exclude` tokens (the mask placeholder) never enter.
pub fn build_vocabulary<D: AsRef<[String]>>(docs: &[D], cfg: &VocabConfig, exclude: &[&str]) -> Result<Vocabulary> {
    if !(cfg.max_df > 0.0 && cfg.max_df <= 1.0) {
        return Err(Error::Config(format!("max_df must be in (0, 1], got {}", cfg.max_df)));
    }
    if docs.iter().all(|d| d.as_ref().is_empty()) {
        return Err(Error::InvalidInput("no nonempty documents".into()));
    }
    let mut stats: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut seen: Vec<&str> = Vec::new();
    for doc in docs {
        seen.clear();
        for tok in doc.as_ref() {
            let e = stats.entry(tok.as_str()).or_default();
            e.1 += 1;
            seen.push(tok.as_str());
        }
        seen.sort_unstable();
        seen.dedup();
        for tok in &seen {
            stats.get_mut(tok).expect("counted above").0 += 1;
        }
    }
    let n = docs.len() as u64;
    let df_limit = cfg.max_df * n as f64;
    let terms: Vec<TermStats> = stats
        .into_iter()
        .filter(|(term, _)| !exclude.contains(term))
        .filter(|&(_, (df, count))| {
            let freq = match cfg.min_count_mode {
                MinCountMode::Total => count,
                MinCountMode::Documents => df,
            };
            df as f64 <= df_limit && freq >= cfg.min_count
        })
        .map(|(term, (df, count))| TermStats {
            term: term.to_string(),
            index: 0,
            df,
            count,
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(Vocabulary::from_terms(n, terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn terms(v: &Vocabulary) -> Vec<&str> {
        v.stats().iter().map(|t| t.term.as_str()).collect()
    }

    #[test]
    fn six_document_fixture() {
        let d = docs(&["a b", "a c", "a d", "a e", "a f", "b c"]);
        let cfg = VocabConfig {
            max_df: 0.8,
            min_count: 2,
            ..Default::default()
        };
        let v = build_vocabulary(&d, &cfg, &[]).unwrap();
        assert_eq!(terms(&v), ["b", "c"]);
        assert_eq!(v.index_of("c"), Some(1));
    }

    #[test]
    fn ubiquitous_term_is_dropped() {
        let d: Vec<Vec<String>> = (0..10)
            .map(|i| vec!["all".to_string(), format!("t{}", i % 2)])
            .collect();
        let v = build_vocabulary(&d, &VocabConfig::default(), &[]).unwrap();
        assert_eq!(terms(&v), ["t0", "t1"]);
    }

    #[test]
    fn min_count_boundary() {
        let mut d = docs(&["x x x x", "y y y y y", "z", "z", "z", "z", "z"]);
        d.push(vec!["w".into()]);
        let v = build_vocabulary(&d, &VocabConfig::default(), &[]).unwrap();
        // x: count 4 (dropped); y: count 5 (kept); z: 5 docs of 8 (kept).
        assert_eq!(terms(&v), ["y", "z"]);
        let per_doc = VocabConfig {
            min_count_mode: MinCountMode::Documents,
            ..Default::default()
        };
        assert_eq!(terms(&build_vocabulary(&d, &per_doc, &[]).unwrap()), ["z"]);
    }

    #[test]
    fn excluded_tokens_never_enter() {
        let d: Vec<Vec<String>> = (0..10).map(|i| vec!["⟦mask⟧".into(), format!("t{}", i % 2)]).collect();
        let cfg = VocabConfig {
            max_df: 1.0,
            ..Default::default()
        };
        let v = build_vocabulary(&d, &cfg, &["⟦mask⟧"]).unwrap();
        assert!(v.index_of("⟦mask⟧").is_none());
    }

    #[test]
    fn empty_after_filtering_errors() {
        let d = docs(&["a", "b"]);
        assert!(matches!(
            build_vocabulary(&d, &VocabConfig::default(), &[]),
            Err(Error::EmptyVocabulary)
        ));
        assert!(build_vocabulary(&docs(&["", ""]), &VocabConfig::default(), &[]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_index() {
        let d = docs(&["a b", "a c", "a d", "a e", "a f", "b c"]);
        let cfg = VocabConfig {
            min_count: 2,
            ..Default::default()
        };
        let v = build_vocabulary(&d, &cfg, &[]).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.checksum(), v.checksum());
    }
}
