use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{labels, Corpus};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::preprocess::normalize;

/// One keyword-in-context occurrence. `start..end` are byte offsets into
/// the normalized response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceHit {
    pub record_id: String,
    pub group: String,
    pub term: String,
    pub start: usize,
    pub end: usize,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub term: String,
    pub dimension: String,
    /// Matches across the whole corpus, before `limit`.
    pub total: usize,
    pub group_counts: BTreeMap<String, usize>,
    pub hits: Vec<ConcordanceHit>,
    pub corpus_fingerprint: String,
}

/// Word boundaries are only required where the match itself starts or ends
/// with an alphanumeric character, so punctuation terms like `¡` match.
fn bounded(text: &str, start: usize, end: usize) -> bool {
    let m = &text[start..end];
    let edge = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    let before_ok = !edge(m.chars().next()) || !edge(text[..start].chars().next_back());
    let after_ok = !edge(m.chars().next_back()) || !edge(text[end..].chars().next());
    before_ok && after_ok
}

/// Word-bounded occurrences of `needle` in `text`, as byte spans.
pub(crate) fn find_bounded(text: &str, needle: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        if bounded(text, start, end) {
            out.push((start, end));
        }
        from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

fn snippet(text: &str, start: usize, end: usize, window: usize) -> String {
    let left: String = {
        let mut chars: Vec<char> = text[..start].chars().rev().take(window).collect();
        chars.reverse();
        chars.into_iter().collect()
    };
    let right: String = text[end..].chars().take(window).collect();
    format!("{left}{}{right}", &text[start..end])
}

/// Case-insensitive, word-bounded search for `term` over normalized
/// responses, with per-group counts over all matches and at most `limit`
/// hits returned.
pub fn concordance(
    corpus: &Corpus,
    term: &str,
    dimension: &str,
    window: usize,
    limit: usize,
    exec: Exec,
) -> Result<ConcordanceResult> {
    let needle = normalize(term.trim());
    if needle.is_empty() {
        return Err(Error::InvalidInput("concordance term is empty".into()));
    }
    let groups = labels(corpus, dimension)?;
    let per_record = exec.map(&corpus.records, |r| {
        let text = normalize(&r.response);
        let spans = find_bounded(&text, &needle);
        (text, spans)
    });
    let mut total = 0;
    let mut group_counts = BTreeMap::new();
    let mut hits = Vec::new();
    for ((record, group), (text, spans)) in corpus.records.iter().zip(&groups).zip(per_record) {
        total += spans.len();
        if !spans.is_empty() {
            *group_counts.entry(group.clone()).or_insert(0) += spans.len();
        }
        for (start, end) in spans {
            if hits.len() < limit {
                hits.push(ConcordanceHit {
                    record_id: record.id.clone(),
                    group: group.clone(),
                    term: needle.clone(),
                    start,
                    end,
                    snippet: snippet(&text, start, end, window),
                });
            }
        }
    }
    Ok(ConcordanceResult {
        term: needle,
        dimension: dimension.to_string(),
        total,
        group_counts,
        hits,
        corpus_fingerprint: corpus.fingerprint(),
    })
}
