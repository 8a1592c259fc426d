//! Text pipeline feeding the probe: identity masking, normalization,
//! tokenization, document-frequency filtered vocabulary and TF-IDF.

mod mask;
mod matrix;
mod text;
mod vocab;

pub use mask::{mask_identity, MaskingLexicon, DEFAULT_PLACEHOLDER};
pub use matrix::{tfidf_transform, DocumentMatrix};
pub use text::{normalize, tokenize, Tokenizer};
pub use vocab::{build_vocabulary, MinCountMode, TermStats, VocabConfig, Vocabulary};

use crate::par::Exec;

/// Masks (when a lexicon is given), normalizes and tokenizes each text.
pub fn prepare_documents<S: AsRef<str> + Sync>(
    texts: &[S],
    lexicon: Option<&MaskingLexicon>,
    tokenizer: &Tokenizer,
    exec: Exec,
) -> Vec<Vec<String>> {
    exec.map(texts, |t| {
        let t = t.as_ref();
        match lexicon {
            Some(lex) => tokenizer.tokenize(&normalize(&lex.mask(t))),
            None => tokenizer.tokenize(&normalize(t)),
        }
    })
}
