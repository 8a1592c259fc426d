use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::prompt_factory::FactorSpace;

pub const DEFAULT_PLACEHOLDER: &str = "⟦MASK⟧";

/// Case-insensitive identity terms replaced before vectorization.
#[derive(Debug, Clone)]
pub struct MaskingLexicon {
    terms: Vec<String>,
    placeholder: String,
    pattern: Option<Regex>,
}

#[derive(Serialize, Deserialize)]
struct LexiconRepr {
    terms: Vec<String>,
    #[serde(default = "default_placeholder")]
    placeholder: String,
}

fn default_placeholder() -> String {
    DEFAULT_PLACEHOLDER.to_string()
}

impl Serialize for MaskingLexicon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LexiconRepr {
            terms: self.terms.clone(),
            placeholder: self.placeholder.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaskingLexicon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = LexiconRepr::deserialize(d)?;
        Ok(MaskingLexicon::new(repr.terms, repr.placeholder))
    }
}

impl PartialEq for MaskingLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && self.placeholder == other.placeholder
    }
}

impl MaskingLexicon {
    pub fn new<I, S>(terms: I, placeholder: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut terms: Vec<String> = terms
            .into_iter()
            .map(Into::into)
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        // Longest first so multiword terms win over their parts.
        terms.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
        terms.dedup_by(|a, b| a.to_lowercase() == b.to_lowercase());
        let pattern = (!terms.is_empty()).then(|| {
            let alts: Vec<String> = terms
                .iter()
                .map(|t| {
                    t.split_whitespace()
                        .map(regex::escape)
                        .collect::<Vec<_>>()
                        .join(r"\s+")
                })
                .collect();
            Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).expect("escaped alternation compiles")
        });
        Self {
            terms,
            placeholder: placeholder.into(),
            pattern,
        }
    }

    /// Level strings of the `ethnicity` and `gender` dimensions.
    pub fn from_space(space: &FactorSpace) -> Self {
        Self::from_dimensions(space, &["ethnicity", "gender"])
    }

    pub fn from_dimensions(space: &FactorSpace, dims: &[&str]) -> Self {
        let terms = dims
            .iter()
            .filter_map(|d| space.dimension(d))
            .flat_map(|d| d.levels.iter().cloned());
        Self::new(terms, DEFAULT_PLACEHOLDER)
    }

    pub fn default_identity() -> Self {
        Self::from_space(&crate::prompt_factory::default_factor_space())
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn placeholder(&self) -> &str {
        &self.placeholder
    }

    pub fn extend<I, S>(&self, more: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut terms = self.terms.clone();
        terms.extend(more.into_iter().map(Into::into));
        Self::new(terms, self.placeholder.clone())
    }

    pub fn mask(&self, text: &str) -> String {
        match &self.pattern {
            Some(re) => re.replace_all(text, regex::NoExpand(&self.placeholder)).into_owned(),
            None => text.to_string(),
        }
    }
}

/// Replaces every word-bounded, case-insensitive occurrence of a lexicon
/// term with the lexicon's placeholder.
pub fn mask_identity(text: &str, lexicon: &MaskingLexicon) -> String {
    lexicon.mask(text)
}
