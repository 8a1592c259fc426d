use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Compatibility decomposition with combining marks dropped, then
/// lowercased. Characters with no unaccented form pass through.
pub fn normalize(text: &str) -> String {
    let mut out = fold(text);
    // Lowercasing can reintroduce decomposable characters (e.g. 'İ').
    for _ in 0..3 {
        let next = fold(&out);
        if next == out {
            break;
        }
        out = next;
    }
    out
}

fn fold(text: &str) -> String {
    let stripped: String = text.nfkd().filter(|c| !is_combining_mark(*c)).collect();
    stripped.to_lowercase()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

/// Word-level tokenizer.
///
/// Tokens are runs of letters and digits; an apostrophe or hyphen between
/// two alphanumerics stays inside the token. Characters in `keep` become
/// single-character tokens, and `placeholder` (already normalized) is
/// emitted whole. Everything else separates tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    pub keep: Vec<char>,
    pub placeholder: Option<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self {
            keep: vec!['¡'],
            placeholder: Some(normalize(super::DEFAULT_PLACEHOLDER)),
        }
    }
}

impl Tokenizer {
    pub fn with_placeholder(placeholder: &str) -> Self {
        Self {
            placeholder: Some(normalize(placeholder)),
            ..Self::default()
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let ph: Option<Vec<char>> = self.placeholder.as_ref().map(|p| p.chars().collect());
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if let Some(ph) = ph.as_ref().filter(|p| !p.is_empty()) {
                if chars[i..].starts_with(ph) {
                    out.push(ph.iter().collect());
                    i += ph.len();
                    continue;
                }
            }
            let c = chars[i];
            if c.is_alphanumeric() {
                let mut tok = String::new();
                while i < chars.len() {
                    let c = chars[i];
                    if c.is_alphanumeric() {
                        tok.push(c);
                    } else if (is_apostrophe(c) || c == '-')
                        && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
                    {
                        tok.push(if c == '-' { '-' } else { '\'' });
                    } else {
                        break;
                    }
                    i += 1;
                }
                out.push(tok);
            } else {
                if self.keep.contains(&c) {
                    out.push(c.to_string());
                }
                i += 1;
            }
        }
        out
    }
}

/// Tokenizes with the default settings.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}
