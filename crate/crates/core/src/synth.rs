//! Labeled synthetic corpora with a tunable lexical group signal, used as
//! ground truth for probe calibration and attribution recovery.

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::generation::{DecodingParams, GenerationRecord, Status};
use crate::par::Exec;
use crate::prompt_factory::{default_factor_space, sample_assignment, Dimension, FactorSpace};

pub use crate::probe::null_band;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Factor dimension the groups belong to.
    pub dimension: String,
    pub groups: Vec<String>,
    /// Marker tokens per group; must be pairwise disjoint.
    pub markers: IndexMap<String, Vec<String>>,
    /// Probability that a document carries its group's markers.
    pub signal_rate: f64,
    pub base_vocab_size: usize,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub docs_per_group: usize,
    pub seed: u64,
    /// Prefix every document with its literal group label.
    #[serde(default)]
    pub echo_labels: bool,
}

impl SignalSpec {
    /// `markers_per_group` synthetic `zq<g>x<m>` markers for each group.
    pub fn new(dimension: &str, groups: &[&str], markers_per_group: usize, signal_rate: f64, docs_per_group: usize, seed: u64) -> Self {
        let markers = groups
            .iter()
            .enumerate()
            .map(|(g, name)| {
                let toks = (0..markers_per_group).map(|m| format!("zq{g}x{m}")).collect();
                (name.to_string(), toks)
            })
            .collect();
        Self {
            dimension: dimension.to_string(),
            groups: groups.iter().map(|g| g.to_string()).collect(),
            markers,
            signal_rate,
            base_vocab_size: 2000,
            zipf_exponent: 1.1,
            min_len: 60,
            max_len: 140,
            docs_per_group,
            seed,
            echo_labels: false,
        }
    }

    /// Four ethnicity groups with five markers each.
    pub fn ethnicity(signal_rate: f64, docs_per_group: usize, seed: u64) -> Self {
        let space = default_factor_space();
        let levels: Vec<&str> = space
            .dimension("ethnicity")
            .expect("default space has ethnicity")
            .levels
            .iter()
            .map(String::as_str)
            .collect();
        Self::new("ethnicity", &levels, 5, signal_rate, docs_per_group, seed)
    }

    pub fn all_markers(&self) -> impl Iterator<Item = &str> {
        self.markers.values().flatten().map(String::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.len() < 2 {
            return Err(Error::Config("need at least 2 groups".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_rate) {
            return Err(Error::Config(format!("signal_rate must be in [0, 1], got {}", self.signal_rate)));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("document length range is empty".into()));
        }
        if self.base_vocab_size == 0 || self.zipf_exponent <= 0.0 {
            return Err(Error::Config("base vocabulary must be nonempty with a positive Zipf exponent".into()));
        }
        let base: HashSet<String> = (0..self.base_vocab_size).map(base_word).collect();
        let mut seen: HashSet<&str> = HashSet::new();
        for g in &self.groups {
            let toks = self.markers.get(g).map(Vec::as_slice).unwrap_or(&[]);
            if toks.is_empty() && self.signal_rate > 0.0 {
                return Err(Error::Config(format!("group `{g}` has no markers")));
            }
            for t in toks {
                if base.contains(t) {
                    return Err(Error::Config(format!("marker `{t}` collides with the base vocabulary")));
                }
                if !seen.insert(t) {
                    return Err(Error::Config(format!("marker `{t}` is shared between groups")));
                }
            }
        }
        Ok(())
    }
}

const ONSETS: &[u8] = b"bcdfghjklmnprstvw";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pseudo-word for base-vocabulary index `i`, built from
/// consonant-vowel syllables (never contains `q`, `x` or `z`).
pub fn base_word(i: usize) -> String {
    let per = ONSETS.len() * VOWELS.len();
    let mut n = i;
    let mut out = String::new();
    for _ in 0..2 {
        let s = n % per;
        n /= per;
        out.push(ONSETS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    while n > 0 {
        let s = n % per;
        n /= per;
        out.push(ONSETS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    out
}

fn synthetic_timestamp() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

fn space_for(spec: &SignalSpec) -> FactorSpace {
    let mut dims: Vec<Dimension> = default_factor_space()
        .dimensions()
        .iter()
        .filter(|d| d.name != spec.dimension)
        .cloned()
        .collect();
    dims.insert(
        0,
        Dimension {
            name: spec.dimension.clone(),
            levels: spec.groups.clone(),
        },
    );
    FactorSpace::new(dims).expect("groups validated")
}

fn document(spec: &SignalSpec, zipf: &Zipf<f64>, poisson: &Poisson<f64>, group: &str, rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let mut tokens: Vec<String> = (0..len)
        .map(|_| base_word(zipf.sample(rng) as usize - 1))
        .collect();
    if spec.signal_rate > 0.0 && rng.random::<f64>() < spec.signal_rate {
        let markers = &spec.markers[group];
        let count = (poisson.sample(rng) as usize).max(1);
        for _ in 0..count {
            let tok = markers.choose(rng).expect("validated nonempty").clone();
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, tok);
        }
    }
    let body = tokens.join(" ");
    if spec.echo_labels {
        format!("As a {group} traveler, {body}")
    } else {
        body
    }
}

/// Generates `docs_per_group × K` records, group `i % K` for record `i`.
/// Each record draws from its own RNG stream, so output does not depend on
/// execution order.
pub fn generate_corpus(spec: &SignalSpec, exec: Exec) -> Result<Corpus> {
    spec.validate()?;
    let space = space_for(spec);
    let zipf = Zipf::new(spec.base_vocab_size as f64, spec.zipf_exponent)
        .map_err(|e| Error::Config(format!("zipf: {e}")))?;
    let poisson = Poisson::new(3.0).expect("positive rate");
    let k = spec.groups.len();
    let n = k * spec.docs_per_group;
    let records = exec.map_range(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let group = &spec.groups[i % k];
        let mut assignment = sample_assignment(&space, &mut rng).expect("space validated");
        assignment.insert(spec.dimension.clone(), group.clone());
        let response = document(spec, &zipf, &poisson, group, &mut rng);
        GenerationRecord {
            id: format!("synthetic-{i:06}"),
            model: "synthetic".to_string(),
            assignment,
            system: String::new(),
            user: String::new(),
            response,
            created_at: synthetic_timestamp(),
            params: DecodingParams::default(),
            status: Status::Ok,
            error: None,
        }
    });
    Ok(Corpus::from_records(records))
}
