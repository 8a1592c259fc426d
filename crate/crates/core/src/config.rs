//! Run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generation::{DecodingParams, MarkerInjection};
use crate::preprocess::VocabConfig;
use crate::prompt_factory::PromptConfig;
use crate::synth::SignalSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Chat-completions endpoint for the HTTP backend.
    pub url: Option<String>,
    pub model: Option<String>,
    pub require_auth: bool,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
    /// Stub only: group-conditional marker tokens.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markers: Option<MarkerInjection>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            url: None,
            model: None,
            require_auth: true,
            timeout_secs: 120,
            parallelism: 4,
            attempts: 3,
            backoff_ms: 500,
            markers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
    pub split: u64,
    pub stub: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub mask: bool,
    /// Extra terms masked alongside the factor-space identity levels.
    pub extra_mask_terms: Vec<String>,
    #[serde(flatten)]
    pub vocab: VocabConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mask: true,
            extra_mask_terms: Vec::new(),
            vocab: VocabConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub alpha: f64,
    pub top_k: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            train_fraction: 0.8,
            stratified: false,
            alpha: 0.01,
            top_k: 20,
            max_iter: 1000,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcordanceConfig {
    /// Top features per group that get concordance samples.
    pub terms_per_group: usize,
    pub hits_per_term: usize,
    pub window: usize,
}

impl Default for ConcordanceConfig {
    fn default() -> Self {
        Self {
            terms_per_group: 3,
            hits_per_term: 3,
            window: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Factor space and template file; the built-in design when absent.
    pub prompts: Option<PathBuf>,
    pub backend: BackendConfig,
    pub decoding: DecodingParams,
    pub n: usize,
    /// Dimension dealt round-robin instead of sampled.
    pub balanced: Option<String>,
    pub seeds: Seeds,
    pub preprocess: PreprocessConfig,
    pub probe: ProbeConfig,
    pub target: String,
    /// Identity dimensions tabulated in hallucination counts.
    pub scan_dimensions: Vec<String>,
    pub rules: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub concordance: ConcordanceConfig,
    pub synth: Option<SignalSpec>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prompts: None,
            backend: BackendConfig::default(),
            decoding: DecodingParams::default(),
            n: 2000,
            balanced: None,
            seeds: Seeds::default(),
            preprocess: PreprocessConfig::default(),
            probe: ProbeConfig::default(),
            target: "ethnicity".into(),
            scan_dimensions: vec!["ethnicity".into(), "gender".into()],
            rules: None,
            gazetteer: None,
            concordance: ConcordanceConfig::default(),
            synth: None,
            out: PathBuf::from("out"),
        }
    }
}

fn sha256_json(value: &serde_json::Value) -> String {
    // serde_json maps are key-sorted, so this serialization is canonical.
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.prompts, &mut cfg.rules, &mut cfg.gazetteer].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Sets every seed, including the synthetic corpus seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds {
            sampling: seed,
            split: seed,
            stub: seed,
        };
        if let Some(s) = &mut self.synth {
            s.seed = seed;
        }
        self
    }

    pub fn prompt_config(&self) -> Result<PromptConfig> {
        match &self.prompts {
            Some(p) => PromptConfig::load(p),
            None => Ok(PromptConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("prompts", &self.prompts), ("rules", &self.rules)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        if let Some(g) = &self.gazetteer {
            if !g.is_dir() {
                return Err(Error::Config(format!("gazetteer directory {} does not exist", g.display())));
            }
        }
        self.decoding.validate()?;
        let p = &self.probe;
        if !(p.lambda.is_finite() && p.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", p.lambda)));
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must be in (0, 1), got {}", p.train_fraction)));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", p.alpha)));
        }
        if p.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let v = &self.preprocess.vocab;
        if !(v.max_df > 0.0 && v.max_df <= 1.0) {
            return Err(Error::Config(format!("max_df must be in (0, 1], got {}", v.max_df)));
        }
        if self.backend.kind == BackendKind::Http && self.backend.url.is_none() {
            return Err(Error::Config("http backend needs a url".into()));
        }
        if self.backend.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        let space = self.prompt_config()?.dimensions;
        let known = |d: &str| space.dimension(d).is_some() || self.synth.as_ref().is_some_and(|s| s.dimension == d);
        if !known(&self.target) {
            return Err(Error::UnknownDimension(self.target.clone()));
        }
        if let Some(b) = &self.balanced {
            if space.dimension(b).is_none() {
                return Err(Error::UnknownDimension(b.clone()));
            }
        }
        Ok(())
    }

    /// Model name recorded on collected records.
    pub fn model_name(&self) -> String {
        match (&self.backend.model, self.backend.kind) {
            (Some(m), _) => m.clone(),
            (None, BackendKind::Stub) => "stub".into(),
            (None, BackendKind::Http) => "http".into(),
        }
    }

    /// Hash of the settings that determine corpus content: prompt design,
    /// backend, decoding, sample size and the sampling/stub seeds.
    pub fn generation_fingerprint(&self) -> Result<String> {
        let b = &self.backend;
        let v = serde_json::json!({
            "prompts": self.prompt_config()?,
            "backend": {
                "kind": b.kind,
                "url": b.url,
                "model": self.model_name(),
                "markers": b.markers,
            },
            "decoding": self.decoding,
            "n": self.n,
            "balanced": self.balanced,
            "seeds": { "sampling": self.seeds.sampling, "stub": self.seeds.stub },
            "synth": self.synth,
        });
        Ok(sha256_json(&v))
    }

    /// Hash of the whole configuration apart from the output directory,
    /// with the prompt file replaced by its contents.
    pub fn fingerprint(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("struct serializes to an object");
        obj.remove("out");
        obj.insert("prompts".into(), serde_json::to_value(self.prompt_config()?)?);
        Ok(sha256_json(&v))
    }
}
