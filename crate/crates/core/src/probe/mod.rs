//! The fairness probe: a multinomial classifier whose held-out accuracy is
//! compared with chance, and one-vs-rest refits for per-group feature
//! weights.

mod lbfgs;
mod logreg;
mod split;
mod stats;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use lbfgs::{minimize, LbfgsOptions, Objective, OptimizerTrace};
pub use logreg::{train_binary, BinaryLoss, Init, MultinomialLoss, TrainOptions};
pub use split::{split, SplitSpec};
pub use stats::{binomial_upper_tail, chance_level, exceeds_chance, majority_baseline, null_band, ChanceTest};

use crate::error::{Error, Result};
use crate::preprocess::{DocumentMatrix, Vocabulary};

/// Trained multiclass probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub classes: Vec<String>,
    /// Row-major `K × V`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_features: usize,
    pub lambda: f64,
    pub trace: OptimizerTrace,
    pub split_seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct ProbeModelRepr {
    labels: Vec<String>,
    lambda: f64,
    n_features: usize,
    bias: Vec<f64>,
    /// `(class, feature, weight)` for `|weight| > 1e-8`.
    weights: Vec<(usize, usize, f64)>,
    trace: OptimizerTrace,
    split_seed: Option<u64>,
}

const SPARSE_CUTOFF: f64 = 1e-8;

impl Serialize for ProbeModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.n_features;
        let weights = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > SPARSE_CUTOFF)
            .map(|(i, &w)| (i / v, i % v, w))
            .collect();
        ProbeModelRepr {
            labels: self.classes.clone(),
            lambda: self.lambda,
            n_features: v,
            bias: self.bias.clone(),
            weights,
            trace: self.trace.clone(),
            split_seed: self.split_seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProbeModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ProbeModelRepr::deserialize(d)?;
        let k = r.labels.len();
        let mut weights = vec![0.0; k * r.n_features];
        for (c, j, w) in r.weights {
            if c >= k || j >= r.n_features {
                return Err(serde::de::Error::custom("weight index out of range"));
            }
            weights[c * r.n_features + j] = w;
        }
        Ok(ProbeModel {
            classes: r.labels,
            weights,
            bias: r.bias,
            n_features: r.n_features,
            lambda: r.lambda,
            trace: r.trace,
            split_seed: r.split_seed,
        })
    }
}

/// Sorted distinct labels and each row's class index.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<String>, Vec<usize>) {
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let y = labels
        .iter()
        .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("label present"))
        .collect();
    (classes, y)
}

impl ProbeModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.n_features..(class + 1) * self.n_features]
    }

    pub fn scores(&self, x: &DocumentMatrix, row: usize) -> Vec<f64> {
        let (cols, vals) = x.row(row);
        (0..self.n_classes())
            .map(|c| {
                let w = self.class_weights(c);
                self.bias[c] + cols.iter().zip(vals).map(|(&j, &v)| w[j] * v).sum::<f64>()
            })
            .collect()
    }

    /// Arg-max class index per row; ties go to the lowest index.
    pub fn predict(&self, x: &DocumentMatrix) -> Vec<usize> {
        (0..x.n_rows())
            .map(|r| {
                let s = self.scores(x, r);
                let mut best = 0;
                for (c, &v) in s.iter().enumerate().skip(1) {
                    if v > s[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Objective value at the stored parameters on `(x, labels)`.
    pub fn objective<S: AsRef<str>>(&self, x: &DocumentMatrix, labels: &[S]) -> Result<f64> {
        let y = self.class_indices(labels)?;
        let loss = MultinomialLoss {
            x,
            y: &y,
            n_classes: self.n_classes(),
            lambda: self.lambda,
            exec: Default::default(),
        };
        let mut theta = self.weights.clone();
        theta.extend_from_slice(&self.bias);
        let mut g = vec![0.0; theta.len()];
        Ok(loss.eval(&theta, &mut g))
    }

    fn class_indices<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.classes
                    .iter()
                    .position(|c| c == l.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown class `{}`", l.as_ref())))
            })
            .collect()
    }
}

/// Fits the softmax probe by minimizing summed cross-entropy plus
/// `λ/2 · ‖W‖²`.
pub fn train_multiclass<S: AsRef<str>>(x: &DocumentMatrix, labels: &[S], opts: &TrainOptions) -> Result<ProbeModel> {
    logreg::check_lambda(opts.lambda)?;
    if x.n_rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.n_rows(),
            labels.len()
        )));
    }
    let (classes, y) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 distinct classes".into()));
    }
    let loss = MultinomialLoss {
        x,
        y: &y,
        n_classes: classes.len(),
        lambda: opts.lambda,
        exec: opts.exec,
    };
    let (theta, trace) = minimize(&loss, logreg::initial_point(loss.dim(), opts.init), &opts.optimizer)?;
    if let Some(w) = &trace.warning {
        log::warn!("multiclass fit: {w}");
    }
    let kv = classes.len() * x.n_cols();
    let mut bias = theta[kv..].to_vec();
    // Softmax is invariant to a shared bias shift; store the centered form.
    let mean = bias.iter().sum::<f64>() / bias.len() as f64;
    bias.iter_mut().for_each(|b| *b -= mean);
    Ok(ProbeModel {
        classes,
        weights: theta[..kv].to_vec(),
        bias,
        n_features: x.n_cols(),
        lambda: opts.lambda,
        trace,
        split_seed: None,
    })
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate<S: AsRef<str>>(model: &ProbeModel, x: &DocumentMatrix, labels: &[S]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    if x.n_rows() != labels.len() {
        return Err(Error::InvalidInput("row count differs from label count".into()));
    }
    let pred = model.predict(x);
    let correct = pred
        .iter()
        .zip(labels)
        .filter(|(&p, l)| model.classes[p] == l.as_ref())
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

/// Top-`k` terms of one group's one-vs-rest model by absolute weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub group: String,
    pub features: Vec<WeightedTerm>,
    pub trace: OptimizerTrace,
}

/// Indices of the `k` largest `|w|`, ties broken by lower index.
pub fn top_k_by_magnitude(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// One binary refit per class (class = positive, rest = negative), each
/// reporting its top-`k` signed weights.
pub fn ovr_attributions<S: AsRef<str> + Sync>(
    x: &DocumentMatrix,
    labels: &[S],
    vocab: &Vocabulary,
    opts: &TrainOptions,
    k: usize,
) -> Result<Vec<FeatureAttribution>> {
    if vocab.len() != x.n_cols() {
        return Err(Error::InvalidInput("vocabulary size differs from matrix width".into()));
    }
    let (classes, y) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 distinct classes".into()));
    }
    let fits = opts.exec.map_range(classes.len(), |c| {
        let positive: Vec<bool> = y.iter().map(|&yi| yi == c).collect();
        train_binary(x, &positive, opts)
    });
    classes
        .into_iter()
        .zip(fits)
        .map(|(group, fit)| {
            let (w, _, trace) = fit?;
            let features = top_k_by_magnitude(&w, k)
                .into_iter()
                .map(|j| WeightedTerm {
                    term: vocab.term(j).to_string(),
                    weight: w[j],
                })
                .collect();
            Ok(FeatureAttribution { group, features, trace })
        })
        .collect()
}
