//! ℓ2-regularized logistic regression on sparse TF-IDF rows.
//!
//! Both losses are summed over rows (not averaged) with penalty
//! `λ/2 · ‖W‖²` and an unpenalized intercept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions, Objective, OptimizerTrace};
use crate::error::{Error, Result};
use crate::par::{Exec, REDUCE_CHUNK};
use crate::preprocess::DocumentMatrix;

/// Softmax cross-entropy over `K` classes. Parameters are laid out as the
/// row-major `K × V` weight matrix followed by `K` biases.
pub struct MultinomialLoss<'a> {
    pub x: &'a DocumentMatrix,
    pub y: &'a [usize],
    pub n_classes: usize,
    pub lambda: f64,
    pub exec: Exec,
}

impl MultinomialLoss<'_> {
    fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    fn chunk(&self, theta: &[f64], start: usize, end: usize) -> (f64, Vec<f64>) {
        let (k, v) = (self.n_classes, self.n_features());
        let (w, b) = theta.split_at(k * v);
        let mut grad = vec![0.0; k * v + k];
        let mut loss = 0.0;
        let mut z = vec![0.0; k];
        for i in start..end {
            let (cols, vals) = self.x.row(i);
            for c in 0..k {
                let wc = &w[c * v..(c + 1) * v];
                z[c] = b[c] + cols.iter().zip(vals).map(|(&j, &x)| wc[j] * x).sum::<f64>();
            }
            let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|zc| (zc - zmax).exp()).sum();
            let lse = zmax + sum.ln();
            loss += lse - z[self.y[i]];
            for c in 0..k {
                let resid = (z[c] - lse).exp() - if c == self.y[i] { 1.0 } else { 0.0 };
                let gc = &mut grad[c * v..(c + 1) * v];
                for (&j, &x) in cols.iter().zip(vals) {
                    gc[j] += resid * x;
                }
                grad[k * v + c] += resid;
            }
        }
        (loss, grad)
    }
}

impl Objective for MultinomialLoss<'_> {
    fn dim(&self) -> usize {
        self.n_classes * self.n_features() + self.n_classes
    }

    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        reduce(self.exec, self.x.n_rows(), theta, grad, |s, e| self.chunk(theta, s, e), self.n_classes * self.n_features(), self.lambda)
    }
}

/// Binary logistic loss for labels `±1`. Parameters are `V` weights then
/// one bias.
pub struct BinaryLoss<'a> {
    pub x: &'a DocumentMatrix,
    pub positive: &'a [bool],
    pub lambda: f64,
    pub exec: Exec,
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl BinaryLoss<'_> {
    fn chunk(&self, theta: &[f64], start: usize, end: usize) -> (f64, Vec<f64>) {
        let v = self.x.n_cols();
        let (w, b) = (&theta[..v], theta[v]);
        let mut grad = vec![0.0; v + 1];
        let mut loss = 0.0;
        for i in start..end {
            let (cols, vals) = self.x.row(i);
            let z = b + cols.iter().zip(vals).map(|(&j, &x)| w[j] * x).sum::<f64>();
            let s = if self.positive[i] { 1.0 } else { -1.0 };
            loss += softplus(-s * z);
            let coef = -s * sigmoid(-s * z);
            for (&j, &x) in cols.iter().zip(vals) {
                grad[j] += coef * x;
            }
            grad[v] += coef;
        }
        (loss, grad)
    }
}

impl Objective for BinaryLoss<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols() + 1
    }

    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        reduce(self.exec, self.x.n_rows(), theta, grad, |s, e| self.chunk(theta, s, e), self.x.n_cols(), self.lambda)
    }
}

/// Sums per-chunk data terms in chunk order, then adds the penalty on the
/// first `n_penalized` parameters.
fn reduce<F>(exec: Exec, n_rows: usize, theta: &[f64], grad: &mut [f64], chunk: F, n_penalized: usize, lambda: f64) -> f64
where
    F: Fn(usize, usize) -> (f64, Vec<f64>) + Sync + Send,
{
    let parts = exec.map_chunks(n_rows, REDUCE_CHUNK, chunk);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut f = 0.0;
    for (loss, g) in parts {
        f += loss;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let mut penalty = 0.0;
    for (g, w) in grad[..n_penalized].iter_mut().zip(&theta[..n_penalized]) {
        *g += lambda * w;
        penalty += w * w;
    }
    f + 0.5 * lambda * penalty
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    /// Uniform in `[-scale, scale]`.
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lambda: f64,
    pub optimizer: LbfgsOptions,
    pub init: Init,
    #[serde(skip, default)]
    pub exec: Exec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            optimizer: LbfgsOptions::default(),
            init: Init::Zeros,
            exec: Exec::default(),
        }
    }
}

pub(crate) fn initial_point(dim: usize, init: Init) -> Vec<f64> {
    match init {
        Init::Zeros => vec![0.0; dim],
        Init::Random { seed, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..dim).map(|_| rng.random_range(-scale..=scale)).collect()
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Fits a binary model; returns `(weights, bias, trace)`.
pub fn train_binary(x: &DocumentMatrix, positive: &[bool], opts: &TrainOptions) -> Result<(Vec<f64>, f64, OptimizerTrace)> {
    check_lambda(opts.lambda)?;
    if x.n_rows() != positive.len() {
        return Err(Error::InvalidInput("row count differs from label count".into()));
    }
    let loss = BinaryLoss {
        x,
        positive,
        lambda: opts.lambda,
        exec: opts.exec,
    };
    let (theta, trace) = minimize(&loss, initial_point(loss.dim(), opts.init), &opts.optimizer)?;
    if let Some(w) = &trace.warning {
        log::warn!("binary fit: {w}");
    }
    let v = x.n_cols();
    Ok((theta[..v].to_vec(), theta[v], trace))
}
