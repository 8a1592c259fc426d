//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth function to minimize. `eval` writes the gradient into `grad`
/// and returns the objective value.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 1000,
            memory: 10,
        }
    }
}

/// Optimizer outcome recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct LineSearch<'a, O: Objective + ?Sized> {
    obj: &'a O,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dg0: f64,
    /// Slack for the sufficient-decrease test, covering rounding in `f`.
    slack: f64,
    xt: Vec<f64>,
    gt: Vec<f64>,
}

impl<O: Objective + ?Sized> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> (f64, f64) {
        for ((xt, x), d) in self.xt.iter_mut().zip(self.x).zip(self.d) {
            *xt = x + alpha * d;
        }
        let f = self.obj.eval(&self.xt, &mut self.gt);
        (f, dot(&self.gt, self.d))
    }

    fn armijo(&self, alpha: f64, f: f64) -> bool {
        f <= self.f0 + C1 * alpha * self.dg0 + self.slack
    }

    fn curvature(&self, dg: f64) -> bool {
        dg.abs() <= -C2 * self.dg0
    }

    fn zoom(&mut self, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Option<f64> {
        for _ in 0..40 {
            let alpha = interpolate(lo, hi);
            let (f, dg) = self.probe(alpha);
            if !f.is_finite() || !self.armijo(alpha, f) || f >= lo.1 + self.slack {
                hi = (alpha, f, dg);
            } else {
                if self.curvature(dg) {
                    return Some(alpha);
                }
                if dg * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = (alpha, f, dg);
            }
            if (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(1.0) {
                break;
            }
        }
        // Fall back to the best point satisfying sufficient decrease.
        (lo.0 > 0.0).then(|| {
            self.probe(lo.0);
            lo.0
        })
    }

    /// Returns the accepted step; `xt`/`gt` then hold the new point.
    fn search(&mut self, alpha0: f64) -> Option<(f64, f64)> {
        let mut prev = (0.0, self.f0, self.dg0);
        let mut alpha = alpha0;
        for i in 0..40 {
            let (f, dg) = self.probe(alpha);
            if !f.is_finite() {
                alpha = 0.5 * (prev.0 + alpha);
                continue;
            }
            if !self.armijo(alpha, f) || (i > 0 && f >= prev.1 + self.slack) {
                let a = self.zoom(prev, (alpha, f, dg))?;
                let f = self.obj.eval(&self.xt, &mut self.gt);
                return Some((a, f));
            }
            if self.curvature(dg) {
                return Some((alpha, f));
            }
            if dg >= 0.0 {
                let a = self.zoom((alpha, f, dg), prev)?;
                let f = self.obj.eval(&self.xt, &mut self.gt);
                return Some((a, f));
            }
            prev = (alpha, f, dg);
            alpha *= 2.0;
        }
        None
    }
}

/// Minimizer of the cubic through two (step, value, slope) points,
/// safeguarded to the interior of the bracket.
fn interpolate(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (lo, hi) = if a.0 < b.0 { (a, b) } else { (b, a) };
    let width = hi.0 - lo.0;
    let d1 = lo.2 + hi.2 - 3.0 * (lo.1 - hi.1) / (lo.0 - hi.0);
    let disc = d1 * d1 - lo.2 * hi.2;
    let mut t = if disc >= 0.0 {
        let d2 = disc.sqrt();
        hi.0 - (hi.0 - lo.0) * (hi.2 + d2 - d1) / (hi.2 - lo.2 + 2.0 * d2)
    } else {
        f64::NAN
    };
    if !t.is_finite() || t < lo.0 + 0.1 * width || t > hi.0 - 0.1 * width {
        t = lo.0 + 0.5 * width;
    }
    t
}

/// Minimizes `obj` from `x0`. Hitting `max_iter` is reported in the trace,
/// not as an error; a non-finite objective is an error.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<(Vec<f64>, OptimizerTrace)> {
    let n = obj.dim();
    assert_eq!(x0.len(), n, "initial point has wrong dimension");
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut iterations = 0;
    let mut warning = None;

    loop {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tol {
            break;
        }
        if iterations >= opts.max_iter {
            warning = Some(format!("iteration cap {} reached", opts.max_iter));
            break;
        }

        // Two-loop recursion.
        d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[i] = a;
            d.iter_mut().zip(y).for_each(|(d, y)| *d -= a * y);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|d| *d *= gamma);
        }
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[i];
            d.iter_mut().zip(s).for_each(|(d, s)| *d += (a - b) * s);
        }
        let mut dg0 = dot(&d, &g);
        if dg0 >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            history.clear();
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
            dg0 = -gnorm * gnorm;
        }
        let alpha0 = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let mut ls = LineSearch {
            obj,
            x: &x,
            d: &d,
            f0: f,
            dg0,
            slack: 1e-12 * f.abs().max(1.0),
            xt: vec![0.0; n],
            gt: vec![0.0; n],
        };
        let Some((alpha, f_new)) = ls.search(alpha0) else {
            if history.is_empty() {
                warning = Some("line search failed to make progress".into());
                break;
            }
            history.clear();
            iterations += 1;
            continue;
        };
        if !f_new.is_finite() {
            return Err(Error::NonFinite);
        }
        let LineSearch { xt, gt, .. } = ls;
        let s: Vec<f64> = d.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xt;
        g = gt;
        f = f_new;
        iterations += 1;
    }

    let grad_norm = norm(&g);
    Ok((
        x,
        OptimizerTrace {
            objective: f,
            grad_norm,
            iterations,
            converged: grad_norm <= opts.grad_tol,
            warning,
        },
    ))
}
