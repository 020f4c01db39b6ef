//! L-BFGS with a Strong Wolfe line search, and a central-difference gradient.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub max_steps: usize,
    /// Initial trial step of every line search after the first.
    pub learning_rate: f64,
    /// Number of curvature pairs kept.
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop once the gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
    pub max_line_search_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_steps: 10,
            learning_rate: 1.0,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            gradient_tolerance: 1e-8,
            max_line_search_evals: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.history > 0
            && self.max_line_search_evals > 0
            && self.gradient_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid L-BFGS configuration {self:?}")))
        }
    }
}

/// Why the optimizer stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxSteps,
    GradientNorm,
    LineSearchFailed,
}

/// One accepted step along `x + alpha * p`, with the line-search values needed
/// to verify the Strong Wolfe conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub alpha: f64,
    pub value: f64,
    pub initial_value: f64,
    pub initial_slope: f64,
    pub final_slope: f64,
    pub evaluations: usize,
}

impl StepRecord {
    pub fn sufficient_decrease(&self, c1: f64) -> bool {
        self.value <= self.initial_value + c1 * self.alpha * self.initial_slope
    }

    pub fn curvature(&self, c2: f64) -> bool {
        self.final_slope.abs() <= c2 * self.initial_slope.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub initial_value: f64,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub trace: Trace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

fn finite(v: f64, g: &[f64]) -> bool {
    v.is_finite() && g.iter().all(|x| x.is_finite())
}

/// Search direction `-H g` from the stored `(s, y)` pairs, oldest first.
pub(crate) fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    if let Some((s, y)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    grad: Vec<f64>,
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// Errors raised by the objective away from `x0` are treated as infinite
/// values so the line search backs off.
pub fn minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let (mut value, mut grad) = objective(x0)?;
    if !finite(value, &grad) {
        return Err(Error::NonFinite("objective or gradient at the starting point".into()));
    }
    let mut x = x0.to_vec();
    let mut trace = Trace {
        initial_value: value,
        steps: Vec::new(),
        termination: Termination::MaxSteps,
        evaluations: 1,
    };
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(config.history);

    for step in 0..config.max_steps {
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax <= config.gradient_tolerance {
            trace.termination = Termination::GradientNorm;
            break;
        }
        let mut p = two_loop(&grad, &pairs);
        let mut slope = dot(&grad, &p);
        if !(slope < 0.0) {
            pairs.clear();
            p = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &p);
        }
        let alpha0 = if step == 0 && pairs.is_empty() {
            let l1: f64 = grad.iter().map(|g| g.abs()).sum();
            config.learning_rate * (1.0 / l1).min(1.0)
        } else {
            config.learning_rate
        };
        let mut evals = 0;
        let found = {
            let mut phi = |alpha: f64| -> Point {
                evals += 1;
                let xa = axpy(&x, alpha, &p);
                match objective(&xa) {
                    Ok((v, g)) if finite(v, &g) => Point {
                        alpha,
                        value: v,
                        slope: dot(&g, &p),
                        grad: g,
                    },
                    _ => Point {
                        alpha,
                        value: f64::INFINITY,
                        slope: f64::NAN,
                        grad: Vec::new(),
                    },
                }
            };
            strong_wolfe(&mut phi, value, slope, alpha0, config)
        };
        trace.evaluations += evals;
        let Some(pt) = found else {
            trace.termination = Termination::LineSearchFailed;
            break;
        };
        let x_new = axpy(&x, pt.alpha, &p);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == config.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        trace.steps.push(StepRecord {
            alpha: pt.alpha,
            value: pt.value,
            initial_value: value,
            initial_slope: slope,
            final_slope: pt.slope,
            evaluations: evals,
        });
        x = x_new;
        value = pt.value;
        grad = pt.grad;
    }
    if trace.termination == Termination::MaxSteps {
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax <= config.gradient_tolerance {
            trace.termination = Termination::GradientNorm;
        }
    }
    Ok(Minimum {
        x,
        value,
        gradient: grad,
        trace,
    })
}

/// Bracketing and zoom search for a step satisfying the Strong Wolfe
/// conditions.
fn strong_wolfe(
    phi: &mut impl FnMut(f64) -> Point,
    phi0: f64,
    slope0: f64,
    alpha0: f64,
    config: &LbfgsConfig,
) -> Option<Point> {
    let armijo = |pt: &Point| pt.value <= phi0 + config.c1 * pt.alpha * slope0;
    let curvature = |pt: &Point| pt.slope.abs() <= -config.c2 * slope0;
    let mut evals = 0;
    let mut prev = Point {
        alpha: 0.0,
        value: phi0,
        slope: slope0,
        grad: Vec::new(),
    };
    let mut alpha = alpha0;
    let (mut lo, mut hi) = loop {
        if evals >= config.max_line_search_evals {
            return None;
        }
        let cur = phi(alpha);
        evals += 1;
        if !armijo(&cur) || (evals > 1 && cur.value >= prev.value) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        let next = cubic_minimizer(&prev, &cur)
            .map(|a| a.clamp(cur.alpha + 0.01 * (cur.alpha - prev.alpha), 10.0 * cur.alpha))
            .unwrap_or(2.0 * cur.alpha);
        prev = cur;
        alpha = next;
    };

    // `lo` satisfies sufficient decrease and has the lower value; the
    // interval between `lo` and `hi` contains acceptable steps.
    while evals < config.max_line_search_evals {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-12 * b.max(1e-300) {
            return None;
        }
        let guess = if hi.value.is_finite() && hi.slope.is_finite() {
            cubic_minimizer(&lo, &hi).unwrap_or(0.5 * (a + b))
        } else {
            0.5 * (a + b)
        };
        let trial = guess.clamp(a + 0.1 * width, b - 0.1 * width);
        let cur = phi(trial);
        evals += 1;
        if !armijo(&cur) || cur.value >= lo.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    None
}

/// Minimizer of the cubic matching values and slopes at two points.
fn cubic_minimizer(p: &Point, q: &Point) -> Option<f64> {
    let (x1, f1, g1) = (p.alpha, p.value, p.slope);
    let (x2, f2, g2) = (q.alpha, q.value, q.slope);
    if x1 == x2 {
        return None;
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (x2 - x1).signum() * disc.sqrt();
    let denom = g2 - g1 + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = x2 - (x2 - x1) * (g2 + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("difference step must be positive, got {h}")));
    }
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}
