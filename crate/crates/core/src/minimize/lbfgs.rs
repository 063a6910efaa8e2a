//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WgsError};
use crate::scalar::Real;

/// A differentiable objective on a flat real vector.
pub trait Objective<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[T]) -> Result<(T, Vec<T>)>;
}

/// Wraps a closure returning value and gradient.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<T: Real, F> Objective<T> for FnObjective<F>
where
    F: Fn(&[T]) -> Result<(T, Vec<T>)> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        (self.f)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalSearchConfig {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_evals: usize,
    /// Stop when `‖g‖_∞` falls below this.
    pub grad_tol: f64,
    /// Trailing window (in iterations) for the progress test.
    pub window: usize,
    /// Stop when the mean decrease over the window is below
    /// `progress_factor · ε · |E|`.
    pub progress_factor: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            memory: 25,
            max_evals: 3000,
            grad_tol: 1e-9,
            window: 30,
            progress_factor: 4.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 40,
        }
    }
}

impl LocalSearchConfig {
    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory < 3 {
            return Err(WgsError::InvalidArgument("memory must be at least 3".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.progress_factor > 0.0) {
            return Err(WgsError::InvalidArgument("tolerances must be positive".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(WgsError::InvalidArgument("line search needs 0 < c1 < c2 < 1".into()));
        }
        if self.max_evals == 0 || self.window == 0 || self.max_line_evals < 2 {
            return Err(WgsError::InvalidArgument("budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    GradientTolerance,
    Progress,
    /// No acceptable step was found; the best point seen is returned.
    LineSearchFailed,
    /// The objective kept failing along the search direction.
    ObjectiveFailed,
}

impl StopReason {
    /// True for stops that indicate trouble rather than convergence or budget.
    pub fn flagged(self) -> bool {
        matches!(self, StopReason::LineSearchFailed | StopReason::ObjectiveFailed)
    }
}

#[derive(Clone, Debug)]
pub struct LocalResult<T> {
    pub x: Vec<T>,
    pub energy: T,
    pub grad_inf: T,
    pub evals: usize,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective value at every accepted iterate, starting with `x0`.
    pub trace: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn axpy<T: Real>(x: &[T], a: T, d: &[T]) -> Vec<T> {
    x.iter().zip(d).map(|(&xi, &di)| xi + a * di).collect()
}

struct Counter<'a, T: Real, O: Objective<T> + ?Sized> {
    obj: &'a O,
    evals: usize,
    budget: usize,
    _t: std::marker::PhantomData<T>,
}

impl<'a, T: Real, O: Objective<T> + ?Sized> Counter<'a, T, O> {
    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    /// Objective value and gradient; failures and non-finite values map to `None`.
    fn eval(&mut self, x: &[T]) -> Option<(T, Vec<T>)> {
        self.evals += 1;
        match self.obj.evaluate(x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            _ => None,
        }
    }
}

struct Trial<T> {
    step: T,
    f: T,
    g: Vec<T>,
    x: Vec<T>,
    dg: T,
}

enum LineOutcome<T> {
    /// Strong Wolfe conditions hold.
    Wolfe(Trial<T>),
    /// Only sufficient decrease holds.
    Decrease(Trial<T>),
    Failed { objective_errors: usize },
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, if it exists.
fn cubic_min<T: Real>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> Option<T> {
    let d1 = da + db - T::of(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < T::zero() {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let den = db - da + T::of(2.0) * d2;
    if den == T::zero() {
        return None;
    }
    let t = b - (b - a) * (db + d2 - d1) / den;
    t.is_finite().then_some(t)
}

fn line_search<T: Real, O: Objective<T> + ?Sized>(
    c: &mut Counter<'_, T, O>,
    x: &[T],
    f0: T,
    dg0: T,
    d: &[T],
    step0: T,
    cfg: &LocalSearchConfig,
) -> LineOutcome<T> {
    let c1 = T::of(cfg.c1);
    let c2 = T::of(cfg.c2);
    let mut errors = 0usize;
    let mut best: Option<Trial<T>> = None;
    let note_best = |t: &Trial<T>, best: &mut Option<Trial<T>>| {
        if t.f <= f0 + c1 * t.step * dg0 && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial { step: t.step, f: t.f, g: t.g.clone(), x: t.x.clone(), dg: t.dg });
        }
    };
    let probe = |c: &mut Counter<'_, T, O>, a: T, errors: &mut usize| -> Option<Trial<T>> {
        let xa = axpy(x, a, d);
        match c.eval(&xa) {
            Some((f, g)) => {
                let dg = dot(&g, d);
                Some(Trial { step: a, f, g, x: xa, dg })
            }
            None => {
                *errors += 1;
                None
            }
        }
    };

    // Bracketing phase.
    let (mut lo_a, mut lo_f, mut lo_dg) = (T::zero(), f0, dg0);
    let mut hi: Option<(T, T, T)> = None;
    let mut a = step0;
    let mut used = 0usize;
    loop {
        if used >= cfg.max_line_evals || c.exhausted() {
            break;
        }
        used += 1;
        match probe(c, a, &mut errors) {
            None => {
                hi = Some((a, T::infinity(), T::zero()));
                break;
            }
            Some(t) => {
                note_best(&t, &mut best);
                if t.f > f0 + c1 * a * dg0 || (used > 1 && t.f >= lo_f) {
                    hi = Some((a, t.f, t.dg));
                    break;
                }
                if t.dg.abs() <= -c2 * dg0 {
                    return LineOutcome::Wolfe(t);
                }
                if t.dg >= T::zero() {
                    hi = Some((lo_a, lo_f, lo_dg));
                    lo_a = a;
                    lo_f = t.f;
                    lo_dg = t.dg;
                    break;
                }
                let (prev_a, prev_f, prev_dg) = (lo_a, lo_f, lo_dg);
                lo_a = a;
                lo_f = t.f;
                lo_dg = t.dg;
                let next = a * T::of(4.0);
                a = match cubic_min(prev_a, prev_f, prev_dg, a, t.f, t.dg) {
                    Some(v) if v > a * T::of(1.1) && v < next => v,
                    _ => next,
                };
            }
        }
    }

    // Zoom phase.
    if let Some((mut hi_a, mut hi_f, mut hi_dg)) = hi {
        while used < cfg.max_line_evals && !c.exhausted() {
            let width = hi_a - lo_a;
            if width.abs() <= T::epsilon() * lo_a.abs().max(T::one()) * T::of(10.0) {
                break;
            }
            let (left, right) = (lo_a + T::of(0.1) * width, hi_a - T::of(0.1) * width);
            let (lmin, lmax) = (left.min(right), left.max(right));
            let mid = lo_a + T::of(0.5) * width;
            let aj = if hi_f.is_finite() {
                match cubic_min(lo_a, lo_f, lo_dg, hi_a, hi_f, hi_dg) {
                    Some(v) if v >= lmin && v <= lmax => v,
                    _ => mid,
                }
            } else {
                mid
            };
            used += 1;
            match probe(c, aj, &mut errors) {
                None => {
                    hi_a = aj;
                    hi_f = T::infinity();
                    hi_dg = T::zero();
                }
                Some(t) => {
                    note_best(&t, &mut best);
                    if t.f > f0 + c1 * aj * dg0 || t.f >= lo_f {
                        hi_a = aj;
                        hi_f = t.f;
                        hi_dg = t.dg;
                    } else {
                        if t.dg.abs() <= -c2 * dg0 {
                            return LineOutcome::Wolfe(t);
                        }
                        if t.dg * (hi_a - lo_a) >= T::zero() {
                            hi_a = lo_a;
                            hi_f = lo_f;
                            hi_dg = lo_dg;
                        }
                        lo_a = aj;
                        lo_f = t.f;
                        lo_dg = t.dg;
                    }
                }
            }
        }
    }
    match best {
        Some(t) => LineOutcome::Decrease(t),
        None => LineOutcome::Failed { objective_errors: errors },
    }
}

/// Two-loop recursion: `-H g` from the stored pairs `(s, y, 1/yᵀs)`.
fn direction<T: Real>(g: &[T], hist: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q: Vec<T> = g.to_vec();
    let mut alpha = vec![T::zero(); hist.len()];
    for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
        alpha[i] = *rho * dot(s, &q);
        for (qk, yk) in q.iter_mut().zip(y) {
            *qk = *qk - alpha[i] * *yk;
        }
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qk in q.iter_mut() {
            *qk = *qk * gamma;
        }
    }
    for (i, (s, y, rho)) in hist.iter().enumerate() {
        let beta = *rho * dot(y, &q);
        for (qk, sk) in q.iter_mut().zip(s) {
            *qk = *qk + (alpha[i] - beta) * *sk;
        }
    }
    q.iter().map(|&v| -v).collect()
}

/// Unconstrained local minimization from `x0`.
pub fn local_minimize<T: Real, O: Objective<T> + ?Sized>(obj: &O, x0: &[T], cfg: &LocalSearchConfig) -> Result<LocalResult<T>> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(WgsError::Shape(format!("start has {} values, objective needs {}", x0.len(), obj.dim())));
    }
    let mut c = Counter { obj, evals: 0, budget: cfg.max_evals, _t: std::marker::PhantomData };
    c.evals += 1;
    let (mut f, mut g) = obj.evaluate(x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(WgsError::Numerical("objective is not finite at the start point".into()));
    }
    let mut x = x0.to_vec();
    let mut hist: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut trace = vec![f];
    let mut decreases: VecDeque<T> = VecDeque::with_capacity(cfg.window);
    let mut iterations = 0usize;
    let eps = T::epsilon();
    let stop = loop {
        if norm_inf(&g) < T::of(cfg.grad_tol) {
            break StopReason::GradientTolerance;
        }
        if c.exhausted() {
            break StopReason::Budget;
        }
        let mut d = direction(&g, &hist);
        let mut dg0 = dot(&g, &d);
        if !(dg0 < T::zero()) {
            hist.clear();
            d = g.iter().map(|&v| -v).collect();
            dg0 = dot(&g, &d);
        }
        let step0 = if hist.is_empty() {
            let gn = dot(&g, &g).sqrt();
            T::one().min(T::one() / gn)
        } else {
            T::one()
        };
        let mut outcome = line_search(&mut c, &x, f, dg0, &d, step0, cfg);
        if matches!(outcome, LineOutcome::Failed { .. }) && !hist.is_empty() && !c.exhausted() {
            // Retry along steepest descent with a fresh memory.
            hist.clear();
            d = g.iter().map(|&v| -v).collect();
            dg0 = dot(&g, &d);
            let gn = dot(&g, &g).sqrt();
            outcome = line_search(&mut c, &x, f, dg0, &d, T::one().min(T::one() / gn), cfg);
        }
        let trial = match outcome {
            LineOutcome::Wolfe(t) | LineOutcome::Decrease(t) => t,
            LineOutcome::Failed { objective_errors } => {
                break if c.exhausted() {
                    StopReason::Budget
                } else if objective_errors > 0 {
                    StopReason::ObjectiveFailed
                } else {
                    StopReason::LineSearchFailed
                };
            }
        };
        let s: Vec<T> = trial.x.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = trial.g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > eps * dot(&y, &y) {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, T::one() / sy));
        }
        let decrease = f - trial.f;
        x = trial.x;
        f = trial.f;
        g = trial.g;
        iterations += 1;
        trace.push(f);
        if decreases.len() == cfg.window {
            decreases.pop_front();
        }
        decreases.push_back(decrease);
        if decreases.len() == cfg.window {
            let mean = decreases.iter().fold(T::zero(), |a, &b| a + b) / T::of(cfg.window as f64);
            if mean < T::of(cfg.progress_factor) * eps * f.abs() {
                break StopReason::Progress;
            }
        }
    };
    Ok(LocalResult { grad_inf: norm_inf(&g), x, energy: f, evals: c.evals, iterations, stop, trace })
}
