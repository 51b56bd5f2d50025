//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! After a step satisfying the strong Wolfe conditions is found, one
//! extra interpolated trial is made when |φ'(α)| is still large relative
//! to |φ'(0)|; it is kept only if it also satisfies the conditions and
//! lowers φ. On a quadratic this trial is the exact line minimizer, which
//! restores the finite termination of quasi-Newton methods.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XcError};

/// A differentiable objective.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Value and gradient at `x`.
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_tolerance: f64,
    pub max_line_search: usize,
    /// Refine accepted steps with |φ'(α)| > refine·|φ'(0)|; 1 disables.
    pub refine: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            relative_tolerance: 1e-12,
            max_line_search: 30,
            refine: 0.1,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(XcError::validation("memory", "must be at least 1"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(XcError::validation("c1/c2", "need 0 < c1 < c2 < 1"));
        }
        if !(self.refine > 0.0) {
            return Err(XcError::validation("refine", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    /// Objective at the start and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

struct Search<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
}

impl<O: Objective> Search<'_, O> {
    fn at(&mut self, alpha: f64) -> Option<Point> {
        self.evals += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        match self.obj.eval(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let d = dot(&g, self.dir);
                Some(Point { alpha, f, d, g })
            }
            _ => None,
        }
    }

    fn armijo(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.opts.c1 * p.alpha * self.d0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.d.abs() <= self.opts.c2 * self.d0.abs()
    }

    fn budget(&self) -> bool {
        self.evals < self.opts.max_line_search
    }

    /// Strong-Wolfe search starting at `alpha`.
    fn run(&mut self, mut alpha: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            f: self.f0,
            d: self.d0,
            g: vec![],
        };
        let mut first = true;
        while self.budget() {
            let Some(p) = self.at(alpha) else {
                alpha *= 0.5;
                continue;
            };
            if !self.armijo(&p) || (!first && p.f >= prev.f) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(self.refine(p));
            }
            if p.d >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            alpha = (2.0 * p.alpha).max(cubic_min(&prev, &p).unwrap_or(0.0).min(10.0 * p.alpha));
            prev = p;
        }
        None
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.budget() {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
            if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
                alpha = 0.5 * (a + b);
            }
            if width <= f64::EPSILON * b.max(1.0) {
                return None;
            }
            let Some(p) = self.at(alpha) else {
                hi = Point {
                    alpha,
                    f: f64::INFINITY,
                    d: f64::INFINITY,
                    g: vec![],
                };
                continue;
            };
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Some(self.refine(p));
                }
                if p.d * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        None
    }

    fn refine(&mut self, p: Point) -> Point {
        if p.d.abs() <= self.opts.refine * self.d0.abs() || !self.budget() {
            return p;
        }
        let zero = Point {
            alpha: 0.0,
            f: self.f0,
            d: self.d0,
            g: vec![],
        };
        let Some(alpha) = cubic_min(&zero, &p) else {
            return p;
        };
        if !(alpha > 0.0) || (alpha - p.alpha).abs() <= 1e-12 * p.alpha {
            return p;
        }
        match self.at(alpha) {
            Some(q) if self.armijo(&q) && self.curvature(&q) && q.f <= p.f => q,
            _ => p,
        }
    }
}

/// Minimizer of the cubic Hermite interpolant through two points, if it
/// exists; reduces to the exact minimizer for quadratic data.
fn cubic_min(a: &Point, b: &Point) -> Option<f64> {
    if !(a.f.is_finite() && b.f.is_finite() && a.d.is_finite() && b.d.is_finite()) {
        return None;
    }
    let h = b.alpha - a.alpha;
    if h == 0.0 {
        return None;
    }
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = h.signum() * disc.sqrt();
    let denom = b.d - a.d + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - h * (b.d + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Minimizes `obj` from `x0`. Line-search failure ends the run with the
/// best point found and `converged = false`.
pub fn minimize<O: Objective>(obj: &mut O, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsReport> {
    opts.validate()?;
    if x0.len() != obj.dim() {
        return Err(XcError::validation("x0", format!("length {} but objective has {}", x0.len(), obj.dim())));
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.eval(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(XcError::Eval {
            path: "objective".into(),
            message: "non-finite value or gradient at the initial point".into(),
        });
    }
    let mut evaluations = 1;
    let mut history = vec![f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let finish = |x, f, g: &[f64], history, iterations, evaluations, reason| LbfgsReport {
        x,
        f,
        history,
        iterations,
        evaluations,
        gradient_norm: norm(g),
        converged: matches!(reason, StopReason::GradientTolerance | StopReason::RelativeChange),
        reason,
    };
    loop {
        if norm(&g) < opts.gradient_tolerance || f == 0.0 {
            return Ok(finish(x, f, &g, history, iterations, evaluations, StopReason::GradientTolerance));
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(x, f, &g, history, iterations, evaluations, StopReason::MaxIterations));
        }
        let mut dir = two_loop(&g, &mem);
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &dir);
        }
        let alpha0 = if mem.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut search = Search {
            obj,
            x: &x,
            dir: &dir,
            f0: f,
            d0,
            opts,
            evals: 0,
        };
        let found = search.run(alpha0);
        evaluations += search.evals;
        let Some(p) = found else {
            log::debug!("line search failed at iteration {iterations}: f {f:e}, |g| {:e}, d0 {d0:e}", norm(&g));
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            return Ok(finish(x, f, &g, history, iterations, evaluations, StopReason::LineSearchFailed));
        };
        let s: Vec<f64> = dir.iter().map(|d| p.alpha * d).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let f_old = f;
        f = p.f;
        g = p.g;
        iterations += 1;
        history.push(f);
        log::debug!("iteration {iterations}: f {f:e}, |g| {:e}, step {:e}", norm(&g), p.alpha);
        if sy > f64::EPSILON * norm(&s) * norm(&y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        if (f_old - f).abs() <= opts.relative_tolerance * f_old.abs().max(f.abs()) {
            let reason = if norm(&g) < opts.gradient_tolerance {
                StopReason::GradientTolerance
            } else {
                StopReason::RelativeChange
            };
            return Ok(finish(x, f, &g, history, iterations, evaluations, reason));
        }
    }
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, cond: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for u in &q {
                let d = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let nv = norm(&v);
            q.push(v.into_iter().map(|a| a / nv).collect());
        }
        let eig: Vec<f64> = (0..n).map(|i| cond.powf(i as f64 / (n - 1) as f64)).collect();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| q[k][i] * eig[k] * q[k][j]).sum()).collect())
            .collect()
    }

    fn quadratic(a: Vec<Vec<f64>>) -> impl Objective {
        let n = a.len();
        FnObjective::new(n, move |x: &[f64]| {
            let g: Vec<f64> = a.iter().map(|r| r.iter().zip(x).map(|(a, x)| a * (x - 1.0)).sum()).collect();
            let f = 0.5 * g.iter().zip(x).map(|(g, x)| g * (x - 1.0)).sum::<f64>();
            Ok((f, g))
        })
    }

    #[test]
    fn quadratics_terminate_within_dimension_plus_five() {
        for (n, cond) in [(4, 10.0), (8, 10.0), (8, 100.0), (10, 1000.0)] {
            let mut q = quadratic(spd(n, cond, n as u64));
            let r = minimize(&mut q, &vec![0.0; n], &LbfgsOptions::default()).unwrap();
            assert!(r.converged, "{r:?}");
            assert!(r.iterations <= n + 5, "n {n} cond {cond}: {} iterations", r.iterations);
            assert!(r.x.iter().all(|v| (v - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let mut obj = FnObjective::new(2, |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        });
        let r = minimize(&mut obj, &[-1.2, 1.0], &LbfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nan_region_is_avoided_by_backtracking() {
        let mut obj = FnObjective::new(1, |x: &[f64]| {
            if x[0] > 1.5 {
                return Ok((f64::NAN, vec![f64::NAN]));
            }
            Ok(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]))
        });
        let r = minimize(&mut obj, &[-3.0], &LbfgsOptions::default()).unwrap();
        assert!(r.converged && (r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn failing_line_search_returns_best_point() {
        // Gradient that lies: never a descent direction that decreases f.
        let mut obj = FnObjective::new(1, |x: &[f64]| Ok((x[0] * x[0], vec![-1.0])));
        let r = minimize(&mut obj, &[0.5], &LbfgsOptions::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.reason, StopReason::LineSearchFailed);
        assert_eq!(r.x, vec![0.5]);
    }
}
