//! Generic numerical routines: L-BFGS with Wolfe line search, projected
//! gradient ascent, and Euclidean projection onto `{u >= 0, sum(u) <= sigma}`.

use crate::error::{Error, Result};

/// Configuration for [`lbfgs_minimize`].
#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    /// Number of (s, y) correction pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Sufficient-decrease constant of the Wolfe conditions.
    pub wolfe_c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub wolfe_c2: f64,
    pub max_iters: usize,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change drops below this.
    pub rel_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_iters: 100,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
        }
    }
}

impl LbfgsConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("L-BFGS memory must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStatus {
    /// Gradient infinity norm reached `grad_tol`.
    GradConverged,
    /// Relative objective change dropped below `rel_tol`.
    RelConverged,
    MaxIters,
    /// Wolfe line search exhausted its bisection budget; the caller may
    /// restart from the returned point.
    LineSearchFailed,
}

/// One accepted L-BFGS iterate, for tracing.
#[derive(Clone, Copy, Debug)]
pub struct LbfgsIterate {
    pub value: f64,
    /// Index into the stream of objective evaluations that produced this iterate.
    pub eval_index: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: LbfgsStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// Accepted iterates in order; empty when converged at `x0`.
    pub history: Vec<LbfgsIterate>,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `objective` starting from `x0`.
///
/// `objective(x, grad)` fills `grad` and returns the value. Accepted values
/// are monotone non-increasing; a NaN gradient at an accepted point is an
/// error, while non-finite trial values during the line search just shrink
/// the step.
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    config.validate()?;
    let n = x0.len();
    let started = std::time::Instant::now();
    let mut evaluations = 0usize;

    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = objective(&x, &mut grad);
    evaluations += 1;
    if !value.is_finite() {
        return Err(Error::Numerical("objective not finite at starting point".into()));
    }
    check_grad(&grad)?;

    let mut history: Vec<LbfgsIterate> = Vec::new();
    // (s, y, rho) pairs, oldest first.
    let mut pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        std::collections::VecDeque::with_capacity(config.memory);

    let done = |x: Vec<f64>, value, status, iterations, evaluations, history| {
        Ok(LbfgsResult {
            x,
            value,
            status,
            iterations,
            evaluations,
            history,
        })
    };

    if norm_inf(&grad) <= config.grad_tol {
        return done(x, value, LbfgsStatus::GradConverged, 0, evaluations, history);
    }

    for iter in 1..=config.max_iters {
        let mut direction = two_loop_direction(&grad, &pairs);
        let mut descent = dot(&direction, &grad);
        if !(descent < 0.0) || !descent.is_finite() {
            // Curvature history unusable; restart from steepest descent.
            pairs.clear();
            direction = grad.iter().map(|g| -g).collect();
            descent = dot(&direction, &grad);
            if descent == 0.0 {
                return done(x, value, LbfgsStatus::GradConverged, iter - 1, evaluations, history);
            }
        }

        let initial_step = if pairs.is_empty() {
            // Before curvature information exists, scale the first step to
            // unit displacement.
            (1.0 / norm_inf(&direction)).min(1.0)
        } else {
            1.0
        };

        let ls = wolfe_line_search(
            &mut objective,
            &x,
            value,
            &grad,
            &direction,
            descent,
            initial_step,
            config,
            &mut evaluations,
        )?;
        let (step, new_value, new_grad) = match ls {
            Some(found) => found,
            None => {
                return done(
                    x,
                    value,
                    LbfgsStatus::LineSearchFailed,
                    iter,
                    evaluations,
                    history,
                )
            }
        };

        let s: Vec<f64> = direction.iter().map(|d| d * step).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(ng, g)| ng - g).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm_inf(&s) * norm_inf(&y) {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, sy.recip()));
        }

        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let prev_value = value;
        value = new_value;
        grad = new_grad;
        check_grad(&grad)?;
        history.push(LbfgsIterate {
            value,
            eval_index: evaluations - 1,
            seconds: started.elapsed().as_secs_f64(),
        });

        if norm_inf(&grad) <= config.grad_tol {
            return done(x, value, LbfgsStatus::GradConverged, iter, evaluations, history);
        }
        if (prev_value - value).abs() <= config.rel_tol * prev_value.abs().max(1.0) {
            return done(x, value, LbfgsStatus::RelConverged, iter, evaluations, history);
        }
    }

    let iters = config.max_iters;
    done(x, value, LbfgsStatus::MaxIters, iters, evaluations, history)
}

fn check_grad(grad: &[f64]) -> Result<()> {
    if grad.iter().any(|g| g.is_nan()) {
        return Err(Error::Numerical("NaN gradient".into()));
    }
    Ok(())
}

/// Two-loop recursion returning the search direction `-H grad`.
fn two_loop_direction(
    grad: &[f64],
    pairs: &std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), alpha) in pairs.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Strong Wolfe line search (bracket + zoom). Returns `(step, value, grad)`
/// or `None` when the bisection budget runs out.
#[allow(clippy::too_many_arguments)]
fn wolfe_line_search<F>(
    objective: &mut F,
    x: &[f64],
    value0: f64,
    _grad0: &[f64],
    direction: &[f64],
    descent0: f64,
    initial_step: f64,
    config: &LbfgsConfig,
    evaluations: &mut usize,
) -> Result<Option<(f64, f64, Vec<f64>)>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let c1 = config.wolfe_c1;
    let c2 = config.wolfe_c2;
    let mut trial = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut eval = |step: f64, trial: &mut Vec<f64>, grad: &mut Vec<f64>, evals: &mut usize| {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(direction) {
            *t = xi + step * di;
        }
        *evals += 1;
        objective(trial, grad)
    };

    let max_expand = 20;
    let max_zoom = 40;

    let mut step_prev = 0.0;
    let mut value_prev = value0;
    let mut step = initial_step;
    let mut bracket = None;

    for i in 0..max_expand {
        let v = eval(step, &mut trial, &mut grad, evaluations);
        if !v.is_finite() || v > value0 + c1 * step * descent0 || (i > 0 && v >= value_prev) {
            bracket = Some((step_prev, value_prev, step));
            break;
        }
        let d = dot(&grad, direction);
        if d.abs() <= -c2 * descent0 {
            check_grad(&grad)?;
            return Ok(Some((step, v, grad)));
        }
        if d >= 0.0 {
            bracket = Some((step, v, step_prev));
            break;
        }
        step_prev = step;
        value_prev = v;
        step *= 2.0;
    }

    let (mut lo, mut value_lo, mut hi) = match bracket {
        Some(b) => b,
        None => return Ok(None),
    };

    for _ in 0..max_zoom {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid, &mut trial, &mut grad, evaluations);
        if !v.is_finite() || v > value0 + c1 * mid * descent0 || v >= value_lo {
            hi = mid;
        } else {
            let d = dot(&grad, direction);
            if d.abs() <= -c2 * descent0 {
                check_grad(&grad)?;
                return Ok(Some((mid, v, grad)));
            }
            if d * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = mid;
            value_lo = v;
        }
        if (hi - lo).abs() <= 1e-16 * lo.abs().max(1.0) {
            break;
        }
    }

    // Fall back to the best sufficient-decrease point seen, if any.
    if value_lo < value0 && lo > 0.0 {
        let v = eval(lo, &mut trial, &mut grad, evaluations);
        if v.is_finite() && v < value0 {
            check_grad(&grad)?;
            return Ok(Some((lo, v, grad)));
        }
    }
    Ok(None)
}

/// Euclidean projection of `v` onto `{u : u >= 0, sum(u) <= sigma}`.
///
/// When clipping the negatives already satisfies the budget the clip is the
/// projection; otherwise the result lies on the face `sum(u) = sigma` and is
/// found by the sorted-threshold rule.
pub fn simplex_project(v: &[f64], sigma: f64) -> Vec<f64> {
    debug_assert!(sigma > 0.0);
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    // The slack keeps the projection idempotent: re-projecting a point whose
    // sum sits within rounding error of sigma returns it unchanged.
    if total <= sigma + 1e-12 * sigma.max(1.0) {
        return clipped;
    }

    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (k, &val) in sorted.iter().enumerate() {
        cumsum += val;
        let candidate = (cumsum - sigma) / (k + 1) as f64;
        if val - candidate > 0.0 {
            threshold = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

/// Configuration for [`projected_gradient_ascent`].
#[derive(Clone, Debug)]
pub struct ProjGradConfig {
    pub max_iters: usize,
    /// Stop when `|| project(x + g) - x ||_inf` drops below this.
    pub tol: f64,
    /// Backtracking halvings per iteration, starting from step 1.0.
    pub max_halvings: usize,
}

impl Default for ProjGradConfig {
    fn default() -> Self {
        ProjGradConfig {
            max_iters: 500,
            tol: 1e-6,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjGradStatus {
    Converged,
    MaxIters,
    /// No trial step produced sufficient ascent.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct ProjGradResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: ProjGradStatus,
    pub iterations: usize,
}

/// Maximize a concave `objective` over the feasible set encoded by `project`.
///
/// `objective(x, grad)` fills the gradient and returns the value. Every
/// iterate is feasible and accepted values are non-decreasing (Armijo
/// backtracking along the projection arc).
pub fn projected_gradient_ascent<F, P>(
    mut objective: F,
    project: P,
    x0: &[f64],
    config: &ProjGradConfig,
) -> Result<ProjGradResult>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&[f64]) -> Vec<f64>,
{
    if config.tol <= 0.0 {
        return Err(Error::Config("projected gradient tolerance must be positive".into()));
    }
    let n = x0.len();
    let mut x = project(x0);
    let mut grad = vec![0.0; n];
    let mut value = objective(&x, &mut grad);
    if value.is_nan() {
        return Err(Error::Numerical("NaN objective in projected gradient".into()));
    }

    for iter in 0..config.max_iters {
        let full: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + gi).collect();
        let projected = project(&full);
        let residual = projected
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (p, xi)| m.max((p - xi).abs()));
        if residual <= config.tol {
            return Ok(ProjGradResult {
                x,
                value,
                status: ProjGradStatus::Converged,
                iterations: iter,
            });
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut trial_grad = vec![0.0; n];
        for _ in 0..=config.max_halvings {
            let arc: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + step * gi).collect();
            let trial = project(&arc);
            let displacement: f64 = trial
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (t, xi)| m.max((t - xi).abs()));
            if displacement == 0.0 {
                step *= 0.5;
                continue;
            }
            let ascent: f64 = grad
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(g, (t, xi))| g * (t - xi))
                .sum();
            let trial_value = objective(&trial, &mut trial_grad);
            if trial_value.is_nan() {
                return Err(Error::Numerical("NaN objective in projected gradient".into()));
            }
            if trial_value >= value + 1e-4 * ascent {
                x = trial;
                value = trial_value;
                std::mem::swap(&mut grad, &mut trial_grad);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(ProjGradResult {
                x,
                value,
                status: ProjGradStatus::Stalled,
                iterations: iter,
            });
        }
    }

    Ok(ProjGradResult {
        x,
        value,
        status: ProjGradStatus::MaxIters,
        iterations: config.max_iters,
    })
}
