//! Box-constrained minimization of the weighted Groove sum.
//!
//! Projected L-BFGS: search directions come from the two-loop recursion
//! restricted to the free variables, every trial point is clamped into the
//! joint box, and a backtracking Armijo search accepts only decreasing
//! steps. When curvature information is unusable the step falls back to
//! projected steepest descent.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlacedShape;
use crate::history::MotionHistory;
use crate::kinematics::{JointConfig, RobotModel};
use crate::objectives::{evaluate_term, groove, groove_derivative, EvalContext, Evaluated, ObjectiveTerm, TermKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub max_steps: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            c1: 1e-4,
            shrink: 0.5,
            max_steps: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollisionGradient {
    /// Witness-point gradient from the GJK query.
    #[default]
    Analytic,
    /// Central differences with `fd_step`.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Wall-clock cap per solve; `None` makes solves depend on iterations only.
    pub max_ms: Option<f64>,
    pub fd_step: f64,
    pub line_search: LineSearchConfig,
    /// L-BFGS memory depth.
    pub memory: usize,
    /// Projected-gradient infinity norm below which a solve has converged.
    pub grad_tol: f64,
    /// Largest joint change of the first trial step (rad).
    pub max_step: f64,
    pub collision_gradient: CollisionGradient,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            max_ms: Some(8.0),
            fd_step: 1e-6,
            line_search: LineSearchConfig::default(),
            memory: 6,
            grad_tol: 1e-7,
            max_step: 0.25,
            collision_gradient: CollisionGradient::Analytic,
        }
    }
}

impl SolverConfig {
    /// Same settings with the wall-clock cap removed.
    pub fn deterministic(mut self) -> Self {
        self.max_ms = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("solver max_iters must be positive"));
        }
        if matches!(self.max_ms, Some(ms) if !(ms > 0.0)) {
            return Err(Error::invalid("solver max_ms must be positive"));
        }
        if !(self.fd_step > 0.0) || !(self.line_search.shrink > 0.0 && self.line_search.shrink < 1.0) {
            return Err(Error::invalid(
                "solver fd_step must be > 0 and line-search shrink in (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRequest {
    /// Previous tick's solution; clamped into the joint box on ingest.
    pub seed: JointConfig,
    pub terms: Vec<ObjectiveTerm>,
    pub history: MotionHistory,
    pub environment: Vec<PlacedShape>,
    /// Control tick (s).
    pub dt: f64,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub q_star: JointConfig,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_collision: bool,
    pub diagnostic: Option<String>,
}

/// Aggregate objective with per-evaluation flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub in_collision: bool,
}

impl ObjectiveEval {
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

fn context<'a>(model: &'a RobotModel, req: &'a SolveRequest) -> EvalContext<'a> {
    EvalContext {
        model,
        history: &req.history,
        environment: &req.environment,
        dt: req.dt,
    }
}

fn is_collision(kind: &TermKind) -> bool {
    matches!(kind, TermKind::SelfCollision { .. } | TermKind::EnvCollision { .. })
}

fn evaluate(model: &RobotModel, req: &SolveRequest, q: &[f64]) -> ObjectiveEval {
    let ctx = context(model, req);
    let eval = Evaluated::new(model, q);
    let n = q.len();
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    let mut in_collision = false;
    for term in &req.terms {
        if term.weight == 0.0 {
            continue;
        }
        let mut raw = evaluate_term(&term.kind, &ctx, &eval);
        if is_collision(&term.kind) && req.config.collision_gradient == CollisionGradient::FiniteDifference {
            raw.gradient = central_difference(q, req.config.fd_step, |x| {
                let e = Evaluated::new(model, x);
                evaluate_term(&term.kind, &ctx, &e).value
            });
        }
        in_collision |= raw.in_collision;
        value += term.weight * groove(raw.value, &term.groove);
        let slope = term.weight * groove_derivative(raw.value, &term.groove);
        for (g, d) in gradient.iter_mut().zip(&raw.gradient) {
            *g += slope * d;
        }
    }
    ObjectiveEval {
        value,
        gradient,
        in_collision,
    }
}

pub(crate) fn central_difference(q: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = q.to_vec();
    (0..q.len())
        .map(|i| {
            x[i] = q[i] + h;
            let up = f(&x);
            x[i] = q[i] - h;
            let down = f(&x);
            x[i] = q[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `sum_i w_i groove(chi_i(q))` and its gradient.
pub fn objective_and_gradient(model: &RobotModel, q: &JointConfig, req: &SolveRequest) -> Result<(f64, Vec<f64>)> {
    check_request(model, req)?;
    if q.len() != model.dof() {
        return Err(Error::Dimension {
            expected: model.dof(),
            got: q.len(),
        });
    }
    let e = evaluate(model, req, q.as_slice());
    Ok((e.value, e.gradient))
}

fn check_request(model: &RobotModel, req: &SolveRequest) -> Result<()> {
    if req.terms.is_empty() {
        return Err(Error::invalid("solve request has no objective terms"));
    }
    if req.seed.len() != model.dof() {
        return Err(Error::Dimension {
            expected: model.dof(),
            got: req.seed.len(),
        });
    }
    if !req.seed.is_finite() {
        return Err(Error::invalid("seed configuration is not finite"));
    }
    if !(req.dt > 0.0) {
        return Err(Error::invalid("control tick dt must be positive"));
    }
    for t in &req.terms {
        t.validate()?;
    }
    req.config.validate()
}

fn clamp_into(model: &RobotModel, x: &mut [f64]) {
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(model.lower_limits[i], model.upper_limits[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Variables pinned at a bound with the gradient pushing outward.
fn active_set(model: &RobotModel, x: &[f64], g: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= model.lower_limits[i] && g[i] > 0.0) || (x[i] >= model.upper_limits[i] && g[i] < 0.0))
        .collect()
}

struct Curvature {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    depth: usize,
}

impl Curvature {
    fn new(depth: usize) -> Self {
        Curvature {
            pairs: VecDeque::with_capacity(depth),
            depth,
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt()) || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.depth {
            self.pairs.pop_back();
        }
        self.pairs.push_front((s, y, 1.0 / sy));
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// `-H g` over the free variables.
    fn direction(&self, g: &[f64], free: &[bool]) -> Option<Vec<f64>> {
        let (s0, y0, _) = self.pairs.front()?;
        let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect() };
        let mut q = mask(g);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in &self.pairs {
            let a = rho * dot(&mask(s), &q);
            for (qi, yi) in q.iter_mut().zip(&mask(y)) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s0, y0) / dot(y0, y0);
        if !(gamma > 0.0) || !gamma.is_finite() {
            return None;
        }
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for ((s, y, rho), a) in self.pairs.iter().rev().zip(alphas.iter().rev()) {
            let b = rho * dot(&mask(y), &r);
            for (ri, si) in r.iter_mut().zip(&mask(s)) {
                *ri += (a - b) * si;
            }
        }
        Some(mask(&r).into_iter().map(|v| -v).collect())
    }
}

/// Solves one tick's problem starting from `req.seed`.
pub fn solve(model: &RobotModel, req: &SolveRequest) -> Result<SolveResult> {
    check_request(model, req)?;
    let cfg = &req.config;
    let started = Instant::now();
    let mut x = req.seed.0.clone();
    clamp_into(model, &mut x);

    let mut current = evaluate(model, req, &x);
    if !current.is_finite() {
        let msg = "non-finite objective at the seed; holding the seed".to_string();
        tracing::warn!("{msg}");
        return Ok(SolveResult {
            q_star: JointConfig(x),
            objective_value: current.value,
            iterations: 0,
            converged: false,
            in_collision: current.in_collision,
            diagnostic: Some(msg),
        });
    }

    let mut memory = Curvature::new(cfg.memory.max(1));
    let mut iterations = 0;
    let mut converged = false;
    let mut diagnostic = None;

    while iterations < cfg.max_iters {
        if let Some(ms) = cfg.max_ms {
            if started.elapsed().as_secs_f64() * 1e3 >= ms {
                break;
            }
        }
        let g = &current.gradient;
        let projected: Vec<f64> = (0..x.len())
            .map(|i| x[i] - (x[i] - g[i]).clamp(model.lower_limits[i], model.upper_limits[i]))
            .collect();
        if inf_norm(&projected) <= cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let free: Vec<bool> = active_set(model, &x, g).into_iter().map(|a| !a).collect();
        let steepest = || -> Vec<f64> {
            let masked: Vec<f64> = g.iter().zip(&free).map(|(v, f)| if *f { -v } else { 0.0 }).collect();
            let norm = inf_norm(&masked);
            let scale = if norm > 0.0 {
                (cfg.max_step / norm).min(1.0)
            } else {
                1.0
            };
            masked.into_iter().map(|v| v * scale).collect()
        };

        let mut used_memory = true;
        let mut dir = match memory.direction(g, &free) {
            Some(d) if dot(&d, g) < 0.0 => d,
            _ => {
                used_memory = false;
                steepest()
            }
        };

        let mut accepted = None;
        for _attempt in 0..2 {
            accepted = line_search(model, req, &x, &current, &dir);
            if accepted.is_some() || !used_memory {
                break;
            }
            memory.clear();
            used_memory = false;
            dir = steepest();
        }

        let Some((x_new, next)) = accepted else {
            // No decrease along the descent direction: at a (numerical)
            // stationary point for this box.
            converged = inf_norm(&projected) <= 1e3 * cfg.grad_tol.max(1e-12) * (1.0 + current.value.abs());
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next
            .gradient
            .iter()
            .zip(&current.gradient)
            .map(|(a, b)| a - b)
            .collect();
        memory.push(s, y);
        let decrease = current.value - next.value;
        x = x_new;
        current = next;
        if decrease <= 1e-15 * (1.0 + current.value.abs()) {
            converged = true;
            break;
        }
    }

    if !current.is_finite() {
        diagnostic = Some("non-finite objective during solve".to_string());
    }

    Ok(SolveResult {
        q_star: JointConfig(x),
        objective_value: current.value,
        iterations,
        converged,
        in_collision: current.in_collision,
        diagnostic,
    })
}

fn line_search(
    model: &RobotModel,
    req: &SolveRequest,
    x: &[f64],
    current: &ObjectiveEval,
    dir: &[f64],
) -> Option<(Vec<f64>, ObjectiveEval)> {
    let ls = &req.config.line_search;
    let mut alpha = 1.0;
    for _ in 0..ls.max_steps {
        let mut trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        clamp_into(model, &mut trial);
        let step: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
        if inf_norm(&step) < 1e-15 {
            return None;
        }
        let eval = evaluate(model, req, &trial);
        if eval.is_finite()
            && eval.value <= current.value + ls.c1 * dot(&current.gradient, &step)
            && eval.value < current.value
        {
            return Some((trial, eval));
        }
        alpha *= ls.shrink;
    }
    None
}
