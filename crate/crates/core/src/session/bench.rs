//! Solver latency benchmark over a seeded set of representative requests.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::geometry::Vec3;
use crate::history::MotionHistory;
use crate::kinematics::JointConfig;
use crate::objectives::{TermKind, COLLISION_EPSILON};
use crate::optimizer::{solve, SolveRequest};
use crate::perception::{body_wrappers, synthetic_t_pose, BodyFrame};
use crate::session::files::{Scene, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub iters: usize,
    pub seed: u64,
    /// Soft per-tick budget (ms).
    pub budget_ms: f64,
    /// Hard gate (ms).
    pub gate_ms: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            iters: 1000,
            seed: 7,
            budget_ms: 10.0,
            gate_ms: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub iters: usize,
    pub seed: u64,
    pub dof: usize,
    pub terms: usize,
    pub shapes: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub mean_solver_iterations: f64,
    pub budget_ms: f64,
    pub gate_ms: f64,
    pub within_budget: bool,
    pub pass: bool,
    /// Hash of the generated request set; equal seeds give equal hashes.
    pub request_hash: String,
}

/// Tracking-like requests around the reset pose with the full term set, the
/// static scene and a worker body next to the table.
pub fn bench_requests(scene: &Scene, config: &SessionConfig, n: usize, seed: u64) -> Result<Vec<SolveRequest>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = &scene.model;
    let dt = config.dt();
    let body = BodyFrame::new(synthetic_t_pose(Vec3::new(1.25, 0.0, 0.0)), 0.0)?;
    let mut environment = scene.shapes();
    environment.extend(body_wrappers(&body, &config.body_wrappers));
    let cfg = &config.objectives;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let q = model.clamp(&JointConfig(
            scene
                .reset_config
                .0
                .iter()
                .map(|a| a + rng.gen_range(-0.3..0.3))
                .collect(),
        ));
        let mut history = MotionHistory::new();
        let drift: Vec<f64> = (0..q.len()).map(|_| rng.gen_range(-0.01..0.01)).collect();
        for k in (0..4).rev() {
            let qk = model.clamp(&JointConfig(
                q.0.iter().zip(&drift).map(|(a, d)| a - d * k as f64).collect(),
            ));
            let pose = model.forward_kinematics(&qk)?;
            history.push(-(k as f64) * dt, qk, pose)?;
        }
        let pose = model.forward_kinematics(&q)?;
        let jitter = Vec3::new(
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        );
        let target = pose.position + rng.gen_range(0.3..0.9) * pose.forward() + jitter;
        let distance = (target - pose.position).norm();
        let delta = Vec3::new(
            rng.gen_range(-0.005..0.005),
            rng.gen_range(-0.005..0.005),
            rng.gen_range(-0.005..0.005),
        );
        let mut terms = vec![
            cfg.term(TermKind::SetTarget { target }),
            cfg.term(TermKind::Adjust { delta }),
            cfg.term(TermKind::KeepDistance { target, distance }),
            cfg.term(TermKind::Upright),
            cfg.term(TermKind::EeVel),
            cfg.term(TermKind::JointLimits),
            cfg.term(TermKind::SelfCollision {
                epsilon: COLLISION_EPSILON,
            }),
            cfg.term(TermKind::EnvCollision {
                epsilon: COLLISION_EPSILON,
            }),
        ];
        for order in 1..=3 {
            terms.push(cfg.term(TermKind::JointSmoothness { order }));
        }
        out.push(SolveRequest {
            seed: q,
            terms,
            history,
            environment: environment.clone(),
            dt,
            config: config.solver.deterministic(),
        });
    }
    Ok(out)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

pub fn run_bench(scene: &Scene, config: &SessionConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let requests = bench_requests(scene, config, opts.iters, opts.seed)?;
    let mut hasher = Sha256::new();
    for r in &requests {
        hasher.update(format!("{:?}|{:?}\n", r.seed, r.terms).as_bytes());
    }
    let mut times = Vec::with_capacity(requests.len());
    let mut iterations = 0usize;
    for req in &requests {
        let start = Instant::now();
        let res = solve(&scene.model, req)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        iterations += res.iterations;
    }
    let mean_ms = times.iter().sum::<f64>() / times.len().max(1) as f64;
    times.sort_by(f64::total_cmp);
    let p95_ms = percentile(&times, 0.95);
    Ok(BenchReport {
        iters: requests.len(),
        seed: opts.seed,
        dof: scene.model.dof(),
        terms: requests.first().map_or(0, |r| r.terms.len()),
        shapes: requests.first().map_or(0, |r| r.environment.len()),
        p50_ms: percentile(&times, 0.5),
        p95_ms,
        max_ms: times.last().copied().unwrap_or(0.0),
        mean_ms,
        mean_solver_iterations: iterations as f64 / requests.len().max(1) as f64,
        budget_ms: opts.budget_ms,
        gate_ms: opts.gate_ms,
        within_budget: p95_ms < opts.budget_ms,
        pass: p95_ms < opts.gate_ms,
        request_hash: hex::encode(hasher.finalize()),
    })
}
