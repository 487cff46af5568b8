//! End-to-end acceptance checks. Runs as a plain binary (`harness = false`)
//! and prints one PASS/FAIL line per criterion.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sharedcam::arbitration::{AdjustKind, EventKind, Mode, Role, TargetSpec};
use sharedcam::geometry::{distance, ConvexShape, PlacedShape};
use sharedcam::history::MotionHistory;
use sharedcam::kinematics::{JointConfig, RobotModel};
use sharedcam::objectives::{
    chi_collision, chi_joint_limits, evaluate_term, term_value, CollisionMode, EvalContext, Evaluated, ObjectiveConfig,
    TermKind, COLLISION_EPSILON,
};
use sharedcam::optimizer::{objective_and_gradient, SolveRequest};
use sharedcam::perception::{
    body_wrappers, detect_pointing, synthetic_t_pose, BodyFrame, BodyWrapperConfig, LandmarkFrame,
};
use sharedcam::session::bench::{run_bench, BenchOptions};
use sharedcam::session::files::{load_scenario, ScenarioFile};
use sharedcam::session::log::{read_log, replay, run_recorded};
use sharedcam::session::{Engine, Scene, SessionConfig, StateSnapshot};

type Vec3 = Vector3<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("gradient suite", gradient_suite),
        ("joint-limit penalty constants", joint_limit_constants),
        ("collision constants and GJK oracles", collision_constants),
        ("look-at servoing", look_at_servoing),
        ("orbit conservation and upright", orbit_and_upright),
        ("point standoff", point_standoff),
        ("collision-avoidance scenario", collision_avoidance),
        ("smoothness", smoothness),
        ("arbitration conformance", arbitration_conformance),
        ("pointing detection corpus", pointing_corpus),
        ("replay determinism", replay_determinism),
        ("solver latency", solver_latency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let out = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{secs:.1} s]", out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Shared fixtures.

fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn scenario(name: &str) -> ScenarioFile {
    load_scenario(&data_path(&format!("scenarios/{name}.json"))).expect("scenario loads")
}

fn config() -> SessionConfig {
    SessionConfig::default().deterministic()
}

fn run_snapshots(file: &ScenarioFile) -> Vec<StateSnapshot> {
    let mut engine = Engine::new(Scene::reference(), config())
        .and_then(|e| e.with_scenario(file))
        .expect("engine builds");
    let ticks = file.ticks.expect("scenario has a tick count");
    (0..ticks).map(|_| engine.tick().snapshot).collect()
}

fn roll_deg(s: &StateSnapshot) -> f64 {
    s.camera.left.z.abs().min(1.0).asin().to_degrees()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(Vec3::new(
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
    ))
}

// ---------------------------------------------------------------------------

fn central_difference(f: impl Fn(&JointConfig) -> f64, q: &JointConfig, h: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus.0[i] += h;
            minus.0[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = numeric
        .iter()
        .map(|b| b * b)
        .sum::<f64>()
        .sqrt()
        .max(analytic.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// A configuration near the reset pose whose links keep clear of each other
/// and of the environment, so every distance is differentiable.
fn interior_point(rng: &mut ChaCha8Rng, model: &RobotModel, reset: &JointConfig, env: &[PlacedShape]) -> JointConfig {
    loop {
        let q = model.clamp(&JointConfig(
            reset.0.iter().map(|a| a + rng.gen_range(-0.8..0.8)).collect(),
        ));
        let chain = model.chain_state(&q).expect("dof matches");
        let links = model.placed_wrappers(&chain);
        let own = chi_collision(&links, &[], COLLISION_EPSILON, CollisionMode::SelfCollision);
        let other = chi_collision(&links, env, COLLISION_EPSILON, CollisionMode::Environment);
        if own.min_distance > 0.02 && other.min_distance > 0.02 {
            return q;
        }
    }
}

fn random_history(rng: &mut ChaCha8Rng, model: &RobotModel, q: &JointConfig, dt: f64) -> MotionHistory {
    let mut history = MotionHistory::new();
    for k in (1..=4).rev() {
        let qk = JointConfig(q.0.iter().map(|a| a + rng.gen_range(-0.05..0.05)).collect());
        let pose = model.forward_kinematics(&qk).expect("dof matches");
        history.push(-(k as f64) * dt, qk, pose).expect("increasing times");
    }
    history
}

fn gradient_suite() -> Outcome {
    let scene = Scene::reference();
    let model = &scene.model;
    let cfg = config();
    let dt = cfg.dt();
    let mut env = scene.shapes();
    let body = BodyFrame::new(synthetic_t_pose(Vec3::new(1.25, 0.0, 0.0)), 0.0).expect("t-pose");
    env.extend(body_wrappers(&body, &BodyWrapperConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let points = 100;

    let names = [
        "set_target",
        "adjust",
        "keep_distance",
        "upright",
        "joint_vel",
        "joint_acc",
        "joint_jerk",
        "ee_vel",
        "joint_limits",
        "self_collision",
        "env_collision",
        "aggregate",
    ];
    let mut worst = vec![0.0f64; names.len()];
    for _ in 0..points {
        let q = interior_point(&mut rng, model, &scene.reset_config, &env);
        let history = random_history(&mut rng, model, &q, dt);
        let pose = model.forward_kinematics(&q).expect("fk");
        let target = pose.position
            + pose.forward() * rng.gen_range(0.3..1.0)
            + Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
            );
        let delta = Vec3::new(
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
        );
        let kinds = [
            TermKind::SetTarget { target },
            TermKind::Adjust { delta },
            TermKind::KeepDistance {
                target,
                distance: rng.gen_range(0.3..0.8),
            },
            TermKind::Upright,
            TermKind::JointSmoothness { order: 1 },
            TermKind::JointSmoothness { order: 2 },
            TermKind::JointSmoothness { order: 3 },
            TermKind::EeVel,
            TermKind::JointLimits,
            TermKind::SelfCollision {
                epsilon: COLLISION_EPSILON,
            },
            TermKind::EnvCollision {
                epsilon: COLLISION_EPSILON,
            },
        ];
        let ctx = EvalContext {
            model,
            history: &history,
            environment: &env,
            dt,
        };
        for (k, kind) in kinds.iter().enumerate() {
            // The joint-limit term is flat near the reset pose; probe it over
            // the whole joint box instead.
            let at = if matches!(kind, TermKind::JointLimits) {
                JointConfig(
                    model
                        .lower_limits
                        .iter()
                        .zip(&model.upper_limits)
                        .map(|(l, u)| l + (u - l) * rng.gen_range(0.02..0.98))
                        .collect(),
                )
            } else {
                q.clone()
            };
            let eval = Evaluated::new(model, at.as_slice());
            let analytic = evaluate_term(kind, &ctx, &eval).gradient;
            let numeric = central_difference(|x| term_value(kind, &ctx, x).expect("dof"), &at, h);
            worst[k] = worst[k].max(relative_error(&analytic, &numeric));
        }
        let oc = ObjectiveConfig::default();
        let req = SolveRequest {
            seed: q.clone(),
            terms: kinds.iter().map(|k| oc.term(*k)).collect(),
            history: history.clone(),
            environment: env.clone(),
            dt,
            config: cfg.solver,
        };
        let (_, analytic) = objective_and_gradient(model, &q, &req).expect("aggregate");
        let numeric = central_difference(|x| objective_and_gradient(model, x, &req).expect("aggregate").0, &q, h);
        let last = names.len() - 1;
        worst[last] = worst[last].max(relative_error(&analytic, &numeric));
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let (arg, _) = names
        .iter()
        .zip(&worst)
        .fold(("", -1.0), |acc, (n, w)| if *w > acc.1 { (n, *w) } else { acc });
    outcome(
        max < 1e-4,
        format!("{points} points x {} terms, max rel err {max:.2e} ({arg})", names.len()),
    )
}

// ---------------------------------------------------------------------------

fn joint_limit_constants() -> Outcome {
    let model = Scene::reference().model;
    let mid = model.midpoint();
    let at_mid = chi_joint_limits(&mid, &model);
    let mut at_limit = mid.clone();
    at_limit.0[0] = model.upper_limits[0];
    let value = chi_joint_limits(&at_limit, &model);
    // Normalised offset 0.5 from the midpoint against the 0.45 knee.
    let oracle = 0.05 * (50.0 * (0.5f64 / 0.45).ln()).exp();
    let rel = (value - oracle).abs() / oracle;
    outcome(
        at_mid == 0.0 && rel < 1e-9,
        format!("midpoint {at_mid:e}, at limit {value:.6} vs {oracle:.6} (rel {rel:.1e})"),
    )
}

// ---------------------------------------------------------------------------

fn segment_distance_parallel(a: Vec3, b: Vec3, axis: Vec3, half_a: f64, half_b: f64) -> f64 {
    let d = b - a;
    let along = d.dot(&axis);
    let lateral = (d - along * axis).norm();
    let gap = (along.abs() - half_a - half_b).max(0.0);
    (lateral * lateral + gap * gap).sqrt()
}

fn collision_constants() -> Outcome {
    let a = PlacedShape::at(ConvexShape::Sphere { radius: 0.1 }, Vec3::zeros());
    let b = PlacedShape::at(ConvexShape::Sphere { radius: 0.1 }, Vec3::new(0.4, 0.0, 0.0));
    let chi = chi_collision(&[a], &[b], 0.02, CollisionMode::Environment).value;
    let const_ok = (chi - 0.25).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1000;
    let mut worst = [0.0f64; 3];
    let mut cases = 0;
    while cases < n {
        let frame = Isometry3::from_parts(
            Translation3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            random_rotation(&mut rng),
        );
        let place =
            |shape, local: Vec3| PlacedShape::new(shape, frame * Isometry3::translation(local.x, local.y, local.z));
        let offset = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );

        // Spheres.
        let (ra, rb) = (rng.gen_range(0.01..0.3), rng.gen_range(0.01..0.3));
        let oracle = offset.norm() - ra - rb;
        // Cuboids aligned with each other.
        let ea = Vec3::new(
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.01..0.3),
        );
        let eb = Vec3::new(
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.01..0.3),
            rng.gen_range(0.01..0.3),
        );
        let gap = Vec3::from_fn(|i, _| (offset[i].abs() - ea[i] - eb[i]).max(0.0));
        let box_oracle = gap.norm();
        // Capsules sharing their axis direction.
        let (ha, hb) = (rng.gen_range(0.01..0.4), rng.gen_range(0.01..0.4));
        let (ca, cb) = (rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2));
        let cap_oracle = segment_distance_parallel(Vec3::zeros(), offset, Vec3::z(), ha, hb) - ca - cb;
        if oracle < 1e-3 || box_oracle < 1e-3 || cap_oracle < 1e-3 {
            continue;
        }
        cases += 1;
        let gjk = [
            distance(
                &place(ConvexShape::Sphere { radius: ra }, Vec3::zeros()),
                &place(ConvexShape::Sphere { radius: rb }, offset),
            ),
            distance(
                &place(ConvexShape::Cuboid { half_extents: ea }, Vec3::zeros()),
                &place(ConvexShape::Cuboid { half_extents: eb }, offset),
            ),
            distance(
                &place(
                    ConvexShape::Capsule {
                        half_length: ha,
                        radius: ca,
                    },
                    Vec3::zeros(),
                ),
                &place(
                    ConvexShape::Capsule {
                        half_length: hb,
                        radius: cb,
                    },
                    offset,
                ),
            ),
        ];
        for (k, (g, o)) in gjk.iter().zip([oracle, box_oracle, cap_oracle]).enumerate() {
            worst[k] = worst[k].max((g - o).abs());
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    outcome(
        const_ok && max < 1e-6,
        format!(
            "sphere pair term {chi:.12}; {n} cases per family, max |err| sphere {:.1e}, cuboid {:.1e}, capsule {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------------------

fn look_at_servoing() -> Outcome {
    let scene = Scene::reference();
    let model = scene.model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 100;
    let budget = 200;
    let mut converged = 0;
    let mut out_of_bounds = 0;
    let mut emitted = 0;
    let mut errors = Vec::with_capacity(trials);
    for _ in 0..trials {
        // Reachable by construction: some nearby configuration looks at it.
        let q_look = model.clamp(&JointConfig(
            scene
                .reset_config
                .0
                .iter()
                .map(|a| a + rng.gen_range(-0.6..0.6))
                .collect(),
        ));
        let pose = model.forward_kinematics(&q_look).expect("fk");
        let target = pose.position + pose.forward() * rng.gen_range(0.3..1.0);
        let mut e = engine();
        e.submit(
            Role::Helper,
            EventKind::SetTarget {
                target: TargetSpec::World { point: target },
            },
        );
        let mut err = f64::INFINITY;
        for _ in 0..budget {
            let s = e.tick().snapshot;
            emitted += 1;
            if !model.within_limits(&s.q) {
                out_of_bounds += 1;
            }
            err = s.camera.forward.angle(&(target - s.camera.position)).to_degrees();
        }
        if err < 2.0 {
            converged += 1;
        }
        errors.push(err);
    }
    // Every q a scenario run emits is checked against the box too.
    for name in ["orbit", "point", "collision_approach", "tracking", "brake"] {
        for s in run_snapshots(&scenario(name)) {
            emitted += 1;
            if !model.within_limits(&s.q) {
                out_of_bounds += 1;
            }
        }
    }
    errors.sort_by(f64::total_cmp);
    outcome(
        converged >= 95 && out_of_bounds == 0,
        format!(
            "{converged}/{trials} under 2 deg after {budget} control iterations (median {:.3} deg, worst {:.3} deg); {out_of_bounds} of {emitted} emitted q outside bounds",
            errors[trials / 2],
            errors[trials - 1],
        ),
    )
}

// ---------------------------------------------------------------------------

fn orbit_and_upright() -> Outcome {
    let snaps = run_snapshots(&scenario("orbit"));
    let mut orbit_ticks = 0;
    let mut worst_dist = 0.0f64;
    for s in &snaps {
        if let (Some(d), Some(t)) = (s.mode.orbit_distance, s.mode.target) {
            orbit_ticks += 1;
            worst_dist = worst_dist.max(((s.camera.position - t).norm() - d).abs());
        }
    }
    let mut worst_roll = 0.0f64;
    let mut helper_ticks = 0;
    for name in ["orbit", "point", "collision_approach"] {
        let run = if name == "orbit" {
            snaps.clone()
        } else {
            run_snapshots(&scenario(name))
        };
        for s in run.iter().filter(|s| s.mode.mode == Mode::HelperLed) {
            helper_ticks += 1;
            worst_roll = worst_roll.max(roll_deg(s));
        }
    }
    outcome(
        orbit_ticks >= 300 && worst_dist < 0.02 && worst_roll < 2.0,
        format!(
            "{orbit_ticks} orbit ticks ({:.2} s), max |dist - d| {worst_dist:.4} m; max roll {worst_roll:.3} deg over {helper_ticks} helper-led ticks",
            orbit_ticks as f64 / 60.0
        ),
    )
}

// ---------------------------------------------------------------------------

fn point_standoff() -> Outcome {
    let snaps = run_snapshots(&scenario("point"));
    let Some(approved) = snaps.iter().position(|s| s.mode.standoff.is_some()) else {
        return outcome(false, "point was never approved");
    };
    // Steady state: the last second of the run.
    let steady = &snaps[snaps.len() - 60..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in steady {
        let t = s.mode.target.expect("target kept");
        let d = (s.camera.position - t).norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    outcome(
        approved < snaps.len() - 60 && (lo - 0.40).abs() <= 0.02 && (hi - 0.40).abs() <= 0.02,
        format!(
            "approved at t = {:.2} s; steady distance in [{lo:.4}, {hi:.4}] m",
            snaps[approved].time
        ),
    )
}

// ---------------------------------------------------------------------------

fn collision_avoidance() -> Outcome {
    let file = scenario("collision_approach");
    let mut engine = Engine::new(Scene::reference(), config())
        .and_then(|e| e.with_scenario(&file))
        .expect("engine builds");
    let (summary, bytes) = run_recorded(&mut engine, file.ticks.expect("ticks"), Vec::new()).expect("run");
    let log = read_log(bytes.as_slice()).expect("log parses");
    let mut min_env = f64::INFINITY;
    let mut flagged = 0;
    for t in &log.ticks {
        let s = &t.snapshot;
        min_env = min_env.min(s.min_env_distance.unwrap_or(f64::INFINITY));
        if s.in_collision || s.diagnostics.iter().any(|d| d.code == "in_collision") {
            flagged += 1;
        }
        // Independent recomputation from the logged link and object shapes.
        for l in &s.links {
            for o in &s.objects {
                let place = |x: &sharedcam::session::engine::ShapeState| {
                    let [i, j, k, w] = x.orientation;
                    PlacedShape::new(
                        x.shape,
                        Isometry3::from_parts(
                            Translation3::from(x.position),
                            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, i, j, k)),
                        ),
                    )
                };
                min_env = min_env.min(distance(&place(l), &place(o)));
            }
        }
    }
    let start = log
        .ticks
        .first()
        .map(|t| t.snapshot.camera.position)
        .unwrap_or_default();
    let end = log.ticks.last().map(|t| t.snapshot.camera.position).unwrap_or_default();
    outcome(
        min_env > 0.0 && flagged == 0 && summary.errors == 0,
        format!(
            "{} ticks, camera moved {:.3} m, min link-obstacle distance {min_env:.4} m, {flagged} in-collision ticks",
            log.ticks.len(),
            (end - start).norm()
        ),
    )
}

// ---------------------------------------------------------------------------

fn smoothness() -> Outcome {
    let file = scenario("tracking");
    let mut e = Engine::new(Scene::reference(), config())
        .and_then(|e| e.with_scenario(&file))
        .expect("engine builds");
    let mut prev = e.initial_q().clone();
    let snaps: Vec<StateSnapshot> = (0..file.ticks.expect("ticks")).map(|_| e.tick().snapshot).collect();
    let mut worst = 0.0f64;
    let n = prev.len();
    let mut sums = vec![0.0; n];
    let mut count = 0;
    for s in &snaps {
        let delta: Vec<f64> = s.q.0.iter().zip(&prev.0).map(|(a, b)| (a - b).abs()).collect();
        worst = worst.max(delta.iter().cloned().fold(0.0, f64::max));
        for (acc, d) in sums.iter_mut().zip(&delta) {
            *acc += d;
        }
        count += 1;
        prev = s.q.clone();
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let moving = means[0] > 0.0;
    outcome(
        worst <= 0.05 && moving && means[0] < means[n - 1],
        format!(
            "{count} ticks, max per-tick delta {worst:.4} rad; mean |delta| base {:.2e} vs distal {:.2e} rad",
            means[0],
            means[n - 1]
        ),
    )
}

// ---------------------------------------------------------------------------

fn engine() -> Engine {
    Engine::new(Scene::reference(), config()).expect("engine builds")
}

fn arbitration_conformance() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // Mode exclusivity: the mode only changes on mode_select or reset, and
    // the command always belongs to the current mode.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut e = engine();
    let modes = [Mode::HelperLed, Mode::RobotLed, Mode::WorkerLed];
    let mut exclusive = true;
    for _ in 0..600 {
        let mut changes_mode = false;
        match rng.gen_range(0..10) {
            0 => {
                e.submit(
                    Role::Helper,
                    EventKind::ModeSelect {
                        mode: modes[rng.gen_range(0..3)],
                    },
                );
                changes_mode = true;
            }
            1 => e.submit(
                Role::Helper,
                EventKind::SetTarget {
                    target: TargetSpec::World {
                        point: Vec3::new(
                            rng.gen_range(0.5..0.9),
                            rng.gen_range(-0.3..0.3),
                            rng.gen_range(0.0..0.2),
                        ),
                    },
                },
            ),
            2 => e.submit(
                Role::Helper,
                EventKind::Adjust {
                    kind: [AdjustKind::Zoom, AdjustKind::Orbit, AdjustKind::Shift][rng.gen_range(0..3)],
                    magnitude: rng.gen_range(-3.0..3.0),
                    direction: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                },
            ),
            3 => {
                let goal = JointConfig(e.q().0.iter().map(|a| a + rng.gen_range(-0.1..0.1)).collect());
                e.submit(Role::Worker, EventKind::FreedriveInput { goal });
            }
            4 if rng.gen_bool(0.2) => {
                e.submit(Role::Helper, EventKind::Reset);
                changes_mode = true;
            }
            _ => {}
        }
        let before = e.state().mode;
        let snap = e.tick().snapshot;
        if snap.mode.mode != before && !changes_mode {
            exclusive = false;
        }
        let cmd_ok = match snap.command.as_str() {
            "freedrive" => snap.mode.mode == Mode::WorkerLed,
            "reset" => snap.mode.resetting,
            "solve" | "hold" => true,
            _ => false,
        };
        exclusive &= cmd_ok && !(snap.mode.braked && snap.command != "hold");
    }
    check(exclusive, "mode exclusivity");

    // Annotation freeze.
    let mut e = engine();
    e.submit(
        Role::Helper,
        EventKind::SetTarget {
            target: TargetSpec::World {
                point: Vec3::new(0.7, 0.1, 0.03),
            },
        },
    );
    for _ in 0..30 {
        e.tick();
    }
    e.submit(Role::Helper, EventKind::AnnotateBegin);
    let frozen = e.tick().snapshot;
    e.submit(
        Role::Helper,
        EventKind::Adjust {
            kind: AdjustKind::Zoom,
            magnitude: 4.0,
            direction: [1.0, 0.0],
        },
    );
    let mut still = true;
    for _ in 0..60 {
        let s = e.tick().snapshot;
        still &= s.q == frozen.q
            && s.camera.position == frozen.camera.position
            && s.camera.orientation == frozen.camera.orientation;
    }
    e.submit(Role::Helper, EventKind::AnnotateEnd);
    for _ in 0..10 {
        e.tick();
    }
    check(still && *e.q() != frozen.q, "annotation freeze");

    // Brake latching and reset recovery.
    let snaps = run_snapshots(&scenario("brake"));
    let reset_q = Scene::reference().reset_config;
    let first = snaps.iter().position(|s| s.mode.braked);
    let brake_ok = first.is_some_and(|b| {
        let latched = snaps[b..].iter().take_while(|s| s.mode.braked).collect::<Vec<_>>();
        let held = latched.iter().all(|s| s.q == snaps[b].q && s.command == "hold");
        let released = &snaps[b + latched.len()..];
        let recovered = released.first().is_some_and(|s| s.mode.resetting)
            && released.iter().any(|s| s.q == reset_q)
            && released.iter().all(|s| !s.mode.braked)
            && released.last().is_some_and(|s| s.mode.mode == Mode::HelperLed);
        latched.len() > 60 && held && recovered
    });
    check(brake_ok, "brake latching and reset recovery");

    // Pointing is gated by the helper's slider.
    let mut gated = scenario("point");
    gated.commands.clear();
    let without = run_snapshots(&gated);
    let with = run_snapshots(&scenario("point"));
    let gate_ok = without.iter().all(|s| s.mode.target.is_none())
        && without.iter().any(|s| s.mode.pointing_detected.is_some())
        && with.iter().filter(|s| s.time < 1.0).all(|s| s.mode.target.is_none())
        && with
            .last()
            .is_some_and(|s| s.mode.target == s.mode.pointing_detected && s.mode.target.is_some());
    check(gate_ok, "pointing gated by slider");

    // Freedrive bypasses the optimizer and slews at the configured rate.
    let mut e = engine();
    e.submit(Role::Helper, EventKind::ModeSelect { mode: Mode::WorkerLed });
    e.tick();
    let goal = JointConfig(e.q().0.iter().map(|a| a + 0.3).collect());
    e.submit(Role::Worker, EventKind::FreedriveInput { goal: goal.clone() });
    let rate = e.config().arbitration.slew_rate;
    let dt = e.dt();
    let mut prev = e.q().clone();
    let mut bypass = true;
    let mut reached = false;
    for _ in 0..30 {
        let s = e.tick().snapshot;
        if reached {
            break;
        }
        bypass &= s.command == "freedrive" && s.solver.is_none() && s.q.max_abs_diff(&prev) <= rate * dt + 1e-12;
        reached = s.q == goal;
        prev = s.q.clone();
    }
    check(bypass && reached, "freedrive bypass");

    let n = 5;
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{n}/{n} state-machine checks hold")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------

const THUMB_BASE: usize = 1;
const INDEX: usize = 8;
const OTHER_TIPS: [usize; 4] = [4, 12, 16, 20];

fn rule(points: &[Vec3]) -> bool {
    let base = points[THUMB_BASE];
    let reach = |i: usize| (points[i] - base).norm();
    OTHER_TIPS.iter().all(|&i| reach(INDEX) > reach(i))
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn pointing_corpus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut agree = 0;
    let mut total = 0;
    let mut counts = [0; 3];
    for case in 0..200 {
        // 0 = positive, 1 = negative, 2 = tie.
        let class = match case {
            0..=89 => 0,
            90..=169 => 1,
            _ => 2,
        };
        let mut points: Vec<Vec3> = (0..21)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                )
            })
            .collect();
        points[THUMB_BASE] = Vec3::zeros();
        let reach = rng.gen_range(0.06..0.12);
        match class {
            0 => {
                points[INDEX] = random_direction(&mut rng) * reach;
                for &i in &OTHER_TIPS {
                    points[i] = random_direction(&mut rng) * reach * rng.gen_range(0.3..0.95);
                }
            }
            1 => {
                points[INDEX] = random_direction(&mut rng) * reach;
                for &i in &OTHER_TIPS {
                    points[i] = random_direction(&mut rng) * reach * rng.gen_range(0.3..0.95);
                }
                let winner = OTHER_TIPS[rng.gen_range(0..4)];
                points[winner] = random_direction(&mut rng) * reach * rng.gen_range(1.05..1.5);
            }
            _ => {
                let tip = random_direction(&mut rng) * reach;
                points[INDEX] = tip;
                for &i in &OTHER_TIPS {
                    points[i] = random_direction(&mut rng) * reach * rng.gen_range(0.3..0.95);
                }
                // Same coordinates in another order: exactly the same norm.
                points[OTHER_TIPS[rng.gen_range(0..4)]] = Vec3::new(tip.y, tip.x, tip.z);
            }
        }
        let mut frame = LandmarkFrame::new(points, 0.0).expect("21 landmarks");
        if class != 2 {
            let iso = Isometry3::from_parts(
                Translation3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                random_rotation(&mut rng),
            );
            frame = frame.transformed(&iso);
        }
        let expected = rule(&frame.points);
        let detected = detect_pointing(&frame);
        let class_ok = expected == (class == 0);
        let tip_ok = detected.is_none_or(|p| p == frame.points[INDEX]);
        total += 1;
        if class_ok && expected == detected.is_some() && tip_ok {
            agree += 1;
        }
        counts[class] += 1;
    }
    outcome(
        agree == total,
        format!(
            "{agree}/{total} agree ({} positive, {} negative, {} ties)",
            counts[0], counts[1], counts[2]
        ),
    )
}

// ---------------------------------------------------------------------------

fn replay_determinism() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for name in ["orbit", "point", "tracking"] {
        let file = scenario(name);
        let mut engine = Engine::new(Scene::reference(), config())
            .and_then(|e| e.with_scenario(&file))
            .expect("engine builds");
        let (summary, bytes) = run_recorded(&mut engine, file.ticks.expect("ticks"), Vec::new()).expect("run");
        let log = read_log(bytes.as_slice()).expect("log parses");
        let report = replay(&log).expect("replay");
        let ok = report.identical
            && report.replayed_hash == summary.snapshot_hash
            && log.snapshot_hash() == summary.snapshot_hash;
        all &= ok;
        lines.push(format!(
            "{name} {}{}",
            &summary.snapshot_hash[..12],
            if ok { "" } else { " differs" }
        ));
    }
    outcome(all, format!("record/replay hashes equal: {}", lines.join(", ")))
}

// ---------------------------------------------------------------------------

fn solver_latency() -> Outcome {
    let report = run_bench(&Scene::reference(), &config(), &BenchOptions::default()).expect("bench");
    outcome(
        report.pass,
        format!(
            "{} solves, {} dof, {} terms, {} shapes: p50 {:.2} ms, p95 {:.2} ms, max {:.2} ms; soft budget {} ms {}, gate {} ms",
            report.iters,
            report.dof,
            report.terms,
            report.shapes,
            report.p50_ms,
            report.p95_ms,
            report.max_ms,
            report.budget_ms,
            if report.within_budget { "met" } else { "missed" },
            report.gate_ms
        ),
    )
}
