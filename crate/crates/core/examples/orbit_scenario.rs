//! Run the scripted orbit scenario and report how well the camera keeps its
//! distance and stays level.

use std::path::Path;

use sharedcam::session::files::load_scenario;
use sharedcam::session::{Engine, Scene, SessionConfig};

fn main() -> sharedcam::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/scenarios/orbit.json");
    let file = load_scenario(&path)?;
    let mut engine = Engine::new(Scene::reference(), SessionConfig::default().deterministic())?.with_scenario(&file)?;
    let mut worst_dist: f64 = 0.0;
    let mut worst_roll: f64 = 0.0;
    for _ in 0..file.ticks.unwrap_or(420) {
        let s = engine.tick().snapshot;
        worst_roll = worst_roll.max(s.camera.left.z.abs().asin().to_degrees());
        if let (Some(d), Some(t)) = (s.mode.orbit_distance, s.mode.target) {
            worst_dist = worst_dist.max(((s.camera.position - t).norm() - d).abs());
        }
        if s.tick % 60 == 0 {
            let p = s.camera.position;
            println!(
                "t = {:.1} s  camera [{:.3}, {:.3}, {:.3}]  queued adjusts {}",
                s.time, p.x, p.y, p.z, s.mode.adjust_pending
            );
        }
    }
    println!("max distance drift {worst_dist:.4} m, max roll {worst_roll:.3} deg");
    Ok(())
}
