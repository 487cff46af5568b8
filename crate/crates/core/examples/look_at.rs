//! Servo the camera onto a world point and watch the optical-axis error.

use nalgebra::Vector3;
use sharedcam::arbitration::{EventKind, Role, TargetSpec};
use sharedcam::session::engine::default_engine;

fn main() -> sharedcam::Result<()> {
    let mut engine = default_engine(60.0)?;
    let target = Vector3::new(0.7, 0.1, 0.03);
    engine.submit(
        Role::Helper,
        EventKind::SetTarget {
            target: TargetSpec::World { point: target },
        },
    );
    for _ in 0..30 {
        let s = engine.tick().snapshot;
        let err = s.camera.forward.angle(&(target - s.camera.position)).to_degrees();
        let iters = s.solver.map_or(0, |x| x.iterations);
        println!("tick {:>2}  error {err:7.3} deg  solver iterations {iters}", s.tick);
    }
    Ok(())
}
