//! Turn a click in the helper's video into a 3D target.

use sharedcam::session::click::{project, resolve_click};
use sharedcam::session::Scene;

fn main() -> sharedcam::Result<()> {
    let scene = Scene::reference();
    let pose = scene.model.forward_kinematics(&scene.reset_config)?;
    let shapes = scene.shapes();
    let intr = &scene.intrinsics;
    let (cx, cy) = intr.principal_point();
    for pixel in [(cx, cy), (cx + 200.0, cy + 100.0), (10.0, 10.0)] {
        let p = resolve_click(pixel, intr, &pose, &shapes, scene.fallback_range)?;
        let back = project(&p, intr, &pose);
        println!(
            "pixel ({:.0}, {:.0}) -> [{:.3}, {:.3}, {:.3}], reprojects to {:.1?}",
            pixel.0, pixel.1, p.x, p.y, p.z, back
        );
    }
    Ok(())
}
