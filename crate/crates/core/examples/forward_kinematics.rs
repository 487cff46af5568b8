//! Camera pose and link wrappers of the reference arm at its reset pose.

use sharedcam::session::Scene;

fn main() -> sharedcam::Result<()> {
    let scene = Scene::reference();
    let model = &scene.model;
    let q = &scene.reset_config;
    let pose = model.forward_kinematics(q)?;
    println!("q = {:?}", q.as_slice());
    println!("camera position {:.4?}", pose.position.as_slice());
    println!("forward {:.3?}", pose.forward().as_slice());
    println!("left    {:.3?}", pose.left().as_slice());
    println!("up      {:.3?}", pose.up().as_slice());

    let chain = model.chain_state(q)?;
    for (k, w) in model.placed_wrappers(&chain).iter().enumerate() {
        let c = w.center();
        println!("wrapper {k}: {:?} at [{:.3}, {:.3}, {:.3}]", w.shape, c.x, c.y, c.z);
    }
    Ok(())
}
