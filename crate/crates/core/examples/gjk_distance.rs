//! Surface distance and witness points between convex shapes.

use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use sharedcam::geometry::{proximity, ConvexShape, PlacedShape};

fn main() {
    let capsule = PlacedShape::new(
        ConvexShape::Capsule {
            half_length: 0.2,
            radius: 0.05,
        },
        Isometry3::from_parts(
            Vector3::new(0.0, 0.0, 0.5).into(),
            UnitQuaternion::from_euler_angles(0.3, 0.0, 0.0),
        ),
    );
    let others = [
        (
            "sphere",
            PlacedShape::at(ConvexShape::Sphere { radius: 0.1 }, Vector3::new(0.4, 0.1, 0.5)),
        ),
        (
            "box",
            PlacedShape::at(
                ConvexShape::Cuboid {
                    half_extents: Vector3::new(0.3, 0.3, 0.02),
                },
                Vector3::new(0.0, 0.0, 0.0),
            ),
        ),
        (
            "touching sphere",
            PlacedShape::at(ConvexShape::Sphere { radius: 0.1 }, Vector3::new(0.15, 0.0, 0.5)),
        ),
    ];
    for (name, other) in &others {
        let p = proximity(&capsule, other);
        println!(
            "capsule vs {name}: distance {:.6} m after {} iterations, witnesses {:.3?} / {:.3?}",
            p.distance,
            p.iterations,
            p.witness_a.as_slice(),
            p.witness_b.as_slice()
        );
    }
}
