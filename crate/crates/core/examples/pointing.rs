//! Pointing detection on synthetic hands and median filtering of a noisy
//! body stream.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharedcam::perception::{
    body_wrappers, detect_pointing, synthetic_hand, synthetic_t_pose, BodyFrame, BodyWrapperConfig, HandGesture,
    LandmarkFrame, MedianFilter,
};

fn main() -> sharedcam::Result<()> {
    let wrist = Vector3::new(0.8, -0.15, 0.05);
    let forward = Vector3::new(-0.3, 1.0, 0.0);
    for gesture in [HandGesture::Open, HandGesture::Point, HandGesture::Fist] {
        let frame = LandmarkFrame::new(synthetic_hand(wrist, forward, gesture), 0.0)?;
        match detect_pointing(&frame) {
            Some(tip) => println!("{gesture:?}: pointing, fingertip at {:.3?}", tip.as_slice()),
            None => println!("{gesture:?}: not pointing"),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut filter = MedianFilter::new(5)?;
    let clean = synthetic_t_pose(Vector3::new(1.3, 0.0, -0.25));
    let mut last = BodyFrame::empty(0.0);
    for i in 0..10 {
        let noisy = clean
            .iter()
            .map(|p| {
                // Occasional dropouts and 3 cm jitter.
                p.filter(|_| rng.gen_bool(0.9))
                    .map(|p| p + Vector3::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03), 0.0))
            })
            .collect();
        last = filter.push(BodyFrame::new(noisy, i as f64 / 30.0)?);
    }
    let err = clean
        .iter()
        .zip(&last.points)
        .filter_map(|(c, f)| Some((c.as_ref()? - f.as_ref()?).norm()))
        .fold(0.0, f64::max);
    println!("filtered body: worst keypoint error {:.4} m", err);
    println!(
        "body wrappers: {}",
        body_wrappers(&last, &BodyWrapperConfig::default()).len()
    );
    Ok(())
}
