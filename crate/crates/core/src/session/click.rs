//! Click-to-target: pinhole back-projection plus a raycast into the scene.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{raycast, PlacedShape, Vec3};
use crate::kinematics::CameraPose;

/// Virtual pinhole camera with square pixels and the principal point at the
/// image centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics {
            width: 1280,
            height: 720,
            hfov_deg: 60.0,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("intrinsics: image size must be non-zero"));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(Error::invalid("intrinsics: hfov_deg must lie in (0, 180)"));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.hfov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn contains(&self, (u, v): (f64, f64)) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

// Image u grows to the right (along -left) and v grows downwards. With a
// level horizon the camera's +x axis points to the image bottom, so v maps
// onto +x.

/// Unit world-frame ray direction through pixel `(u, v)`.
pub fn pixel_ray(pixel: (f64, f64), intrinsics: &Intrinsics, pose: &CameraPose) -> Result<Vec3> {
    if !pixel.0.is_finite() || !pixel.1.is_finite() || !intrinsics.contains(pixel) {
        return Err(Error::Rejected(format!(
            "pixel ({}, {}) outside the {}x{} image",
            pixel.0, pixel.1, intrinsics.width, intrinsics.height
        )));
    }
    let f = intrinsics.focal();
    let (cx, cy) = intrinsics.principal_point();
    let local = Vec3::new((pixel.1 - cy) / f, -(pixel.0 - cx) / f, 1.0);
    Ok((pose.orientation * local).normalize())
}

/// Pixel a world point projects to, or `None` when it is behind the camera.
/// The result may fall outside the image.
pub fn project(point: &Vec3, intrinsics: &Intrinsics, pose: &CameraPose) -> Option<(f64, f64)> {
    let local = pose.orientation.inverse() * (point - pose.position);
    if local.z <= 1e-12 {
        return None;
    }
    let f = intrinsics.focal();
    let (cx, cy) = intrinsics.principal_point();
    Some((cx - f * local.y / local.z, cy + f * local.x / local.z))
}

/// Resolves a click to a 3D target: the nearest scene hit along the pixel
/// ray, else the point `fallback_range` metres along it.
pub fn resolve_click(
    pixel: (f64, f64),
    intrinsics: &Intrinsics,
    pose: &CameraPose,
    scene: &[PlacedShape],
    fallback_range: f64,
) -> Result<Vec3> {
    let dir = pixel_ray(pixel, intrinsics, pose)?;
    Ok(match raycast(scene, &pose.position, &dir) {
        Some(hit) => hit.point,
        None => pose.position + fallback_range * dir,
    })
}
