//! Convex primitives, support mapping, GJK distance and ray casting.
//!
//! Every primitive is split into a polyhedral core (point, segment, box)
//! and a radius. GJK runs on the cores, which makes it terminate in a
//! finite number of steps, and the radii are subtracted afterwards.

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Capsules are aligned with their local z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexShape {
    Sphere { radius: f64 },
    Capsule { half_length: f64, radius: f64 },
    Cuboid { half_extents: Vec3 },
}

impl ConvexShape {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConvexShape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            ConvexShape::Capsule { half_length, radius } => {
                half_length > 0.0 && radius > 0.0 && half_length.is_finite() && radius.is_finite()
            }
            ConvexShape::Cuboid { half_extents } => half_extents.iter().all(|e| *e > 0.0 && e.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "shape size parameters must be positive: {self:?}"
            )))
        }
    }

    /// Rounding radius around the polyhedral core.
    pub fn radius(&self) -> f64 {
        match *self {
            ConvexShape::Sphere { radius } | ConvexShape::Capsule { radius, .. } => radius,
            ConvexShape::Cuboid { .. } => 0.0,
        }
    }

    /// Support of the core in local coordinates.
    fn core_support_local(&self, dir: &Vec3) -> Vec3 {
        let sign = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
        match *self {
            ConvexShape::Sphere { .. } => Vec3::zeros(),
            ConvexShape::Capsule { half_length, .. } => Vec3::new(0.0, 0.0, sign(dir.z) * half_length),
            ConvexShape::Cuboid { half_extents: e } => {
                Vec3::new(sign(dir.x) * e.x, sign(dir.y) * e.y, sign(dir.z) * e.z)
            }
        }
    }

    /// Radius of a sphere centred on the local origin that encloses the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            ConvexShape::Sphere { radius } => radius,
            ConvexShape::Capsule { half_length, radius } => half_length + radius,
            ConvexShape::Cuboid { half_extents } => half_extents.norm(),
        }
    }
}

/// A shape with a world-frame pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedShape {
    pub shape: ConvexShape,
    pub transform: Isometry3<f64>,
}

impl PlacedShape {
    pub fn new(shape: ConvexShape, transform: Isometry3<f64>) -> Self {
        PlacedShape { shape, transform }
    }

    pub fn at(shape: ConvexShape, position: Vec3) -> Self {
        PlacedShape::new(shape, Isometry3::translation(position.x, position.y, position.z))
    }

    pub fn center(&self) -> Vec3 {
        self.transform.translation.vector
    }

    fn core_support(&self, dir: &Vec3) -> Vec3 {
        let local_dir = self.transform.rotation.inverse_transform_vector(dir);
        (self.transform * nalgebra::Point3::from(self.shape.core_support_local(&local_dir))).coords
    }

    /// Farthest point of the shape along `direction` (need not be unit).
    pub fn support(&self, direction: &Vec3) -> Result<Vec3> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("support direction must be nonzero and finite"));
        }
        let unit = direction / norm;
        Ok(self.core_support(&unit) + self.shape.radius() * unit)
    }
}

#[derive(Debug, Clone, Copy)]
struct Vertex {
    w: Vec3,
    a: Vec3,
    b: Vec3,
}

/// Result of a GJK query between two placed shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    /// Surface separation, 0 when touching or overlapping.
    pub distance: f64,
    /// Closest point on `a`'s surface.
    pub witness_a: Vec3,
    /// Closest point on `b`'s surface.
    pub witness_b: Vec3,
    /// Unit vector pointing from `b` towards `a`; `None` when overlapping.
    pub normal: Option<Vec3>,
    pub iterations: usize,
    pub converged: bool,
}

const GJK_MAX_ITERS: usize = 64;
const GJK_REL_TOL: f64 = 1e-10;
const GJK_ABS_TOL_SQ: f64 = 1e-24;

/// Pairwise surface distance. Penetration reports 0.
pub fn distance(a: &PlacedShape, b: &PlacedShape) -> f64 {
    proximity(a, b).distance
}

pub fn proximity(a: &PlacedShape, b: &PlacedShape) -> Proximity {
    let core = gjk_cores(a, b);
    let (ra, rb) = (a.shape.radius(), b.shape.radius());
    let core_dist = core.dist;
    if core.overlap || core_dist <= 0.0 {
        return Proximity {
            distance: 0.0,
            witness_a: core.pa,
            witness_b: core.pb,
            normal: None,
            iterations: core.iterations,
            converged: core.converged,
        };
    }
    let normal = (core.pa - core.pb) / core_dist;
    let distance = (core_dist - ra - rb).max(0.0);
    Proximity {
        distance,
        witness_a: core.pa - ra * normal,
        witness_b: core.pb + rb * normal,
        normal: if distance > 0.0 { Some(normal) } else { None },
        iterations: core.iterations,
        converged: core.converged,
    }
}

struct CoreResult {
    dist: f64,
    pa: Vec3,
    pb: Vec3,
    overlap: bool,
    iterations: usize,
    converged: bool,
}

fn minkowski_vertex(a: &PlacedShape, b: &PlacedShape, dir: &Vec3) -> Vertex {
    let pa = a.core_support(dir);
    let pb = b.core_support(&-dir);
    Vertex {
        w: pa - pb,
        a: pa,
        b: pb,
    }
}

fn gjk_cores(a: &PlacedShape, b: &PlacedShape) -> CoreResult {
    let mut dir = a.center() - b.center();
    if dir.norm_squared() < 1e-24 {
        dir = Vec3::x();
    }
    let first = minkowski_vertex(a, b, &-dir);
    let mut simplex: Vec<Vertex> = vec![first];
    let mut weights: Vec<f64> = vec![1.0];
    let mut v = first.w;
    let mut iterations = 0;
    let mut converged = false;
    let mut overlap = false;

    while iterations < GJK_MAX_ITERS {
        iterations += 1;
        let vv = v.norm_squared();
        if vv <= GJK_ABS_TOL_SQ {
            overlap = true;
            converged = true;
            break;
        }
        let w = minkowski_vertex(a, b, &-v);
        // Progress test: the new support point does not get closer to the
        // origin than the current estimate by more than the tolerance.
        if vv - v.dot(&w.w) <= GJK_REL_TOL * vv {
            converged = true;
            break;
        }
        if simplex.iter().any(|s| (s.w - w.w).norm_squared() <= 1e-24) {
            converged = true;
            break;
        }
        simplex.push(w);
        let (reduced, lambdas, inside) = closest_on_simplex(&simplex);
        if inside {
            overlap = true;
            converged = true;
            break;
        }
        let new_v = reduced
            .iter()
            .zip(&lambdas)
            .fold(Vec3::zeros(), |acc, (s, l)| acc + s.w * *l);
        let new_vv = new_v.norm_squared();
        if new_vv >= vv {
            // Numerical stall; the previous simplex is the best bound.
            converged = true;
            break;
        }
        simplex = reduced;
        weights = lambdas;
        v = new_v;
    }

    if !converged {
        tracing::debug!(iterations, "gjk did not converge, returning best bound");
    }

    let pa = simplex
        .iter()
        .zip(&weights)
        .fold(Vec3::zeros(), |acc, (s, l)| acc + s.a * *l);
    let pb = simplex
        .iter()
        .zip(&weights)
        .fold(Vec3::zeros(), |acc, (s, l)| acc + s.b * *l);
    let dist = if overlap { 0.0 } else { (pa - pb).norm() };
    CoreResult {
        dist,
        pa,
        pb,
        overlap,
        iterations,
        converged,
    }
}

/// Closest point of the simplex to the origin. Returns the supporting
/// sub-simplex, its barycentric weights, and whether the origin lies inside
/// a full tetrahedron.
fn closest_on_simplex(s: &[Vertex]) -> (Vec<Vertex>, Vec<f64>, bool) {
    match s.len() {
        1 => (vec![s[0]], vec![1.0], false),
        2 => {
            let (r, l) = closest_segment(s[0], s[1]);
            (r, l, false)
        }
        3 => {
            let (r, l) = closest_triangle(s[0], s[1], s[2]);
            (r, l, false)
        }
        4 => closest_tetrahedron(s),
        _ => unreachable!("simplex never exceeds four vertices"),
    }
}

fn closest_segment(a: Vertex, b: Vertex) -> (Vec<Vertex>, Vec<f64>) {
    let ab = b.w - a.w;
    let denom = ab.norm_squared();
    if denom <= 1e-30 {
        return (vec![a], vec![1.0]);
    }
    let t = -a.w.dot(&ab) / denom;
    if t <= 0.0 {
        (vec![a], vec![1.0])
    } else if t >= 1.0 {
        (vec![b], vec![1.0])
    } else {
        (vec![a, b], vec![1.0 - t, t])
    }
}

fn closest_triangle(a: Vertex, b: Vertex, c: Vertex) -> (Vec<Vertex>, Vec<f64>) {
    // Voronoi region walk for the origin against triangle abc.
    let ab = b.w - a.w;
    let ac = c.w - a.w;
    let ap = -a.w;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (vec![a], vec![1.0]);
    }
    let bp = -b.w;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (vec![b], vec![1.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (vec![a, b], vec![1.0 - t, t]);
    }
    let cp = -c.w;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (vec![c], vec![1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (vec![a, c], vec![1.0 - t, t]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (vec![b, c], vec![1.0 - t, t]);
    }
    let sum = va + vb + vc;
    if sum.abs() <= 1e-30 {
        // Degenerate (collinear) triangle: best of its edges.
        return [closest_segment(a, b), closest_segment(a, c), closest_segment(b, c)]
            .into_iter()
            .min_by(|x, y| {
                point_of(&x.0, &x.1)
                    .norm_squared()
                    .total_cmp(&point_of(&y.0, &y.1).norm_squared())
            })
            .unwrap();
    }
    let denom = 1.0 / sum;
    let v = vb * denom;
    let w = vc * denom;
    (vec![a, b, c], vec![1.0 - v - w, v, w])
}

fn point_of(s: &[Vertex], l: &[f64]) -> Vec3 {
    s.iter().zip(l).fold(Vec3::zeros(), |acc, (v, w)| acc + v.w * *w)
}

fn closest_tetrahedron(s: &[Vertex]) -> (Vec<Vertex>, Vec<f64>, bool) {
    let faces = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 3, 1), (1, 2, 3, 0)];
    let volume = (s[1].w - s[0].w).cross(&(s[2].w - s[0].w)).dot(&(s[3].w - s[0].w));
    let degenerate = volume.abs() <= 1e-18;
    let mut best: Option<(Vec<Vertex>, Vec<f64>, f64)> = None;
    let mut outside_any = false;
    for &(i, j, k, opp) in &faces {
        let n = (s[j].w - s[i].w).cross(&(s[k].w - s[i].w));
        let origin_side = -s[i].w.dot(&n);
        let opp_side = (s[opp].w - s[i].w).dot(&n);
        let outside = degenerate || origin_side * opp_side < 0.0;
        if !outside {
            continue;
        }
        outside_any = true;
        let (r, l) = closest_triangle(s[i], s[j], s[k]);
        let d = point_of(&r, &l).norm_squared();
        if best.as_ref().is_none_or(|b| d < b.2) {
            best = Some((r, l, d));
        }
    }
    match best {
        Some((r, l, _)) if outside_any => (r, l, false),
        _ => (s.to_vec(), vec![0.25; 4], true),
    }
}

/// Nearest ray intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Vec3,
    pub shape_index: usize,
    pub range: f64,
}

/// Casts a ray through `scene`. An origin inside a shape hits at range 0.
pub fn raycast(scene: &[PlacedShape], origin: &Vec3, direction: &Vec3) -> Option<RayHit> {
    let dir = direction.normalize();
    scene
        .iter()
        .enumerate()
        .filter_map(|(idx, s)| ray_shape(s, origin, &dir).map(|t| (idx, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(shape_index, range)| RayHit {
            point: origin + dir * range,
            shape_index,
            range,
        })
}

fn ray_shape(shape: &PlacedShape, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let o = shape
        .transform
        .inverse_transform_point(&nalgebra::Point3::from(*origin))
        .coords;
    let d = shape.transform.rotation.inverse_transform_vector(dir);
    match shape.shape {
        ConvexShape::Sphere { radius } => ray_sphere(&o, &d, &Vec3::zeros(), radius),
        ConvexShape::Cuboid { half_extents } => ray_box(&o, &d, &half_extents),
        ConvexShape::Capsule { half_length, radius } => ray_capsule(&o, &d, half_length, radius),
    }
}

fn ray_sphere(o: &Vec3, d: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let m = o - c;
    let c_term = m.norm_squared() - r * r;
    if c_term <= 0.0 {
        return Some(0.0);
    }
    let b = m.dot(d);
    if b > 0.0 {
        return None;
    }
    let disc = b * b - c_term;
    if disc < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()).max(0.0))
}

fn ray_box(o: &Vec3, d: &Vec3, e: &Vec3) -> Option<f64> {
    let mut t_min: f64 = 0.0;
    let mut t_max = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > e[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let mut t1 = (-e[i] - o[i]) * inv;
        let mut t2 = (e[i] - o[i]) * inv;
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        t_min = t_min.max(t1);
        t_max = t_max.min(t2);
        if t_min > t_max {
            return None;
        }
    }
    Some(t_min)
}

fn ray_capsule(o: &Vec3, d: &Vec3, h: f64, r: f64) -> Option<f64> {
    let seg_closest = Vec3::new(0.0, 0.0, o.z.clamp(-h, h));
    if (o - seg_closest).norm_squared() <= r * r {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut consider = |t: Option<f64>| {
        if let Some(t) = t {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };
    // Cylinder side.
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            if t >= 0.0 && (o.z + t * d.z).abs() <= h {
                consider(Some(t));
            }
        }
    }
    consider(ray_sphere(o, d, &Vec3::new(0.0, 0.0, h), r));
    consider(ray_sphere(o, d, &Vec3::new(0.0, 0.0, -h), r));
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn sphere(r: f64, p: Vec3) -> PlacedShape {
        PlacedShape::at(ConvexShape::Sphere { radius: r }, p)
    }

    #[test]
    fn support_examples() {
        let s = sphere(1.0, Vec3::zeros());
        assert_relative_eq!(s.support(&Vec3::z()).unwrap(), Vec3::z());
        let b = PlacedShape::at(
            ConvexShape::Cuboid {
                half_extents: Vec3::new(1.0, 2.0, 3.0),
            },
            Vec3::zeros(),
        );
        let dir = Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert_relative_eq!(b.support(&dir).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        let c = PlacedShape::at(
            ConvexShape::Capsule {
                half_length: 0.5,
                radius: 0.1,
            },
            Vec3::zeros(),
        );
        let p = c.support(&Vec3::x()).unwrap();
        assert_eq!(p.x, 0.1);
        assert!(p.z.abs() <= 0.5 && p.y == 0.0);
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(sphere(1.0, Vec3::zeros()).support(&Vec3::zeros()).is_err());
    }

    #[test]
    fn sphere_pair_distance() {
        let d = distance(&sphere(0.1, Vec3::zeros()), &sphere(0.1, Vec3::new(0.4, 0.0, 0.0)));
        assert_relative_eq!(d, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn identical_cuboids_overlap() {
        let b = PlacedShape::new(
            ConvexShape::Cuboid {
                half_extents: Vec3::new(0.3, 0.2, 0.1),
            },
            Isometry3::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.2, 0.3, 0.4)),
        );
        assert_eq!(distance(&b, &b), 0.0);
    }

    #[test]
    fn unit_cuboids_face_gap() {
        let cube = ConvexShape::Cuboid {
            half_extents: Vec3::repeat(0.5),
        };
        let d = distance(
            &PlacedShape::at(cube, Vec3::zeros()),
            &PlacedShape::at(cube, Vec3::new(2.0, 0.0, 0.0)),
        );
        assert_relative_eq!(d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn witness_points_sit_on_surfaces() {
        let a = PlacedShape::new(
            ConvexShape::Capsule {
                half_length: 0.3,
                radius: 0.05,
            },
            Isometry3::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.4, 0.0, 0.0)),
        );
        let b = PlacedShape::new(
            ConvexShape::Cuboid {
                half_extents: Vec3::new(0.1, 0.2, 0.3),
            },
            Isometry3::new(Vec3::new(0.8, 0.1, 0.2), Vec3::new(0.0, 0.3, 0.1)),
        );
        let p = proximity(&a, &b);
        assert!(p.distance > 0.0);
        assert_relative_eq!((p.witness_a - p.witness_b).norm(), p.distance, epsilon = 1e-9);
        let n = p.normal.unwrap();
        assert_relative_eq!(p.witness_a - p.witness_b, n * p.distance, epsilon = 1e-9);
    }

    #[test]
    fn ray_hits_sphere_front() {
        let scene = [sphere(0.5, Vec3::new(0.0, 0.0, 2.0))];
        let hit = raycast(&scene, &Vec3::zeros(), &Vec3::z()).unwrap();
        assert_relative_eq!(hit.range, 1.5, epsilon = 1e-12);
        assert_relative_eq!(hit.point, Vec3::new(0.0, 0.0, 1.5), epsilon = 1e-12);
        assert!(raycast(&scene, &Vec3::zeros(), &-Vec3::z()).is_none());
    }

    #[test]
    fn ray_origin_inside_hits_at_zero() {
        for shape in [
            ConvexShape::Sphere { radius: 0.5 },
            ConvexShape::Capsule {
                half_length: 0.2,
                radius: 0.3,
            },
            ConvexShape::Cuboid {
                half_extents: Vec3::repeat(0.4),
            },
        ] {
            let scene = [PlacedShape::at(shape, Vec3::new(0.1, 0.0, 0.0))];
            let hit = raycast(&scene, &Vec3::zeros(), &Vec3::y()).unwrap();
            assert_eq!(hit.range, 0.0);
        }
    }

    #[test]
    fn ray_hits_rotated_box_and_capsule() {
        let boxed = PlacedShape::new(
            ConvexShape::Cuboid {
                half_extents: Vec3::new(0.5, 0.5, 0.5),
            },
            Isometry3::from_parts(
                nalgebra::Translation3::new(3.0, 0.0, 0.0),
                UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_4),
            ),
        );
        let hit = raycast(&[boxed], &Vec3::zeros(), &Vec3::x()).unwrap();
        assert_relative_eq!(hit.range, 3.0 - 0.5 * 2f64.sqrt(), epsilon = 1e-12);

        // Capsule lying along world x, ray along its axis hits the end cap.
        let cap = PlacedShape::new(
            ConvexShape::Capsule {
                half_length: 0.5,
                radius: 0.1,
            },
            Isometry3::from_parts(
                nalgebra::Translation3::new(2.0, 0.0, 0.0),
                UnitQuaternion::from_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0),
            ),
        );
        let hit = raycast(&[cap], &Vec3::zeros(), &Vec3::x()).unwrap();
        assert_relative_eq!(hit.range, 2.0 - 0.6, epsilon = 1e-12);
        // Ray across the side.
        let hit = raycast(&[cap], &Vec3::new(2.2, -1.0, 0.0), &Vec3::y()).unwrap();
        assert_relative_eq!(hit.range, 0.9, epsilon = 1e-12);
    }
}
