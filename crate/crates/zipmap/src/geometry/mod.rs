//! Cameras, rays, point maps and similarity alignment.
//!
//! Everything here is plain `f64` math: the differentiable path only ever
//! consumes the *outputs* (raymap grids become constant tokens, ground-truth
//! cameras become constant loss targets).
//!
//! Conventions, fixed once for the whole crate:
//! - extrinsics are world-to-camera: `x_cam = R x_world + t`
//! - rotations are unit quaternions `(w, x, y, z)` with `w >= 0`
//! - focals are normalized by image width/height; principal point is the
//!   image center; pixel centers sit at `(u + 0.5, v + 0.5)`

mod align;
mod camera;
mod raymap;

pub use align::{apply_sim3, umeyama_align, Sim3};
pub use camera::{
    mat_to_quat, quat_conj, quat_geodesic_deg, quat_mul, quat_rotate, quat_to_mat,
    relative_camera, relative_pose, Camera, PoseDelta,
};
pub use raymap::{camera_to_raymap, project, unproject, PointMap, RayMap};

pub mod vec3 {
    pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn norm(a: [f64; 3]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    pub fn normalize(a: [f64; 3]) -> [f64; 3] {
        let n = norm(a);
        if n == 0.0 {
            a
        } else {
            scale(a, 1.0 / n)
        }
    }

    /// Angle between two directions in degrees; 0 when both are (near) zero.
    pub fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
        let (na, nb) = (norm(a), norm(b));
        if na < 1e-9 && nb < 1e-9 {
            return 0.0;
        }
        if na < 1e-9 || nb < 1e-9 {
            return 90.0;
        }
        let c = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}
