//! Raymaps, depth unprojection and pinhole projection.

use super::camera::{quat_conj, quat_rotate, Camera};
use super::vec3;
use crate::{Error, Result};

/// Per-pixel 9-channel camera encoding: `[ray origin, ray direction, o x d]`,
/// rays expressed in the world/reference frame, directions unit-norm.
#[derive(Clone, Debug)]
pub struct RayMap {
    pub h: usize,
    pub w: usize,
    /// `h*w*9` row-major values.
    pub data: Vec<f64>,
}

/// Per-pixel 3-D points in the local camera frame (z > 0 on valid pixels).
#[derive(Clone, Debug)]
pub struct PointMap {
    pub h: usize,
    pub w: usize,
    /// `h*w*3` row-major values.
    pub data: Vec<f64>,
}

impl PointMap {
    pub fn point(&self, v: usize, u: usize) -> [f64; 3] {
        let i = (v * self.w + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Camera-frame direction of pixel `(u, v)` (not normalized; z = 1).
fn pixel_dir(cam: &Camera, h: usize, w: usize, u: usize, v: usize) -> [f64; 3] {
    let x = (u as f64 + 0.5 - w as f64 / 2.0) / (cam.fx * w as f64);
    let y = (v as f64 + 0.5 - h as f64 / 2.0) / (cam.fy * h as f64);
    [x, y, 1.0]
}

pub fn camera_to_raymap(cam: &Camera, h: usize, w: usize) -> Result<RayMap> {
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("raymap extents must be positive, got {h}x{w}")));
    }
    let origin = cam.center();
    let q_inv = quat_conj(cam.quat);
    let mut data = vec![0.0; h * w * 9];
    for v in 0..h {
        for u in 0..w {
            let dir_cam = vec3::normalize(pixel_dir(cam, h, w, u, v));
            let dir = quat_rotate(q_inv, dir_cam);
            let m = vec3::cross(origin, dir);
            let i = (v * w + u) * 9;
            data[i..i + 3].copy_from_slice(&origin);
            data[i + 3..i + 6].copy_from_slice(&dir);
            data[i + 6..i + 9].copy_from_slice(&m);
        }
    }
    Ok(RayMap { h, w, data })
}

/// Lift a depth map into the local camera frame.
pub fn unproject(depth: &[f64], h: usize, w: usize, cam: &Camera) -> Result<PointMap> {
    if depth.len() != h * w {
        return Err(Error::Shape(format!("depth length {} vs extents {h}x{w}", depth.len())));
    }
    if cam.fx <= 0.0 || cam.fy <= 0.0 {
        return Err(Error::Parameter("unproject requires positive focals".into()));
    }
    let mut data = vec![0.0; h * w * 3];
    for v in 0..h {
        for u in 0..w {
            let z = depth[v * w + u];
            let d = pixel_dir(cam, h, w, u, v);
            let i = (v * w + u) * 3;
            data[i] = d[0] * z;
            data[i + 1] = d[1] * z;
            data[i + 2] = z;
        }
    }
    Ok(PointMap { h, w, data })
}

/// Project local-frame points back to depths and pixel coordinates
/// `(u, v)` in pixel units (centers at `+0.5`).
pub fn project(points: &PointMap, cam: &Camera) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    if cam.fx <= 0.0 || cam.fy <= 0.0 {
        return Err(Error::Parameter("project requires positive focals".into()));
    }
    let (h, w) = (points.h, points.w);
    let mut depth = vec![0.0; h * w];
    let mut pix = vec![[0.0; 2]; h * w];
    for i in 0..h * w {
        let p = [points.data[i * 3], points.data[i * 3 + 1], points.data[i * 3 + 2]];
        depth[i] = p[2];
        let u = cam.fx * w as f64 * p[0] / p[2] + w as f64 / 2.0 - 0.5;
        let v = cam.fy * h as f64 * p[1] / p[2] + h as f64 / 2.0 - 0.5;
        pix[i] = [u, v];
    }
    Ok((depth, pix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn identity_camera_rays_start_at_origin() {
        let rm = camera_to_raymap(&Camera::identity(), 4, 4).unwrap();
        for p in 0..16 {
            let i = p * 9;
            assert_eq!(&rm.data[i..i + 3], &[0.0, 0.0, 0.0]);
            assert_eq!(&rm.data[i + 6..i + 9], &[0.0, 0.0, 0.0]);
            let d = [rm.data[i + 3], rm.data[i + 4], rm.data[i + 5]];
            assert!((vec3::norm(d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn center_pixel_points_down_principal_axis() {
        // Odd extents put a pixel center exactly on the principal axis.
        let rm = camera_to_raymap(&Camera::identity(), 5, 5, ).unwrap();
        let i = (2 * 5 + 2) * 9;
        let d = [rm.data[i + 3], rm.data[i + 4], rm.data[i + 5]];
        assert!(vec3::norm(vec3::sub(d, [0.0, 0.0, 1.0])) < 1e-6);
    }

    #[test]
    fn translated_camera_rays_start_at_camera_center() {
        let cam = Camera::new([0.9, 0.1, -0.2, 0.3], [0.4, -1.0, 2.0], 1.1, 0.8).unwrap();
        let rm = camera_to_raymap(&cam, 3, 3).unwrap();
        let c = cam.center();
        for p in 0..9 {
            let i = p * 9;
            let o = [rm.data[i], rm.data[i + 1], rm.data[i + 2]];
            assert!(vec3::norm(vec3::sub(o, c)) < 1e-12);
        }
    }

    #[test]
    fn raymap_rejects_zero_extents() {
        assert!(camera_to_raymap(&Camera::identity(), 0, 4).is_err());
    }

    #[test]
    fn unproject_constant_depth_roundtrip() {
        let cam = Camera::identity();
        let depth = vec![1.0; 16];
        let pm = unproject(&depth, 4, 4, &cam).unwrap();
        let (d2, pix) = project(&pm, &cam).unwrap();
        for v in 0..4 {
            for u in 0..4 {
                let i = v * 4 + u;
                assert!((d2[i] - 1.0).abs() < 1e-5);
                assert!((pix[i][0] - u as f64).abs() < 1e-5);
                assert!((pix[i][1] - v as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_center_pixel_unprojects_on_axis() {
        let cam = Camera::identity(); // fx = fy = 1
        let pm = unproject(&[2.0], 1, 1, &cam).unwrap();
        assert!(vec3::norm(vec3::sub(pm.point(0, 0), [0.0, 0.0, 2.0])) < 1e-12);
    }

    #[test]
    fn random_depth_roundtrip_within_tolerance() {
        let mut rng = Rng::new(21);
        let cam = Camera::new([0.8, 0.3, -0.1, 0.2], [1.0, 0.0, -0.5], 0.9, 1.3).unwrap();
        let (h, w) = (8, 6);
        let depth: Vec<f64> = (0..h * w).map(|_| rng.uniform(0.5, 5.0)).collect();
        let pm = unproject(&depth, h, w, &cam).unwrap();
        let (d2, pix) = project(&pm, &cam).unwrap();
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                assert!((d2[i] - depth[i]).abs() < 1e-4);
                assert!((pix[i][0] - u as f64).abs() < 1e-4);
                assert!((pix[i][1] - v as f64).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rays_and_depth_reproduce_unprojection() {
        // Walking `depth / cos` along each world ray must land on the same
        // world points as unprojecting the depth map.
        let cam = Camera::new([0.9, -0.2, 0.1, 0.1], [0.3, 0.7, -0.2], 1.2, 1.0).unwrap();
        let (h, w) = (5, 7);
        let mut rng = Rng::new(4);
        let depth: Vec<f64> = (0..h * w).map(|_| rng.uniform(1.0, 4.0)).collect();
        let pm = unproject(&depth, h, w, &cam).unwrap();
        let rm = camera_to_raymap(&cam, h, w).unwrap();
        let q_inv = quat_conj(cam.quat);
        for v in 0..h {
            for u in 0..w {
                let i = (v * w + u) * 9;
                let o = [rm.data[i], rm.data[i + 1], rm.data[i + 2]];
                let d = [rm.data[i + 3], rm.data[i + 4], rm.data[i + 5]];
                // z-depth -> range along the unit ray
                let axis = quat_rotate(q_inv, [0.0, 0.0, 1.0]);
                let range = depth[v * w + u] / vec3::dot(d, axis);
                let on_ray = vec3::add(o, vec3::scale(d, range));
                let from_depth = cam.cam_to_world(pm.point(v, u));
                assert!(vec3::norm(vec3::sub(on_ray, from_depth)) < 1e-4);
            }
        }
    }
}
