//! Camera parameterization and relative pose errors.

use serde::{Deserialize, Serialize};

use super::vec3;
use crate::{Error, Result};

/// Pinhole camera as a 9-vector: unit quaternion (w,x,y,z) with w >= 0,
/// world-to-camera translation, and focals normalized by width/height.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Camera {
    pub quat: [f64; 4],
    pub trans: [f64; 3],
    pub fx: f64,
    pub fy: f64,
}

impl Camera {
    pub fn new(quat: [f64; 4], trans: [f64; 3], fx: f64, fy: f64) -> Result<Camera> {
        let n = (quat.iter().map(|q| q * q).sum::<f64>()).sqrt();
        if n < 1e-9 {
            return Err(Error::Parameter("quaternion norm is zero".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Parameter(format!("focals must be positive, got {fx}, {fy}")));
        }
        let sign = if quat[0] < 0.0 { -1.0 } else { 1.0 };
        // Skip the division when already unit so persisted cameras round-trip
        // bit-exactly.
        let scale = if (n - 1.0).abs() > 1e-12 { sign / n } else { sign };
        let quat = [quat[0] * scale, quat[1] * scale, quat[2] * scale, quat[3] * scale];
        Ok(Camera { quat, trans, fx, fy })
    }

    pub fn identity() -> Camera {
        Camera { quat: [1.0, 0.0, 0.0, 0.0], trans: [0.0; 3], fx: 1.0, fy: 1.0 }
    }

    pub fn from_vec9(v: &[f64]) -> Result<Camera> {
        if v.len() != 9 {
            return Err(Error::Parameter(format!("camera vector must have 9 entries, got {}", v.len())));
        }
        Camera::new([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]], v[7], v[8])
    }

    pub fn to_vec9(&self) -> [f64; 9] {
        [
            self.quat[0],
            self.quat[1],
            self.quat[2],
            self.quat[3],
            self.trans[0],
            self.trans[1],
            self.trans[2],
            self.fx,
            self.fy,
        ]
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        quat_to_mat(self.quat)
    }

    /// Camera center in world coordinates: `-R^T t`.
    pub fn center(&self) -> [f64; 3] {
        let r = self.rotation();
        let t = self.trans;
        [
            -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
            -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
            -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
        ]
    }

    pub fn world_to_cam(&self, p: [f64; 3]) -> [f64; 3] {
        vec3::add(quat_rotate(self.quat, p), self.trans)
    }

    pub fn cam_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        quat_rotate(quat_conj(self.quat), vec3::sub(p, self.trans))
    }

    /// Re-express this camera after changing the world frame to `reference`'s
    /// camera frame (so `reference` itself becomes the identity camera).
    pub fn relative_to(&self, reference: &Camera) -> Camera {
        relative_camera(reference, self)
    }
}

/// Hamilton product of two (w,x,y,z) quaternions.
pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn quat_conj(q: [f64; 4]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Rotate `v` by unit quaternion `q`.
pub fn quat_rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let (w, u) = (q[0], [q[1], q[2], q[3]]);
    let uv = vec3::cross(u, v);
    let uuv = vec3::cross(u, uv);
    vec3::add(v, vec3::add(vec3::scale(uv, 2.0 * w), vec3::scale(uuv, 2.0)))
}

pub fn quat_to_mat(q: [f64; 4]) -> [[f64; 3]; 3] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn mat_to_quat(m: [[f64; 3]; 3]) -> [f64; 4] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    };
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
    [sign * q[0] / n, sign * q[1] / n, sign * q[2] / n, sign * q[3] / n]
}

/// Geodesic angle between two rotations, in degrees.
pub fn quat_geodesic_deg(a: [f64; 4], b: [f64; 4]) -> f64 {
    let rel = quat_mul(a, quat_conj(b));
    let vec_norm = (rel[1] * rel[1] + rel[2] * rel[2] + rel[3] * rel[3]).sqrt();
    2.0 * vec_norm.atan2(rel[0].abs()).to_degrees()
}

/// Transform taking `a`-frame coordinates to `b`-frame coordinates:
/// `R = R_b R_a^T`, `t = t_b - R t_a`.
pub fn relative_camera(a: &Camera, b: &Camera) -> Camera {
    let q = quat_mul(b.quat, quat_conj(a.quat));
    let t = vec3::sub(b.trans, quat_rotate(q, a.trans));
    let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
    Camera {
        quat: [sign * q[0], sign * q[1], sign * q[2], sign * q[3]],
        trans: t,
        fx: b.fx,
        fy: b.fy,
    }
}

/// Disagreement between two poses claiming the same thing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDelta {
    /// Geodesic angle between the two rotations, degrees.
    pub rot_angle_deg: f64,
    /// Angle between the two translation directions, degrees
    /// (0 when both norms are below 1e-9).
    pub trans_dir_angle_deg: f64,
    /// Euclidean distance between the two translations.
    pub trans_norm: f64,
}

pub fn relative_pose(a: &Camera, b: &Camera) -> PoseDelta {
    PoseDelta {
        rot_angle_deg: quat_geodesic_deg(a.quat, b.quat),
        trans_dir_angle_deg: vec3::angle_deg(a.trans, b.trans),
        trans_norm: vec3::norm(vec3::sub(a.trans, b.trans)),
    }
}
