//! Analytic scene primitives: intersection, normals, shading.

use serde::{Deserialize, Serialize};

use crate::geometry::vec3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Texture {
    /// Axis-aligned checker pattern with the given cell size.
    Checker { cell: f64, color_a: [f64; 3], color_b: [f64; 3] },
    /// Linear blend along the world axis (0=x, 1=y, 2=z) over [lo, hi].
    Gradient { axis: usize, lo: f64, hi: f64, color_a: [f64; 3], color_b: [f64; 3] },
}

impl Texture {
    pub fn sample(&self, p: [f64; 3]) -> [f64; 3] {
        match self {
            Texture::Checker { cell, color_a, color_b } => {
                let k = (p[0] / cell).floor() as i64
                    + (p[1] / cell).floor() as i64
                    + (p[2] / cell).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    *color_a
                } else {
                    *color_b
                }
            }
            Texture::Gradient { axis, lo, hi, color_a, color_b } => {
                let t = ((p[*axis] - lo) / (hi - lo)).clamp(0.0, 1.0);
                [
                    color_a[0] + t * (color_b[0] - color_a[0]),
                    color_a[1] + t * (color_b[1] - color_a[1]),
                    color_a[2] + t * (color_b[2] - color_a[2]),
                ]
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Primitive {
    /// Infinite plane through `point` with unit `normal`.
    Plane { point: [f64; 3], normal: [f64; 3], texture: Texture },
    Sphere { center: [f64; 3], radius: f64, texture: Texture },
    /// Axis-aligned box.
    BoxAab { min: [f64; 3], max: [f64; 3], texture: Texture },
}

/// Ray-surface intersection record.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    /// Range along the (unit) ray.
    pub t: f64,
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub color: [f64; 3],
}

impl Primitive {
    /// Nearest intersection with `origin + t * dir` for `t > t_min`.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3], t_min: f64) -> Option<Hit> {
        match self {
            Primitive::Plane { point, normal, texture } => {
                let denom = vec3::dot(*normal, dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = vec3::dot(*normal, vec3::sub(*point, origin)) / denom;
                if t <= t_min {
                    return None;
                }
                let p = vec3::add(origin, vec3::scale(dir, t));
                let n = if denom < 0.0 { *normal } else { vec3::scale(*normal, -1.0) };
                Some(Hit { t, point: p, normal: n, color: texture.sample(p) })
            }
            Primitive::Sphere { center, radius, texture } => {
                let oc = vec3::sub(origin, *center);
                let b = vec3::dot(oc, dir);
                let c = vec3::dot(oc, oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > t_min {
                    -b - sq
                } else if -b + sq > t_min {
                    -b + sq
                } else {
                    return None;
                };
                let p = vec3::add(origin, vec3::scale(dir, t));
                let mut n = vec3::normalize(vec3::sub(p, *center));
                if vec3::dot(n, dir) > 0.0 {
                    n = vec3::scale(n, -1.0);
                }
                Some(Hit { t, point: p, normal: n, color: texture.sample(p) })
            }
            Primitive::BoxAab { min, max, texture } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let mut axis0 = 0usize;
                for a in 0..3 {
                    if dir[a].abs() < 1e-12 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let mut lo = (min[a] - origin[a]) / dir[a];
                    let mut hi = (max[a] - origin[a]) / dir[a];
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    if lo > t0 {
                        t0 = lo;
                        axis0 = a;
                    }
                    t1 = t1.min(hi);
                    if t0 > t1 {
                        return None;
                    }
                }
                let (t, axis) = if t0 > t_min {
                    (t0, axis0)
                } else if t1 > t_min {
                    // exiting face; recompute which slab bounds t1
                    let mut axis1 = 0usize;
                    let mut best = f64::INFINITY;
                    for a in 0..3 {
                        if dir[a].abs() < 1e-12 {
                            continue;
                        }
                        let hi = ((max[a] - origin[a]) / dir[a]).max((min[a] - origin[a]) / dir[a]);
                        if hi < best {
                            best = hi;
                            axis1 = a;
                        }
                    }
                    (t1, axis1)
                } else {
                    return None;
                };
                let p = vec3::add(origin, vec3::scale(dir, t));
                let mut n = [0.0; 3];
                n[axis] = if dir[axis] > 0.0 { -1.0 } else { 1.0 };
                if vec3::dot(n, dir) > 0.0 {
                    n = vec3::scale(n, -1.0);
                }
                Some(Hit { t, point: p, normal: n, color: texture.sample(p) })
            }
        }
    }

    /// Unsigned distance from `p` to the primitive surface (oracle helper).
    pub fn surface_distance(&self, p: [f64; 3]) -> f64 {
        match self {
            Primitive::Plane { point, normal, .. } => vec3::dot(vec3::sub(p, *point), *normal).abs(),
            Primitive::Sphere { center, radius, .. } => {
                (vec3::norm(vec3::sub(p, *center)) - radius).abs()
            }
            Primitive::BoxAab { min, max, .. } => {
                let mut outside = [0.0; 3];
                let mut inside_margin = f64::INFINITY;
                for a in 0..3 {
                    if p[a] < min[a] {
                        outside[a] = min[a] - p[a];
                    } else if p[a] > max[a] {
                        outside[a] = p[a] - max[a];
                    } else {
                        inside_margin = inside_margin.min((p[a] - min[a]).min(max[a] - p[a]));
                    }
                }
                let d_out = vec3::norm(outside);
                if d_out > 0.0 {
                    d_out
                } else {
                    inside_margin
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub primitives: Vec<Primitive>,
    /// Light direction used for shading (unit, pointing from surface to light).
    pub light: [f64; 3],
    /// Hits beyond this range are treated as invalid pixels.
    pub max_depth: f64,
}

impl SceneGeometry {
    /// First intersection over all primitives.
    pub fn trace(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for prim in &self.primitives {
            if let Some(hit) = prim.intersect(origin, dir, 1e-6) {
                if best.as_ref().map_or(true, |b| hit.t < b.t) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    /// Distance from `p` to the nearest generating surface.
    pub fn surface_distance(&self, p: [f64; 3]) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Lambertian-ish shade in `[0,1]`.
    pub fn shade(&self, hit: &Hit) -> [f64; 3] {
        let lambert = vec3::dot(hit.normal, self.light).max(0.0);
        let k = 0.35 + 0.65 * lambert;
        [
            (hit.color[0] * k).clamp(0.0, 1.0),
            (hit.color[1] * k).clamp(0.0, 1.0),
            (hit.color[2] * k).clamp(0.0, 1.0),
        ]
    }
}
