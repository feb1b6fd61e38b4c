//! Scene construction: random layout, orbiting cameras, analytic rendering.

use super::scene::{Primitive, SceneGeometry, Texture};
use super::{SceneBundle, View};
use crate::geometry::{camera_to_raymap, mat_to_quat, Camera};
use crate::geometry::vec3;
use crate::numerics::Rng;
use crate::{Error, Result};

const MIN_VALID_FRACTION: f64 = 0.30;
const CAMERA_RETRIES: usize = 24;

/// Deterministically generate a textured scene and an orbiting camera arc.
///
/// `difficulty` in `[0,1]` scales object count, texture frequency and camera
/// jitter. Every view is guaranteed to see at least 30% valid pixels; cameras
/// violating that are re-drawn a bounded number of times.
pub fn generate_scene(
    seed: u64,
    n_views: usize,
    h: usize,
    w: usize,
    difficulty: f64,
) -> Result<SceneBundle> {
    if n_views < 2 {
        return Err(Error::Usage(format!("a scene needs at least 2 views, got {n_views}")));
    }
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("image extents must be positive, got {h}x{w}")));
    }
    let difficulty = difficulty.clamp(0.0, 1.0);
    let mut rng = Rng::new(seed).derive(0xD1CE);
    let geometry = build_geometry(&mut rng, difficulty);

    let mut views = Vec::with_capacity(n_views);
    // Smooth orbit: base azimuth sweep with per-view jitter.
    let radius = rng.uniform(2.6, 3.6);
    let height = rng.uniform(1.0, 2.0);
    let az0 = rng.uniform(0.0, std::f64::consts::TAU);
    let sweep = rng.uniform(0.6, 1.4) * std::f64::consts::PI;
    let jitter = 0.05 + 0.20 * difficulty;
    for i in 0..n_views {
        let mut placed = false;
        for attempt in 0..CAMERA_RETRIES {
            let mut vr = rng.derive(0xCA0 + (i * CAMERA_RETRIES + attempt) as u64);
            let az = az0
                + sweep * (i as f64 / (n_views - 1).max(1) as f64)
                + vr.uniform(-jitter, jitter);
            let r = radius * (1.0 + vr.uniform(-0.08, 0.08));
            let y = height * (1.0 + vr.uniform(-0.15, 0.15));
            let eye = [r * az.cos(), y, r * az.sin()];
            let target = [
                vr.uniform(-0.3, 0.3) * (0.5 + difficulty),
                vr.uniform(0.1, 0.5),
                vr.uniform(-0.3, 0.3) * (0.5 + difficulty),
            ];
            let fx = vr.uniform(0.8, 1.2);
            let fy = vr.uniform(0.8, 1.2);
            let cam = look_at(eye, target, fx, fy)?;
            if let Some(view) = render(&geometry, &cam, h, w) {
                views.push(view);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place camera {i} with >= {:.0}% valid pixels after {CAMERA_RETRIES} tries",
                MIN_VALID_FRACTION * 100.0
            )));
        }
    }

    Ok(SceneBundle { h, w, seed, difficulty, scale: 1.0, views, geometry })
}

fn build_geometry(rng: &mut Rng, difficulty: f64) -> SceneGeometry {
    let mut primitives = Vec::new();
    let cell = 0.25 + 0.55 * (1.0 - difficulty);
    primitives.push(Primitive::Plane {
        point: [0.0, 0.0, 0.0],
        normal: [0.0, 1.0, 0.0],
        texture: Texture::Checker {
            cell,
            color_a: [0.85, 0.82, 0.75],
            color_b: [0.25, 0.30, 0.35],
        },
    });
    let n_objects = 1 + (rng.uniform(0.0, 1.0) * (1.0 + 3.0 * difficulty)).floor() as usize;
    for _ in 0..n_objects.min(4) {
        let cx = rng.uniform(-1.4, 1.4);
        let cz = rng.uniform(-1.4, 1.4);
        let tex = random_texture(rng);
        if rng.uniform(0.0, 1.0) < 0.5 {
            let radius = rng.uniform(0.25, 0.6);
            primitives.push(Primitive::Sphere { center: [cx, radius, cz], radius, texture: tex });
        } else {
            let hx = rng.uniform(0.2, 0.5);
            let hy = rng.uniform(0.2, 0.7);
            let hz = rng.uniform(0.2, 0.5);
            primitives.push(Primitive::BoxAab {
                min: [cx - hx, 0.0, cz - hz],
                max: [cx + hx, 2.0 * hy, cz + hz],
                texture: tex,
            });
        }
    }
    let light = vec3::normalize([rng.uniform(-0.5, 0.5), 1.0, rng.uniform(-0.5, 0.5)]);
    SceneGeometry { primitives, light, max_depth: 30.0 }
}

fn random_texture(rng: &mut Rng) -> Texture {
    let color_a = [rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)];
    let color_b = [rng.uniform(0.0, 0.8), rng.uniform(0.0, 0.8), rng.uniform(0.0, 0.8)];
    if rng.uniform(0.0, 1.0) < 0.5 {
        Texture::Checker { cell: rng.uniform(0.1, 0.4), color_a, color_b }
    } else {
        Texture::Gradient { axis: rng.index(3), lo: -1.0, hi: 2.0, color_a, color_b }
    }
}

/// World-to-camera pose looking from `eye` toward `target` (y-up world,
/// x-right / y-down / z-forward camera).
pub fn look_at(eye: [f64; 3], target: [f64; 3], fx: f64, fy: f64) -> Result<Camera> {
    let forward = vec3::normalize(vec3::sub(target, eye));
    let up = [0.0, 1.0, 0.0];
    let right = vec3::normalize(vec3::cross(forward, up));
    if vec3::norm(right) < 1e-9 {
        return Err(Error::Degenerate("camera looking straight along world up".into()));
    }
    let down = vec3::cross(forward, right);
    let rot = [right, down, forward];
    let quat = mat_to_quat(rot);
    let t = [
        -vec3::dot(right, eye),
        -vec3::dot(down, eye),
        -vec3::dot(forward, eye),
    ];
    Camera::new(quat, t, fx, fy)
}

/// Render one view; `None` if fewer than 30% of pixels hit geometry in range.
fn render(geom: &SceneGeometry, cam: &Camera, h: usize, w: usize) -> Option<View> {
    let raymap = camera_to_raymap(cam, h, w).expect("extents checked by caller");
    let rot = cam.rotation();
    let eye = cam.center();
    let mut image = vec![0.0f32; h * w * 3];
    let mut depth = vec![0.0f32; h * w];
    let mut valid = vec![false; h * w];
    let mut n_valid = 0usize;
    for p in 0..h * w {
        let i = p * 9;
        let dir = [raymap.data[i + 3], raymap.data[i + 4], raymap.data[i + 5]];
        if let Some(hit) = geom.trace(eye, dir) {
            // z-depth in the camera frame, not range along the ray
            let rel = vec3::sub(hit.point, eye);
            let z = rot[2][0] * rel[0] + rot[2][1] * rel[1] + rot[2][2] * rel[2];
            if z > 1e-4 && z <= geom.max_depth {
                let rgb = geom.shade(&hit);
                image[p * 3] = rgb[0] as f32;
                image[p * 3 + 1] = rgb[1] as f32;
                image[p * 3 + 2] = rgb[2] as f32;
                depth[p] = z as f32;
                valid[p] = true;
                n_valid += 1;
            }
        }
    }
    if (n_valid as f64) < MIN_VALID_FRACTION * (h * w) as f64 {
        return None;
    }
    Some(View { camera: *cam, image, depth, valid })
}
