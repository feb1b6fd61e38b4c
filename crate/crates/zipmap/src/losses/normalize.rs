//! Ground-truth normalization: reference-view frame + global metric scale.

use crate::geometry::{relative_camera, unproject, Camera};
use crate::synthdata::SceneBundle;
use crate::{Error, Result};

/// Re-express all cameras relative to view 0 (which becomes the identity) and
/// divide translations, depths and points by the mean norm of all valid
/// points in the reference frame. The divisor is recorded in `scale`.
pub fn normalize_ground_truth(bundle: &SceneBundle) -> Result<SceneBundle> {
    if bundle.views.is_empty() {
        return Err(Error::Degenerate("bundle has no views".into()));
    }
    let mut out = bundle.clone();
    let ref_cam = bundle.views[0].camera;
    for view in out.views.iter_mut() {
        view.camera = relative_camera(&ref_cam, &view.camera);
    }
    // Mean norm of valid points expressed in the new world (= view-0) frame.
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for view in &out.views {
        let pm = unproject(&view.depth_f64(), out.h, out.w, &view.camera)?;
        for (i, &ok) in view.valid.iter().enumerate() {
            if !ok {
                continue;
            }
            let p = [pm.data[i * 3], pm.data[i * 3 + 1], pm.data[i * 3 + 2]];
            let w = view.camera.cam_to_world(p);
            acc += (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            count += 1;
        }
    }
    if count == 0 || acc <= 1e-12 {
        return Err(Error::Degenerate("zero scale: no valid geometry".into()));
    }
    let scale = acc / count as f64;
    for view in out.views.iter_mut() {
        let t = view.camera.trans;
        view.camera = Camera {
            trans: [t[0] / scale, t[1] / scale, t[2] / scale],
            ..view.camera
        };
        for d in view.depth.iter_mut() {
            *d = ((*d as f64) / scale) as f32;
        }
    }
    out.scale = scale;
    Ok(out)
}
