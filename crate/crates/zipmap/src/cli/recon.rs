//! `recon` and `query` commands.

use std::path::{Path, PathBuf};

use clap::Args;

use super::state::{load_scene_state, save_scene_state};
use crate::backbone::{
    forward_bidirectional, forward_query, forward_streaming, init_streaming_state, BackboneMode,
};
use crate::geometry::{vec3, Camera};
use crate::heads::{
    decode_all, decode_query_features, decode_stream_step, save_prediction, write_ply, Prediction,
};
use crate::losses::normalize_ground_truth;
use crate::numerics::{concat_rows, no_grad, write_zten, Tensor};
use crate::synthdata::load_bundle;
use crate::trainer::{load_checkpoint, target_camera_scale, conditioned_raymap};
use crate::{Error, Result};

#[derive(Args)]
pub struct ReconArgs {
    /// Trained checkpoint directory.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Scene bundle directory to reconstruct.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Update the scene state one view at a time instead of one chunk.
    #[arg(long)]
    pub streaming: bool,
}

#[derive(Args)]
pub struct QueryArgs {
    /// Scene state directory written by `recon`.
    #[arg(long)]
    pub state: PathBuf,
    /// Target camera: 9 comma-separated floats `w,x,y,z,tx,ty,tz,fx,fy`,
    /// or `<bundle_dir>:<view_index>` to reference a saved camera.
    #[arg(long)]
    pub camera: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_recon(args: ReconArgs) -> Result<()> {
    let ck = load_checkpoint::<f32>(&args.ckpt)?;
    let bundle = load_bundle(&args.scene)?;
    // inputs are consumed in the normalized gauge the model was trained in
    let normed = normalize_ground_truth(&bundle)?;
    let (h, w) = (normed.h, normed.w);
    let imgs: Vec<&[f32]> = normed.views.iter().map(|v| v.image.as_slice()).collect();
    let mut params = ck.params;

    let (pred, state) = no_grad(|| -> Result<_> {
        if args.streaming {
            let mut state = init_streaming_state(&params);
            let mut cams = Vec::new();
            let mut depths = Vec::new();
            let mut confs = Vec::new();
            let mut points = Vec::new();
            for img in &imgs {
                let step = forward_streaming(&params, &mut state, img, h, w)?;
                let (camera, depth, conf, pts) = decode_stream_step(&params, &step, h, w);
                cams.push(camera);
                depths.push(depth);
                confs.push(conf);
                points.push(pts);
            }
            let pred = Prediction {
                n_views: imgs.len(),
                h,
                w,
                m_query: 0,
                cameras: concat_rows(&cams),
                depth: concat_rows(&depths),
                conf: concat_rows(&confs),
                points: concat_rows(&points),
                query_rgb: Tensor::zeros(&[0, 3]),
                query_depth: Tensor::zeros(&[0, 1]),
                query_conf: Tensor::zeros(&[0, 1]),
            };
            Ok((pred, state))
        } else {
            let fwd = forward_bidirectional(&params, &imgs, h, w, &[], BackboneMode::FastWeight)?;
            let pred = decode_all(&params, &fwd, h, w, false)?;
            Ok((pred, fwd.state))
        }
    })?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_prediction(&pred, args.out.join("prediction"))?;
    write_fused_cloud(&pred, &imgs, args.out.join("cloud.ply"))?;
    let cams = pred.cameras_vec()?;
    let scale = target_camera_scale(&cams);
    save_scene_state(args.out.join("scene_state"), &state, &mut params, scale, h, w)?;
    println!(
        "reconstructed {} views -> {} (prediction, cloud.ply, scene_state)",
        pred.n_views,
        args.out.display()
    );
    Ok(())
}

/// Local points transformed by the predicted cameras, colored by the inputs.
fn write_fused_cloud(pred: &Prediction<f32>, imgs: &[&[f32]], path: impl AsRef<Path>) -> Result<()> {
    let px = pred.h * pred.w;
    let mut points = Vec::with_capacity(pred.n_views * px);
    let mut colors = Vec::with_capacity(pred.n_views * px);
    for v in 0..pred.n_views {
        let cam = pred.camera(v)?;
        let pts = pred.view_rows(&pred.points, v);
        for p in 0..px {
            let local = [
                pts[p * 3] as f64,
                pts[p * 3 + 1] as f64,
                pts[p * 3 + 2] as f64,
            ];
            points.push(cam.cam_to_world(local));
            colors.push([
                imgs[v][p * 3] as f64,
                imgs[v][p * 3 + 1] as f64,
                imgs[v][p * 3 + 2] as f64,
            ]);
        }
    }
    write_ply(path, &points, &colors)
}

pub fn run_query(args: QueryArgs) -> Result<()> {
    let scene = load_scene_state(&args.state)?;
    let camera = parse_camera(&args.camera)?;
    let raymap = conditioned_raymap(&camera, scene.query_translation_scale, scene.h, scene.w)?;
    let (rgb, depth, conf) = no_grad(|| -> Result<_> {
        let features = forward_query(&scene.params, &scene.state, &[&raymap])?;
        Ok(decode_query_features(
            &scene.params,
            &features,
            (scene.h / scene.params.config.patch, scene.w / scene.params.config.patch),
            scene.h,
            scene.w,
        ))
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_zten(args.out.join("query_rgb.zten"), &rgb)?;
    write_zten(args.out.join("query_depth.zten"), &depth)?;
    write_zten(args.out.join("query_conf.zten"), &conf)?;
    // back-project the queried depth for quick visualization
    let cloud: Vec<[f64; 3]> = {
        let depth64: Vec<f64> = depth.data().iter().map(|&d| d as f64).collect();
        let pm = crate::geometry::unproject(&depth64, scene.h, scene.w, &camera)?;
        (0..scene.h * scene.w)
            .map(|i| camera.cam_to_world([pm.data[i * 3], pm.data[i * 3 + 1], pm.data[i * 3 + 2]]))
            .collect()
    };
    let colors: Vec<[f64; 3]> = (0..scene.h * scene.w)
        .map(|i| {
            [
                rgb.data()[i * 3] as f64,
                rgb.data()[i * 3 + 1] as f64,
                rgb.data()[i * 3 + 2] as f64,
            ]
        })
        .collect();
    write_ply(args.out.join("query_cloud.ply"), &cloud, &colors)?;
    println!("queried state -> {}", args.out.display());
    Ok(())
}

fn parse_camera(spec: &str) -> Result<Camera> {
    if let Some((dir, idx)) = spec.rsplit_once(':') {
        if let Ok(i) = idx.parse::<usize>() {
            if Path::new(dir).join("manifest.json").exists() {
                let bundle = load_bundle(dir)?;
                let normed = normalize_ground_truth(&bundle)?;
                if i >= normed.views.len() {
                    return Err(Error::Usage(format!(
                        "view index {i} out of range ({} views)",
                        normed.views.len()
                    )));
                }
                return Ok(normed.views[i].camera);
            }
        }
    }
    let parts: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("camera spec must be 9 floats: {e}")))?;
    if parts.len() != 9 {
        return Err(Error::Usage(format!("camera spec needs 9 floats, got {}", parts.len())));
    }
    Camera::from_vec9(&parts)
}

pub(super) fn fused_world_cloud(
    pred: &Prediction<f32>,
) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    let px = pred.h * pred.w;
    let mut points = Vec::with_capacity(pred.n_views * px);
    let mut normals = Vec::with_capacity(pred.n_views * px);
    for v in 0..pred.n_views {
        let cam = pred.camera(v)?;
        let pts = pred.view_rows(&pred.points, v);
        let local: Vec<[f64; 3]> = (0..px)
            .map(|p| [pts[p * 3] as f64, pts[p * 3 + 1] as f64, pts[p * 3 + 2] as f64])
            .collect();
        for r in 0..pred.h {
            for c in 0..pred.w {
                let i = r * pred.w + c;
                let right = if c + 1 < pred.w { i + 1 } else { i - 1 };
                let downn = if r + 1 < pred.h { i + pred.w } else { i - pred.w };
                let n = vec3::normalize(vec3::cross(
                    vec3::sub(local[right], local[i]),
                    vec3::sub(local[downn], local[i]),
                ));
                points.push(cam.cam_to_world(local[i]));
                // rotate the normal to the world frame (R^T n)
                let rot = cam.rotation();
                normals.push([
                    rot[0][0] * n[0] + rot[1][0] * n[1] + rot[2][0] * n[2],
                    rot[0][1] * n[0] + rot[1][1] * n[1] + rot[2][1] * n[2],
                    rot[0][2] * n[0] + rot[1][2] * n[1] + rot[2][2] * n[2],
                ]);
            }
        }
    }
    Ok((points, normals))
}
