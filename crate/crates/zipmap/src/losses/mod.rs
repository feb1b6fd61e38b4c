//! The training objective: point, depth, camera, smoothness and query terms,
//! combined into a weighted total with a per-step report.

mod normalize;
mod roe;
mod terms;

pub use normalize::normalize_ground_truth;
pub use roe::roe_scale;
pub use terms::{
    camera_loss, camera_loss_aligned, camera_loss_refless, center_alignment, depth_grad_loss,
    depth_loss, normal_loss, point_loss, query_color_loss,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{unproject, Camera};
use crate::heads::Prediction;
use crate::numerics::{Real, Tensor};
use crate::synthdata::SceneBundle;
use crate::{Error, Result};

/// Camera-loss weight in the total objective.
pub const CAMERA_WEIGHT: f64 = 5.0;
/// Uncertainty regularizer weight in the depth losses.
pub const DEPTH_ALPHA: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraLossMode {
    /// Stage 1: L1 against cameras expressed relative to the reference view.
    ReferenceView,
    /// Stage 2: similarity-aligned, reference-free.
    AlignmentInvariant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    pub camera_mode: CameraLossMode,
    /// Include the query (target-view) losses.
    pub query: bool,
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { camera_mode: CameraLossMode::ReferenceView, query: false, alpha: DEPTH_ALPHA }
    }
}

/// Flattened ground truth for one (normalized) bundle subset.
pub struct GroundTruth {
    pub n_views: usize,
    pub h: usize,
    pub w: usize,
    pub cameras: Vec<Camera>,
    /// Stacked `n*h*w` depths.
    pub depth: Vec<f64>,
    /// Stacked `n*h*w*3` local points.
    pub points: Vec<f64>,
    pub mask: Vec<bool>,
    /// Normalization divisor recorded by [`normalize_ground_truth`].
    pub scale: f64,
}

impl GroundTruth {
    /// Flatten a normalized bundle. Local points come from unprojecting the
    /// (normalized) depths.
    pub fn from_bundle(bundle: &SceneBundle) -> Result<GroundTruth> {
        let (h, w) = (bundle.h, bundle.w);
        let n = bundle.n_views();
        let mut depth = Vec::with_capacity(n * h * w);
        let mut points = Vec::with_capacity(n * h * w * 3);
        let mut mask = Vec::with_capacity(n * h * w);
        for view in &bundle.views {
            let d = view.depth_f64();
            let pm = unproject(&d, h, w, &view.camera)?;
            depth.extend_from_slice(&d);
            points.extend_from_slice(&pm.data);
            mask.extend(view.valid.iter().copied());
        }
        Ok(GroundTruth {
            n_views: n,
            h,
            w,
            cameras: bundle.views.iter().map(|v| v.camera).collect(),
            depth,
            points,
            mask,
            scale: bundle.scale,
        })
    }
}

/// Ground truth for query target views (already normalized scale).
pub struct QueryTargets {
    pub m_views: usize,
    /// `m*h*w*3` RGB in [0,1].
    pub rgb: Vec<f64>,
    /// `m*h*w` depths in the normalized gauge.
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Per-step loss values. `total` is the weighted sum of the components with
/// weight 5 on the camera term and 1 elsewhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
    pub scale_hat: f64,
    pub warnings: Vec<String>,
}

impl LossReport {
    pub fn weighted_sum(&self) -> f64 {
        self.components
            .iter()
            .map(|(k, v)| if k == "camera" { CAMERA_WEIGHT * v } else { *v })
            .sum()
    }
}

/// Assemble the full objective for one prediction/ground-truth pair.
pub fn compute_losses<T: Real>(
    pred: &Prediction<T>,
    gt: &GroundTruth,
    targets: Option<&QueryTargets>,
    cfg: &LossConfig,
) -> Result<(Tensor<T>, LossReport)> {
    let mut warnings = Vec::new();
    let s_hat = roe_scale(&pred.points.to_f64_vec(), &gt.points, &gt.depth, &gt.mask)?;

    let point = point_loss(&pred.points, &gt.points, &gt.depth, &gt.mask, s_hat)?;
    let depth =
        depth_loss(&pred.depth, &pred.conf, &gt.depth, s_hat, &gt.mask, cfg.alpha)?;
    let camera = match cfg.camera_mode {
        CameraLossMode::ReferenceView => camera_loss(&pred.cameras, &gt.cameras, s_hat),
        CameraLossMode::AlignmentInvariant => camera_loss_refless(&pred.cameras, &gt.cameras)?,
    };
    let (normal, normal_warned) =
        normal_loss(&pred.points, &gt.points, &gt.mask, gt.n_views, gt.h, gt.w)?;
    if normal_warned {
        warnings.push("normal loss skipped: no valid interior pixels".into());
    }
    let dgrad = depth_grad_loss(
        &pred.depth,
        &pred.conf,
        &gt.depth,
        s_hat,
        &gt.mask,
        gt.n_views,
        gt.h,
        gt.w,
    )?;

    let mut components = BTreeMap::new();
    components.insert("point".to_string(), point.item().into_f64());
    components.insert("depth".to_string(), depth.item().into_f64());
    components.insert("camera".to_string(), camera.item().into_f64());
    components.insert("normal".to_string(), normal.item().into_f64());
    components.insert("depth_grad".to_string(), dgrad.item().into_f64());

    let mut total = point
        .add(&depth)
        .add(&camera.mul_scalar(T::from_f64(CAMERA_WEIGHT)))
        .add(&normal)
        .add(&dgrad);

    if cfg.query {
        let targets = targets
            .ok_or_else(|| Error::Usage("query losses enabled without targets".into()))?;
        if pred.m_query != targets.m_views {
            return Err(Error::Usage(format!(
                "prediction has {} query views, targets have {}",
                pred.m_query, targets.m_views
            )));
        }
        let color = query_color_loss(&pred.query_rgb, &targets.rgb, &targets.mask)?;
        let qdepth = depth_loss(
            &pred.query_depth,
            &pred.query_conf,
            &targets.depth,
            s_hat,
            &targets.mask,
            cfg.alpha,
        )?;
        components.insert("query_color".to_string(), color.item().into_f64());
        components.insert("query_depth".to_string(), qdepth.item().into_f64());
        total = total.add(&color).add(&qdepth);
    }

    let report = LossReport {
        total: total.item().into_f64(),
        components,
        scale_hat: s_hat,
        warnings,
    };
    Ok((total, report))
}
