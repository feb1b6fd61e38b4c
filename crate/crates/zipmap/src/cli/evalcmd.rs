//! `eval` command: per-sequence metric reports and an aggregate CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Serialize;

use super::recon::fused_world_cloud;
use crate::geometry::{unproject, vec3, Camera};
use crate::heads::{load_prediction, Prediction};
use crate::losses::normalize_ground_truth;
use crate::metrics::{
    ate_rpe, chamfer_metrics, depth_metrics, pose_auc, DepthAlignment, DepthReport,
    PointCloudReport, TrajectoryReport,
};
use crate::synthdata::{load_bundle, SceneBundle};
use crate::{Error, Result};

const ICP_ITERS: usize = 10;
const AUC_THRESHOLDS: [u32; 3] = [5, 15, 30];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Ate,
    Auc,
    Chamfer,
    Depth,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::Ate, MetricKind::Auc, MetricKind::Chamfer, MetricKind::Depth];
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<MetricKind> {
        match s {
            "ate" => Ok(MetricKind::Ate),
            "auc" => Ok(MetricKind::Auc),
            "chamfer" => Ok(MetricKind::Chamfer),
            "depth" => Ok(MetricKind::Depth),
            other => Err(Error::Usage(format!(
                "unknown metric {other:?}; valid names: ate, auc, chamfer, depth"
            ))),
        }
    }
}

#[derive(Args)]
pub struct EvalArgs {
    /// Prediction bundle directory, or a directory of them.
    #[arg(long)]
    pub pred: PathBuf,
    /// Matching scene bundle directory, or a directory of them.
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated metric names (ate, auc, chamfer, depth).
    #[arg(long, default_value = "ate,auc,chamfer,depth", value_delimiter = ',')]
    pub metrics: Vec<MetricKind>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
pub struct SequenceReport {
    pub sequence: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ate: Option<TrajectoryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<BTreeMap<u32, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<PointCloudReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_scale: Option<DepthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_scale_shift: Option<DepthReport>,
}

fn sequence_dirs(root: &Path, manifest_name: &str) -> Result<Vec<(String, PathBuf)>> {
    if root.join(manifest_name).exists() {
        let name = root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
        return Ok(vec![(name, root.to_path_buf())]);
    }
    let mut dirs: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(manifest_name).exists())
        .map(|p| {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (name, p)
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Usage(format!("no sequences found under {}", root.display())));
    }
    Ok(dirs)
}

pub fn run_eval(args: EvalArgs) -> Result<()> {
    if args.metrics.is_empty() {
        return Err(Error::Usage("no metrics requested".into()));
    }
    let preds = sequence_dirs(&args.pred, "manifest.json")?;
    let gts = sequence_dirs(&args.gt, "manifest.json")?;
    if preds.len() != gts.len() {
        return Err(Error::Usage(format!(
            "{} prediction sequences vs {} ground-truth sequences",
            preds.len(),
            gts.len()
        )));
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut reports = Vec::new();
    for ((name, pred_dir), (_, gt_dir)) in preds.iter().zip(&gts) {
        let pred: Prediction<f32> = load_prediction(pred_dir)?;
        let bundle = load_bundle(gt_dir)?;
        let report = eval_sequence(name, &pred, &bundle, &args.metrics)?;
        let path = args.out.join(format!("{name}_metrics.json"));
        fs::write(&path, serde_json::to_string_pretty(&report).map_err(|e| Error::json(&path, e))?)
            .map_err(|e| Error::io(&path, e))?;
        reports.push(report);
    }
    write_csv(&args.out.join("summary.csv"), &reports)?;
    println!("evaluated {} sequences -> {}", reports.len(), args.out.display());
    Ok(())
}

pub fn eval_sequence(
    name: &str,
    pred: &Prediction<f32>,
    bundle: &SceneBundle,
    metrics: &[MetricKind],
) -> Result<SequenceReport> {
    let normed = normalize_ground_truth(bundle)?;
    let gt_cams: Vec<Camera> = normed.views.iter().map(|v| v.camera).collect();
    let pred_cams = pred.cameras_vec()?;
    if pred.n_views != gt_cams.len() {
        return Err(Error::Usage(format!(
            "prediction has {} views, ground truth has {}",
            pred.n_views,
            gt_cams.len()
        )));
    }
    let mut report = SequenceReport {
        sequence: name.to_string(),
        ate: None,
        auc: None,
        chamfer: None,
        depth_scale: None,
        depth_scale_shift: None,
    };
    for metric in metrics {
        match metric {
            MetricKind::Ate => report.ate = Some(ate_rpe(&pred_cams, &gt_cams)?),
            MetricKind::Auc => {
                report.auc = Some(pose_auc(&pred_cams, &gt_cams, &AUC_THRESHOLDS)?)
            }
            MetricKind::Chamfer => {
                report.chamfer = Some(chamfer_sequence(pred, &normed)?);
            }
            MetricKind::Depth => {
                let gt_depth: Vec<f64> =
                    normed.views.iter().flat_map(|v| v.depth.iter().map(|&d| d as f64)).collect();
                let valid: Vec<bool> =
                    normed.views.iter().flat_map(|v| v.valid.iter().copied()).collect();
                let pred_depth: Vec<f64> =
                    pred.depth.data().iter().map(|&d| d as f64).collect();
                report.depth_scale = Some(depth_metrics(
                    &pred_depth,
                    &gt_depth,
                    &valid,
                    DepthAlignment::Scale,
                    pred.n_views,
                    true,
                )?);
                report.depth_scale_shift = Some(depth_metrics(
                    &pred_depth,
                    &gt_depth,
                    &valid,
                    DepthAlignment::ScaleShift,
                    pred.n_views,
                    true,
                )?);
            }
        }
    }
    Ok(report)
}

/// Fused predicted cloud vs ground-truth cloud, matched through the common
/// pixel grid for ICP initialization.
fn chamfer_sequence(pred: &Prediction<f32>, gt: &SceneBundle) -> Result<PointCloudReport> {
    let (pred_pts, pred_normals) = fused_world_cloud(pred)?;
    let (h, w) = (gt.h, gt.w);
    let mut gt_pts = Vec::new();
    let mut gt_normals = Vec::new();
    let mut matched = Vec::new();
    for (v, view) in gt.views.iter().enumerate() {
        let pm = unproject(&view.depth_f64(), h, w, &view.camera)?;
        let rot = view.camera.rotation();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if !view.valid[i] {
                    continue;
                }
                let right = if c + 1 < w { i + 1 } else { i - 1 };
                let down = if r + 1 < h { i + w } else { i - w };
                if !view.valid[right] || !view.valid[down] {
                    continue;
                }
                let at = |k: usize| [pm.data[k * 3], pm.data[k * 3 + 1], pm.data[k * 3 + 2]];
                let n = vec3::normalize(vec3::cross(
                    vec3::sub(at(right), at(i)),
                    vec3::sub(at(down), at(i)),
                ));
                matched.push((v * h * w + i, gt_pts.len()));
                gt_pts.push(view.camera.cam_to_world(at(i)));
                gt_normals.push([
                    rot[0][0] * n[0] + rot[1][0] * n[1] + rot[2][0] * n[2],
                    rot[0][1] * n[0] + rot[1][1] * n[1] + rot[2][1] * n[2],
                    rot[0][2] * n[0] + rot[1][2] * n[1] + rot[2][2] * n[2],
                ]);
            }
        }
    }
    chamfer_metrics(&pred_pts, &pred_normals, &gt_pts, &gt_normals, ICP_ITERS, &matched)
}

fn write_csv(path: &Path, reports: &[SequenceReport]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(
        w,
        "sequence,ate_rmse,rpe_trans,rpe_rot,auc5,auc15,auc30,acc_mean,acc_median,comp_mean,comp_median,nc_mean,nc_median,absrel_scale,delta_scale,absrel_scale_shift,delta_scale_shift"
    )
    .map_err(io)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in reports {
        let auc = |t: u32| r.auc.as_ref().and_then(|m| m.get(&t).copied());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sequence,
            fmt(r.ate.map(|a| a.ate_rmse)),
            fmt(r.ate.map(|a| a.rpe_trans)),
            fmt(r.ate.map(|a| a.rpe_rot)),
            fmt(auc(5)),
            fmt(auc(15)),
            fmt(auc(30)),
            fmt(r.chamfer.map(|c| c.acc_mean)),
            fmt(r.chamfer.map(|c| c.acc_median)),
            fmt(r.chamfer.map(|c| c.comp_mean)),
            fmt(r.chamfer.map(|c| c.comp_median)),
            fmt(r.chamfer.map(|c| c.nc_mean)),
            fmt(r.chamfer.map(|c| c.nc_median)),
            fmt(r.depth_scale.map(|d| d.abs_rel)),
            fmt(r.depth_scale.map(|d| d.delta_125)),
            fmt(r.depth_scale_shift.map(|d| d.abs_rel)),
            fmt(r.depth_scale_shift.map(|d| d.delta_125)),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
