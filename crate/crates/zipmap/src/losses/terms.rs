//! Individual training-loss terms.
//!
//! Ground truth enters as plain `f64` slices and becomes constant tensors;
//! predictions are graph tensors, so every term is differentiable w.r.t. the
//! model. The global scale `s_hat` is always a detached constant.

use crate::geometry::{mat_to_quat, umeyama_align, vec3, Camera, Sim3};
use crate::numerics::{concat_cols, Real, Tensor};
use crate::{Error, Result};

fn consts<T: Real>(shape: &[usize], data: &[f64]) -> Tensor<T> {
    Tensor::from_f64_slice(shape, data)
}

/// Scale-invariant local point loss:
/// mean over valid pixels of `|s p - p*|_1 / (3 z*)`.
pub fn point_loss<T: Real>(
    pred_points: &Tensor<T>,
    gt_points: &[f64],
    gt_z: &[f64],
    mask: &[bool],
    s_hat: f64,
) -> Result<Tensor<T>> {
    let n = gt_z.len();
    assert_eq!(pred_points.shape(), &[n, 3], "pred points shape");
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Degenerate("point loss with an empty mask".into()));
    }
    let mut w = vec![0.0f64; n * 3];
    for k in 0..n {
        if mask[k] {
            let denom = 3.0 * gt_z[k] * count as f64;
            for c in 0..3 {
                w[k * 3 + c] = 1.0 / denom;
            }
        }
    }
    let diff = pred_points
        .mul_scalar(T::from_f64(s_hat))
        .sub(&consts(&[n, 3], gt_points))
        .abs();
    Ok(diff.mul(&consts(&[n, 3], &w)).sum_all())
}

/// Confidence-weighted depth loss:
/// mean over valid pixels of `conf * |s D - D*| - alpha * ln conf`.
pub fn depth_loss<T: Real>(
    pred_depth: &Tensor<T>,
    conf: &Tensor<T>,
    gt_depth: &[f64],
    s_hat: f64,
    mask: &[bool],
    alpha: f64,
) -> Result<Tensor<T>> {
    let n = gt_depth.len();
    assert_eq!(pred_depth.numel(), n, "pred depth length");
    assert_eq!(conf.numel(), n, "conf length");
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Degenerate("depth loss with an empty mask".into()));
    }
    let w: Vec<f64> =
        mask.iter().map(|&m| if m { 1.0 / count as f64 } else { 0.0 }).collect();
    let w = consts(&[n], &w).reshape(&[n, 1]);
    let pred = pred_depth.reshape(&[n, 1]);
    let conf = conf.reshape(&[n, 1]);
    let err = pred
        .mul_scalar(T::from_f64(s_hat))
        .sub(&consts(&[n, 1], gt_depth))
        .abs()
        .mul(&conf);
    let reg = conf.ln().mul_scalar(T::from_f64(-alpha));
    Ok(err.add(&reg).mul(&w).sum_all())
}

fn gt_cam_tensor<T: Real>(gt: &[Camera]) -> Tensor<T> {
    let rows: Vec<f64> = gt.iter().flat_map(|c| c.to_vec9()).collect();
    consts(&[gt.len(), 9], &rows)
}

/// Reference-view camera loss: mean over views of the L1 difference of the
/// 9-vectors, predicted translation pre-scaled by `s_hat`.
pub fn camera_loss<T: Real>(pred: &Tensor<T>, gt: &[Camera], s_hat: f64) -> Tensor<T> {
    let n = gt.len();
    assert_eq!(pred.shape(), &[n, 9], "camera rows");
    let scale_row = consts(&[9], &[1.0, 1.0, 1.0, 1.0, s_hat, s_hat, s_hat, 1.0, 1.0]);
    let diff = pred.mul_row(&scale_row).sub(&gt_cam_tensor(gt)).abs();
    diff.sum_all().mul_scalar(T::from_f64(1.0 / n as f64))
}

/// Similarity alignment of predicted camera centers to ground-truth centers;
/// the aligned transform is detached, so gradients flow only through the
/// (transformed) predictions.
pub fn center_alignment(pred: &[Camera], gt: &[Camera]) -> Sim3 {
    let src: Vec<[f64; 3]> = pred.iter().map(|c| c.center()).collect();
    let dst: Vec<[f64; 3]> = gt.iter().map(|c| c.center()).collect();
    if src.len() >= 3 {
        if let Ok(sim) = umeyama_align(&src, &dst, true) {
            return sim;
        }
    }
    // Two cameras (or collinear centers): canonical fallback — match spread
    // and the principal direction between the first and last centers.
    let (s0, s1) = (src[0], src[src.len() - 1]);
    let (d0, d1) = (dst[0], dst[dst.len() - 1]);
    let ds = vec3::sub(s1, s0);
    let dd = vec3::sub(d1, d0);
    let ns = vec3::norm(ds);
    let nd = vec3::norm(dd);
    let scale = if ns > 1e-12 && nd > 1e-12 { nd / ns } else { 1.0 };
    let rot = if ns > 1e-12 && nd > 1e-12 {
        rotation_between(vec3::scale(ds, 1.0 / ns), vec3::scale(dd, 1.0 / nd))
    } else {
        Sim3::identity().rot
    };
    let centroid_s = vec3::scale(vec3::add(s0, s1), 0.5);
    let centroid_d = vec3::scale(vec3::add(d0, d1), 0.5);
    let mut sim = Sim3 { scale, rot, trans: [0.0; 3] };
    sim.trans = vec3::sub(centroid_d, vec3::scale(sim.rotate(centroid_s), scale));
    sim
}

/// Minimal rotation taking unit vector `a` to unit vector `b`.
fn rotation_between(a: [f64; 3], b: [f64; 3]) -> [[f64; 3]; 3] {
    let axis = vec3::cross(a, b);
    let c = vec3::dot(a, b).clamp(-1.0, 1.0);
    let s = vec3::norm(axis);
    if s < 1e-12 {
        if c > 0.0 {
            return Sim3::identity().rot;
        }
        // opposite directions: rotate pi about any perpendicular axis
        let perp = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let axis = vec3::normalize(vec3::cross(a, perp));
        return axis_angle(axis, std::f64::consts::PI);
    }
    axis_angle(vec3::scale(axis, 1.0 / s), s.atan2(c))
}

fn axis_angle(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Alignment-invariant camera loss: predicted centers are aligned to the
/// ground-truth centers by a similarity, predicted orientations rotated by
/// the recovered rotation, then the reference-view L1 is applied. Invariant
/// to any global similarity applied to the prediction set.
pub fn camera_loss_refless<T: Real>(pred: &Tensor<T>, gt: &[Camera]) -> Result<Tensor<T>> {
    let n = gt.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "alignment-invariant camera loss needs >= 2 views, got {n}"
        )));
    }
    assert_eq!(pred.shape(), &[n, 9], "camera rows");
    let pred_cams: Vec<Camera> = (0..n)
        .map(|i| {
            let row: Vec<f64> =
                pred.data()[i * 9..(i + 1) * 9].iter().map(|v| v.into_f64()).collect();
            Camera::from_vec9(&row)
        })
        .collect::<Result<_>>()?;
    let sim = center_alignment(&pred_cams, gt);
    Ok(camera_loss_aligned(pred, gt, &sim))
}

/// The differentiable part of the alignment-invariant loss, with the
/// (detached) similarity supplied by the caller.
pub fn camera_loss_aligned<T: Real>(pred: &Tensor<T>, gt: &[Camera], sim: &Sim3) -> Tensor<T> {
    let n = gt.len();
    // Right-multiplication by conj(q_sim) is linear in the predicted
    // quaternion rows: q' = q x p  <=>  q'_row = q_row M^T.
    let p = {
        let q_sim = mat_to_quat(sim.rot);
        [q_sim[0], -q_sim[1], -q_sim[2], -q_sim[3]]
    };
    #[rustfmt::skip]
    let m = [
        p[0], -p[1], -p[2], -p[3],
        p[1],  p[0],  p[3], -p[2],
        p[2], -p[3],  p[0],  p[1],
        p[3],  p[2], -p[1],  p[0],
    ];
    let m_t = consts::<T>(&[4, 4], &m);
    let q_aligned = pred.slice_cols(0, 4).matmul_nt(&m_t);
    // sign fix (piecewise constant, detached)
    let signs: Vec<T> = (0..n)
        .map(|i| if q_aligned.data()[i * 4] < T::zero() { -T::one() } else { T::one() })
        .collect();
    let q_aligned = q_aligned.mul_col(&Tensor::from_vec(&[n], signs));
    // t' = s t - R'_i t_sim, with R'_i applied via the aligned quaternion
    let rot_t = q_aligned.quat_rotate_const(sim.trans);
    let t_aligned =
        pred.slice_cols(4, 7).mul_scalar(T::from_f64(sim.scale)).sub(&rot_t);
    let focals = pred.slice_cols(7, 9);
    let aligned = concat_cols(&[q_aligned, t_aligned, focals]);
    let diff = aligned.sub(&gt_cam_tensor(gt)).abs();
    diff.sum_all().mul_scalar(T::from_f64(1.0 / n as f64))
}

/// Index maps for forward differences inside each view of a stacked
/// `[n_views * h * w]` raster. Out-of-range neighbors point at themselves
/// and must be masked out by the weights.
fn neighbor_indices(n_views: usize, h: usize, w: usize) -> (Vec<usize>, Vec<usize>) {
    let mut right = Vec::with_capacity(n_views * h * w);
    let mut down = Vec::with_capacity(n_views * h * w);
    for v in 0..n_views {
        let base = v * h * w;
        for r in 0..h {
            for c in 0..w {
                let i = base + r * w + c;
                right.push(if c + 1 < w { i + 1 } else { i });
                down.push(if r + 1 < h { i + w } else { i });
            }
        }
    }
    (right, down)
}

/// Normal-consistency loss on point maps: angle between predicted and
/// ground-truth surface normals from forward-difference cross products.
/// Returns the loss and whether it degenerated to zero (no valid interior
/// pixels).
pub fn normal_loss<T: Real>(
    pred_points: &Tensor<T>,
    gt_points: &[f64],
    mask: &[bool],
    n_views: usize,
    h: usize,
    w: usize,
) -> Result<(Tensor<T>, bool)> {
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("normal loss needs h,w >= 2, got {h}x{w}")));
    }
    let n = n_views * h * w;
    assert_eq!(pred_points.shape(), &[n, 3], "pred points shape");
    let (right, down) = neighbor_indices(n_views, h, w);

    // ground-truth normals + validity in f64
    let gt_at = |i: usize| [gt_points[i * 3], gt_points[i * 3 + 1], gt_points[i * 3 + 2]];
    let mut gt_n = vec![0.0f64; n * 3];
    let mut valid = vec![false; n];
    let mut count = 0usize;
    for i in 0..n {
        let (ri, di) = (right[i], down[i]);
        if ri == i || di == i || !mask[i] || !mask[ri] || !mask[di] {
            continue;
        }
        let nx = vec3::cross(vec3::sub(gt_at(ri), gt_at(i)), vec3::sub(gt_at(di), gt_at(i)));
        let norm = vec3::norm(nx);
        if norm < 1e-12 {
            continue;
        }
        let u = vec3::scale(nx, 1.0 / norm);
        gt_n[i * 3..i * 3 + 3].copy_from_slice(&u);
        valid[i] = true;
        count += 1;
    }
    if count == 0 {
        return Ok((Tensor::scalar(T::zero()), true));
    }

    let dx = pred_points.gather_rows(&right).sub(pred_points);
    let dy = pred_points.gather_rows(&down).sub(pred_points);
    let cross = dx.cross3(&dy)?;
    let norms = cross
        .square()
        .sum_axis1()
        .add_scalar(T::from_f64(1e-24))
        .sqrt();
    let unit = cross.mul_col(&norms.recip());
    let dot = unit.mul(&consts(&[n, 3], &gt_n)).sum_axis1();
    // clamp epsilon small enough that aligned normals read as ~0 angle
    let ang = dot.arccos_clamped(T::from_f64(1e-12));
    let weights: Vec<f64> =
        valid.iter().map(|&v| if v { 1.0 / count as f64 } else { 0.0 }).collect();
    Ok((ang.mul(&consts(&[n], &weights)).sum_all(), false))
}

/// Confidence-weighted smoothness loss on forward depth differences.
pub fn depth_grad_loss<T: Real>(
    pred_depth: &Tensor<T>,
    conf: &Tensor<T>,
    gt_depth: &[f64],
    s_hat: f64,
    mask: &[bool],
    n_views: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let n = n_views * h * w;
    assert_eq!(pred_depth.numel(), n, "pred depth length");
    let (right, down) = neighbor_indices(n_views, h, w);
    let mut wx = vec![0.0f64; n];
    let mut wy = vec![0.0f64; n];
    let mut count = 0usize;
    for i in 0..n {
        if right[i] != i && mask[i] && mask[right[i]] {
            wx[i] = 1.0;
            count += 1;
        }
        if down[i] != i && mask[i] && mask[down[i]] {
            wy[i] = 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(Tensor::scalar(T::zero()));
    }
    for v in wx.iter_mut().chain(wy.iter_mut()) {
        *v /= count as f64;
    }
    let d = pred_depth.reshape(&[n, 1]).mul_scalar(T::from_f64(s_hat));
    let conf = conf.reshape(&[n, 1]);
    let gt_dx: Vec<f64> = (0..n).map(|i| gt_depth[right[i]] - gt_depth[i]).collect();
    let gt_dy: Vec<f64> = (0..n).map(|i| gt_depth[down[i]] - gt_depth[i]).collect();
    let term = |idx: &[usize], gt_diff: &[f64], weights: &[f64]| {
        let diff = d.gather_rows(idx).sub(&d).sub(&consts(&[n, 1], gt_diff)).abs();
        diff.mul(&conf).mul(&consts(&[n], weights).reshape(&[n, 1])).sum_all()
    };
    Ok(term(&right, &gt_dx, &wx).add(&term(&down, &gt_dy, &wy)))
}

/// Query color loss: `10 x MSE` over valid target pixels (per channel).
pub fn query_color_loss<T: Real>(
    pred_rgb: &Tensor<T>,
    gt_rgb: &[f64],
    mask: &[bool],
) -> Result<Tensor<T>> {
    let n = mask.len();
    assert_eq!(pred_rgb.shape(), &[n, 3], "query rgb shape");
    assert_eq!(gt_rgb.len(), n * 3, "gt rgb length");
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Degenerate("query color loss with an empty mask".into()));
    }
    let mut w = vec![0.0f64; n * 3];
    for k in 0..n {
        if mask[k] {
            for c in 0..3 {
                w[k * 3 + c] = 1.0 / (3.0 * count as f64);
            }
        }
    }
    let diff = pred_rgb.sub(&consts(&[n, 3], gt_rgb)).square();
    Ok(diff.mul(&consts(&[n, 3], &w)).sum_all().mul_scalar(T::from_f64(10.0)))
}
