//! Prediction heads: cameras, depth + confidence, local points, query RGB-D.

mod io;

pub use io::{load_prediction, save_prediction, write_ply};

use crate::backbone::{CameraHeadParams, DenseHeadParams, ForwardOutput, ModelParams, StreamStep};
use crate::geometry::Camera;
use crate::numerics::{concat_cols, concat_rows, Real, Tensor};
use crate::{Error, Result};

const CONF_MIN: f64 = 1e-3;
const CONF_MAX: f64 = 1e3;
const FOCAL_EPS: f64 = 1e-4;

/// Model outputs for one forward pass. Dense maps are stored flat with
/// views stacked along rows: `[n_views * h * w, channels]`.
pub struct Prediction<T: Real> {
    pub n_views: usize,
    pub h: usize,
    pub w: usize,
    pub m_query: usize,
    /// `[n_views, 9]` camera rows (unit quaternion w>=0, translation, focals).
    pub cameras: Tensor<T>,
    pub depth: Tensor<T>,
    pub conf: Tensor<T>,
    pub points: Tensor<T>,
    pub query_rgb: Tensor<T>,
    pub query_depth: Tensor<T>,
    pub query_conf: Tensor<T>,
}

impl<T: Real> Prediction<T> {
    pub fn camera(&self, i: usize) -> Result<Camera> {
        let row = &self.cameras.data()[i * 9..(i + 1) * 9];
        Camera::from_vec9(&row.iter().map(|v| v.into_f64()).collect::<Vec<_>>())
    }

    pub fn cameras_vec(&self) -> Result<Vec<Camera>> {
        (0..self.n_views).map(|i| self.camera(i)).collect()
    }

    /// Per-view slice of a stacked dense map.
    pub fn view_rows<'a>(&self, t: &'a Tensor<T>, i: usize) -> &'a [T] {
        let px = self.h * self.w;
        let ch = t.dim(1);
        &t.data()[i * px * ch..(i + 1) * px * ch]
    }
}

/// Two-layer MLP from camera tokens to 9-vector cameras; quaternion part is
/// row-normalized with the w >= 0 sign fix, focals go through softplus.
pub fn camera_head<T: Real>(params: &CameraHeadParams<T>, tokens: &Tensor<T>) -> Tensor<T> {
    let n = tokens.dim(0);
    let hidden = tokens.matmul(&params.w1).add_row(&params.b1).silu();
    let raw = hidden.matmul(&params.w2).add_row(&params.b2);
    let q = raw.slice_cols(0, 4);
    let norms = q.square().sum_axis1().sqrt().clamp(T::from_f64(1e-12), T::infinity());
    let qn = q.mul_col(&norms.recip());
    // Sign fix is piecewise constant; treat it as data, not graph.
    let signs: Vec<T> = (0..n)
        .map(|i| if qn.data()[i * 4] < T::zero() { -T::one() } else { T::one() })
        .collect();
    let qs = qn.mul_col(&Tensor::from_vec(&[n], signs));
    let trans = raw.slice_cols(4, 7);
    let focals = raw.slice_cols(7, 9).softplus().add_scalar(T::from_f64(FOCAL_EPS));
    concat_cols(&[qs, trans, focals])
}

/// Dense per-pixel head over 4 feature levels of one view: per-level linear
/// projection, bilinear upsampling to `h x w`, channel concat, two 3x3
/// mixing layers, per-pixel output projection.
pub fn dense_head<T: Real>(
    head: &DenseHeadParams<T>,
    features: &[Tensor<T>],
    grid: (usize, usize),
    out: (usize, usize),
) -> Tensor<T> {
    assert_eq!(features.len(), head.proj_w.len(), "feature level count");
    let (gh, gw) = grid;
    let (h, w) = out;
    let ups: Vec<Tensor<T>> = features
        .iter()
        .zip(head.proj_w.iter().zip(&head.proj_b))
        .map(|(f, (w_p, b_p))| {
            f.matmul(w_p).add_row(b_p).upsample_bilinear(gh, gw, h, w)
        })
        .collect();
    let x = concat_cols(&ups);
    let x = x.im2col3x3(h, w).matmul(&head.conv1_w).add_row(&head.conv1_b).silu();
    let x = x.im2col3x3(h, w).matmul(&head.conv2_w).add_row(&head.conv2_b).silu();
    x.matmul(&head.out_w).add_row(&head.out_b)
}

fn decode_depth_conf<T: Real>(raw: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let depth = raw.slice_cols(0, 1).exp();
    let conf = raw.slice_cols(1, 2).exp().clamp(T::from_f64(CONF_MIN), T::from_f64(CONF_MAX));
    (depth, conf)
}

/// Points decode with signed x/y and exponential z (positivity by
/// construction).
fn decode_points<T: Real>(raw: &Tensor<T>) -> Tensor<T> {
    let xy = raw.slice_cols(0, 2);
    let z = raw.slice_cols(2, 3).exp();
    concat_cols(&[xy, z])
}

fn decode_query<T: Real>(raw: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let rgb = raw.slice_cols(0, 3).sigmoid();
    let depth = raw.slice_cols(3, 4).exp();
    let conf = raw.slice_cols(4, 5).exp().clamp(T::from_f64(CONF_MIN), T::from_f64(CONF_MAX));
    (rgb, depth, conf)
}

/// Assemble the full [`Prediction`] from a bidirectional forward pass.
pub fn decode_all<T: Real>(
    params: &ModelParams<T>,
    fwd: &ForwardOutput<T>,
    h: usize,
    w: usize,
    want_query: bool,
) -> Result<Prediction<T>> {
    let n_views = fwd.image_features[0].len();
    let m_query = fwd.raymap_features.first().map_or(0, |l| l.len());
    if want_query && m_query == 0 {
        return Err(Error::Usage("query outputs requested without raymap inputs".into()));
    }
    let grid = (fwd.grid_h, fwd.grid_w);
    let per_view = |head: &DenseHeadParams<T>, level_feats: &[Vec<Tensor<T>>], i: usize| {
        let feats: Vec<Tensor<T>> = level_feats.iter().map(|lvl| lvl[i].clone()).collect();
        dense_head(head, &feats, grid, (h, w))
    };

    let mut depths = Vec::with_capacity(n_views);
    let mut confs = Vec::with_capacity(n_views);
    let mut points = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let (d, c) = decode_depth_conf(&per_view(&params.heads.depth, &fwd.image_features, i));
        depths.push(d);
        confs.push(c);
        points.push(decode_points(&per_view(&params.heads.point, &fwd.image_features, i)));
    }
    let cameras = camera_head(&params.heads.camera, &fwd.camera_tokens);

    let (query_rgb, query_depth, query_conf) = if m_query > 0 && want_query {
        let mut rgbs = Vec::new();
        let mut qds = Vec::new();
        let mut qcs = Vec::new();
        for i in 0..m_query {
            let (r, d, c) =
                decode_query(&per_view(&params.heads.query, &fwd.raymap_features, i));
            rgbs.push(r);
            qds.push(d);
            qcs.push(c);
        }
        (concat_rows(&rgbs), concat_rows(&qds), concat_rows(&qcs))
    } else {
        (Tensor::zeros(&[0, 3]), Tensor::zeros(&[0, 1]), Tensor::zeros(&[0, 1]))
    };

    Ok(Prediction {
        n_views,
        h,
        w,
        m_query: if want_query { m_query } else { 0 },
        cameras,
        depth: concat_rows(&depths),
        conf: concat_rows(&confs),
        points: concat_rows(&points),
        query_rgb,
        query_depth,
        query_conf,
    })
}

/// Decode one streamed view (camera row plus dense maps).
pub fn decode_stream_step<T: Real>(
    params: &ModelParams<T>,
    step: &StreamStep<T>,
    h: usize,
    w: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>) {
    let grid = (step.grid_h, step.grid_w);
    let raw_depth = dense_head(&params.heads.depth, &step.features, grid, (h, w));
    let (depth, conf) = decode_depth_conf(&raw_depth);
    let points = decode_points(&dense_head(&params.heads.point, &step.features, grid, (h, w)));
    let camera = camera_head(&params.heads.camera, &step.camera_token);
    (camera, depth, conf, points)
}

/// Decode query features (from [`crate::backbone::forward_query`]) into
/// stacked RGB / depth / confidence maps.
pub fn decode_query_features<T: Real>(
    params: &ModelParams<T>,
    features: &[Vec<Tensor<T>>],
    grid: (usize, usize),
    h: usize,
    w: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let m = features[0].len();
    let mut rgbs = Vec::new();
    let mut qds = Vec::new();
    let mut qcs = Vec::new();
    for i in 0..m {
        let feats: Vec<Tensor<T>> = features.iter().map(|lvl| lvl[i].clone()).collect();
        let (r, d, c) = decode_query(&dense_head(&params.heads.query, &feats, grid, (h, w)));
        rgbs.push(r);
        qds.push(d);
        qcs.push(c);
    }
    (concat_rows(&rgbs), concat_rows(&qds), concat_rows(&qcs))
}
