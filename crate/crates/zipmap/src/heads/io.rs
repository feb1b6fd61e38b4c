//! Prediction-bundle persistence and point-cloud export.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::numerics::{read_zten, write_zten, Real, Tensor};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    kind: String,
    n_views: usize,
    h: usize,
    w: usize,
    m_query: usize,
}

/// Write a prediction bundle: `manifest.json` plus one ZTEN per field.
pub fn save_prediction<T: Real>(pred: &Prediction<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: "prediction_bundle".into(),
        n_views: pred.n_views,
        h: pred.h,
        w: pred.w,
        m_query: pred.m_query,
    };
    let mp = dir.join("manifest.json");
    fs::write(&mp, serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mp, e))?)
        .map_err(|e| Error::io(&mp, e))?;
    write_zten(dir.join("cameras.zten"), &pred.cameras)?;
    write_zten(dir.join("depth.zten"), &pred.depth)?;
    write_zten(dir.join("conf.zten"), &pred.conf)?;
    write_zten(dir.join("points.zten"), &pred.points)?;
    if pred.m_query > 0 {
        write_zten(dir.join("query_rgb.zten"), &pred.query_rgb)?;
        write_zten(dir.join("query_depth.zten"), &pred.query_depth)?;
        write_zten(dir.join("query_conf.zten"), &pred.query_conf)?;
    }
    Ok(())
}

pub fn load_prediction<T: Real>(dir: impl AsRef<Path>) -> Result<Prediction<T>> {
    let dir = dir.as_ref();
    let mp = dir.join("manifest.json");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&mp, e))?;
    if manifest.schema_version != SCHEMA_VERSION || manifest.kind != "prediction_bundle" {
        return Err(Error::format(&mp, "not a prediction bundle of a supported version"));
    }
    let (query_rgb, query_depth, query_conf) = if manifest.m_query > 0 {
        (
            read_zten(dir.join("query_rgb.zten"))?,
            read_zten(dir.join("query_depth.zten"))?,
            read_zten(dir.join("query_conf.zten"))?,
        )
    } else {
        (Tensor::zeros(&[0, 3]), Tensor::zeros(&[0, 1]), Tensor::zeros(&[0, 1]))
    };
    Ok(Prediction {
        n_views: manifest.n_views,
        h: manifest.h,
        w: manifest.w,
        m_query: manifest.m_query,
        cameras: read_zten(dir.join("cameras.zten"))?,
        depth: read_zten(dir.join("depth.zten"))?,
        conf: read_zten(dir.join("conf.zten"))?,
        points: read_zten(dir.join("points.zten"))?,
        query_rgb,
        query_depth,
        query_conf,
    })
}

/// ASCII PLY point cloud with uchar colors.
pub fn write_ply(
    path: impl AsRef<Path>,
    points: &[[f64; 3]],
    colors: &[[f64; 3]],
) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(points.len(), colors.len(), "point/color count mismatch");
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "ply").map_err(io)?;
    writeln!(w, "format ascii 1.0").map_err(io)?;
    writeln!(w, "element vertex {}", points.len()).map_err(io)?;
    for a in ["x", "y", "z"] {
        writeln!(w, "property float {a}").map_err(io)?;
    }
    for c in ["red", "green", "blue"] {
        writeln!(w, "property uchar {c}").map_err(io)?;
    }
    writeln!(w, "end_header").map_err(io)?;
    for (p, c) in points.iter().zip(colors) {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            p[0] as f32,
            p[1] as f32,
            p[2] as f32,
            (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
            (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
            (c[2].clamp(0.0, 1.0) * 255.0).round() as u8
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
