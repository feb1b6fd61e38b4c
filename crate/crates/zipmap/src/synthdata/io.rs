//! Scene-bundle directory format.
//!
//! `manifest.json` carries extents, seed, scale, cameras (9-float records)
//! and the generating geometry; each view stores image/depth/mask as ZTEN
//! files. `load(save(b))` is bitwise on all tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::SceneGeometry;
use super::{SceneBundle, View};
use crate::geometry::Camera;
use crate::numerics::{read_zten, write_zten, Tensor};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    kind: String,
    h: usize,
    w: usize,
    seed: u64,
    difficulty: f64,
    scale: f64,
    cameras: Vec<[f64; 9]>,
    geometry: SceneGeometry,
}

pub fn save_bundle(bundle: &SceneBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: "scene_bundle".into(),
        h: bundle.h,
        w: bundle.w,
        seed: bundle.seed,
        difficulty: bundle.difficulty,
        scale: bundle.scale,
        cameras: bundle.views.iter().map(|v| v.camera.to_vec9()).collect(),
        geometry: bundle.geometry.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json(&manifest_path, e))?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    for (i, view) in bundle.views.iter().enumerate() {
        let image = Tensor::<f32>::from_vec(&[bundle.h, bundle.w, 3], view.image.clone());
        let depth = Tensor::<f32>::from_vec(&[bundle.h, bundle.w], view.depth.clone());
        let mask = Tensor::<f32>::from_vec(
            &[bundle.h, bundle.w],
            view.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        );
        write_zten(dir.join(format!("view_{i:03}_image.zten")), &image)?;
        write_zten(dir.join(format!("view_{i:03}_depth.zten")), &depth)?;
        write_zten(dir.join(format!("view_{i:03}_mask.zten")), &mask)?;
    }
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SceneBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let json = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| Error::json(&manifest_path, e))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!(
                "schema version {} not supported (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    if manifest.kind != "scene_bundle" {
        return Err(Error::format(&manifest_path, format!("kind {:?} is not a scene bundle", manifest.kind)));
    }
    let mut views = Vec::with_capacity(manifest.cameras.len());
    for (i, cam9) in manifest.cameras.iter().enumerate() {
        let camera = Camera::from_vec9(cam9)?;
        let image: Tensor<f32> = read_zten(dir.join(format!("view_{i:03}_image.zten")))?;
        let depth: Tensor<f32> = read_zten(dir.join(format!("view_{i:03}_depth.zten")))?;
        let mask: Tensor<f32> = read_zten(dir.join(format!("view_{i:03}_mask.zten")))?;
        let expect = [manifest.h, manifest.w, 3];
        if image.shape() != expect {
            return Err(Error::format(
                dir.join(format!("view_{i:03}_image.zten")),
                format!("image shape {:?}, manifest says {:?}", image.shape(), expect),
            ));
        }
        views.push(View {
            camera,
            image: image.data().to_vec(),
            depth: depth.data().to_vec(),
            valid: mask.data().iter().map(|&v| v > 0.5).collect(),
        });
    }
    Ok(SceneBundle {
        h: manifest.h,
        w: manifest.w,
        seed: manifest.seed,
        difficulty: manifest.difficulty,
        scale: manifest.scale,
        views,
        geometry: manifest.geometry,
    })
}

#[cfg(test)]
mod tests {
    use super::super::generate_scene;
    use super::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let bundle = generate_scene(7, 3, 16, 16, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.n_views(), 3);
        assert_eq!(back.seed, bundle.seed);
        for (a, b) in bundle.views.iter().zip(&back.views) {
            assert!(a.image.iter().zip(&b.image).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.depth.iter().zip(&b.depth).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a.valid, b.valid);
            assert_eq!(a.camera.to_vec9(), b.camera.to_vec9());
        }
    }

    #[test]
    fn missing_file_is_named_in_error() {
        let bundle = generate_scene(7, 2, 8, 8, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        fs::remove_file(dir.path().join("view_001_depth.zten")).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(err.to_string().contains("view_001_depth.zten"), "error was: {err}");
    }

    #[test]
    fn manifest_camera_count_matches_tensor_files() {
        let bundle = generate_scene(11, 4, 8, 8, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let n_image_files = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref().unwrap().file_name().to_string_lossy().ends_with("_image.zten")
            })
            .count();
        assert_eq!(n_image_files, bundle.n_views());
    }

    #[test]
    fn schema_version_is_checked() {
        let bundle = generate_scene(3, 2, 8, 8, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Format { .. })));
    }
}
