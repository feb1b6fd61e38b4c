//! Least-squares similarity alignment between point sets.

use nalgebra::{DMatrix, Matrix3};

use super::camera::mat_to_quat;
use super::vec3;
use crate::{Error, Result};

/// Similarity transform `p -> s R p + t`.
#[derive(Clone, Copy, Debug)]
pub struct Sim3 {
    pub scale: f64,
    pub rot: [[f64; 3]; 3],
    pub trans: [f64; 3],
}

impl Sim3 {
    pub fn identity() -> Sim3 {
        Sim3 { scale: 1.0, rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], trans: [0.0; 3] }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rot;
        [
            self.scale * (r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2]) + self.trans[0],
            self.scale * (r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2]) + self.trans[1],
            self.scale * (r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2]) + self.trans[2],
        ]
    }

    pub fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rot;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    }

    pub fn rot_quat(&self) -> [f64; 4] {
        mat_to_quat(self.rot)
    }

    pub fn residual_rms(&self, src: &[[f64; 3]], dst: &[[f64; 3]]) -> f64 {
        let n = src.len().max(1);
        let sum: f64 = src
            .iter()
            .zip(dst)
            .map(|(s, d)| {
                let e = vec3::sub(self.apply(*s), *d);
                vec3::dot(e, e)
            })
            .sum();
        (sum / n as f64).sqrt()
    }
}

/// Camera viewing the similarity-transformed world: for `x' = s R x + t`,
/// the extrinsics become `R_i R^T` and `s t_i - R_i R^T t` (camera-frame
/// coordinates scale by `s` uniformly).
pub fn apply_sim3(cam: &super::camera::Camera, sim: &Sim3) -> super::camera::Camera {
    use super::camera::{quat_conj, quat_mul, quat_rotate};
    let q_new = quat_mul(cam.quat, quat_conj(mat_to_quat(sim.rot)));
    let rt = quat_rotate(q_new, sim.trans);
    let t = [
        sim.scale * cam.trans[0] - rt[0],
        sim.scale * cam.trans[1] - rt[1],
        sim.scale * cam.trans[2] - rt[2],
    ];
    super::camera::Camera::new(q_new, t, cam.fx, cam.fy).expect("valid camera under similarity")
}

/// Closed-form minimizer of `sum_k || s R src_k + t - dst_k ||^2` with `R` a
/// proper rotation (det = +1). Errors on fewer than 3 points or a collinear
/// configuration (covariance rank < 2).
pub fn umeyama_align(src: &[[f64; 3]], dst: &[[f64; 3]], with_scale: bool) -> Result<Sim3> {
    if src.len() != dst.len() {
        return Err(Error::Usage(format!("point counts differ: {} vs {}", src.len(), dst.len())));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("alignment needs >= 3 points, got {n}")));
    }
    let nf = n as f64;
    let mut mu_s = [0.0; 3];
    let mut mu_d = [0.0; 3];
    for k in 0..n {
        mu_s = vec3::add(mu_s, src[k]);
        mu_d = vec3::add(mu_d, dst[k]);
    }
    mu_s = vec3::scale(mu_s, 1.0 / nf);
    mu_d = vec3::scale(mu_d, 1.0 / nf);

    let mut cov = Matrix3::<f64>::zeros();
    let mut var_s = 0.0;
    for k in 0..n {
        let s = vec3::sub(src[k], mu_s);
        let d = vec3::sub(dst[k], mu_d);
        var_s += vec3::dot(s, s);
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += d[i] * s[j];
            }
        }
    }
    cov /= nf;
    var_s /= nf;

    let svd = nalgebra::SVD::new(DMatrix::from_iterator(3, 3, cov.iter().copied()), true, true);
    let sv = &svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(Error::Degenerate("rank-deficient covariance (collinear points)".into()));
    }
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let det_uv = (u.determinant() * vt.determinant()).signum();
    // Reflection fix: flip the weakest direction when det(U V^T) < 0.
    let mut d_fix = [1.0, 1.0, det_uv];
    if det_uv < 0.0 && sv[2] <= 1e-12 * sv[0] {
        // rank-2 case: the flip lives entirely in the null direction
        d_fix = [1.0, 1.0, -1.0];
    }
    let mut rot = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += u[(i, k)] * d_fix[k] * vt[(k, j)];
            }
            rot[i][j] = acc;
        }
    }
    let scale = if with_scale {
        let tr = sv[0] * d_fix[0] + sv[1] * d_fix[1] + sv[2] * d_fix[2];
        if var_s <= 0.0 {
            return Err(Error::Degenerate("zero-variance source cloud".into()));
        }
        tr / var_s
    } else {
        1.0
    };
    let t = {
        let r_mu = [
            rot[0][0] * mu_s[0] + rot[0][1] * mu_s[1] + rot[0][2] * mu_s[2],
            rot[1][0] * mu_s[0] + rot[1][1] * mu_s[1] + rot[1][2] * mu_s[2],
            rot[2][0] * mu_s[0] + rot[2][1] * mu_s[1] + rot[2][2] * mu_s[2],
        ];
        vec3::sub(mu_d, vec3::scale(r_mu, scale))
    };
    Ok(Sim3 { scale, rot, trans: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random_cloud(rng: &mut Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect()
    }

    fn random_sim3(rng: &mut Rng) -> Sim3 {
        let q = super::super::camera::tests_support::random_unit_quat(rng);
        let m = super::super::camera::quat_to_mat(q);
        Sim3 {
            scale: rng.uniform(0.2, 5.0),
            rot: m,
            trans: [rng.normal(), rng.normal(), rng.normal()],
        }
    }

    #[test]
    fn identity_on_equal_clouds() {
        let mut rng = Rng::new(1);
        let cloud = random_cloud(&mut rng, 20);
        let t = umeyama_align(&cloud, &cloud, true).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        assert!(vec3::norm(t.trans) < 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((t.rot[i][j] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_similarity_recovered() {
        let mut rng = Rng::new(2);
        let src = random_cloud(&mut rng, 12);
        let dst: Vec<[f64; 3]> =
            src.iter().map(|p| [2.0 * p[0] + 1.0, 2.0 * p[1] + 1.0, 2.0 * p[2] + 1.0]).collect();
        let t = umeyama_align(&src, &dst, true).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-6);
        assert!(vec3::norm(vec3::sub(t.trans, [1.0, 1.0, 1.0])) < 1e-6);
    }

    #[test]
    fn random_similarity_recovered_noiselessly() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let src = random_cloud(&mut rng, 15);
            let gen = random_sim3(&mut rng);
            let dst: Vec<[f64; 3]> = src.iter().map(|p| gen.apply(*p)).collect();
            let t = umeyama_align(&src, &dst, true).unwrap();
            assert!((t.scale - gen.scale).abs() < 1e-5 * gen.scale.max(1.0));
            for (s, d) in src.iter().zip(&dst) {
                assert!(vec3::norm(vec3::sub(t.apply(*s), *d)) < 1e-5);
            }
        }
    }

    #[test]
    fn residual_never_worse_than_identity() {
        let mut rng = Rng::new(4);
        for _ in 0..10 {
            let src = random_cloud(&mut rng, 10);
            let dst = random_cloud(&mut rng, 10);
            let t = umeyama_align(&src, &dst, true).unwrap();
            assert!(t.residual_rms(&src, &dst) <= Sim3::identity().residual_rms(&src, &dst) + 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_error() {
        let two = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert!(umeyama_align(&two, &two, true).is_err());
        let line: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(matches!(umeyama_align(&line, &line, true), Err(Error::Degenerate(_))));
    }
}
