//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers on success.
//!
//! Criterion 8 (toy end-to-end training) lives in `acceptance_training.rs`
//! because of its multi-minute runtime; everything here finishes quickly.

use zipmap::backbone::{
    forward_bidirectional, forward_query, forward_streaming, init_streaming_state,
    virtual_objective_grads, BackboneMode, LayerState, ModelConfig, ModelParams,
};
use zipmap::geometry::{camera_to_raymap, Camera};
use zipmap::losses::{
    camera_loss, camera_loss_aligned, center_alignment, depth_grad_loss, depth_loss, normal_loss,
    point_loss, query_color_loss, roe_scale,
};
use zipmap::numerics::{
    finite_difference_grad, flops_reset, flops_total, max_rel_err, no_grad, read_zten, write_zten,
    Rng, Tensor,
};

fn random_camera(rng: &mut Rng) -> Camera {
    let q = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
    Camera::new(
        q,
        [rng.normal(), rng.normal(), rng.normal()],
        rng.uniform(0.5, 2.0),
        rng.uniform(0.5, 2.0),
    )
    .unwrap()
}

/// Offsets bounded away from zero keep L1 probes clear of kinks.
fn offset_away_from_kinks(rng: &mut Rng, base: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    base.iter()
        .map(|&v| {
            let mag = rng.uniform(lo, hi);
            let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            v + sign * mag
        })
        .collect()
}

// ── criterion 1: gradient oracle suite ──────────────────────────────

#[test]
fn acceptance_01_gradient_oracles() {
    let started = std::time::Instant::now();
    let instances = 20;
    let tol = 1e-4;

    // point loss
    for seed in 0..instances {
        let mut rng = Rng::new(100 + seed);
        let n = 3 + rng.index(10);
        let gt: Vec<f64> = (0..n * 3).map(|_| rng.normal()).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 3.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 7 != 3).collect();
        let pred =
            Tensor::<f64>::from_f64_slice(&[n, 3], &offset_away_from_kinks(&mut rng, &gt, 0.05, 0.4));
        let s = rng.uniform(0.5, 2.0); // frozen scale, as in training
        let tracked = pred.detach().requiring_grad();
        point_loss(&tracked, &gt, &z, &mask, s).unwrap().backward();
        let fd = finite_difference_grad(
            |p| point_loss(p, &gt, &z, &mask, s).unwrap().item(),
            &pred,
            1e-6,
        );
        let err = max_rel_err(&tracked.grad().unwrap(), &fd);
        assert!(err < tol, "point loss instance {seed}: rel err {err}");
    }

    // depth loss (w.r.t. depth and confidence jointly)
    for seed in 0..instances {
        let mut rng = Rng::new(200 + seed);
        let n = 4 + rng.index(12);
        let gt: Vec<f64> = (0..n).map(|_| rng.uniform(1.0, 4.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 5 != 2).collect();
        let s = rng.uniform(0.5, 2.0);
        let pred_v = offset_away_from_kinks(&mut rng, &gt, 0.05, 0.5);
        let conf_v: Vec<f64> = (0..n).map(|_| rng.uniform(0.3, 3.0)).collect();
        let pred = Tensor::<f64>::from_f64_slice(&[n, 1], &pred_v).requiring_grad();
        let conf = Tensor::<f64>::from_f64_slice(&[n, 1], &conf_v).requiring_grad();
        depth_loss(&pred, &conf, &gt, s, &mask, 0.2).unwrap().backward();
        let fd_d = finite_difference_grad(
            |p| depth_loss(p, &conf.detach(), &gt, s, &mask, 0.2).unwrap().item(),
            &pred.detach(),
            1e-6,
        );
        let fd_c = finite_difference_grad(
            |c| depth_loss(&pred.detach(), c, &gt, s, &mask, 0.2).unwrap().item(),
            &conf.detach(),
            1e-6,
        );
        assert!(max_rel_err(&pred.grad().unwrap(), &fd_d) < tol, "depth grad {seed}");
        assert!(max_rel_err(&conf.grad().unwrap(), &fd_c) < tol, "conf grad {seed}");
    }

    // camera loss, reference-view form
    for seed in 0..instances {
        let mut rng = Rng::new(300 + seed);
        let n = 2 + rng.index(5);
        let gt: Vec<Camera> = (0..n).map(|_| random_camera(&mut rng)).collect();
        let rows: Vec<f64> = gt.iter().flat_map(|c| c.to_vec9()).collect();
        let pred = Tensor::<f64>::from_f64_slice(
            &[n, 9],
            &offset_away_from_kinks(&mut rng, &rows, 0.03, 0.2),
        );
        let s = rng.uniform(0.5, 2.0);
        let tracked = pred.detach().requiring_grad();
        camera_loss(&tracked, &gt, s).backward();
        let fd = finite_difference_grad(|p| camera_loss(p, &gt, s).item(), &pred, 1e-6);
        let err = max_rel_err(&tracked.grad().unwrap(), &fd);
        assert!(err < tol, "camera loss instance {seed}: rel err {err}");
    }

    // alignment-invariant camera loss with the alignment frozen (it is a
    // detached quantity, like the global scale)
    for seed in 0..instances {
        let mut rng = Rng::new(400 + seed);
        let n = 3 + rng.index(4);
        let gt: Vec<Camera> = (0..n).map(|_| random_camera(&mut rng)).collect();
        let pred_cams: Vec<Camera> = (0..n).map(|_| random_camera(&mut rng)).collect();
        let sim = center_alignment(&pred_cams, &gt);
        let rows: Vec<f64> = pred_cams.iter().flat_map(|c| c.to_vec9()).collect();
        let pred = Tensor::<f64>::from_f64_slice(&[n, 9], &rows);
        let tracked = pred.detach().requiring_grad();
        camera_loss_aligned(&tracked, &gt, &sim).backward();
        let fd =
            finite_difference_grad(|p| camera_loss_aligned(p, &gt, &sim).item(), &pred, 1e-6);
        let err = max_rel_err(&tracked.grad().unwrap(), &fd);
        assert!(err < tol, "refless camera loss instance {seed}: rel err {err}");
    }

    // normal loss on smooth random surfaces
    for seed in 0..instances {
        let mut rng = Rng::new(500 + seed);
        let (h, w) = (4, 5);
        let mut gt = Vec::with_capacity(h * w * 3);
        for r in 0..h {
            for c in 0..w {
                let x = c as f64 * 0.2;
                let y = r as f64 * 0.2;
                let z = 2.0 + 0.3 * (x * (1.0 + seed as f64 * 0.1)).sin() + 0.2 * y;
                gt.extend_from_slice(&[x, y, z]);
            }
        }
        let mask: Vec<bool> = (0..h * w).map(|i| i % 11 != 5).collect();
        let pred = Tensor::<f64>::from_f64_slice(
            &[h * w, 3],
            &offset_away_from_kinks(&mut rng, &gt, 0.01, 0.05),
        );
        let tracked = pred.detach().requiring_grad();
        normal_loss(&tracked, &gt, &mask, 1, h, w).unwrap().0.backward();
        let fd = finite_difference_grad(
            |p| normal_loss(p, &gt, &mask, 1, h, w).unwrap().0.item(),
            &pred,
            1e-6,
        );
        let err = max_rel_err(&tracked.grad().unwrap(), &fd);
        assert!(err < tol, "normal loss instance {seed}: rel err {err}");
    }

    // depth-gradient loss
    for seed in 0..instances {
        let mut rng = Rng::new(600 + seed);
        let (h, w) = (4, 4);
        let gt: Vec<f64> = (0..h * w).map(|_| rng.uniform(1.0, 3.0)).collect();
        let mask: Vec<bool> = (0..h * w).map(|i| i % 9 != 4).collect();
        let s = rng.uniform(0.5, 2.0);
        // strictly increasing offsets keep every forward difference away
        // from the L1 kink
        let bumped: Vec<f64> = gt
            .iter()
            .enumerate()
            .map(|(i, &v)| v + 0.05 + 0.013 * i as f64 + rng.uniform(0.0, 0.004))
            .collect();
        let pred = Tensor::<f64>::from_f64_slice(&[h * w, 1], &bumped).requiring_grad();
        let conf_v: Vec<f64> = (0..h * w).map(|_| rng.uniform(0.3, 2.0)).collect();
        let conf = Tensor::<f64>::from_f64_slice(&[h * w, 1], &conf_v).requiring_grad();
        depth_grad_loss(&pred, &conf, &gt, s, &mask, 1, h, w).unwrap().backward();
        let fd = finite_difference_grad(
            |p| depth_grad_loss(p, &conf.detach(), &gt, s, &mask, 1, h, w).unwrap().item(),
            &pred.detach(),
            1e-6,
        );
        let err = max_rel_err(&pred.grad().unwrap(), &fd);
        assert!(err < tol, "depth-grad loss instance {seed}: rel err {err}");
    }

    // query color loss
    for seed in 0..instances {
        let mut rng = Rng::new(700 + seed);
        let n = 5 + rng.index(10);
        let gt: Vec<f64> = (0..n * 3).map(|_| rng.uniform(0.0, 1.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 4 != 1).collect();
        let pred = Tensor::<f64>::from_f64_slice(
            &[n, 3],
            &offset_away_from_kinks(&mut rng, &gt, 0.02, 0.2),
        );
        let tracked = pred.detach().requiring_grad();
        query_color_loss(&tracked, &gt, &mask).unwrap().backward();
        let fd = finite_difference_grad(
            |p| query_color_loss(p, &gt, &mask).unwrap().item(),
            &pred,
            1e-6,
        );
        let err = max_rel_err(&tracked.grad().unwrap(), &fd);
        assert!(err < tol, "query color instance {seed}: rel err {err}");
    }

    // fast-weight virtual objective: closed-form chunk gradient vs FD
    for seed in 0..instances {
        let mut rng = Rng::new(800 + seed);
        let d = 4;
        let hp = 8;
        let n = 1 + rng.index(6);
        let w1 = rng.tensor_normal::<f64>(&[hp, d], 0.5);
        let w2 = rng.tensor_normal::<f64>(&[d, hp], 0.5);
        let w3 = rng.tensor_normal::<f64>(&[hp, d], 0.5);
        let k = rng.tensor_normal::<f64>(&[n, d], 1.0);
        let v = rng.tensor_normal::<f64>(&[n, d], 1.0);
        let eta: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 0.8)).collect();
        let eta_t = Tensor::<f64>::from_f64_slice(&[n], &eta);
        let state = LayerState {
            w1: w1.clone(),
            w2: w2.clone(),
            w3: w3.clone(),
            n1: w1.l2norm(),
            n2: w2.l2norm(),
            n3: w3.l2norm(),
        };
        let (g1, g2, g3) = virtual_objective_grads(&state, &k, &v, &eta_t);
        let objective = |w1t: &Tensor<f64>, w2t: &Tensor<f64>, w3t: &Tensor<f64>| -> f64 {
            let st = LayerState {
                w1: w1t.clone(),
                w2: w2t.clone(),
                w3: w3t.clone(),
                n1: w1t.l2norm(),
                n2: w2t.l2norm(),
                n3: w3t.l2norm(),
            };
            let dots =
                zipmap::backbone::fast_weight_forward(&st, &k).mul(&v).sum_axis1();
            -dots.data().iter().zip(&eta).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd1 = finite_difference_grad(|w| objective(w, &w2, &w3), &w1, 1e-6);
        let fd2 = finite_difference_grad(|w| objective(&w1, w, &w3), &w2, 1e-6);
        let fd3 = finite_difference_grad(|w| objective(&w1, &w2, w), &w3, 1e-6);
        for (g, fd, name) in [(&g1, fd1, "g1"), (&g2, fd2, "g2"), (&g3, fd3, "g3")] {
            let err = max_rel_err(g.data(), &fd);
            assert!(err < tol, "virtual objective {name} instance {seed}: rel err {err}");
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "gradient suite took {elapsed:.1}s (budget 120s)");
    println!(
        "ACCEPTANCE 1 PASS: all loss and fast-weight gradients match finite differences \
         (rel err < 1e-4, {instances} instances each, {elapsed:.1}s)"
    );
}

// ── criterion 2: norm preservation fuzz ─────────────────────────────

#[test]
fn acceptance_02_norm_preservation() {
    let mut rng = Rng::new(2);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng).unwrap();
    let mut worst = 0.0f64;
    no_grad(|| {
        for layer in 0..params.config.layers {
            let block = &params.blocks[layer];
            let mut state = LayerState::from_block(block);
            for _ in 0..25 {
                let tokens = rng.tensor_normal::<f32>(&[21, params.config.dim], 1.0);
                state = zipmap::backbone::ttt_update(&state, &tokens, block, 5, layer).unwrap();
                for (w, stored) in
                    [(&state.w1, &state.n1), (&state.w2, &state.n2), (&state.w3, &state.n3)]
                {
                    let drift = (w.l2norm().item() - stored.item()).abs() as f64;
                    worst = worst.max(drift);
                }
            }
        }
    });
    assert!(worst < 1e-5, "worst norm drift {worst}");
    println!(
        "ACCEPTANCE 2 PASS: fast-weight norms preserved over a 100-update fuzz \
         (worst drift {worst:.2e} < 1e-5)"
    );
}

// ── criterion 3: Newton-Schulz singular values ──────────────────────

#[test]
fn acceptance_03_newton_schulz() {
    let started = std::time::Instant::now();
    let mut rng = Rng::new(3);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..200 {
        let m = 2 + rng.index(63);
        let n = 2 + rng.index(63);
        let g = rng.tensor_normal::<f64>(&[m, n], 1.0);
        let y = zipmap::numerics::newton_schulz_orthonormalize(&g, 5);
        let mat = nalgebra::DMatrix::from_row_slice(m, n, y.data());
        for &s in mat.svd(false, false).singular_values.iter() {
            lo = lo.min(s);
            hi = hi.max(s);
            assert!((0.3..=1.3).contains(&s), "singular value {s} out of range ({m}x{n})");
        }
    }
    let zero = zipmap::numerics::newton_schulz_orthonormalize(&Tensor::<f64>::zeros(&[8, 8]), 5);
    assert!(zero.data().iter().all(|&v| v == 0.0), "zero matrix must map to zero");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "newton-schulz suite took {elapsed:.1}s (budget 60s)");
    println!(
        "ACCEPTANCE 3 PASS: 200 random matrices have singular values in [{lo:.3}, {hi:.3}] \
         after 5 iterations; zero maps to zero ({elapsed:.1}s)"
    );
}

// ── criterion 4: exact scale solver ─────────────────────────────────

#[test]
fn acceptance_04_roe_exactness() {
    let mut rng = Rng::new(4);
    for trial in 0..100 {
        let n = 30 + rng.index(40);
        let c = rng.uniform(0.02, 20.0);
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            z.push(rng.uniform(0.4, 4.0));
            for _ in 0..3 {
                let g = rng.normal();
                gt.push(g);
                pred.push(g / c + 0.25 * rng.normal());
            }
        }
        let mask = vec![true; n];
        let s = roe_scale(&pred, &gt, &z, &mask).unwrap();

        // 1e6-point log grid over [1e-3, 1e3], evaluated via sorted prefix
        // sums so the full grid stays cheap
        let mut terms: Vec<(f64, f64)> = Vec::new();
        for k in 0..n {
            for ch in 0..3 {
                let a = pred[k * 3 + ch];
                if a.abs() < 1e-12 {
                    continue;
                }
                terms.push((gt[k * 3 + ch] / a, a.abs() / z[k]));
            }
        }
        terms.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut prefix_w = vec![0.0f64];
        let mut prefix_wr = vec![0.0f64];
        for &(r, w) in &terms {
            prefix_w.push(prefix_w.last().unwrap() + w);
            prefix_wr.push(prefix_wr.last().unwrap() + w * r);
        }
        let total_w = *prefix_w.last().unwrap();
        let total_wr = *prefix_wr.last().unwrap();
        let objective = |sv: f64| -> f64 {
            // F(s) = sum w |s - r| split at the partition point
            let idx = terms.partition_point(|&(r, _)| r < sv);
            let below_w = prefix_w[idx];
            let below_wr = prefix_wr[idx];
            sv * below_w - below_wr + (total_wr - below_wr) - sv * (total_w - below_w)
        };
        let grid_n = 1_000_000usize;
        let mut best = (f64::INFINITY, 0.0f64);
        for i in 0..grid_n {
            let g = 10f64.powf(-3.0 + 6.0 * i as f64 / (grid_n - 1) as f64);
            let f = objective(g);
            if f < best.0 {
                best = (f, g);
            }
        }
        let grid_step = 10f64.powf(6.0 / (grid_n - 1) as f64);
        assert!(
            (s / best.1).max(best.1 / s) <= grid_step * grid_step,
            "trial {trial}: solver {s} vs grid argmin {}",
            best.1
        );
        assert!(objective(s) <= best.0 + 1e-9, "trial {trial}: solver objective worse than grid");
    }

    // scale invariance of the point loss through the solver
    let mut rng = Rng::new(44);
    let n = 50;
    let gt: Vec<f64> = (0..n * 3).map(|_| rng.normal()).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 3.0)).collect();
    let mask = vec![true; n];
    let base: Vec<f64> = gt.iter().map(|v| v + 0.2 * rng.normal()).collect();
    let mut losses = Vec::new();
    for c in [0.1, 1.0, 7.3] {
        let scaled: Vec<f64> = base.iter().map(|v| c * v).collect();
        let s = roe_scale(&scaled, &gt, &z, &mask).unwrap();
        let pred = Tensor::<f64>::from_f64_slice(&[n, 3], &scaled);
        losses.push(point_loss(&pred, &gt, &z, &mask, s).unwrap().item());
    }
    for w in losses.windows(2) {
        assert!(
            (w[0] - w[1]).abs() < 1e-8,
            "point loss not scale-invariant: {losses:?}"
        );
    }
    println!(
        "ACCEPTANCE 4 PASS: weighted-median scale matches a 1e6-point grid search on 100 \
         instances; point loss scale-invariant to 1e-8"
    );
}

// ── criterion 5: streaming consistency + linear update cost ─────────

#[test]
fn acceptance_05_streaming_consistency() {
    let mut rng = Rng::new(5);
    let params = ModelParams::<f32>::new(&ModelConfig::toy(), &mut rng).unwrap();
    let mut img_rng = Rng::new(55);
    let images: Vec<Vec<f32>> = (0..64)
        .map(|_| (0..32 * 32 * 3).map(|_| img_rng.uniform(0.0, 1.0) as f32).collect())
        .collect();

    // single view: streaming == bidirectional
    let refs: Vec<&[f32]> = vec![images[0].as_slice()];
    let bi =
        forward_bidirectional(&params, &refs, 32, 32, &[], BackboneMode::FastWeight).unwrap();
    let mut state = init_streaming_state(&params);
    let step = forward_streaming(&params, &mut state, &images[0], 32, 32).unwrap();
    let mut max_diff = 0.0f32;
    for (a, b) in bi.camera_tokens.data().iter().zip(step.camera_token.data()) {
        max_diff = max_diff.max((a - b).abs());
    }
    for (fa, fb) in bi.image_features.iter().zip(&step.features) {
        for (x, y) in fa[0].data().iter().zip(fb.data()) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    assert!(max_diff < 1e-6, "single-view streaming differs by {max_diff}");

    // update FLOPs linear in N: doubling N doubles the cost
    let count = |n: usize| -> u64 {
        no_grad(|| {
            let mut state = init_streaming_state(&params);
            flops_reset();
            for img in images.iter().take(n) {
                forward_streaming(&params, &mut state, img, 32, 32).unwrap();
            }
            flops_total()
        })
    };
    let mut ratios = Vec::new();
    for n in [4usize, 8, 16, 32] {
        let r = count(2 * n) as f64 / count(n) as f64;
        assert!((1.9..=2.1).contains(&r), "FLOPs({}) / FLOPs({n}) = {r}", 2 * n);
        ratios.push(r);
    }
    println!(
        "ACCEPTANCE 5 PASS: single-view streaming matches bidirectional (max diff \
         {max_diff:.2e} < 1e-6); FLOP doubling ratios {ratios:?} all within [1.9, 2.1]"
    );
}

// ── criterion 9: metric oracles ─────────────────────────────────────

#[test]
fn acceptance_09_metric_oracles() {
    use zipmap::geometry::{umeyama_align, vec3};
    use zipmap::metrics::{ate_rpe, chamfer_metrics, depth_metrics, pose_auc, DepthAlignment};
    let mut rng = Rng::new(9);

    // trajectory identities and the brute-force ATE oracle
    let orbit: Vec<Camera> = (0..10)
        .map(|i| {
            let az = i as f64 * 0.5;
            zipmap::synthdata::look_at(
                [3.0 * az.cos(), 1.5, 3.0 * az.sin()],
                [0.0, 0.3, 0.0],
                1.0,
                1.0,
            )
            .unwrap()
        })
        .collect();
    let rep = ate_rpe(&orbit, &orbit).unwrap();
    // the Sim3 solve leaves only rounding residue on identical trajectories
    assert!(rep.ate_rmse < 1e-12 && rep.rpe_trans < 1e-12 && rep.rpe_rot < 1e-9);
    let noisy: Vec<Camera> = orbit
        .iter()
        .map(|cam| {
            let c = cam.center();
            let nc = [c[0] + 0.03 * rng.normal(), c[1] + 0.03 * rng.normal(), c[2] + 0.03 * rng.normal()];
            let r = cam.rotation();
            let t = [
                -(r[0][0] * nc[0] + r[0][1] * nc[1] + r[0][2] * nc[2]),
                -(r[1][0] * nc[0] + r[1][1] * nc[1] + r[1][2] * nc[2]),
                -(r[2][0] * nc[0] + r[2][1] * nc[1] + r[2][2] * nc[2]),
            ];
            Camera { trans: t, ..*cam }
        })
        .collect();
    let rep = ate_rpe(&noisy, &orbit).unwrap();
    let src: Vec<[f64; 3]> = noisy.iter().map(|c| c.center()).collect();
    let dst: Vec<[f64; 3]> = orbit.iter().map(|c| c.center()).collect();
    let sim = umeyama_align(&src, &dst, true).unwrap();
    let oracle = {
        let mut sq = 0.0;
        for (s, d) in src.iter().zip(&dst) {
            let e = vec3::sub(sim.apply(*s), *d);
            sq += vec3::dot(e, e);
        }
        (sq / src.len() as f64).sqrt()
    };
    assert!((rep.ate_rmse - oracle).abs() < 1e-9, "ATE {} vs oracle {oracle}", rep.ate_rmse);

    // pose AUC: identity is 100, discretization rule plugs in exactly
    let auc = pose_auc(&orbit, &orbit, &[5, 15, 30]).unwrap();
    for v in auc.values() {
        assert_eq!(*v, 100.0);
    }
    let gt2 = vec![
        Camera::identity(),
        Camera::new([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0, 1.0).unwrap(),
    ];
    let half = 10f64.to_radians() / 2.0;
    let pred2 = vec![
        Camera::identity(),
        Camera::new([half.cos(), 0.0, 0.0, half.sin()], [1.0, 0.0, 0.0], 1.0, 1.0).unwrap(),
    ];
    let auc = pose_auc(&pred2, &gt2, &[5, 15, 30]).unwrap();
    assert!((auc[&5]).abs() < 1e-12);
    assert!((auc[&15] - 100.0 * 5.0 / 15.0).abs() < 1e-9);
    assert!((auc[&30] - 100.0 * 20.0 / 30.0).abs() < 1e-9);

    // chamfer identities and the exact nearest-neighbor oracle
    let cloud: Vec<[f64; 3]> = (0..100).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
    let normals: Vec<[f64; 3]> = (0..100)
        .map(|_| vec3::normalize([rng.normal(), rng.normal(), rng.normal()]))
        .collect();
    let rep = chamfer_metrics(&cloud, &normals, &cloud, &normals, 0, &[]).unwrap();
    assert_eq!((rep.acc_mean, rep.comp_mean, rep.nc_mean), (0.0, 0.0, 1.0));
    let other: Vec<[f64; 3]> = (0..80).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
    let other_n: Vec<[f64; 3]> = (0..80)
        .map(|_| vec3::normalize([rng.normal(), rng.normal(), rng.normal()]))
        .collect();
    let rep = chamfer_metrics(&cloud, &normals, &other, &other_n, 0, &[]).unwrap();
    let mut dists: Vec<f64> = cloud
        .iter()
        .map(|p| {
            other
                .iter()
                .map(|q| vec3::norm(vec3::sub(*p, *q)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let acc_oracle = dists.iter().sum::<f64>() / dists.len() as f64;
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_oracle = 0.5 * (dists[49] + dists[50]);
    assert!((rep.acc_mean - acc_oracle).abs() < 1e-9);
    assert!((rep.acc_median - median_oracle).abs() < 1e-9);

    // depth metric identities and closed-form least squares
    let gt: Vec<f64> = (0..64).map(|_| rng.uniform(0.5, 5.0)).collect();
    let rep = depth_metrics(&gt, &gt, &vec![true; 64], DepthAlignment::Scale, 1, true).unwrap();
    assert_eq!((rep.abs_rel, rep.delta_125), (0.0, 1.0));
    let doubled: Vec<f64> = gt.iter().map(|v| 2.0 * v).collect();
    let rep =
        depth_metrics(&doubled, &gt, &vec![true; 64], DepthAlignment::Scale, 1, true).unwrap();
    assert!(rep.abs_rel < 1e-12 && rep.delta_125 == 1.0);
    let shifted: Vec<f64> = gt.iter().map(|v| v + 0.9).collect();
    let both =
        depth_metrics(&shifted, &gt, &vec![true; 64], DepthAlignment::ScaleShift, 1, true).unwrap();
    assert!(both.abs_rel < 1e-12 && both.delta_125 == 1.0);
    let only =
        depth_metrics(&shifted, &gt, &vec![true; 64], DepthAlignment::Scale, 1, true).unwrap();
    assert!(only.abs_rel > 1e-3);

    println!(
        "ACCEPTANCE 9 PASS: trajectory/AUC/chamfer/depth metrics match identity cases and \
         brute-force oracles"
    );
}

// ── criterion 10: serialization round-trips ─────────────────────────

#[test]
fn acceptance_10_serialization_roundtrips() {
    use zipmap::synthdata::{generate_scene, load_bundle, save_bundle};
    let dir = tempfile::tempdir().unwrap();

    // scene bundle: bitwise
    let bundle = generate_scene(10, 3, 16, 16, 0.5).unwrap();
    save_bundle(&bundle, dir.path().join("bundle")).unwrap();
    let back = load_bundle(dir.path().join("bundle")).unwrap();
    for (a, b) in bundle.views.iter().zip(&back.views) {
        assert!(a.image.iter().zip(&b.image).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.depth.iter().zip(&b.depth).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.camera.to_vec9(), b.camera.to_vec9());
    }

    // raw tensor: bitwise through ZTEN
    let mut rng = Rng::new(10);
    let t = rng.tensor_normal::<f32>(&[7, 5], 1.0);
    write_zten(dir.path().join("t.zten"), &t).unwrap();
    let t2: Tensor<f32> = read_zten(dir.path().join("t.zten")).unwrap();
    assert!(t.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // checkpoint: bitwise on every parameter
    let mut cfg = zipmap::trainer::TrainConfig::toy();
    cfg.model.dim = 16;
    cfg.model.fast_width = 32;
    cfg.model.layers = 2;
    cfg.model.heads = 2;
    cfg.model.head_mid = 4;
    let mut params = ModelParams::<f32>::new(&cfg.model, &mut rng).unwrap();
    let opt = zipmap::trainer::AdamW::new(zipmap::trainer::OptimConfig::default());
    zipmap::trainer::save_checkpoint(dir.path().join("ckpt"), 0, &cfg, &mut params, &opt)
        .unwrap();
    let mut ck = zipmap::trainer::load_checkpoint::<f32>(dir.path().join("ckpt")).unwrap();
    let mut originals = Vec::new();
    params.visit(&mut |_, t| originals.push(t.data().to_vec()));
    let mut i = 0;
    ck.params.visit(&mut |name, t| {
        assert!(
            t.data().iter().zip(&originals[i]).all(|(a, b)| a.to_bits() == b.to_bits()),
            "param {name} not bitwise"
        );
        i += 1;
    });

    // scene state: reload reproduces query outputs bitwise
    let imgs: Vec<Vec<f32>> = (0..2)
        .map(|_| (0..16 * 16 * 3).map(|_| rng.uniform(0.0, 1.0) as f32).collect())
        .collect();
    let refs: Vec<&[f32]> = imgs.iter().map(|v| v.as_slice()).collect();
    let raymap = camera_to_raymap(&Camera::identity(), 16, 16).unwrap();
    let (fwd, rgb_mem) = no_grad(|| {
        let fwd =
            forward_bidirectional(&ck.params, &refs, 16, 16, &[], BackboneMode::FastWeight)
                .unwrap();
        let feats = forward_query(&ck.params, &fwd.state, &[&raymap]).unwrap();
        let (rgb, _, _) =
            zipmap::heads::decode_query_features(&ck.params, &feats, (2, 2), 16, 16);
        (fwd, rgb)
    });
    zipmap::cli::save_scene_state(dir.path().join("state"), &fwd.state, &mut ck.params, 1.0, 16, 16)
        .unwrap();
    let loaded = zipmap::cli::load_scene_state(dir.path().join("state")).unwrap();
    let rgb_disk = no_grad(|| {
        let feats = forward_query(&loaded.params, &loaded.state, &[&raymap]).unwrap();
        let (rgb, _, _) =
            zipmap::heads::decode_query_features(&loaded.params, &feats, (2, 2), 16, 16);
        rgb
    });
    assert!(rgb_mem
        .data()
        .iter()
        .zip(rgb_disk.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    println!(
        "ACCEPTANCE 10 PASS: scene bundles, tensors, checkpoints and scene states round-trip \
         bitwise; reloaded state reproduces query outputs bitwise"
    );
}
