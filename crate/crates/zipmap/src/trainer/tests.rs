use super::*;
use crate::synthdata::generate_scene;

fn tiny_config(stage1: usize, stage2: usize) -> TrainConfig {
    let mut cfg = TrainConfig::toy();
    cfg.model.dim = 16;
    cfg.model.fast_width = 32;
    cfg.model.layers = 2;
    cfg.model.heads = 2;
    cfg.model.head_mid = 4;
    cfg.model.patch = 8;
    cfg.stage1_steps = stage1;
    cfg.stage2_steps = stage2;
    cfg.query_steps = 2;
    cfg.checkpoint_every = 2;
    cfg.seed = 5;
    cfg
}

fn tiny_data(n: usize) -> Vec<SceneBundle> {
    (0..n).map(|i| generate_scene(100 + i as u64, 4, 16, 16, 0.3).unwrap()).collect()
}

fn read_log(dir: &Path) -> Vec<LogRecord> {
    let text = fs::read_to_string(dir.join("loss_log.jsonl")).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn zero_steps_writes_initial_checkpoint_only() {
    let cfg = tiny_config(0, 0);
    let data = tiny_data(1);
    let dir = tempfile::tempdir().unwrap();
    let outcome = train(&cfg, &data, dir.path(), None, None).unwrap();
    assert_eq!(outcome.steps_run, 0);
    assert!(dir.path().join("checkpoint_latest/manifest.json").exists());
    assert!(dir.path().join("checkpoint_final/manifest.json").exists());
    let ck = load_checkpoint::<f32>(dir.path().join("checkpoint_final")).unwrap();
    assert_eq!(ck.step, 0);
}

#[test]
fn fixed_seed_reproduces_the_loss_log_bitwise() {
    let cfg = tiny_config(4, 0);
    let data = tiny_data(2);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir_a.path(), None, None).unwrap();
    train(&cfg, &data, dir_b.path(), None, None).unwrap();
    let log_a = fs::read_to_string(dir_a.path().join("loss_log.jsonl")).unwrap();
    let log_b = fs::read_to_string(dir_b.path().join("loss_log.jsonl")).unwrap();
    assert_eq!(log_a, log_b);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let data = tiny_data(2);
    let cfg = tiny_config(6, 0);
    let dir_full = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir_full.path(), None, None).unwrap();
    let full = read_log(dir_full.path());

    // same config interrupted after 3 steps, then resumed
    let dir_half = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir_half.path(), None, Some(3)).unwrap();
    let ck = load_checkpoint::<f32>(dir_half.path().join("checkpoint_final")).unwrap();
    assert_eq!(ck.step, 3);
    let dir_resume = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir_resume.path(), Some(ck), None).unwrap();
    let resumed = read_log(dir_resume.path());

    let tail: Vec<&LogRecord> = full.iter().filter(|r| r.step >= 3).collect();
    assert_eq!(tail.len(), resumed.len());
    for (a, b) in tail.iter().zip(&resumed) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.report.total.to_bits(), b.report.total.to_bits(), "step {}", a.step);
    }
}

#[test]
fn stage_two_switches_to_the_alignment_invariant_loss() {
    let cfg = tiny_config(2, 2);
    let data = tiny_data(1);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir.path(), None, None).unwrap();
    let log = read_log(dir.path());
    assert_eq!(log.iter().filter(|r| r.stage == 1).count(), 2);
    assert_eq!(log.iter().filter(|r| r.stage == 2).count(), 2);
}

#[test]
fn finetune_query_adds_query_components() {
    let cfg = tiny_config(2, 0);
    let data = tiny_data(1);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, &data, dir.path(), None, None).unwrap();
    let ck = load_checkpoint::<f32>(dir.path().join("checkpoint_final")).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let outcome = finetune_query(&cfg, &data, dir2.path(), ck).unwrap();
    let report = outcome.last_report.unwrap();
    assert!(report.components.contains_key("query_color"));
    assert!(report.components.contains_key("query_depth"));
}

#[test]
fn split_sizes_are_equal_within_one() {
    for n in [3usize, 4, 5, 8] {
        let n_input = n.div_ceil(2);
        let n_target = n - n_input;
        assert!(n_input.abs_diff(n_target) <= 1, "split {n_input}/{n_target}");
        assert!(n_target >= 1);
    }
}

#[test]
fn target_camera_scale_is_max_center_distance() {
    let bundle = generate_scene(7, 4, 16, 16, 0.3).unwrap();
    let normed = crate::losses::normalize_ground_truth(&bundle).unwrap();
    let cams: Vec<Camera> = normed.views.iter().map(|v| v.camera).collect();
    let scale = target_camera_scale(&cams);
    let expect = cams
        .iter()
        .map(|c| crate::geometry::vec3::norm(c.center()))
        .fold(0.0f64, f64::max);
    assert_eq!(scale, expect);
    assert!(scale > 0.0);
}

#[test]
fn missing_config_key_error_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    let mut value = serde_json::to_value(TrainConfig::toy()).unwrap();
    value.as_object_mut().unwrap().remove("seed");
    fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    let err = TrainConfig::from_json_file(&path).unwrap_err();
    assert!(err.to_string().contains("seed"), "error was: {err}");
}
