use std::path::Path;
use std::process::Command;

use guide_core::diffusion::{DiffusionPolicy, PolicyConfig};
use guide_core::planner::PolicyKind;
use guide_harness::eval::{check_thresholds, gap_pct, MetricsRow};
use guide_harness::pipeline::cmd_eval;
use guide_harness::{BenchmarkSpec, Config, HarnessError, Suite};

fn tiny_policy(dir: &Path) {
    let cfg = PolicyConfig {
        d_model: 8,
        heads: 2,
        ffn: 16,
        blocks: 1,
        obs_dim: 8,
        node_cap: 64,
        eps_width: 32,
        eps_blocks: 1,
        t_o: 2,
        t_p: 4,
        ..PolicyConfig::default()
    };
    let p = DiffusionPolicy::<f32>::new(cfg, 3);
    std::fs::create_dir_all(dir).unwrap();
    p.write_to(&mut std::fs::File::create(dir.join("policy.gdiff")).unwrap())
        .unwrap();
}

fn small_config(out: &Path, seeds: &str, policies: &str) -> Config {
    let mut c = Config::default();
    for (k, v) in [
        ("paths.out", out.to_str().unwrap()),
        ("world.width_m", "24"),
        ("world.height_m", "24"),
        ("models.predictor", "heuristic"),
        ("episode.k_steps", "5"),
        ("eval.seeds", seeds),
        ("eval.policies", policies),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

fn parse_csv(text: &str) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let (rows, agg) = text.split_once("# aggregate\n").expect("aggregate block");
    let split = |block: &str| -> Vec<Vec<String>> {
        block
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    };
    (split(rows), split(agg))
}

#[test]
fn gap_is_relative_to_the_expert() {
    let g = gap_pct(545.0, 501.0);
    assert!((g - 100.0 * 44.0 / 501.0).abs() < 1e-12);
    assert_eq!(format!("{g:.1}"), "8.8");
    assert_eq!(gap_pct(501.0, 501.0), 0.0);
}

#[test]
fn gap_suite_emits_one_row_per_policy_and_seed_plus_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    tiny_policy(dir.path());
    let c = small_config(dir.path(), "1-30", "guide,graph-tsp,no-region-eval,expert");
    let out = cmd_eval(&c, 2).unwrap();
    let (rows, agg) = parse_csv(&std::fs::read_to_string(&out.csv).unwrap());
    assert_eq!(rows.len(), 120);
    assert_eq!(agg.len(), 4);
    for r in rows.iter().filter(|r| r[1] == "expert") {
        assert_eq!(r[8].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn aggregates_are_recomputable_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path(), "1-6", "graph-tsp,nearest-frontier,expert");
    let out = cmd_eval(&c, 1).unwrap();
    let (rows, agg) = parse_csv(&std::fs::read_to_string(&out.csv).unwrap());
    for a in &agg {
        let group: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == a[1]).collect();
        assert_eq!(group.len().to_string(), a[3]);
        for (col, mean_at, std_at) in [(4, 4, 5), (5, 6, 7), (8, 10, 11)] {
            let xs: Vec<f64> = group.iter().map(|r| r[col].parse().unwrap()).collect();
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(
                (m - a[mean_at].parse::<f64>().unwrap()).abs() < 1e-9,
                "{} mean col {col}",
                a[1]
            );
            assert!(
                (s - a[std_at].parse::<f64>().unwrap()).abs() < 1e-9,
                "{} std col {col}",
                a[1]
            );
        }
        let cov: Vec<f64> = group.iter().map(|r| r[6].parse().unwrap()).collect();
        let m = cov.iter().sum::<f64>() / cov.len() as f64;
        assert!((m - a[8].parse::<f64>().unwrap()).abs() < 1e-9);
        let complete = group.iter().filter(|r| r[7] == "1").count();
        assert_eq!(complete.to_string(), a[9]);
    }
}

#[test]
fn eval_is_byte_identical_across_runs_and_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    tiny_policy(a.path());
    tiny_policy(b.path());
    let ca = small_config(a.path(), "1-3", "guide,graph-tsp,expert");
    let cb = small_config(b.path(), "1-3", "guide,graph-tsp,expert");
    let oa = cmd_eval(&ca, 1).unwrap();
    let ob = cmd_eval(&cb, 3).unwrap();
    assert_eq!(std::fs::read(oa.csv).unwrap(), std::fs::read(ob.csv).unwrap());
}

#[test]
fn missing_models_name_the_command_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path(), "1", "guide");
    match cmd_eval(&c, 1) {
        Err(HarnessError::Missing { command, .. }) => assert_eq!(command, "train-policy"),
        other => panic!("expected a missing-artifact error, got {other:?}"),
    }
    let mut c = small_config(dir.path(), "1", "graph-tsp");
    c.set("models.predictor", "learned").unwrap();
    let msg = cmd_eval(&c, 1).unwrap_err().to_string();
    assert!(msg.contains("run `guide train-predictor` first"), "{msg}");
}

fn row(policy: PolicyKind, seed: u64, distance: f64, gap: f64) -> MetricsRow {
    MetricsRow {
        suite: Suite::Ablation,
        policy: policy.name().into(),
        k: None,
        seed,
        distance_m: distance,
        time_s: distance,
        coverage: 1.0,
        complete: true,
        gap_pct: Some(gap),
        acc_by_step: Vec::new(),
        plan_time_ms: 1.0,
        steps: 1,
    }
}

#[test]
fn ablation_thresholds() {
    let mut c = Config::default();
    c.set("eval.suite", "ablation").unwrap();
    let spec = BenchmarkSpec::from_config(&c).unwrap();
    let ok = vec![
        row(PolicyKind::Guide, 1, 110.0, 10.0),
        row(PolicyKind::GuideNoRegionEval, 1, 115.0, 15.0),
        row(PolicyKind::GraphTsp, 1, 120.0, 20.0),
    ];
    assert!(check_thresholds(&spec, &ok).is_empty());
    let swapped = vec![
        row(PolicyKind::Guide, 1, 118.0, 18.0),
        row(PolicyKind::GuideNoRegionEval, 1, 115.0, 15.0),
        row(PolicyKind::GraphTsp, 1, 120.0, 20.0),
    ];
    assert_eq!(check_thresholds(&spec, &swapped).len(), 1);
    let far = vec![row(PolicyKind::Guide, 1, 130.0, 30.0)];
    assert_eq!(check_thresholds(&spec, &far).len(), 1);
}

#[test]
fn cli_assert_exit_code_tracks_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    tiny_policy(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "world.width_m = 24\nworld.height_m = 24\nmodels.predictor = heuristic\nepisode.k_steps = 5\n\
         eval.suite = gap\neval.policies = guide,expert\n",
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_guide"))
        .args(["eval", "--assert", "--seed", "1-2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let text = std::fs::read_to_string(dir.path().join("gap.csv")).unwrap();
    let (_, agg) = parse_csv(&text);
    let guide_gap: f64 = agg.iter().find(|a| a[1] == "guide").unwrap()[10].parse().unwrap();
    let expected = if guide_gap > 25.0 { 2 } else { 0 };
    assert_eq!(
        status.status.code(),
        Some(expected),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );

    let missing = Command::new(env!("CARGO_BIN_EXE_guide"))
        .args(["train-policy", "--out"])
        .arg(dir.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("run `guide collect-expert` first"));
}

#[test]
fn render_writes_one_image_per_requested_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path(), "1", "");
    c.set("eval.render_steps", "0,2").unwrap();
    let r = guide_harness::pipeline::cmd_render(&c, &[4], PolicyKind::GraphTsp, true, true).unwrap();
    assert_eq!(r.images.len(), 2);
    assert_eq!(r.dumps.len(), 6);
    let bytes = std::fs::read(&r.images[0]).unwrap();
    assert!(bytes.starts_with(b"P6\n180 180\n255\n"));
}
