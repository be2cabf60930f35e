use std::path::Path;
use std::process::{Command, Output};

use equity_core::casestudy::synthetic_uci_csv;
use equity_core::learner::{train, ModelSpec};
use equity_core::loopsim::{generate_cohort, SyntheticConfig};
use equity_core::scoring::ModelSpace;
use equity_core::{ObstacleModel, Policy};
use serde_json::{json, Value};

fn equity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equity")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn questions_are_static_and_complete() {
    let a = equity(&["questions"]);
    let b = equity(&["questions"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let numbered = text.lines().filter(|l| l.split_once(") ").is_some_and(|(n, _)| n.parse::<u32>().is_ok()));
    assert_eq!(numbered.count(), 21);
    for header in ["Selection of the proxy model", "Selection of evaluation model", "Curation of ground truth"] {
        assert!(text.lines().any(|l| l.starts_with(header)), "{header}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(equity(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(equity(&["audit"]).status.code(), Some(1));
    assert_eq!(equity(&["questions", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(equity(&["--help"]).status.code(), Some(0));
}

#[test]
fn audit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.csv", "pred,label,group\n1,1,0\n0,0,0\n1,1,1\n0,0,1\n1,0,1\n");
    let out = equity(&["audit", &ok]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["outcome"]["eo_violation"], json!(0.5));

    let degenerate = write(dir.path(), "deg.csv", "pred,label,group\n1,1,0\n0,1,0\n1,1,1\n0,0,1\n");
    assert_eq!(equity(&["audit", &degenerate]).status.code(), Some(3));
    let malformed = write(dir.path(), "bad.csv", "pred,label\n1,1\n");
    assert_eq!(equity(&["audit", &malformed]).status.code(), Some(2));
    assert_eq!(equity(&["audit", "/nonexistent/audit.csv"]).status.code(), Some(2));
}

#[test]
fn casestudy_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "students.csv", &synthetic_uci_csv(300, 11));
    let config = write(dir.path(), "run.toml", "tau_o = 0.2\nformats = [\"json\", \"csv\"]\n");
    let mut listings = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = equity(&["casestudy", &input, "--config", &config, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        listings.push(files);
    }
    assert_eq!(listings[0].len(), listings[1].len());
    assert!(listings[0].iter().any(|p| p.extension().is_some_and(|e| e == "csv")));
    for (a, b) in listings[0].iter().zip(&listings[1]) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
    let bad = write(dir.path(), "bad.toml", "tau = 4.0\n");
    assert_eq!(equity(&["casestudy", &input, "--config", &bad]).status.code(), Some(2));
}

fn spaces_json() -> String {
    let cfg = SyntheticConfig { n_per_round: 400, latent_loading: 0.95, ..SyntheticConfig::default() };
    let cohort = generate_cohort(&cfg, 0).unwrap();
    let proxy = ModelSpace {
        candidate_specs: vec![ModelSpec::logistic(["p0", "p1", "p2"]).unwrap()],
        dataset: cohort.proxy,
        obstacle_model: cfg.proxy_obstacles().unwrap(),
        candidate_policies: vec![Policy::none(), Policy::full()],
    };
    let intended = ModelSpace {
        candidate_specs: vec![ModelSpec::logistic(["t0", "t1", "t2", "t3"]).unwrap()],
        dataset: cohort.intended,
        obstacle_model: cfg.intended_obstacles().unwrap(),
        candidate_policies: vec![Policy::full()],
    };
    json!({ "proxy": proxy, "intended": intended }).to_string()
}

#[test]
fn score_is_seeded_and_reports_gaps_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let spaces = write(dir.path(), "spaces.json", &spaces_json());
    let config = write(dir.path(), "score.toml", "max_outer_iters = 5\nmax_inner_iters = 4\n");
    let run = || equity(&["score", &spaces, "--gaps", "--seed", "9", "--config", &config]);
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let out: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(out["gaps"]["gamma_x"], json!([1, 1, 1, 1]));
    assert!(out["trace"]["records"].as_array().is_some_and(|r| !r.is_empty()));

    let csv = equity(&["score", &spaces, "--format", "csv", "--config", &config]);
    assert!(stdout(&csv).starts_with("iter,spec_id,policy_id,psi,omega,zeta,phase,accepted,reason\n"));
    let broken = write(dir.path(), "broken.json", "{\"proxy\": 1}");
    assert_eq!(equity(&["score", &broken]).status.code(), Some(2));
}

#[test]
fn gaps_from_profiles_and_saved_models() {
    let dir = tempfile::tempdir().unwrap();
    let obstacles = |d, affected: &[usize]| ObstacleModel::uniform(d, affected.iter().copied(), 1.0).unwrap();
    let proxy = json!({
        "feature_names": ["sex", "test_scores", "grades"],
        "importance": [0.2, 0.5, 0.3],
        "obstacles": obstacles(3, &[1, 2]),
    });
    let intended = json!({
        "feature_names": ["sex", "health"],
        "importance": [0.6, 0.4],
        "obstacles": obstacles(2, &[1]),
    });
    let p = write(dir.path(), "proxy.json", &proxy.to_string());
    let t = write(dir.path(), "intended.json", &intended.to_string());
    let out = equity(&["gaps", &p, &t]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["gamma_x"], json!([0, 1]));
    assert_eq!(report["obstacle_gap"]["unmatched_affected_features"], json!(1));
    let gamma_l = report["gamma_l"].as_array().unwrap();
    assert!((gamma_l[0].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert!((gamma_l[1].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let x = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]];
    let model = train(&ModelSpec::logistic(["sex", "test_scores", "grades"]).unwrap(), &x, &[true, false, true, false], 1)
        .unwrap();
    let saved = dir.path().join("model.json");
    model.save(&saved).unwrap();
    let bare = write(dir.path(), "bare.json", &json!({ "obstacles": obstacles(3, &[1]) }).to_string());
    let out = equity(&["gaps", &bare, &t, "--proxy-model", saved.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(equity(&["gaps", &bare, &t]).status.code(), Some(2));
}

#[test]
fn simulate_loop_writes_one_row_per_round_and_regime() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "loop.toml", "n_per_round = 300\ntrain_iterations = 100\n");
    let out_dir = dir.path().join("loop");
    let out = equity(&[
        "simulate-loop",
        "--regime",
        "no_equity,full_equity",
        "--rounds",
        "3",
        "--config",
        &config,
        "--format",
        "csv",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("loop.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert_eq!(equity(&["simulate-loop", "--regime", "sometimes"]).status.code(), Some(1));
}
