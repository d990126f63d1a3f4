use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sage")).args(args).output().unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn error_of(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn plan_matches_golden_chain() {
    let o = sage(&["plan", "--task", &data("pick_place_task.json"), "--graph", &data("pick_place_graph.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let golden = std::fs::read_to_string(data("pick_place_chain.golden.json")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn validate_accepts_golden_and_rejects_a_gap() {
    let o = sage(&["validate", "--chain", &data("pick_place_chain.golden.json")]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["issues"], serde_json::json!([]));

    let mut chain: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data("pick_place_chain.golden.json")).unwrap()).unwrap();
    chain["graphs"].as_array_mut().unwrap().remove(3);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, chain.to_string()).unwrap();
    let o = sage(&["validate", "--chain", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(7));
    assert_eq!(error_of(&o)["error"], "invalid_chain");
}

#[test]
fn error_categories_and_codes() {
    let o = sage(&["plan"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"], "usage");

    let o = sage(&["validate", "--chain", "/nonexistent/chain.json"]);
    assert_eq!(o.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"n_demos\": \"many\"}").unwrap();
    let o = sage(&["--config", cfg.to_str().unwrap(), "plan", "--family", "FlexiblePlace"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_of(&o)["error"], "parse");

    let o = sage(&["--out", dir.path().to_str().unwrap(), "run", "--family", "HybridGrill"]);
    assert_eq!(o.status.code(), Some(6));
    assert_eq!(error_of(&o)["error"], "missing_artifacts");

    let o = sage(&["--resolution", "640x480", "plan", "--family", "FlexiblePlace"]);
    assert_eq!(o.status.code(), Some(2));
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn small_bench_is_reproducible_and_writes_the_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n_demos": 20, "seen_episodes": 1, "unseen_episodes": 1, "families": ["SequentialStack", "HybridDrawer"]}"#).unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for r in &runs {
        let o = sage(&["--seed", "0", "--config", cfg.to_str().unwrap(), "--out", r.to_str().unwrap(), "--dump-frames", "bench", "--build-all"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (tree(&runs[0]), tree(&runs[1]));
    assert_eq!(a.len(), b.len());
    assert!(a == b, "bench outputs differ");
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    assert!(names.contains(&"report.json".to_string()) && names.contains(&"report.csv".to_string()));
    assert!(names.contains(&"artifacts/predictor.json".to_string()));
    assert!(names.iter().any(|n| n.starts_with("HybridDrawer/unseen/") && n.ends_with("/episode.json")));
    assert!(names.iter().any(|n| n.ends_with("phase_000_subgoal.png")));

    // a single run and a rendered goal reuse the artifacts
    let out = runs[0].to_str().unwrap();
    let o = sage(&["--config", cfg.to_str().unwrap(), "--out", out, "run", "--family", "SequentialStack", "--order-seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["success"], true);
    assert_eq!(v["mode"], "unseen");
    let o = sage(&["--config", cfg.to_str().unwrap(), "--out", out, "render-goal", "--family", "SequentialStack", "--step", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(Path::new(v["image"].as_str().unwrap()).exists());
}
