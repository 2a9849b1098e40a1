use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn distpac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distpac")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = distpac(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn ratio(compare_json: &Path, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(compare_json).unwrap()).unwrap();
    v["ratios"][key].as_f64().unwrap()
}

#[test]
fn zero_epsilon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("conjunction.toml")).unwrap().replace("epsilon = 0.05", "epsilon = 0.0");
    std::fs::write(&cfg, text).unwrap();
    let out = distpac(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ε must be in (0,1), got 0"));
}

#[test]
fn unknown_protocol_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "protocol = \"telepathy\"\n").unwrap();
    let out = distpac(&["run", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("telepathy") && err.contains("closed_conjunction") && err.contains("robust_halving"));
}

#[test]
fn list_protocols_covers_every_family() {
    let out = run_ok(&["--list-protocols"]);
    for name in [
        "sample_shipping",
        "eq_mistake_bound",
        "closed_conjunction",
        "closed_box",
        "parity",
        "decision_list",
        "averaging",
        "perceptron",
        "appendix_c",
        "boosting",
        "robust_halving",
        "opt_search",
        "interval_summary",
        "private_conjunction",
        "private_decision_list",
    ] {
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name} missing");
    }
}

#[test]
fn conjunction_config_writes_one_row_per_seed_and_compares_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    run_ok(&["run", configs().join("conjunction.toml").to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let rows = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
    assert!(a.join("summary.json").exists());
    let json = dir.path().join("cmp.json");
    run_ok(&["compare", a.to_str().unwrap(), a.to_str().unwrap(), "--out", json.to_str().unwrap()]);
    for key in ["bits", "examples", "hypotheses", "rounds"] {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        let r = &v["ratios"][key];
        assert!(r.is_null() || r.as_f64() == Some(1.0), "{key}: {r}");
    }
}

#[test]
fn decision_list_protocol_beats_shipping() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("dl"), dir.path().join("ship"));
    run_ok(&["run", configs().join("decision_list.toml").to_str().unwrap(), "--seed-range", "0..20", "--out", a.to_str().unwrap()]);
    run_ok(&["run", configs().join("shipping_decision_list.toml").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let json = dir.path().join("cmp.json");
    run_ok(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--out", json.to_str().unwrap()]);
    let r = ratio(&json, "bits");
    assert!(r < 0.2, "bits ratio {r}");
}

#[test]
fn boosting_saves_more_examples_as_epsilon_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    let boost = std::fs::read_to_string(configs().join("boosting.toml")).unwrap();
    let ship = boost
        .replace("protocol = \"boosting\"", "protocol = \"sample_shipping\"")
        .replace("beta = 0.25\n", "learner = { kind = \"conjunction\" }\n");
    let mut ratios = Vec::new();
    for eps in ["0.1", "0.03", "0.01"] {
        let mut dirs = Vec::new();
        for (name, text) in [("boost", &boost), ("ship", &ship)] {
            let cfg = dir.path().join(format!("{name}_{eps}.toml"));
            std::fs::write(&cfg, text.replace("epsilon = 0.05", &format!("epsilon = {eps}"))).unwrap();
            let out = dir.path().join(format!("{name}_{eps}"));
            run_ok(&["run", cfg.to_str().unwrap(), "--seed-range", "0..5", "--out", out.to_str().unwrap()]);
            dirs.push(out);
        }
        let json = dir.path().join(format!("cmp_{eps}.json"));
        run_ok(&["compare", dirs[0].to_str().unwrap(), dirs[1].to_str().unwrap(), "--out", json.to_str().unwrap()]);
        ratios.push(ratio(&json, "examples"));
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}
