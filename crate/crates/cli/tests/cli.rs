//! Command-line behavior: config merging, exit codes and output formats.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bias_audit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bias-audit")).args(args).output().unwrap()
}

fn bundle(dir: &Path) -> String {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, r#"{"models": 3, "samples": 300, "skew_k": 50, "concepts": {"count": 3, "background": 30}}"#).unwrap();
    let out = dir.join("bundle");
    let o = bias_audit(&["synth", "generate", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_string_lossy().into_owned()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn config_fills_flags_the_command_line_leaves_out() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"images": "{b}/models/m0/pre.emb", "texts": "{b}/models/m0/texts.emb", "pairs": "{b}/pairs.jsonl",
               "annotations": "{b}/annotations.jsonl", "attr": ["gender"], "k": 3}}"#
        ),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_config = json(&bias_audit(&["audit", "recall", "--config", cfg]));
    assert_eq!(from_config["params"]["command"]["audit"]["recall"]["k"], 3);
    let overridden = json(&bias_audit(&["audit", "recall", "--config", cfg, "--k", "5"]));
    assert_eq!(overridden["params"]["command"]["audit"]["recall"]["k"], 5);
}

#[test]
fn reports_carry_input_digests_and_sorted_keys() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    let pre = format!("{b}/models/m0/pre.emb");
    let post = format!("{b}/models/m0/post.emb");
    let pre1 = format!("{b}/models/m1/pre.emb");
    let post1 = format!("{b}/models/m1/post.emb");
    let o = bias_audit(&["converge", "compare", "--pre", &pre, &pre1, "--post", &post, &post1]);
    let report = json(&o);
    let inputs = report["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 4);
    assert!(inputs.iter().all(|i| i["sha256"].as_str().unwrap().len() == 64));
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    let text = String::from_utf8_lossy(&o.stdout);
    let mut last = 0;
    for k in keys {
        let at = text.find(&format!("\n  \"{k}\"")).unwrap();
        assert!(at >= last, "keys out of order at {k}");
        last = at;
    }
}

#[test]
fn csv_output_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    let o = bias_audit(&[
        "audit", "downstream", "--task", "vqa", "--pred", &format!("{b}/models/m0/vqa.jsonl"), "--annotations",
        &format!("{b}/annotations.jsonl"), "--attr", "gender", "--format", "csv",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("field,value\n"));
    assert!(text.lines().any(|l| l.starts_with("tool.name,")));
}

#[test]
fn bad_input_exits_with_one_and_bad_config_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.emb");
    let o = bias_audit(&["converge", "compare", "--pre", missing.to_str().unwrap(), "x", "--post", "y", "z"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "[1, 2]").unwrap();
    let o = bias_audit(&["synth", "generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recall_plot_is_a_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    let svg = dir.path().join("p.svg");
    let o = bias_audit(&[
        "audit", "recall", "--images", &format!("{b}/models/m0/pre.emb"), "--texts", &format!("{b}/models/m0/texts.emb"),
        "--pairs", &format!("{b}/pairs.jsonl"), "--annotations", &format!("{b}/annotations.jsonl"), "--attr", "gender",
        "--plot", svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains(r#"class="cell""#));
}

#[test]
fn synth_requires_an_output_directory() {
    let o = bias_audit(&["synth", "generate"]);
    assert_eq!(o.status.code(), Some(1));
}
