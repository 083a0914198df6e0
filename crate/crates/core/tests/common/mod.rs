#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const DESK_CONFIG: &str = r#"{
  "seed": 3,
  "taxonomy": {"jpeg_factors": [27, 21, 15, 9, 3], "downsample_sizes": [80, 64, 48, 32, 16]},
  "train": {"epochs": 2, "batch_size": 16},
  "simulation": {"items": 500, "items_per_class": 60}
}
"#;

pub fn qcia(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcia"))
        .args(args)
        .env("QCIA_WORKDIR", work)
        .current_dir(work)
        .output()
        .expect("spawn qcia")
}

pub fn ok(work: &Path, args: &[&str]) -> Vec<u8> {
    let out = qcia(work, args);
    assert!(out.status.success(), "qcia {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn registry_json() -> String {
    let mut classes = vec![r#"{"kind": "G"}"#.to_string()];
    for kind in ["BJ", "BL"] {
        for level in 1..=5 {
            classes.push(format!(r#"{{"kind": "{kind}", "level": {level}}}"#));
        }
    }
    let models: Vec<String> =
        classes.iter().map(|c| format!(r#"{{"class": {c}, "checkpoint": {{"synthetic_profile": {{}}}}}}"#)).collect();
    format!("{{\"task\": \"detect\", \"models\": [{}]}}\n", models.join(", "))
}

/// Runs every subcommand once inside `work` and returns their combined stdout with
/// the work dir path scrubbed.
pub fn pipeline(work: &Path) -> String {
    fs::write(work.join("desk.json"), DESK_CONFIG).unwrap();
    fs::write(work.join("registry.json"), registry_json()).unwrap();
    let mut log = Vec::new();
    let steps: Vec<Vec<&str>> = vec![
        vec!["corpus", "--out", "src", "--count", "24", "--seed", "4", "--config", "desk.json"],
        vec!["degrade", "--in", "src", "--out", "mixed", "--mixed", "--seed", "5", "--manifest", "mixed/manifest.json", "--config", "desk.json"],
        vec!["degrade", "--in", "src", "--out", "bj2", "--class", "BJ:2", "--seed", "5", "--manifest", "bj2.json", "--config", "desk.json"],
        vec!["train-quality", "--manifest", "mixed/manifest.json", "--net", "type", "--config", "desk.json", "--out", "bundle/type.ckpt"],
        vec!["train-quality", "--manifest", "mixed/manifest.json", "--net", "bj-level", "--config", "desk.json", "--out", "bundle/bj_level.ckpt"],
        vec!["train-quality", "--manifest", "mixed/manifest.json", "--net", "bl-level", "--config", "desk.json", "--out", "bundle/bl_level.ckpt"],
        vec!["predict-quality", "--bundle", "bundle", "--image", "bj2/img00003_BJ02.jpg", "--json"],
        vec!["eval", "--task", "detect", "--registry", "registry.json", "--manifest", "mixed/manifest.json", "--k", "3", "--report", "reports/eval.json", "--config", "desk.json"],
        vec!["eval", "--task", "detect", "--registry", "registry.json", "--manifest", "mixed/manifest.json", "--k", "2", "--report", "reports/eval_bundle.json", "--bundle", "bundle"],
        vec!["simulate", "--config", "desk.json", "--report", "reports/simulate.json"],
        vec!["gradcheck", "--seed", "7", "--nets", "4"],
    ];
    for args in &steps {
        log.extend(ok(work, args));
    }
    String::from_utf8(log).unwrap().replace(&*work.canonicalize().unwrap().to_string_lossy(), "<work>")
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
