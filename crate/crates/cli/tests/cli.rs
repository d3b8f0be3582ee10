use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_facemotion"));
    c.env("RUST_LOG", "warn");
    c
}

fn ok(cmd: &mut Command) {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{:?}: {}", cmd, String::from_utf8_lossy(&out.stderr));
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stages_compose_to_the_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let data = t.join("data");
    ok(bin().args(["synth", "--kind", "sequences", "--n-per-class", "2", "--seed", "3", "--out"]).arg(&data));
    let manifest = data.join("manifest.json");

    let config = t.join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{"manifest": {:?}, "out": {:?}, "situation": 19,
                "trainers": [{{"family": "svm"}}, {{"family": "discriminant"}}],
                "cv": {{"folds": 2, "repeats": 1, "seed": 5}}}}"#,
            manifest,
            t.join("run")
        ),
    )
    .unwrap();
    ok(bin().args(["run", "--config"]).arg(&config));

    let s = t.join("stages");
    ok(bin().args(["flow", "extract", "--manifest"]).arg(&manifest).arg("--out").arg(s.join("flows")));
    ok(bin()
        .args(["layout", "build", "--situation", "19", "--manifest"])
        .arg(&manifest)
        .arg("--flows")
        .arg(s.join("flows"))
        .arg("--out")
        .arg(s.join("layouts")));
    ok(bin()
        .args(["features", "extract", "--manifest"])
        .arg(&manifest)
        .arg("--flows")
        .arg(s.join("flows"))
        .arg("--layouts")
        .arg(s.join("layouts"))
        .arg("--out")
        .arg(s.join("features.csv")));
    ok(bin()
        .args(["clean", "--features"])
        .arg(s.join("features.csv"))
        .arg("--out")
        .arg(s.join("features_clean.csv"))
        .arg("--audit")
        .arg(s.join("cleaning_audit.json")));
    for trainer in ["svm", "discriminant"] {
        ok(bin()
            .args(["eval", "--folds", "2", "--repeats", "1", "--seed", "5", "--situation", "19", "--trainer", trainer])
            .arg("--features")
            .arg(s.join("features.csv"))
            .arg("--out")
            .arg(s.join(format!("reports/eval_{trainer}.json"))));
    }
    ok(bin().args(["rank", "--features"]).arg(s.join("features_clean.csv")).arg("--out").arg(s.join("ranking.csv")));
    ok(bin()
        .args(["project", "--features"])
        .arg(s.join("features_clean.csv"))
        .arg("--out")
        .arg(s.join("projection.json")));

    let mut run_files = files(&t.join("run"));
    run_files.retain(|p| p != Path::new("summary.json"));
    assert_eq!(run_files, files(&s));
    for f in &run_files {
        assert_eq!(fs::read(t.join("run").join(f)).unwrap(), fs::read(s.join(f)).unwrap(), "{f:?} differs");
    }

    // train + predict round trip on the same features
    let model = t.join("model.json");
    ok(bin().args(["train", "--trainer", "discriminant", "--features"]).arg(s.join("features.csv")).arg("--out").arg(&model));
    let out = bin().args(["predict", "--model"]).arg(&model).arg("--features").arg(s.join("features.csv")).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("sequence_id,predicted"));
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(code(bin().arg("nonsense")), 2);
    assert_eq!(code(bin().args(["eval", "--trainer", "perceptron", "--features", "x.csv", "--out", "y.json"])), 2);
    assert_eq!(code(bin().args(["rank", "--bins", "1", "--features", "x.csv", "--out", "y.csv"])), 2);
    assert_eq!(code(bin().args(["rank", "--features"]).arg(t.join("missing.csv")).arg("--out").arg(t.join("r.csv"))), 3);

    let empty = t.join("manifest.json");
    fs::write(&empty, r#"{"sequences": []}"#).unwrap();
    assert_eq!(code(bin().args(["run", "--manifest"]).arg(&empty).arg("--out").arg(t.join("run"))), 3);
    assert!(!t.join("run").exists());

    // A learning rate this large overflows the network within a few steps.
    let feats = t.join("f.csv");
    ok(bin().args(["synth", "--n-per-class", "5", "--out"]).arg(&feats));
    let params = t.join("net.json");
    fs::write(&params, r#"{"family": "network", "learning_rate": 1e300, "epochs": 3}"#).unwrap();
    let train = |out: &str| {
        code(bin().arg("train").arg("--params").arg(&params).arg("--features").arg(&feats).arg("--out").arg(t.join(out)))
    };
    assert_eq!(train("model.json"), 4);
    assert_eq!(
        code(bin().args(["eval", "--folds", "2", "--repeats", "1", "--params"]).arg(&params).arg("--features").arg(&feats).arg("--out").arg(t.join("e.json"))),
        4
    );
}
