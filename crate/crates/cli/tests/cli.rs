use std::path::Path;
use std::process::{Command, Output};

fn odmn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odmn"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = odmn(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn unknown_flags_and_variants_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(odmn(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        odmn(&["generate", "--out", "d.csv", "--bogus"], dir.path())
            .status
            .code(),
        Some(1)
    );
    let out = odmn(
        &[
            "train",
            "--data",
            "d.csv",
            "--out",
            "m.json",
            "--ablation=XYZ",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = odmn(
        &["train", "--data", "absent.csv", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn generate_train_eval_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = odmn(args, d);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    };
    ok(&[
        "generate", "--out", "data.csv", "--rows", "1500", "--seed", "3",
    ]);
    assert!(d.join("data.csv.schema.json").exists());
    ok(&["fit-buckets", "--data", "data.csv", "--out", "scheme.json"]);
    ok(&[
        "train",
        "--data",
        "data.csv",
        "--scheme",
        "scheme.json",
        "--epochs",
        "2",
        "--seed",
        "3",
        "--out",
        "model.json",
    ]);
    ok(&[
        "eval",
        "--checkpoint",
        "model.json",
        "--data",
        "data.csv",
        "--out",
        "report.json",
        "--lorenz-dir",
        "curves",
    ]);
    let report = std::fs::read_to_string(d.join("report.json")).unwrap();
    assert!(report.contains("format_version") && report.contains("mutual_gini"));
    assert!(d.join("curves/lorenz_ltv365_model.csv").exists());

    ok(&[
        "lorenz-export",
        "--checkpoint",
        "model.json",
        "--data",
        "data.csv",
        "--out",
        "export",
    ]);
    let curve = std::fs::read_to_string(d.join("export/lorenz_ltv30_true.csv")).unwrap();
    assert!(curve.starts_with("# odmn-lorenz format_version=1\nx,y\n"));

    // a three-row feature file without label columns
    let text = std::fs::read_to_string(d.join("data.csv")).unwrap();
    let mut lines = text.lines();
    let version = lines.next().unwrap();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep = header.iter().filter(|h| !h.starts_with("ltv")).count();
    let mut features = vec![version.to_string(), header[..keep].join(",")];
    features.extend(
        lines
            .take(3)
            .map(|l| l.split(',').take(keep).collect::<Vec<_>>().join(",")),
    );
    std::fs::write(d.join("features.csv"), features.join("\n") + "\n").unwrap();
    ok(&[
        "predict",
        "--checkpoint",
        "model.json",
        "--data",
        "features.csv",
        "--schema",
        "data.csv.schema.json",
        "--out",
        "pred.csv",
    ]);
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    let rows: Vec<&str> = pred.lines().collect();
    assert_eq!(rows[0], "ltv30,ltv90,ltv180,ltv365");
    assert_eq!(rows.len(), 4);
    for row in &rows[1..] {
        let values: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 4);
        assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn baseline_and_single_task_ablation_train() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(odmn(&["generate", "--out", "data.csv", "--rows", "800"], d)
        .status
        .success());
    let out = odmn(
        &[
            "train",
            "--data",
            "data.csv",
            "--epochs",
            "1",
            "--baseline",
            "--out",
            "b.json",
        ],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = odmn(
        &[
            "train",
            "--data",
            "data.csv",
            "--epochs",
            "1",
            "--ablation=nm",
            "--out",
            "nm.json",
        ],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = odmn(
        &[
            "predict",
            "--checkpoint",
            "nm.json",
            "--data",
            "data.csv",
            "--out",
            "p.csv",
        ],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let pred = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(pred.lines().next(), Some("ltv365"));
    assert_eq!(pred.lines().count(), 801);
}
