use std::path::Path;
use std::process::{Command, Output};

fn sfr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfr"))
        .args(args)
        .output()
        .expect("run sfr")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Three taste groups over twelve items with a little per-user offset.
fn small_dataset(dir: &Path) -> String {
    let mut src = String::from("user,item,rating\n");
    for u in 0..40usize {
        for i in 0..12usize {
            if (u * 7 + i * 3) % 5 == 0 {
                continue;
            }
            let group = i / 4;
            let base = [5, 3, 1][(group + u % 3) % 3];
            let r = (base + (u % 2) * (i % 2)).clamp(1, 5);
            src.push_str(&format!("u{u},m{i},{r}\n"));
        }
    }
    let path = dir.join("ratings.csv");
    std::fs::write(&path, src).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn toy_ladder_sfr_flags_only_the_two_sources() {
    let out = sfr(&["toy", "--which", "ladder26", "--method", "sfr"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 26);
    for row in &rows {
        let (truth, est): (f64, f64) = (row[1].parse().unwrap(), row[3].parse().unwrap());
        assert!((truth - est).abs() < 5e-3, "{row:?}");
        let is_source = row[5] == "yes";
        assert_eq!(is_source, row[0] == "v1" || row[0] == "v26", "{row:?}");
    }
}

#[test]
fn toy_ladder_hcp_labels() {
    let text = stdout(&sfr(&["toy", "--which", "ladder26", "--method", "hcp"]));
    let est = |node: &str| -> String {
        let row = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(node))
            .unwrap();
        let v: f64 = row.split_whitespace().nth(3).unwrap().parse().unwrap();
        format!("{v:.1}")
    };
    assert_eq!(est("v1"), "4.4");
    assert_eq!(est("v26"), "6.6");
}

#[test]
fn toy_square_knn() {
    let text = stdout(&sfr(&["toy", "--which", "square", "--method", "knn"]));
    let est = |node: &str| -> f64 {
        let row = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(node))
            .unwrap();
        row.split_whitespace().nth(3).unwrap().parse().unwrap()
    };
    assert_eq!((est("B"), est("D")), (5.0, 3.0));
}

#[test]
fn toy_square_oracle_lists_ties() {
    let out = sfr(&["toy", "--which", "square", "--method", "l0_oracle"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("minimal source sets (5)"), "{text}");
    assert!(text.contains("{A, D}"));
    assert!(!text.contains("{A, B}"));
}

#[test]
fn evaluate_toy_ladder_sfr_row_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = sfr(&[
        "evaluate",
        "--toy",
        "ladder26",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row = text.lines().find(|l| l.starts_with("sfr")).unwrap();
    assert_eq!(row.split_whitespace().nth(1), Some("0.00"));
    assert!(dir.path().join("toy_report.json").exists());
}

#[test]
fn evaluate_writes_reports_and_prints_only_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("out");
    let out = sfr(&[
        "evaluate",
        "--dataset",
        &data,
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        "report.json",
        "rmse.tsv",
        "rmse_by_truth.tsv",
        "split_test.csv",
        "config.txt",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("All")));
    assert!(text.lines().any(|l| l.starts_with("Higher")));
    assert!(text.lines().any(|l| l.starts_with("Lower")));
    assert!(!text.contains("loaded"), "progress belongs on stderr");

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    let methods: Vec<&str> = doc["report"]["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["knn", "hcp", "sfr"]);

    let manifest = std::fs::read_to_string(out_dir.join("split_test.csv")).unwrap();
    assert_eq!(
        manifest.lines().count(),
        doc["split"]["test_records"].as_u64().unwrap() as usize
    );

    // the written config reproduces the run
    let replay = dir.path().join("replay");
    let out = sfr(&[
        "evaluate",
        "--config",
        out_dir.join("config.txt").to_str().unwrap(),
        "--output-dir",
        replay.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        std::fs::read(out_dir.join("rmse.tsv")).unwrap(),
        std::fs::read(replay.join("rmse.tsv")).unwrap()
    );
}

#[test]
fn knn_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("out");
    let out = sfr(&[
        "evaluate",
        "--dataset",
        &data,
        "--methods",
        "knn",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let methods = doc["report"]["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 1);
    assert_eq!(methods[0]["method"], "knn");
    let tsv = std::fs::read_to_string(out_dir.join("rmse.tsv")).unwrap();
    assert!(tsv.lines().skip(1).all(|l| l.starts_with("knn\t")));
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let mut runs = Vec::new();
    for jobs in ["1", "8"] {
        let out_dir = dir.path().join(format!("j{jobs}"));
        let o = out_dir.to_str().unwrap();
        for cmd in ["evaluate", "predict", "examine", "build-graph"] {
            let out = sfr(&[
                cmd,
                "--dataset",
                &data,
                "--output-dir",
                o,
                "--jobs",
                jobs,
                "--min-neighbor-ratings",
                "2",
                "--coverage",
                "0.5",
            ]);
            assert!(out.status.success(), "{cmd}: {}", stderr(&out));
        }
        runs.push(out_dir);
    }
    for f in [
        "report.json",
        "rmse.tsv",
        "rmse_by_truth.tsv",
        "split_test.csv",
        "predictions.csv",
        "linearity.tsv",
        "graph.tsv",
    ] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert!(!a.is_empty(), "{f} is empty");
        assert_eq!(a, b, "{f} differs between --jobs 1 and 8");
    }
}

#[test]
fn predict_dump_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("out");
    let out = sfr(&["predict", "--dataset", &data, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dump = std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next(), Some("user,item,estimate,method,is_fallback"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 5, "{line}");
        let e: f64 = f[2].parse().unwrap();
        assert!((1.0..=5.0).contains(&e));
        assert!(["knn", "hcp", "sfr"].contains(&f[3]));
        assert!(f[4] == "true" || f[4] == "false");
    }
}

#[test]
fn empty_dataset_gives_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.csv");
    std::fs::write(&data, "").unwrap();
    let graph = dir.path().join("g.tsv");
    let out = sfr(&[
        "build-graph",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        graph.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(std::fs::read(&graph).unwrap().is_empty());
    assert!(stderr(&out).contains("edges=0"));
}

#[test]
fn examine_flat_user_fills_the_zero_bin() {
    // every user rates every item with one constant: all item columns are
    // identical, so the graph is complete and every sample is 0
    let dir = tempfile::tempdir().unwrap();
    let mut src = String::from("user,item,rating\n");
    for (u, c) in [1, 2, 3, 4, 5, 3].iter().enumerate() {
        for i in 0..8 {
            src.push_str(&format!("u{u},m{i},{c}\n"));
        }
    }
    let data = dir.path().join("flat.csv");
    std::fs::write(&data, src).unwrap();
    let out = sfr(&[
        "examine",
        "--dataset",
        data.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("samples 48"), "{}", stdout(&out));
    let tsv = std::fs::read_to_string(dir.path().join("linearity.tsv")).unwrap();
    let nonzero: Vec<&str> = tsv.lines().filter(|l| !l.ends_with("\t0")).collect();
    assert_eq!(nonzero, ["-0.125\t0.125\t48"]);
}

#[test]
fn examine_with_no_qualifying_pairs_writes_empty_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = sfr(&[
        "examine",
        "--dataset",
        &data,
        "--min-neighbor-ratings",
        "1000",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("samples 0"));
    assert!(std::fs::read(dir.path().join("linearity.tsv")).unwrap().is_empty());
}

#[test]
fn errors_exit_nonzero_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "user,item,rating\nu,a,3\nu,b\n").unwrap();
    let out = sfr(&[
        "evaluate",
        "--dataset",
        bad.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("stage load") && err.contains("line 3"), "{err}");

    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = sfr(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bogus"));

    let out = sfr(&["evaluate", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success(), "no dataset configured");

    let out = sfr(&["toy", "--which", "square", "--method", "magic"]);
    assert!(!out.status.success());
}
