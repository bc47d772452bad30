use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

use rn_anomaly::clustering::ClusterDocument;
use rn_anomaly::eval::EvaluationReport;
use rn_anomaly::neural::{predict_scores, MlpModel, ModelDocument};
use rn_anomaly::pac::{sample_mixture, MixtureSpec};
use rn_anomaly_cli::{cmd_run, cmd_validate, AuditDocument, CliError, Overrides, UnsupervisedModelDocument};

fn write_csv(dir: &Path, name: &str, rows: &[(f64, f64, u8)]) -> PathBuf {
    let mut text = String::from("a,b,label\n");
    for (a, b, l) in rows {
        text += &format!("{a},{b},{l}\n");
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Gaussian mixture written with `1 = anomaly`.
fn mixture_csv(dir: &Path, n: usize, alpha: f64) -> PathBuf {
    let data = sample_mixture(&MixtureSpec::gauss_easy(alpha), n, 11).unwrap();
    let rows: Vec<(f64, f64, u8)> = (0..n)
        .map(|i| {
            let x = data.row(i)[0];
            (x, 0.5 * x + (i % 7) as f64 * 0.1, data.labels()[i].is_anomaly() as u8)
        })
        .collect();
    write_csv(dir, "mix.csv", &rows)
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(config).unwrap()).unwrap();
    p
}

fn supervised_config(out: &str) -> Value {
    json!({
        "mode": "supervised",
        "seed": 5,
        "dataset": { "path": "mix.csv", "label_convention": "one_is_anomaly" },
        "train": { "epochs": 8, "lr0": 0.01 },
        "output_dir": out
    })
}

#[test]
fn toy_supervised_run_writes_report_keys() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(
        dir.path(),
        "toy.csv",
        &[(0.0, 0.1, 0), (0.2, 0.0, 0), (0.1, 0.3, 0), (5.0, 5.0, 1)],
    );
    let cfg = write_config(
        dir.path(),
        "toy.json",
        &json!({
            "mode": "supervised",
            "dataset": { "path": "toy.csv", "label_convention": "one_is_anomaly" },
            "train": { "epochs": 2 }
        }),
    );
    let summary = cmd_run(&cfg, &Overrides::default()).unwrap();
    let report: Value =
        serde_json::from_str(&fs::read_to_string(summary.output_dir.join("report.json")).unwrap()).unwrap();
    for key in ["threshold", "precision", "recall", "f1", "balanced_risk"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let thresholds = fs::read_to_string(summary.output_dir.join("thresholds.csv")).unwrap();
    assert!(thresholds.starts_with("dataset,optimal_threshold\n"));
}

#[test]
fn supervised_run_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    mixture_csv(dir.path(), 800, 0.2);
    let cfg = write_config(dir.path(), "run.json", &supervised_config("out1"));
    let first = cmd_run(&cfg, &Overrides::default()).unwrap();
    let second = cmd_run(
        &cfg,
        &Overrides {
            out: Some(dir.path().join("out2")),
            seed: None,
        },
    )
    .unwrap();
    for name in [
        "report.json",
        "model.json",
        "audit.json",
        "trace.csv",
        "scores.csv",
        "thresholds.csv",
    ] {
        assert_eq!(
            fs::read(first.output_dir.join(name)).unwrap(),
            fs::read(second.output_dir.join(name)).unwrap(),
            "{name} differs"
        );
    }

    let out = &first.output_dir;
    let report: EvaluationReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.auroc.unwrap() > 0.9);

    let audit: AuditDocument = serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    audit.audit.verify().unwrap();
    assert!((audit.w_inline / audit.w_anomaly - audit.alpha_hat / (1.0 - audit.alpha_hat)).abs() < 1e-12);

    // reloaded model reproduces the written test scores bit for bit
    let doc: ModelDocument = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    let model = MlpModel::from_document(&doc).unwrap();
    let (data, _) = rn_anomaly::data::load_csv(
        dir.path().join("mix.csv"),
        "label",
        rn_anomaly::LabelConvention::OneIsAnomaly,
    )
    .unwrap();
    let (test_x, _) = data.select(&audit.audit.test);
    let rescored = predict_scores(&model, test_x.view()).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("scores.csv")).unwrap();
    let written: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(rescored, written);

    let reseeded = cmd_run(
        &cfg,
        &Overrides {
            out: Some(dir.path().join("out3")),
            seed: Some(6),
        },
    )
    .unwrap();
    let other: AuditDocument =
        serde_json::from_str(&fs::read_to_string(reseeded.output_dir.join("audit.json")).unwrap()).unwrap();
    assert_ne!(other.audit.train_digest, audit.audit.train_digest);
}

fn read_scores(path: &Path) -> Vec<(usize, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn cblof_and_ecblof_share_clusters() {
    let dir = tempfile::tempdir().unwrap();
    mixture_csv(dir.path(), 300, 0.05);
    let mut outs = Vec::new();
    for mode in ["unsupervised-cblof", "unsupervised-ecblof", "unsupervised-cblof-mod"] {
        let cfg = write_config(
            dir.path(),
            &format!("{mode}.json"),
            &json!({
                "mode": mode,
                "seed": 3,
                "dataset": { "path": "mix.csv", "label_convention": "one_is_anomaly" },
                "clustering": { "m": 6 },
                "output_dir": mode
            }),
        );
        outs.push(cmd_run(&cfg, &Overrides::default()).unwrap().output_dir);
    }
    let model = |p: &PathBuf| -> UnsupervisedModelDocument {
        serde_json::from_str(&fs::read_to_string(p.join("model.json")).unwrap()).unwrap()
    };
    let (c, e, k) = (model(&outs[0]), model(&outs[1]), model(&outs[2]));
    assert_eq!(c.clusters, e.clusters);
    assert_eq!(c.clusters, k.clusters);
    let cd: &ClusterDocument = &c.clusters;
    cd.validate().unwrap();
    let total: f64 = k.cluster_weights.iter().sum();
    assert!((total - 300.0).abs() < 1e-9);

    let sc = read_scores(&outs[0].join("scores.csv"));
    let se = read_scores(&outs[1].join("scores.csv"));
    for ((kc, vc), (ke, ve)) in sc.iter().zip(&se) {
        assert_eq!(kc, ke);
        assert_eq!(*vc, cd.sizes[*kc] as f64 * ve);
    }
}

#[test]
fn validate_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    mixture_csv(dir.path(), 50, 0.2);
    let ok = write_config(dir.path(), "ok.json", &supervised_config("out"));
    assert!(cmd_validate(&ok).unwrap().is_empty());

    let mut missing = supervised_config("out");
    missing["dataset"].as_object_mut().unwrap().remove("label_convention");
    let diags = cmd_validate(&write_config(dir.path(), "missing.json", &missing)).unwrap();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].field, "dataset.label_convention");

    let mut bad = supervised_config("out");
    bad["mode"] = json!("semi-supervised");
    bad["dataset"]["path"] = json!("nowhere.csv");
    bad["train"]["dropout_p"] = json!(1.5);
    let fields: Vec<String> = cmd_validate(&write_config(dir.path(), "bad.json", &bad))
        .unwrap()
        .into_iter()
        .map(|d| d.field)
        .collect();
    assert_eq!(fields, ["mode", "train", "dataset.path"]);

    let study = json!({ "mode": "pac-study", "study": { "preset": "gauss-easy", "train_sizes": [100, 200], "seeds_per_point": 3, "trainer": "rn_net_weighted" } });
    let diags = cmd_validate(&write_config(dir.path(), "study.json", &study)).unwrap();
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].field, "study");

    assert!(cmd_validate(&dir.path().join("absent.json")).is_err());
}

#[test]
fn config_errors_exit_two_runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_rnad");

    let cfg = write_config(dir.path(), "bad.json", &json!({ "mode": "supervised" }));
    let out = Command::new(bin).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");

    let out = Command::new(bin).arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let diags: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(diags[0]["field"], "dataset");

    fs::write(dir.path().join("three.csv"), "a,label\n1.0,0\n2.0,2\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "rt.json",
        &json!({ "mode": "supervised", "dataset": { "path": "three.csv", "label_convention": "one_is_inline" } }),
    );
    let out = Command::new(bin).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "runtime");
    assert!(err["error"].as_str().unwrap().contains("three.csv"));

    match cmd_run(&cfg, &Overrides::default()) {
        Err(e @ CliError::Runtime(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected a runtime error, got {other:?}"),
    }
}

#[test]
fn pac_study_writes_curve_and_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "study.json",
        &json!({
            "mode": "pac-study",
            "seed": 1,
            "train": { "epochs": 3 },
            "study": { "preset": "gauss-easy", "alpha": 0.1, "train_sizes": [100, 1000], "seeds_per_point": 3, "trainer": "rn_net_weighted" }
        }),
    );
    let summary = cmd_run(&cfg, &Overrides::default()).unwrap();
    let curve = fs::read_to_string(summary.output_dir.join("curve.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "n,mean_excess,stderr");
    assert_eq!(lines.len(), 3);
    let cells = fs::read_to_string(summary.output_dir.join("cells.jsonl")).unwrap();
    assert_eq!(cells.lines().count(), 6);
    for line in cells.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["balanced_risk"].as_f64().unwrap() <= 1.0);
    }
}
