use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn klda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klda"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KLDA_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rings(dir: &Path) {
    let o = klda(&["synth", "--kind", "rings", "--out", "rings"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn synth_then_lda_on_rings_stays_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let o = klda(
        &[
            "train",
            "--method",
            "lda",
            "--manifest",
            "rings/manifest.json",
            "--tasks",
            "2",
            "--out",
            "lda.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("LDA rings final accuracy "), "{line}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lda.json")).unwrap())
            .unwrap();
    let mean = report["summary"]["mean"].as_f64().unwrap();
    assert!(mean <= 0.60, "{mean}");
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    let shown: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!((shown - 100.0 * mean).abs() < 0.01);
    assert!(line.contains(" ± "));
}

#[test]
fn klda_e_report_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let args = |out: &'static str| {
        vec![
            "train",
            "--method",
            "klda-e",
            "--manifest",
            "rings/manifest.json",
            "--tasks",
            "2",
            "--dim",
            "256",
            "--sigma",
            "1",
            "--ensemble",
            "3",
            "--repeats",
            "2",
            "--seed",
            "0",
            "--out",
            out,
        ]
    };
    let a = klda(&args("a.json"), dir.path());
    let b = klda(&args("b.json"), dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let load = |f: &str| -> Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(f)).unwrap()).unwrap()
    };
    let (ra, rb) = (load("a.json"), load("b.json"));
    assert_eq!(ra["summary"], rb["summary"]);
    let run = &ra["runs"][0];
    assert_eq!(run["method"], "KLDA-E");
    assert_eq!(run["hyperparameters"]["E"], 3);
    assert_eq!(run["hyperparameters"]["D"], 256);
    assert!(run["final_accuracy"].as_f64().unwrap() >= 0.95);
    for (x, y) in ra["runs"]
        .as_array()
        .unwrap()
        .iter()
        .zip(rb["runs"].as_array().unwrap())
    {
        assert_eq!(x["trace"], y["trace"]);
        assert_eq!(x["seeds"], y["seeds"]);
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let cases: [&[&str]; 5] = [
        &[
            "train",
            "--method",
            "lda",
            "--manifest",
            "rings/manifest.json",
            "--tasks",
            "0",
        ],
        &[
            "train",
            "--method",
            "lda",
            "--manifest",
            "rings/manifest.json",
            "--ensemble",
            "3",
        ],
        &["train", "--method", "lda", "--manifest", "missing.json"],
        &[
            "train",
            "--method",
            "qda",
            "--manifest",
            "rings/manifest.json",
        ],
        &["train", "--bogus"],
    ];
    for args in cases {
        let o = klda(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    let o = klda(
        &[
            "train",
            "--method",
            "lda",
            "--manifest",
            "rings/manifest.json",
            "--tasks",
            "0",
        ],
        dir.path(),
    );
    assert!(stderr(&o).contains("config failed"), "{}", stderr(&o));
}

#[test]
fn runtime_failures_exit_one_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let train = dir.path().join("rings/train.kldf");
    let mut bytes = std::fs::read(&train).unwrap();
    bytes[40] ^= 0xff;
    std::fs::write(&train, bytes).unwrap();
    let o = klda(
        &[
            "train",
            "--method",
            "lda",
            "--manifest",
            "rings/manifest.json",
            "--tasks",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("load failed"), "{}", stderr(&o));
    let o = klda(
        &["validate", "--manifest", "rings/manifest.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("validate failed"), "{}", stderr(&o));
}

#[test]
fn validate_accepts_synthetic_output() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let o = klda(
        &["validate", "--manifest", "rings/manifest.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok (2 classes"));
}

#[test]
fn export_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    for (method, expect) in [("klda", "KLDA"), ("klda-e", "KLDA-E"), ("lda", "LDA")] {
        let model = format!("{method}.bin");
        let o = klda(
            &[
                "export",
                "--method",
                method,
                "--manifest",
                "rings/manifest.json",
                "--dim",
                "512",
                "--sigma",
                "1",
                "--ensemble",
                if method == "klda-e" { "2" } else { "1" },
                "--out",
                &model,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{method}: {}", stderr(&o));
        let o = klda(
            &[
                "eval",
                "--model",
                &model,
                "--manifest",
                "rings/manifest.json",
                "--out",
                "eval.json",
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(
            stdout(&o).starts_with(&format!("{expect} rings accuracy ")),
            "{}",
            stdout(&o)
        );
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval.json")).unwrap())
                .unwrap();
        let acc = v["accuracy"].as_f64().unwrap();
        if method == "lda" {
            assert!(acc <= 0.60);
        } else {
            assert!(acc >= 0.95, "{method}: {acc}");
        }
    }
    let o = klda(
        &[
            "export",
            "--method",
            "ncm",
            "--manifest",
            "rings/manifest.json",
            "--out",
            "n.bin",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let o = klda(
        &[
            "sweep",
            "--manifest",
            "rings/manifest.json",
            "--dims",
            "32,128",
            "--sigmas",
            "0.5,1",
            "--tasks",
            "2",
            "--repeats",
            "2",
            "--jobs",
            "2",
            "--out",
            "s.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "D,sigma,seed,final_accuracy");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(stdout(&o).contains("best D="));
}

#[test]
fn data_dir_variable_resolves_manifests() {
    let dir = tempfile::tempdir().unwrap();
    rings(dir.path());
    let elsewhere = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_klda"))
        .args(["validate", "--manifest", "rings/manifest.json"])
        .current_dir(elsewhere.path())
        .env("KLDA_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn library_entry_point_matches_binary_codes() {
    assert_eq!(klda::cli::run(["klda", "train", "--nope"]), 2);
    assert_eq!(klda::cli::run(["klda", "--help"]), 0);
}
