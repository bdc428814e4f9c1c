use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cyclelife(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclelife"))
        .args(args)
        .current_dir(dir)
        .env_remove("CYCLELIFE_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cyclelife(dir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, n: &str) {
    ok(
        dir,
        &[
            "synth", "--out", "data", "--n", n, "--points", "24", "--cycles", "100", "--seed", "5",
        ],
    );
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn synth_writes_one_file_per_battery_deterministically() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "8");
    let mut names: Vec<String> = fs::read_dir(tmp.path().join("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names.iter().filter(|n| n.starts_with("syn")).count(),
        8,
        "{names:?}"
    );

    let other = TempDir::new().unwrap();
    synth(other.path(), "8");
    for name in &names {
        let a = fs::read(tmp.path().join("data").join(name)).unwrap();
        let b = fs::read(other.path().join("data").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(
        code(&cyclelife(dir, &["synth", "--out", "d", "--n", "0"])),
        2
    );
    assert_eq!(code(&cyclelife(dir, &["frobnicate"])), 2);
    assert_eq!(
        code(&cyclelife(dir, &["train", "--out", "r", "--data", "d"])),
        2
    );
    assert_eq!(code(&cyclelife(dir, &["rank"])), 2);
    fs::write(dir.join("bad.json"), "{not json").unwrap();
    assert_eq!(
        code(&cyclelife(
            dir,
            &["--config", "bad.json", "rank", "--data", "d"]
        )),
        2
    );
    assert_eq!(code(&cyclelife(dir, &["--help"])), 0);
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&cyclelife(dir, &["eval", "--run", "missing"])), 1);
    assert_eq!(code(&cyclelife(dir, &["rank", "--data", "missing"])), 1);
    fs::write(dir.join("empty.csv"), "").unwrap();
    assert_eq!(
        code(&cyclelife(
            dir,
            &["plot", "--in", "empty.csv", "--out", "e.svg"]
        )),
        1
    );
    fs::write(dir.join("header.csv"), "a,b\n").unwrap();
    assert_eq!(
        code(&cyclelife(
            dir,
            &["plot", "--in", "header.csv", "--out", "e.svg"]
        )),
        1
    );
}

#[test]
fn rank_writes_ranking_and_scatter_files() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "12");
    ok(dir, &["rank", "--data", "data", "--out", "out/ranks.csv"]);
    let rows = csv_rows(&dir.join("out/ranks.csv"));
    assert_eq!(rows.len(), 24);
    let scores: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(rows.iter().filter(|r| &r[2] == "top").count(), 3);
    let scatter = csv_rows(&dir.join(format!("out/scatter_{}.csv", stem(&rows[0][0]))));
    assert_eq!(scatter.len(), 12);
}

fn stem(attr: &str) -> String {
    attr.replace(['(', ')'], "_")
        .trim_end_matches('_')
        .to_string()
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("cfg.json"),
        r#"{"n": 4, "points": 16, "cycles": 10, "seed": 9}"#,
    )
    .unwrap();
    ok(dir, &["--config", "cfg.json", "synth", "--out", "a"]);
    ok(
        dir,
        &["--config", "cfg.json", "synth", "--out", "b", "--n", "3"],
    );
    let count = |d: &str| {
        fs::read_dir(dir.join(d))
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with("syn")
            })
            .count()
    };
    assert_eq!(count("a"), 4);
    assert_eq!(count("b"), 3);
}

#[test]
fn train_eval_plot_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "14");

    let out = ok(
        dir,
        &[
            "train", "--task", "predict", "--data", "data", "--epochs", "1", "--out", "run",
        ],
    );
    assert!(out.contains("test mape:"), "{out}");
    let history = fs::read_to_string(dir.join("run/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("epoch,train_loss,val_loss,train_metric,val_metric"));
    assert!(dir.join("run/report.json").exists());

    let printed = ok(dir, &["eval", "--run", "run", "--split", "test"]);
    let exact: f64 = printed
        .lines()
        .find_map(|l| l.strip_prefix("mape_exact: "))
        .expect("exact metric line")
        .parse()
        .unwrap();
    let rows = csv_rows(&dir.join("run/predictions.csv"));
    assert!(!rows.is_empty());
    let recomputed = rows
        .iter()
        .map(|r| {
            let truth: f64 = r[1].parse().unwrap();
            let pred: f64 = r[2].parse().unwrap();
            100.0 * (pred - truth).abs() / truth
        })
        .sum::<f64>()
        / rows.len() as f64;
    assert!(
        (recomputed - exact).abs() < 1e-9 * exact.max(1.0),
        "{recomputed} vs {exact}"
    );

    ok(
        dir,
        &[
            "plot",
            "--in",
            "run/history.csv",
            "--out",
            "h1.svg",
            "--kind",
            "line",
        ],
    );
    ok(
        dir,
        &[
            "plot",
            "--in",
            "run/history.csv",
            "--out",
            "h2.svg",
            "--kind",
            "line",
        ],
    );
    let svg = fs::read(dir.join("h1.svg")).unwrap();
    assert_eq!(svg, fs::read(dir.join("h2.svg")).unwrap());
    assert!(String::from_utf8(svg).unwrap().starts_with("<svg"));
}

#[test]
fn classify_eval_writes_fade_curves() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "14");
    ok(
        dir,
        &[
            "train", "--task", "classify", "--data", "data", "--epochs", "3", "--out", "run",
            "--seed", "2",
        ],
    );
    let printed = ok(
        dir,
        &["eval", "--run", "run", "--split", "val", "--out", "ev"],
    );
    let line = printed
        .lines()
        .find(|l| l.starts_with("accuracy: "))
        .expect("metric line");
    let value = line.trim_start_matches("accuracy: ");
    assert_eq!(value.split('.').nth(1).map(str::len), Some(1), "{line}");
    let preds = csv_rows(&dir.join("ev/predictions.csv"));
    let fade = csv_rows(&dir.join("ev/fade_curves.csv"));
    assert_eq!(fade.len(), preds.len() * 100);
    assert!(preds.iter().all(|r| &r[3] == "0" || &r[3] == "1"));
}

#[test]
fn identical_flags_give_identical_runs() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "10");
    for run in ["r1", "r2"] {
        ok(
            dir,
            &[
                "train", "--task", "classify", "--data", "data", "--epochs", "4", "--out", run,
                "--seed", "1",
            ],
        );
    }
    for file in ["checkpoint.json", "report.json", "history.csv"] {
        assert_eq!(
            fs::read(dir.join("r1").join(file)).unwrap(),
            fs::read(dir.join("r2").join(file)).unwrap(),
            "{file}"
        );
    }
}
