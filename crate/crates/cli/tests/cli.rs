use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = "\
seed = 2
vehicles_per_lane = 8
duration_s = 200.0

[auto]
count = 12
direction = \"left\"
";

fn lanechange(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanechange"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
    ok(&lanechange(&["synth", "synth.toml", "--out", "a"], dir.path()));
    ok(&lanechange(&["synth", "synth.toml", "--out", "b"], dir.path()));
    for name in ["dataset.csv", "manifest-synth.toml"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let manifest = fs::read_to_string(dir.path().join("a/manifest-synth.toml")).unwrap();
    assert!(manifest.contains("synth = 2"), "{manifest}");
}

#[test]
fn invalid_script_fails_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[[changes]]\nvehicle = 9999\nframe = 100\ndirection = \"left\"\n";
    fs::write(dir.path().join("bad.toml"), cfg).unwrap();
    let out = lanechange(&["synth", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration error"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_data_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lanechange(&["label", "--input", "nope.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn label_without_events_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("quiet.toml"), "vehicles_per_lane = 4\nduration_s = 30.0\n").unwrap();
    let out = lanechange(&["label", "--synth", "quiet.toml", "--out", "res"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(lines(&dir.path().join("res/samples.csv")).len(), 1);
    assert_eq!(lines(&dir.path().join("res/label_summary.csv")).len(), 1);
}

#[test]
fn full_pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("synth.toml"), SYNTH).unwrap();
    ok(&lanechange(&["synth", "synth.toml", "--out", "data"], root));
    fs::write(
        root.join("run.toml"),
        "[data]\ninput = \"data/dataset.csv\"\noutput_dir = \"res\"\n\n[task]\nscheme = \"LS2\"\n",
    )
    .unwrap();
    let run = ["--config", "run.toml"];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(run);
        args.extend(extra);
        ok(&lanechange(&args, root))
    };
    let res = root.join("res");

    with("ingest", &[]);
    let events = lines(&res.join("events.csv"));
    assert_eq!(events.len(), 13, "12 scripted changes plus header");
    assert_eq!(lines(&res.join("census.csv")).len(), 17);

    let summary = with("label", &[]);
    assert!(summary.starts_with("LS2:"), "{summary}");
    let status = lines(&res.join("label_summary.csv"));
    assert_eq!(status.len(), 13);
    assert!(lines(&res.join("samples.csv")).len() > 100);

    with("train", &["--model-kind", "logreg"]);
    assert!(res.join("model.txt").is_file());
    let split = lines(&res.join("split.csv"));
    assert_eq!(split.len(), 33, "lane 1 is dropped for the left task");
    assert_eq!(split.iter().filter(|l| l.ends_with(",test")).count(), 6);

    with("crossval", &[]);
    let means: Vec<String> = lines(&res.join("cv_report.csv"))
        .into_iter()
        .filter(|l| l.split(',').nth(2) == Some("mean"))
        .collect();
    assert_eq!(means.len(), 12, "LS1-LS4 x three models");

    let samples = res.join("samples.csv");
    let samples = samples.to_str().unwrap();
    with("crossval", &["--samples", samples, "--models", "logreg,mlp"]);
    assert_eq!(lines(&res.join("cv_report.csv")).len(), 1 + 2 * 6);
    let rnn = lanechange(&["crossval", "--config", "run.toml", "--samples", samples], root);
    assert!(!rnn.status.success());

    let model = res.join("model.txt");
    let table = with("runtime", &["--model", model.to_str().unwrap(), "--tau-a", "4"]);
    assert!(table.contains("aggressive"), "{table}");
    let report = lines(&res.join("runtime_report.csv"));
    assert_eq!(report[0], "approach,tpr,fpr,prediction_accuracy,avg_advanced_time_s");
    let approaches: Vec<&str> = report[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(approaches, ["plain", "aggressive", "conservative"]);

    let md = with("report", &[]);
    assert!(md.contains("## Run-time prediction"));
    assert!(md.contains("## Cross-validation"));
    assert_eq!(md, fs::read_to_string(res.join("report.md")).unwrap());
    for cmd in ["ingest", "label", "train", "crossval", "runtime"] {
        assert!(res.join(format!("manifest-{cmd}.toml")).is_file(), "{cmd}");
    }
}

#[test]
fn runtime_rejects_a_model_for_the_other_direction() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("synth.toml"), SYNTH).unwrap();
    let base = ["--synth", "synth.toml", "--out", "res", "--model-kind", "logreg"];
    let mut train = vec!["train"];
    train.extend(base);
    ok(&lanechange(&train, root));
    let mut runtime = vec!["runtime", "--direction", "right", "--model", "res/model.txt"];
    runtime.extend(base);
    let out = lanechange(&runtime, root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained for left"));
}

#[test]
fn shipped_configs_are_valid() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let run = lanechange_cli::RunConfig::load(&configs.join("run.toml")).unwrap();
    run.validate().unwrap();
    let ngsim = lanechange_cli::RunConfig::load(&configs.join("ngsim.toml")).unwrap();
    ngsim.schema().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let synth = configs.join("synth.toml");
    ok(&lanechange(&["synth", synth.to_str().unwrap(), "--out", "d"], dir.path()));
    let events = lanechange(&["ingest", "--input", "d/dataset.csv", "--out", "r"], dir.path());
    assert!(ok(&events).contains("48 left task events"));
}
