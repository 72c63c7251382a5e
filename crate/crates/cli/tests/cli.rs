//! End-to-end tests of the `phasednn` binary: exit codes, report schema,
//! determinism and bundle round trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasednn_cli::{EXIT_INPUT, EXIT_NUMERICAL, WORKERS_ENV};
use serde_json::Value;

const SMALL: &str = r#"
seed = 11
rounds = 2

[target]
kind = "sines"
domain = [-3.141592653589793, 3.141592653589793]
terms = [{ amplitude = 1.0, frequency = 1.0 }, { amplitude = 0.5, frequency = 7.0 }]

[train_data]
scheme = "random"
count = 300

[test_data]
scheme = "grid"
count = 101

[base]
widths = [1, 12, 1]
epochs = 3

[band_net]
widths = [1, 12, 12, 1]
epochs = 3

[optimizer]
learning_rate = 0.002
batch_size = 16

[bands]
mode = "mesh"
m = 2
width = 5.0

[baseline]
widths = [1, 16, 1]
epochs = 4

[probe]
frequencies = [1.0, 7.0]
widths = [1, 12, 1]
epochs = 4
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phasednn"));
    c.env_remove(WORKERS_ENV);
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    eprintln!(
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn train(config: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("train")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Drops wall-clock fields, the only ones allowed to differ between runs.
fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("seconds"));
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_report.schema.json");
    jsonschema::validator_for(&read_json(&path)).expect("schema compiles")
}

fn assert_valid(report: &Value) {
    let v = schema();
    let errors: Vec<String> = v
        .iter_errors(report)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn train_writes_a_schema_valid_report_and_eval_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    let o = train(&cfg, &out, &["--workers", "2"]);
    assert!(o.status.success());
    for f in [
        "report.json",
        "report.txt",
        "config.toml",
        "train.csv",
        "test.csv",
        "manifest.txt",
        "bands.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = read_json(&out.join("report.json"));
    assert_valid(&report);
    assert_eq!(report["report"]["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(report["report"]["bands"].as_array().unwrap().len(), 2 * 7);

    // eval on the saved test set gives the reported test error
    let pred = dir.path().join("pred.csv");
    let o = run(bin()
        .arg("eval")
        .arg(&out)
        .arg(out.join("test.csv"))
        .arg("--out")
        .arg(&pred));
    assert!(o.status.success());
    let text = std::fs::read_to_string(&pred).unwrap();
    assert!(text.starts_with("x,prediction,truth,error"));
    assert_eq!(text.lines().count(), 102);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("relative L2:"))
        .unwrap();
    let eval_err: f64 = line["relative L2:".len()..].trim().parse().unwrap();
    let reported = report["report"]["test"]["rel_l2"].as_f64().unwrap();
    assert!(
        (eval_err - reported).abs() <= 1e-12 * reported.max(1.0),
        "{eval_err} vs {reported}"
    );

    // the echoed config reproduces the run on its own
    let again = dir.path().join("again");
    assert!(train(&out.join("config.toml"), &again, &[])
        .status
        .success());
    let mut a = report;
    let mut b = read_json(&again.join("report.json"));
    strip_timings(&mut a);
    strip_timings(&mut b);
    assert_eq!(a, b);
}

#[test]
fn reports_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    assert!(train(&cfg, &one, &["--workers", "1"]).status.success());
    // the environment variable sets the worker count when the flag is absent
    let o = run(bin()
        .env(WORKERS_ENV, "4")
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&four));
    assert!(o.status.success());
    let mut a = read_json(&one.join("report.json"));
    let mut b = read_json(&four.join("report.json"));
    strip_timings(&mut a);
    strip_timings(&mut b);
    assert_eq!(a, b);
    for f in ["manifest.txt", "band-000-re.net", "band-004-im.net"] {
        let fa = std::fs::read(one.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert_eq!(fa, std::fs::read(four.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train(&cfg, &a, &[]).status.success());
    assert!(train(&cfg, &b, &["--seed", "12"]).status.success());
    let ra = read_json(&a.join("report.json"));
    let rb = read_json(&b.join("report.json"));
    assert_eq!(rb["seed"], 12);
    assert_ne!(ra["report"]["train"], rb["report"]["train"]);
}

#[test]
fn zero_bands_trains_the_base_network_only() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        "mode = \"mesh\"\nm = 2\nwidth = 5.0",
        "mode = \"explicit\"\nintervals = []",
    );
    let cfg = write_config(dir.path(), "nobands.toml", &text);
    let out = dir.path().join("run");
    assert!(train(&cfg, &out, &[]).status.success());
    let report = read_json(&out.join("report.json"));
    assert_valid(&report);
    assert!(report["report"]["bands"].as_array().unwrap().is_empty());
    assert!(report["report"]["test"]["rel_l2"]
        .as_f64()
        .unwrap()
        .is_finite());
}

#[test]
fn baseline_report_follows_the_same_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("base");
    let o = run(bin()
        .args(["baseline", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success());
    let report = read_json(&out.join("report.json"));
    assert_valid(&report);
    assert_eq!(report["command"], "baseline");
    assert!(report["notes"][0].as_str().unwrap().contains("parameters"));
    // the baseline bundle is an ordinary bundle
    let pred = dir.path().join("pred.csv");
    let o = run(bin()
        .arg("eval")
        .arg(&out)
        .arg(out.join("test.csv"))
        .arg("--out")
        .arg(&pred));
    assert!(o.status.success());
}

#[test]
fn probe_writes_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("probe");
    let o = run(bin()
        .args(["probe", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("epoch"), "{header}");
    assert_eq!(header.split(',').count(), 3);
    assert_eq!(lines.count(), 4 + 1, "initial row plus one per epoch");
}

#[test]
fn detect_finds_one_frequency_per_piece_and_its_table_feeds_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("samples.csv");
    let mut text = String::from("x,y\n");
    // sin(3x) on the left half, sin(11x) on the right: one frequency per cluster
    for i in 0..4000 {
        let x = -10.0 + 20.0 * (i as f64 + 0.5) / 4000.0;
        let y = if x <= 0.0 {
            (3.0 * x).sin()
        } else {
            (11.0 * x).sin()
        };
        text.push_str(&format!("{x:?},{y:?}\n"));
    }
    std::fs::write(&data, text).unwrap();
    let table = dir.path().join("bands.txt");
    let o = run(bin()
        .arg("detect")
        .arg(&data)
        .args(["--clusters", "2", "--out"])
        .arg(&table));
    assert!(o.status.success());
    let body = std::fs::read_to_string(&table).unwrap();
    let peaks: Vec<f64> = body
        .lines()
        .filter_map(|l| l.strip_prefix("# peak k="))
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert!(
        peaks.iter().any(|k| (k.abs() - 3.0).abs() < 0.5),
        "{peaks:?}"
    );
    assert!(
        peaks.iter().any(|k| (k.abs() - 11.0).abs() < 0.5),
        "{peaks:?}"
    );

    let cfg_text = SMALL.replace(
        "mode = \"mesh\"\nm = 2\nwidth = 5.0",
        "mode = \"table\"\npath = \"bands.txt\"",
    );
    let cfg = write_config(dir.path(), "fromtable.toml", &cfg_text);
    assert!(train(&cfg, &dir.path().join("run"), &[]).status.success());
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();

    let missing = dir.path().join("nope.toml");
    assert_eq!(
        code(train(&missing, &dir.path().join("o"), &[])),
        EXIT_INPUT
    );

    let bad = write_config(
        dir.path(),
        "bad.toml",
        &SMALL.replace("rounds = 2", "rounds = 2\nbogus = 1"),
    );
    let o = train(&bad, &dir.path().join("o"), &[]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
    assert_eq!(code(o), EXIT_INPUT);

    let invalid = write_config(
        dir.path(),
        "invalid.toml",
        &SMALL.replace("widths = [1, 12, 12, 1]", "widths = [2, 12, 1]"),
    );
    assert_eq!(
        code(train(&invalid, &dir.path().join("o"), &[])),
        EXIT_INPUT
    );

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(run(bin().arg("detect").arg(&empty))), EXIT_INPUT);

    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "x,y\n0.1,0.2\n0.3,abc\n").unwrap();
    let o = run(bin().arg("detect").arg(&garbled));
    assert!(String::from_utf8_lossy(&o.stderr).contains("garbled.csv:3:"));
    assert_eq!(code(o), EXIT_INPUT);

    let o = run(bin()
        .arg("eval")
        .arg(dir.path().join("no-bundle"))
        .arg(&garbled));
    assert_eq!(code(o), EXIT_INPUT);

    let noprobe = write_config(
        dir.path(),
        "noprobe.toml",
        &SMALL[..SMALL.find("[probe]").unwrap()],
    );
    let o = run(bin()
        .args(["probe", "--config"])
        .arg(&noprobe)
        .arg("--out")
        .arg(dir.path().join("p")));
    assert_eq!(code(o), EXIT_INPUT);
}

#[test]
fn divergence_exits_with_code_3_and_leaves_a_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "diverge.toml",
        &SMALL
            .replace("learning_rate = 0.002", "learning_rate = 1e300")
            .replace("epochs = 3", "epochs = 20"),
    );
    let out = dir.path().join("run");
    let o = train(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(EXIT_NUMERICAL));
    let report = read_json(&out.join("report.json"));
    assert_valid(&report);
    assert!(report["report"]["status"]
        .as_str()
        .unwrap()
        .starts_with("failed"));
}
