use std::path::Path;
use std::process::{Command, Output};

use mmce::io::{format_params, parse_labels, parse_params, LabelBase};
use mmce_core::{fit, HyperParams, Mode};

const TABLE: &str = "worker,item,label
w1,i1,1
w1,i2,2
w1,i3,2
w1,i4,1
w1,i5,3
w1,i6,2
w2,i1,2
w2,i2,1
w2,i3,2
w2,i4,2
w2,i5,1
w2,i6,3
w3,i1,1
w3,i2,1
w3,i3,1
w3,i4,2
w3,i5,2
w3,i6,3
";

const GOLD: &str = "item,label\ni1,1\ni2,1\ni3,2\ni4,2\ni5,3\ni6,3\n";

fn mmce(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmce")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("labels.csv"), TABLE).unwrap();
    std::fs::write(dir.path().join("gold.csv"), GOLD).unwrap();
    dir
}

const BASE: [&str; 6] = ["--labels", "labels.csv", "--classes", "3", "--label-base", "1"];

fn with_base<'a>(cmd: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![cmd];
    args.extend_from_slice(&BASE);
    args.extend_from_slice(rest);
    args
}

#[test]
fn stats_reports_average_worker_error() {
    let dir = setup();
    let out = mmce(dir.path(), &with_base("stats", &["--gold", "gold.csv"]));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("average worker error rate 38.89%"), "{}", stdout(&out));
}

#[test]
fn majority_vote_writes_one_based_predictions() {
    let dir = setup();
    let out = mmce(dir.path(), &with_base("aggregate", &["--method", "mv", "--out", "mv.tsv"]));
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("mv.tsv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("item\tpredicted\tp0\tp1\tp2"));
    assert_eq!(lines.next(), Some("i1\t1\t0.666667\t0.333333\t0.000000"));
    assert_eq!(table.lines().count(), 7);
}

#[test]
fn gamma_is_echoed_as_alpha_and_beta() {
    let dir = tempfile::tempdir().unwrap();
    let mut labels = String::from("worker,item,label\n");
    for j in 0..14 {
        for w in 0..2 {
            labels.push_str(&format!("w{w},i{j},{}\n", (j + w) % 7));
        }
    }
    std::fs::write(dir.path().join("labels.csv"), labels).unwrap();
    let out =
        mmce(dir.path(), &["aggregate", "--labels", "labels.csv", "--classes", "7", "--gamma", "1", "--out", "p.tsv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("alpha=49 beta=343"), "{}", stdout(&out));
}

#[test]
fn invalid_invocations_exit_with_usage_code() {
    let dir = setup();
    let cases: [Vec<&str>; 5] = [
        with_base("aggregate", &["--mode", "ordinal", "--variant", "centered", "--out", "x.tsv"]),
        vec!["aggregate", "--labels", "missing.csv", "--classes", "3", "--out", "x.tsv"],
        with_base("select", &["--folds", "1", "--out", "cv.csv"]),
        with_base("aggregate", &["--method", "ds", "--gamma", "1", "--out", "x.tsv"]),
        vec!["aggregate", "--labels", "labels.csv", "--classes", "2", "--label-base", "1", "--out", "x.tsv"],
    ];
    for args in cases {
        let out = mmce(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error"), "{args:?}");
    }
    assert!(!dir.path().join("x.tsv").exists());
}

#[test]
fn iteration_cap_exits_one_but_writes_outputs() {
    let dir = setup();
    let out = mmce(dir.path(), &with_base("aggregate", &["--gamma", "1", "--max-iters", "1", "--out", "p.tsv"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("p.tsv").exists());
    assert!(dir.path().join("p.tsv.params.tsv").exists());
}

#[test]
fn evaluate_perfect_posterior() {
    let dir = setup();
    let mut pred = String::from("item\tpredicted\tp0\tp1\tp2\n");
    for (item, label) in [("i1", 1), ("i2", 1), ("i3", 2), ("i4", 2), ("i5", 3), ("i6", 3)] {
        let probs: Vec<&str> = (1..=3).map(|c| if c == label { "1.000000" } else { "0.000000" }).collect();
        pred.push_str(&format!("{item}\t{label}\t{}\n", probs.join("\t")));
    }
    std::fs::write(dir.path().join("pred.tsv"), pred).unwrap();
    let base = ["evaluate", "--pred", "pred.tsv", "--gold", "gold.csv", "--label-base", "1"];

    let out = mmce(dir.path(), &base);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("error rate    0.00%"), "{text}");
    assert!(!text.contains("mse"));

    let mut args = base.to_vec();
    args.extend(["--mode", "ordinal", "--bins", "--out", "eval.csv"]);
    let out = mmce(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("mse"));
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let bins: Vec<&str> = csv.lines().filter(|l| l.starts_with("bin,")).collect();
    assert_eq!(bins.len(), 6);
    assert_eq!(bins[5], "bin,0.9,1.0,6,0.000000,0.000000");
}

#[test]
fn select_is_reproducible_for_a_seed() {
    let dir = setup();
    let run = |out: &str| {
        let o =
            mmce(dir.path(), &with_base("select", &["--folds", "3", "--grid", "0.5,1,2", "--seed", "9", "--out", out]));
        assert_eq!(o.status.code(), Some(0));
        (stdout(&o), std::fs::read(dir.path().join(out)).unwrap())
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn params_sidecar_round_trips() {
    let labels = parse_labels(TABLE.as_bytes(), "table", 3, LabelBase::One).unwrap();
    for mode in [Mode::Multiclass, Mode::Ordinal] {
        let fitted = fit(&labels, &HyperParams::new(1.0, 1.0).with_mode(mode)).unwrap();
        let text = format_params(&labels, &fitted.params);
        let parsed = parse_params(text.as_bytes(), "sidecar", &labels, mode).unwrap();
        let original = fitted.params.workers.values().iter().chain(fitted.params.items.values());
        let restored = parsed.workers.values().iter().chain(parsed.items.values());
        for (a, b) in original.zip(restored) {
            assert!((a - b).abs() <= 5e-10, "{a} vs {b}");
        }
        assert_eq!(format_params(&labels, &parsed), text);
    }
}
