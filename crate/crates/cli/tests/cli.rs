use std::path::Path;
use std::process::{Command, Output};

fn handpass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handpass"))
        .args(args)
        .env_remove("HANDPASS_SEED")
        .env_remove("HANDPASS_STORE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = handpass(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn noiseless(dir: &Path) {
    ok(&[
        "synth",
        "--out",
        s(dir),
        "--users",
        "4",
        "--captures",
        "1",
        "--frames",
        "30",
        "--rate",
        "30",
        "--noise",
        "0",
        "--burst-probability",
        "0",
    ]);
}

#[test]
fn noiseless_slice_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    noiseless(&data);
    let csv = tmp.path().join("d1.csv");
    ok(&[
        "dataset",
        "--in",
        s(&data),
        "--slice",
        "D1",
        "--out",
        s(&csv),
    ]);
    let report = tmp.path().join("table.csv");
    let slices = tmp.path().join("slices.csv");
    let stdout = ok(&[
        "crossval",
        "--data",
        s(&csv),
        "--model",
        "rf,dt",
        "--trees",
        "20",
        "--report",
        s(&report),
        "--slice-report",
        s(&slices),
    ]);
    assert!(stdout.contains("1.0000"), "{stdout}");

    let mut rows = csv::Reader::from_path(&report).unwrap();
    let header = rows.headers().unwrap().clone();
    let f1 = header.iter().position(|h| h == "f1").unwrap();
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 2);
    let rf = records.iter().find(|r| &r[1] == "RF").unwrap();
    assert_eq!(rf[f1].parse::<f64>().unwrap(), 1.0);

    let text = std::fs::read_to_string(&slices).unwrap();
    assert_eq!(text.lines().next().unwrap(), "dataset,RF,DT");
    assert!(text.lines().nth(1).unwrap().starts_with("d1,1"));
}

#[test]
fn widest_slice_has_all_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--users",
        "2",
        "--frames",
        "40",
        "--rate",
        "2",
    ]);
    let csv = tmp.path().join("d6.csv");
    let stdout = ok(&[
        "dataset",
        "--in",
        s(&data),
        "--slice",
        "d6",
        "--scaler",
        "robust",
        "--out",
        s(&csv),
    ]);
    assert!(stdout.contains("100 rows"), "{stdout}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 472);
    assert_eq!(text.lines().count(), 101);

    let unpruned = tmp.path().join("full.csv");
    ok(&[
        "dataset",
        "--in",
        s(&data),
        "--slice",
        "D1",
        "--no-prune",
        "--out",
        s(&unpruned),
    ]);
    let header = std::fs::read_to_string(&unpruned).unwrap();
    assert_eq!(
        header.lines().next().unwrap().split(',').count(),
        2 * 256 + 4
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("x.csv");
    let out = handpass(&["crossval", "--data", s(&csv), "--model", "xgboost"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown model"));
    assert_eq!(
        handpass(&["dataset", "--slice", "D7"]).status.code(),
        Some(2)
    );
    assert_eq!(handpass(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = handpass(&[
        "dataset",
        "--in",
        s(tmp.path()),
        "--slice",
        "D1",
        "--out",
        "x.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let missing = tmp.path().join("none.pcap");
    assert_eq!(handpass(&["inspect", s(&missing)]).status.code(), Some(1));
}

#[test]
fn runs_are_deterministic_and_print_their_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--users",
        "3",
        "--captures",
        "1",
        "--frames",
        "20",
        "--rate",
        "20",
        "--noise",
        "1.0",
    ]);
    let csv = tmp.path().join("d1.csv");
    ok(&[
        "dataset",
        "--in",
        s(&data),
        "--slice",
        "D1",
        "--out",
        s(&csv),
    ]);
    let run = |name: &str| {
        let report = tmp.path().join(name);
        let out = handpass(&[
            "crossval",
            "--data",
            s(&csv),
            "--model",
            "rf,knn",
            "--k",
            "4",
            "--trees",
            "10",
            "--seed",
            "7",
            "--report",
            s(&report),
        ]);
        assert!(out.status.success());
        let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
        assert!(
            stderr.contains("config: ") && stderr.contains("\"seed\":7"),
            "{stderr}"
        );
        (
            String::from_utf8(out.stdout).unwrap(),
            std::fs::read_to_string(report).unwrap(),
        )
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn enroll_then_authenticate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--users",
        "3",
        "--captures",
        "2",
        "--frames",
        "150",
        "--rate",
        "100",
    ]);
    let store = tmp.path().join("store.json");
    ok(&[
        "enroll",
        "--in",
        s(&data),
        "--users",
        "1,2",
        "--trees",
        "20",
        "--out",
        s(&store),
    ]);
    let audit = tmp.path().join("audit.log");

    let auth = |user: &str| {
        let capture = data.join(format!("{user}/right/2.pcap"));
        let out = Command::new(env!("CARGO_BIN_EXE_handpass"))
            .args(["auth", "--capture", s(&capture), "--audit", s(&audit)])
            .env("HANDPASS_STORE", &store)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v
    };
    let d = auth("02");
    assert_eq!(
        (d["decision"].as_str(), d["user_id"].as_u64()),
        (Some("grant"), Some(2))
    );
    ok(&["revoke", "--store", s(&store), "--user", "2"]);
    let d = auth("02");
    assert_eq!(
        (d["decision"].as_str(), d["reason"].as_str()),
        (Some("deny"), Some("not enrolled"))
    );
    let lines = std::fs::read_to_string(&audit).unwrap().lines().count();
    assert_eq!(lines, 2);
}

#[test]
fn serve_answers_and_stops_on_sigterm() {
    use std::io::{BufRead, BufReader, Write};
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--users",
        "2",
        "--captures",
        "1",
        "--frames",
        "120",
        "--rate",
        "100",
    ]);
    let store = tmp.path().join("store.json");
    ok(&[
        "enroll",
        "--in",
        s(&data),
        "--trees",
        "10",
        "--out",
        s(&store),
    ]);

    let mut child = Command::new(env!("CARGO_BIN_EXE_handpass"))
        .args(["serve", "--listen", "127.0.0.1:0"])
        .env("HANDPASS_STORE", &store)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut out = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    out.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();

    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    stream.write_all(b"{\"status\": {}}\n").unwrap();
    let mut reply = String::new();
    BufReader::new(stream.try_clone().unwrap())
        .read_line(&mut reply)
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(
        (v["ok"].as_bool(), v["ready"].as_bool()),
        (Some(true), Some(true))
    );
    drop(stream);

    let killed = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    assert!(child.wait().unwrap().success());
    line.clear();
    out.read_line(&mut line).unwrap();
    assert_eq!(line.trim(), "stopped");
}
