use std::path::Path;
use std::process::{Command, Output};

use cdn_prs::trace_io::{render_access_log, synthesize_trace, TraceProfile};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdn-prs")).args(args).output().expect("binary runs")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn sweep_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = cli(&["sweep", "--weeks", "8", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.iter().any(|(n, _)| n == "manifest.json"));
    assert!(fa.iter().any(|(n, _)| n == "os_cost.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn sequential_matches_parallel() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |d: &Path, exec: &str| {
        let o = cli(&["sweep", "--weeks", "6", "--sc-count", "6", "--exec", exec, "--out", d.to_str().unwrap()]);
        assert!(o.status.success());
    };
    run(a.path(), "parallel");
    run(b.path(), "sequential");
    let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "manifest.json").collect::<Vec<_>>();
    assert_eq!(strip(files(a.path())), strip(files(b.path())));
}

#[test]
fn errors_are_json_with_exit_code_2() {
    let out = tempfile::tempdir().unwrap();
    let o = cli(&["simulate", "--plans", "9", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "unknown_plan");

    let o = cli(&["price-options", "--sc-count", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "invalid_sc_count");
}

#[test]
fn simulate_from_trace_dir_and_report() {
    let logs = tempfile::tempdir().unwrap();
    for (name, base) in [("alpha", 2.0), ("beta", 40.0)] {
        let s = synthesize_trace(&TraceProfile::flat(name, base, 1), 21).unwrap();
        let mut buf = Vec::new();
        render_access_log(&s, 2, &mut buf).unwrap();
        std::fs::write(logs.path().join(format!("{name}.log")), buf).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let o = cli(&[
        "simulate",
        "--trace-dir",
        logs.path().to_str().unwrap(),
        "--weeks",
        "3",
        "--plans",
        "1,5.b,6.b",
        "--sc-count",
        "6",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ledger = std::fs::read_to_string(out.path().join("6sc_plan_1_ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 1 + 2 * 21);
    assert!(ledger.contains("alpha") && ledger.contains("beta"));
    assert!(out.path().join("forecasts.csv").exists());

    let rendered = tempfile::tempdir().unwrap();
    let o = cli(&[
        "report",
        "--from",
        out.path().to_str().unwrap(),
        "--format",
        "both",
        "--out",
        rendered.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = std::fs::read_to_string(rendered.path().join("os_cost.md")).unwrap();
    assert!(md.contains("100.00"));
    assert!(rendered.path().join("os_cost.csv").exists());
}

#[test]
fn price_options_prints_tables() {
    let o = cli(&["price-options", "--sc-count", "6"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("P1") && text.contains("baw"));
}
