use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nhssa"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nhssa")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, preset: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--preset", preset, "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn noiseless_cosines_decompose_to_four_exponential_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "clean.csv", "white", &["--epsilon", "0"]);
    let out = dir.path().join("s");
    let o = run(&[
        "decompose",
        p(&input),
        "--d",
        "18",
        "--mbar",
        "4",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("session.json"));
    assert_eq!(s["schema"], "nhssa/1");
    let freqs: Vec<f64> = serde_json::from_value(s["derived"]["frequencies"].clone()).unwrap();
    let want = [0.04, 0.06, 0.07, 0.12];
    assert_eq!(freqs.len(), 4);
    for (g, w) in freqs.iter().zip(want) {
        assert!((g - w).abs() < 1e-8, "{g} vs {w}");
    }
    let records = s["records"].as_array().unwrap();
    let labels: Vec<&str> = records
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels.iter().filter(|l| **l == "exponential").count(), 8);
    for tag in ["shat", "what", "component_0", "component_7"] {
        let v = read_json(&out.join(format!("{tag}.json")));
        assert_eq!(v["tag"], tag);
        assert_eq!(v["samples"].as_array().unwrap().len(), 300);
    }
}

#[test]
fn decompose_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "f.json", "white", &["--seed", "7"]);
    let mut bytes = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(&[
            "decompose",
            p(&input),
            "--d",
            "18",
            "--mbar",
            "4",
            "--rank",
            "fixed:18",
            "--lambda-c",
            "0.5",
            "--thresholds",
            "noisy",
            "--seed",
            "7",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(out.join("session.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let v: Value = serde_json::from_slice(&bytes[0]).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["records"].as_array().unwrap().len(), 18);
}

#[test]
fn decompose_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(
        run(&["decompose", p(&empty), "--d", "4", "--mbar", "1"])
            .status
            .code(),
        Some(2)
    );

    let input = synth(dir.path(), "f.csv", "white", &[]);
    let o = run(&[
        "decompose",
        p(&input),
        "--d",
        "200",
        "--mbar",
        "4",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    let zeros = dir.path().join("zeros.csv");
    let mut text = String::from("k,re\n");
    (0..100).for_each(|k| text.push_str(&format!("{k},0\n")));
    std::fs::write(&zeros, text).unwrap();
    let o = run(&[
        "decompose",
        p(&zeros),
        "--d",
        "6",
        "--mbar",
        "1",
        "--out",
        p(&dir.path().join("z")),
    ]);
    assert_eq!(o.status.code(), Some(3));

    assert_eq!(
        run(&["decompose", p(&input), "--d", "18"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "decompose",
            p(&input),
            "--d",
            "18",
            "--mbar",
            "4",
            "--rank",
            "all"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "decompose",
            p(&dir.path().join("missing.csv")),
            "--d",
            "4",
            "--mbar",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn auto_grid_decompose_records_the_choice() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "f.csv", "white", &["--seed", "2"]);
    let out = dir.path().join("s");
    let o = run(&["decompose", p(&input), "--auto-grid", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("session.json"));
    assert!(s["embedding"]["d"].as_u64().unwrap() >= 4);
    assert_eq!(s["config"]["embedding"]["mode"], "auto");

    // without noise X0 is rank deficient in every cell wider than the signal
    let clean = synth(dir.path(), "clean.csv", "white", &["--epsilon", "0"]);
    let o = run(&[
        "decompose",
        p(&clean),
        "--auto-grid",
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_white_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = run(&[
        "bench",
        "--preset",
        "white",
        "--realizations",
        "10",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["realizations"], 10);
    let ests = r["estimators"].as_array().unwrap();
    let truth = [0.04, 0.06, 0.07, 0.12];
    for (i, t) in truth.iter().enumerate() {
        let hit = ests.iter().any(|e| {
            ["nhssa", "esprit4"].contains(&e["estimator"].as_str().unwrap())
                && e["per_truth"][i]["hits"].as_u64().unwrap() > 0
        });
        assert!(hit, "no estimate near {t}");
    }
    assert!(out.join("report.md").exists());
    for e in ["nhssa", "esprit4", "esprit7"] {
        let csv = std::fs::read_to_string(out.join(format!("hist_{e}.csv"))).unwrap();
        assert!(csv.starts_with("bin_low,count\n"));
        assert_eq!(csv.lines().count(), 101);
    }
}

#[test]
fn bench_separability_has_merge_rate_and_unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = run(&[
        "bench",
        "--preset",
        "separability",
        "--realizations",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert!(r["estimators"][0]["merge"]["merge_rate"].is_number());
    assert_eq!(run(&["bench", "--preset", "pink"]).status.code(), Some(2));
    assert_eq!(run(&["bench"]).status.code(), Some(2));
}

#[test]
fn bench_accepts_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = nhssa::bench::preset("ar1").unwrap();
    spec.realizations = 2;
    spec.estimators.truncate(2);
    let path = dir.path().join("spec.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = dir.path().join("b");
    let o = run(&[
        "bench",
        "--spec",
        p(&path),
        "--seed",
        "42",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["base_seed"], 42);
    assert_eq!(r["estimators"].as_array().unwrap().len(), 2);
}

#[test]
fn grid_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "f.csv", "white", &["--seed", "3"]);
    let out = dir.path().join("g");
    let o = run(&[
        "grid",
        p(&input),
        "--d-range",
        "10:20",
        "--mbar-range",
        "1:5",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_json(&out.join("grid.json"));
    assert_eq!(g["d"].as_array().unwrap().len(), 11);
    assert_eq!(g["mbar"].as_array().unwrap().len(), 5);
    let (d, m) = (
        g["argmin"]["d"].as_u64().unwrap(),
        g["argmin"]["mbar"].as_u64().unwrap(),
    );
    assert!((10..=20).contains(&d) && (1..=5).contains(&m));
    let csv = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(
        run(&["grid", p(&input), "--d-range", "9:3"]).status.code(),
        Some(2)
    );
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(addr: &str, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    let code = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = text.split("\r\n\r\n").nth(1).unwrap_or("").to_owned();
    (code, body)
}

fn decompose_fixture(dir: &Path) -> std::path::PathBuf {
    let input = synth(dir, "f.csv", "white", &["--seed", "1"]);
    let out = dir.join("s");
    let o = run(&[
        "decompose",
        p(&input),
        "--d",
        "18",
        "--mbar",
        "4",
        "--rank",
        "fixed:18",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    out.join("session.json")
}

#[test]
fn serve_answers_and_reports_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    let session = decompose_fixture(dir.path());
    let mut child = bin()
        .args(["serve", p(&session), "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let server = Server(child);
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .trim_start_matches("serving on http://")
        .trim_end_matches('/')
        .to_owned();
    let (code, body) = http_get(&addr, "/api/session");
    assert_eq!(code, 200);
    let v: Value = serde_json::from_str(body.trim()).unwrap();
    assert_eq!(v["id"].as_str().unwrap().len(), 16);
    drop(server);

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(
        run(&["serve", p(&session), "--port", &port]).status.code(),
        Some(4)
    );
    assert_eq!(
        run(&["serve", p(&dir.path().join("nope.json"))])
            .status
            .code(),
        Some(2)
    );
}
