use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn cruise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cruise"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cruise(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "store" {
                copy_tree(&entry.path(), &target);
            }
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn annotations() -> String {
    repo_root().join("crates/core/tests/fixtures/annotations_198x4.csv").display().to_string()
}

#[test]
fn metrics_text_report() {
    let text = ok(&["metrics", "--annotations", &annotations()]);
    for expected in ["83.33%", "81.31%", "95.96%", "77.78%", "92.93%", "88.13%", "87.37%", "85.35%", "82.58%", "Gwet's AC1: 0.7450"] {
        assert!(text.contains(expected), "missing {expected} in\n{text}");
    }
}

#[test]
fn metrics_jsonl_lines_parse() {
    let text = ok(&["metrics", "--annotations", &annotations(), "--format", "jsonl", "--threshold", "4"]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(!lines.is_empty());
    for line in lines {
        assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
        assert!(line.contains("\"kind\":"), "{line}");
    }
}

#[test]
fn errors_exit_nonzero_with_message() {
    let out = cruise(&["metrics", "--annotations", "/definitely/missing.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: opening /definitely/missing.csv"), "{err}");
    assert!(!err.contains("backtrace"));
}

fn get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn offline_demo_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&repo_root().join("demo"), dir.path());
    let config = dir.path().join("config.toml").display().to_string();
    let c = config.as_str();

    // seven records: one open, one labelled duplicate
    assert_eq!(ok(&["harvest", "-c", c]).trim(), "demo: 1 pages, 7 fetched, 5 kept, 2 excluded, 0 malformed");
    // the pull request and the German issue are dropped
    let pre = ok(&["preprocess", "-c", c]);
    assert!(pre.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["demo", "5", "3"]), "{pre}");
    let stories = dir.path().join("stories.csv").display().to_string();
    assert_eq!(ok(&["import-stories", "-c", c, "--file", &stories]).trim(), "imported 2 stories");

    let first = cruise(&["run", "-c", c]);
    assert!(first.status.success());
    // 6 pairs x 3 matchers, then 2 generations and 2 assessments
    assert!(String::from_utf8_lossy(&first.stderr).contains("backend calls: 22"));
    let second = cruise(&["run", "-c", c]);
    assert!(String::from_utf8_lossy(&second.stderr).contains("backend calls: 0"));
    assert_eq!(first.stdout, second.stdout);

    let csv = ok(&["report", "-c", c, "--format", "csv"]);
    assert!(csv.starts_with("story_id,pairs,matches,generated,malformed,relevant\nUS-1,3,2,2,0,2\nUS-2,3,0,0,0,0\n"), "{csv}");

    let out = dir.path().join("criteria.csv");
    let msg = ok(&["export", "-c", c, "--entity", "criteria", "--out", &out.display().to_string()]);
    assert!(msg.starts_with("exported 2 criteria records"), "{msg}");
    let exported = std::fs::read_to_string(&out).unwrap();
    assert_eq!(exported.lines().filter(|l| l.contains("US-1")).count(), 2);

    let mut server = Command::new(env!("CARGO_BIN_EXE_cruise"))
        .args(["serve", "-c", c, "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let port = line.trim().rsplit(':').next().unwrap().to_string();
    let addr = format!("127.0.0.1:{port}");
    let stories = get(&addr, "/api/stories");
    let criteria = get(&addr, "/api/stories/US-1/criteria");
    let missing = get(&addr, "/api/stories/US-9/criteria");
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(stories.starts_with("HTTP/1.1 200"), "{stories}");
    assert!(stories.contains("\"total\":1"), "{stories}");
    assert!(criteria.contains("Quantity survives a reload"), "{criteria}");
    assert!(missing.starts_with("HTTP/1.1 404"), "{missing}");
}
