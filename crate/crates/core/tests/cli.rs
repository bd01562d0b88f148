use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evframe"))
        .args(args)
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_events(dir: &Path, body: &str) -> String {
    let path = dir.join("events.txt");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const FOUR: &str = "# t x y p\n0.1 0 0 1\n0.2 1 0 0\n0.3 0 0 1\n0.4 1 0 1\n";

#[test]
fn info_reports_stream_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_events(dir.path(), FOUR);
    let out = evframe(&["info", "--input", &input, "--width", "2", "--height", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("count: 4"), "{stdout}");
    assert!(stdout.contains("time_span: [0.1, 0.4]"), "{stdout}");
    assert!(stdout.contains("on_events: 3"), "{stdout}");
    assert!(stdout.contains("violations: 0"), "{stdout}");
}

#[test]
fn info_flags_unsorted_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_events(dir.path(), "0.2 0 0 1\n0.1 0 0 1\n");
    let out = evframe(&["info", "--input", &input, "--width", "1", "--height", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stdout).contains("violations: 1"));
}

#[test]
fn reconstruct_writes_frames_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_events(dir.path(), FOUR);
    let frames = dir.path().join("frames");
    let out = evframe(&[
        "reconstruct", "--input", &input, "--width", "2", "--height", "1", "--k", "2",
        "--lambda", "maxabs", "--color", "map", "--out", frames.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("n_frames: 3"));
    for i in 0..3 {
        assert!(frames.join(format!("frame_{i:06}.ppm")).exists());
    }
    assert!(frames.join("report.txt").exists());
}

#[test]
fn signed_polarity_convention() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_events(dir.path(), "0.1 0 0 -1\n0.2 0 0 1\n");
    let args = ["info", "--input", &input, "--width", "1", "--height", "1"];
    assert_eq!(evframe(&args).status.code(), Some(2));
    let mut signed = args.to_vec();
    signed.extend(["--polarity", "signed"]);
    let out = evframe(&signed);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("off_events: 1"));
}

#[test]
fn simulate_writes_events_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = evframe(&[
        "simulate", "--scene", "sine", "--width", "4", "--height", "3", "--threshold", "0.2",
        "--samples", "100", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let events = dir.path().join("events.txt");
    let info = evframe(&[
        "info", "--input", events.to_str().unwrap(), "--width", "4", "--height", "3",
        "--polarity", "signed",
    ]);
    assert_eq!(info.status.code(), Some(0), "{}", text(&info.stderr));
    assert!(dir.path().join("ground_truth.txt").exists());
}

#[test]
fn missing_input_is_usage_error() {
    let out = evframe(&["reconstruct", "--width", "2", "--height", "1", "--k", "2", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("--input") && stderr.contains("Usage"), "{stderr}");
}

#[test]
fn malformed_events_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_events(dir.path(), "0.1 0 0 1\n0.2 5 0 1\n");
    let frames = dir.path().join("frames");
    let out = evframe(&[
        "reconstruct", "--input", &input, "--width", "2", "--height", "1", "--k", "1", "--out",
        frames.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 2"), "{}", text(&out.stderr));
    assert!(!frames.exists());
}

#[test]
fn unreadable_input_is_io_error() {
    let out = evframe(&[
        "reconstruct", "--input", "/nonexistent/e.txt", "--width", "2", "--height", "1", "--k",
        "1", "--out", "/tmp/never",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
