use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn simpath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simpath")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = simpath(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn replay_into(data: &Path, out: &Path) -> String {
    ok(&[
        "replay",
        "--ride",
        data.join("synthetic_ride.jsonl").to_str().unwrap(),
        "--route",
        data.join("synthetic_route.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn synth_replay_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", data.to_str().unwrap()]);

    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data");
    for name in ["synthetic_ride.jsonl", "synthetic_route.json", "default_params.json"] {
        assert_eq!(std::fs::read(data.join(name)).unwrap(), std::fs::read(bundled.join(name)).unwrap(), "{name}");
    }

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = replay_into(&data, &a);
    let second = replay_into(&data, &b);
    assert!(first.starts_with("1801 frames"), "{first}");
    let hash = |s: &str| s.split("sha256 ").nth(1).unwrap().trim_end_matches([')', '\n']).to_string();
    assert_eq!(hash(&first), hash(&second));
    assert!(a.join("session.jsonl").is_file());
    assert!(a.join("series.jsonl").is_file());

    let off = json(&ok(&["analyze", "msdv", "--session", a.to_str().unwrap(), "--weighting", "off"]));
    let on = json(&ok(&["analyze", "msdv", "--session", a.to_str().unwrap()]));
    for v in [&off, &on] {
        let axes: Vec<_> = v.as_array().unwrap().iter().map(|r| r["axis"].as_str().unwrap().to_string()).collect();
        assert_eq!(axes, ["X", "Y", "Z"]);
    }
    // Gravity dominates the raw vertical channel and is removed by the weighting.
    assert!(off[2]["value"].as_f64().unwrap() > 70.0);
    assert!(on[2]["value"].as_f64().unwrap() < off[2]["value"].as_f64().unwrap());

    let reports = dir.path().join("reports.jsonl");
    std::fs::write(
        &reports,
        concat!(
            r#"{"t":0,"lat":34.2,"lon":108.9,"eye":0,"head":0,"stomach":0,"participant":"p1"}"#,
            "\n",
            r#"{"t":30,"lat":34.2,"lon":108.9,"eye":1,"head":1,"stomach":1,"participant":"p1"}"#,
            "\n",
            r#"{"t":60,"lat":34.2,"lon":108.9,"eye":1,"head":1,"stomach":1,"participant":"p1"}"#,
            "\n",
        ),
    )
    .unwrap();
    let grid_file = dir.path().join("grid.json");
    ok(&[
        "analyze",
        "heatmap",
        "--session",
        a.to_str().unwrap(),
        "--reports",
        reports.to_str().unwrap(),
        "--out",
        grid_file.to_str().unwrap(),
    ]);
    let grid = json(&std::fs::read_to_string(&grid_file).unwrap());
    assert_eq!(grid["cell_size"]["meters"], 25.0);
    assert_eq!(grid["cells"], json(r#"[{"row":0,"col":0,"count":1}]"#));

    let stats = json(&ok(&["analyze", "stats", "--session", a.to_str().unwrap(), "--session", b.to_str().unwrap()]));
    assert_eq!(stats["conditions"].as_array().unwrap().len(), 2);
    assert!(stats["anova"].is_null());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = simpath(&["analyze", "msdv", "--session", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("session.jsonl"));

    let ride = dir.path().join("ride.jsonl");
    std::fs::write(&ride, "{\"t\":1}\n{\"t\":0.5}\n").unwrap();
    let route = dir.path().join("route.json");
    std::fs::write(&route, r#"{"zones":[]}"#).unwrap();
    let out = simpath(&[
        "replay",
        "--ride",
        ride.to_str().unwrap(),
        "--route",
        route.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn serve_streams_frames_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let route = dir.path().join("route.json");
    std::fs::write(&route, r#"{"zones":[{"kind":"turn","entry_t":1.0,"end_t":2.0}]}"#).unwrap();
    let out_dir = dir.path().join("live");
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_simpath"))
        .args(["serve", "--port", &port.to_string(), "--route", route.to_str().unwrap()])
        .args(["--out", out_dir.to_str().unwrap(), "--duration", "2"])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(5);
    let stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => panic!("server never came up: {e}"),
        }
    };
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    writeln!(writer, r#"{{"type":"ms","eye":2,"head":1,"stomach":0,"participant":"p1"}}"#).unwrap();
    let mut lines = BufReader::new(stream).lines();
    let first = json(&lines.next().unwrap().unwrap());
    assert_eq!(first["type"], "frame");
    assert_eq!(first["control_points"].as_array().unwrap().len(), 21);

    assert!(child.wait().unwrap().success());
    let text = std::fs::read_to_string(out_dir.join("session.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(json).collect();
    assert_eq!(records[0]["type"], "header");
    assert_eq!(records.last().unwrap()["type"], "footer");
    assert!(records.iter().any(|r| r["type"] == "ms" && r["participant"] == "p1"));
    assert!(records.iter().filter(|r| r["type"] == "frame").count() > 30);
}
