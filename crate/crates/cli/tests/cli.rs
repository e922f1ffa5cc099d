use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const LINE: &str = "t,y,v\n0,1,2\n1,3,2\n2.5,6,2\n4,9,2\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vspline"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn workspace(files: &[(&str, &str)]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

fn read(dir: &TempDir, name: &str) -> String {
    fs::read_to_string(dir.path().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn help_and_version_succeed() {
    let dir = workspace(&[]);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["fit", "--help"])), 0);
}

#[test]
fn usage_errors_exit_2() {
    let dir = workspace(&[("line.csv", LINE), ("noboom.csv", LINE)]);
    let cases: &[&[&str]] = &[
        &[],
        &["frobnicate"],
        &["fit", "-i", "line.csv"],
        &["fit", "-i", "absent.csv", "--gamma", "1", "--family", "constant", "--params", "0.1"],
        &["fit", "-i", "line.csv", "--gamma", "1", "--family", "constant", "--params", "0.1,0.2"],
        &["simulate", "--signal", "Sawtooth"],
        &["simulate", "--signal", "Blocks", "--track", "straight"],
        &["simulate", "--signal", "Blocks", "--sampling", "irregular:1"],
        &["cv", "-i", "noboom.csv", "--family", "boom_adaptive"],
        &["eval", "--spline", "absent.json", "--knots"],
        &["--jobs", "0", "simulate", "--signal", "Blocks"],
    ];
    for args in cases {
        let out = run(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn missing_velocity_names_the_column() {
    let dir = workspace(&[("nov.csv", "t,y\n0,1\n1,2\n2,3\n")]);
    let out = run(dir.path(), &["fit", "-i", "nov.csv", "--gamma", "1", "--family", "constant", "--params", "0.1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("'v'"), "{}", stderr(&out));
}

#[test]
fn failed_search_exits_1() {
    let dir = workspace(&[("line.csv", LINE)]);
    let out = run(dir.path(), &["cv", "-i", "line.csv", "--gamma-grid", "1", "--param-grid", "1e-14", "--no-refine"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn line_fit_has_no_curvature_and_round_trips() {
    let dir = workspace(&[("line.csv", LINE)]);
    let out = run(dir.path(), &["fit", "-i", "line.csv", "--gamma", "1", "--family", "constant", "--params", "0.1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let penalty: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.trim().strip_prefix("curvature penalty:"))
        .expect("penalty line")
        .trim()
        .parse()
        .unwrap();
    assert!(penalty.abs() < 1e-12, "{penalty}");
    for name in ["spline.json", "samples.csv", "penalty.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }

    let out = run(dir.path(), &["eval", "--spline", "spline.json", "--knots"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,f"));
    let expected = [1.0, 3.0, 6.0, 9.0];
    for (line, want) in lines.zip(expected) {
        let f: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((f - want).abs() < 1e-9, "{line}");
    }
}

#[test]
fn single_candidate_search() {
    let dir = workspace(&[("line.csv", LINE)]);
    let out = run(dir.path(), &["cv", "-i", "line.csv", "--gamma-grid", "2", "--param-grid", "0.5", "--no-refine"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = read(&dir, "cv_trace.csv");
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("2.0,0.5,"));
    let best = read(&dir, "best.json");
    assert!(best.contains("\"gamma\": 2.0") && best.contains("\"eta\": 0.5"), "{best}");
}

#[test]
fn oracle_flag_reports_gap() {
    let dir = workspace(&[]);
    assert_eq!(code(&run(dir.path(), &["simulate", "--signal", "HeaviSine", "--n", "60"])), 0);
    let out = run(
        dir.path(),
        &[
            "cv", "-i", "simulation.csv", "--family", "constant", "--gamma-grid", "-1:1:3", "--param-grid", "-6:-2:5",
            "--oracle",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let gap: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("oracle: max relative per-point gap "))
        .expect("gap line")
        .parse()
        .unwrap();
    assert!(gap < 1e-6, "{gap}");

    let out = run(dir.path(), &["cv", "-i", "simulation.csv", "--gamma-grid", "1", "--param-grid", "0.001", "--oracle"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("penalties vary by interval"));
}

#[test]
fn simulate_writes_one_row_per_time() {
    let dir = workspace(&[]);
    let out = run(dir.path(), &["simulate", "--signal", "HeaviSine", "--n", "1024", "--snr", "7", "--seed", "42"]);
    assert_eq!(code(&out), 0);
    let text = read(&dir, "simulation.csv");
    assert_eq!(text.lines().next(), Some("t,g_true,f_true,y,v"));
    assert_eq!(text.lines().count(), 1025);
}

#[test]
fn benchmark_row_count_and_columns() {
    let dir = workspace(&[]);
    let out = run(
        dir.path(),
        &[
            "benchmark", "--signals", "Blocks", "--snr", "7", "--methods", "adaptive,nonadaptive", "--seeds", "5",
            "--n", "128",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = read(&dir, "benchmark.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("signal,snr,method,seed,tmse,retrieved_snr"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn reruns_are_byte_identical() {
    let snapshot = |args: &[&str], files: &[&str]| {
        let dir = workspace(&[]);
        assert_eq!(code(&run(dir.path(), &["simulate", "--track", "boustrophedon", "--seed", "3"])), 0);
        let out = run(dir.path(), args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.iter().map(|f| read(&dir, f)).collect::<Vec<_>>()
    };
    let files = ["track.geojson", "track_samples.csv", "penalty.csv", "selection.json", "cv_trace.csv", "spline.json"];
    let args = ["reconstruct", "-i", "track.csv", "--gamma-grid", "0:2:5", "--param-grid", "-3:0:7"];
    assert_eq!(snapshot(&args, &files), snapshot(&args, &files));

    let files = ["cv_trace.csv", "best.json", "spline.json", "samples.csv"];
    let dir = workspace(&[]);
    let _ = run(dir.path(), &["simulate", "--signal", "Doppler", "--n", "200", "--seed", "9"]);
    let cv = |out_dir: &str| {
        let out = run(dir.path(), &["--output-dir", out_dir, "cv", "-i", "simulation.csv", "--refit"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.iter().map(|f| read(&dir, &format!("{out_dir}/{f}"))).collect::<Vec<_>>()
    };
    assert_eq!(cv("a"), cv("b"));
}

#[test]
fn reconstruct_outputs_and_duplicate_policy() {
    let track = "timestamp,lon,lat,speed,bearing,boom\n\
                 0,175.6100,-40.3600,1.0,90,1\n\
                 1,175.6100118,-40.3600,1.0,90,1\n\
                 1,175.6100120,-40.3600,1.0,90,1\n\
                 2,175.6100236,-40.3600,1.0,90,0\n\
                 3,175.6100354,-40.3600,1.0,90,0\n\
                 4,175.6100472,-40.3600,1.0,90,0\n";
    let dir = workspace(&[("dup.csv", track)]);
    let out = run(dir.path(), &["reconstruct", "-i", "dup.csv"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let out = run(
        dir.path(),
        &["reconstruct", "-i", "dup.csv", "--dedupe", "merge", "--family", "boom_adaptive", "--param-grid", "-2:0:3"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let geojson = read(&dir, "track.geojson");
    assert!(geojson.contains("LineString"));
    assert_eq!(read(&dir, "penalty.csv").lines().count(), 1 + 4);
    assert!(read(&dir, "selection.json").contains("boom_adaptive"));
}
