use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn framecorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framecorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .parse()
        .unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = framecorr(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn eval_reproduces_table_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // 167 hits, 26 strays on empty frames, 41 misses: one frame each.
    let mut dets = String::new();
    let mut gt = String::new();
    let mut f = 0;
    for _ in 0..167 {
        dets += &format!("{f} 10 10 50 50 0.9\n");
        gt += &format!("{f} p{f} 30 30 40 40\n");
        f += 1;
    }
    for _ in 0..26 {
        dets += &format!("{f} 100 100 120 120 0.9\n");
        f += 1;
    }
    for _ in 0..41 {
        gt += &format!("{f} p{f} 30 30 40 40\n");
        f += 1;
    }
    let dp = dir.path().join("d.txt");
    let gp = dir.path().join("g.txt");
    let jp = dir.path().join("r.json");
    fs::write(&dp, dets).unwrap();
    fs::write(&gp, gt).unwrap();
    let o = framecorr(&[
        "eval",
        "--detections",
        dp.to_str().unwrap(),
        "--ground-truth",
        gp.to_str().unwrap(),
        "--json",
        jp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = stdout(&o);
    for (k, want) in [("sen", 80.29), ("pre", 86.53), ("f1", 83.29), ("f2", 81.46)] {
        assert!((value(&r, k) - want).abs() <= 0.01, "{k}: {r}");
    }
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(jp).unwrap()).unwrap();
    assert_eq!(j["tp"], 167);
    assert_eq!(j["fn"], 41);
}

#[test]
fn filter_on_noiseless_scenario_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.toml");
    fs::write(
        &sc,
        "frame_w = 160\nframe_h = 120\nn_frames = 40\nrng_seed = 3\n\
         [[tracks]]\nstart = [50.0, 40.0, 80.0, 70.0]\nwobble_amplitude = 10.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    synth(&out, &["--scenario", sc.to_str().unwrap()]);
    let filtered = dir.path().join("f.txt");
    let o = framecorr(&[
        "filter",
        "--frames",
        out.join("frames").to_str().unwrap(),
        "--detections",
        out.join("detections.txt").to_str().unwrap(),
        "-o",
        filtered.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let input = fs::read_to_string(out.join("detections.txt")).unwrap();
    let output = fs::read_to_string(&filtered).unwrap();
    let expected: String = input.lines().map(|l| format!("{l} det\n")).collect();
    assert_eq!(output, expected);
    assert_eq!(input.lines().count(), 40);
}

#[test]
fn synth_and_filter_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        synth(d, &["--standard", "7", "--n-frames", "60"]);
    }
    for f in ["detections.txt", "groundtruth.txt", "frames/000.pgm", "frames/059.pgm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let run = || {
        let o = framecorr(&[
            "filter",
            "--frames",
            a.join("frames").to_str().unwrap(),
            "--detections",
            a.join("detections.txt").to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    let first = run();
    assert!(!first.is_empty());
    assert_eq!(first, run());
}

#[test]
fn rgb_frames_filter_like_gray_ones() {
    let dir = tempfile::tempdir().unwrap();
    let (g, c) = (dir.path().join("g"), dir.path().join("c"));
    synth(&g, &["--standard", "2", "--n-frames", "30"]);
    synth(&c, &["--standard", "2", "--n-frames", "30", "--rgb"]);
    assert!(c.join("frames/000.ppm").exists());
    let run = |d: &Path| {
        framecorr(&[
            "filter",
            "--frames",
            d.join("frames").to_str().unwrap(),
            "--detections",
            d.join("detections.txt").to_str().unwrap(),
        ])
        .stdout
    };
    assert_eq!(run(&g), run(&c));
}

#[test]
fn sweep_reports_one_row_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    synth(&out, &["--standard", "1", "--n-frames", "300"]);
    let o = framecorr(&[
        "sweep",
        "--half-window",
        "1,2,3,4",
        "--frames",
        out.join("frames").to_str().unwrap(),
        "--detections",
        out.join("detections.txt").to_str().unwrap(),
        "--ground-truth",
        out.join("groundtruth.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = stdout(&o);
    let pre: Vec<f64> = (0..4).map(|i| value(&r, &format!("rows.{i}.report.pre"))).collect();
    assert!(r.contains("rows.3.half_window=4\n"));
    assert!(!r.contains("rows.4."));
    assert!(pre.windows(2).all(|w| w[1] >= w[0]), "{pre:?}");
    assert!(pre[0] > value(&r, "raw.pre"));
}

#[test]
fn ssim_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    synth(&out, &["--standard", "4", "--n-frames", "3"]);
    let a = out.join("frames/000.pgm");
    let b = out.join("frames/001.pgm");
    let o = framecorr(&["ssim", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "ssim"), 1.0);
    let o = framecorr(&["ssim", a.to_str().unwrap(), b.to_str().unwrap(), "--ssim-mode", "windowed"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = value(&stdout(&o), "ssim");
    assert!(v > 0.85 && v < 1.0, "{v}");
}

#[test]
fn bench_file_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    synth(&out, &["--standard", "4", "--n-frames", "20"]);
    let o = framecorr(&[
        "bench",
        "--frames",
        out.join("frames").to_str().unwrap(),
        "--detections",
        out.join("detections.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = stdout(&o);
    assert_eq!(value(&r, "frames"), 20.0);
    assert!(value(&r, "mpt_ms") > 0.0);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    synth(&out, &["--standard", "4", "--n-frames", "30"]);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "frames = {:?}\ndetections = {:?}\nconfidence_gate = 0.99\n",
            out.join("frames"),
            out.join("detections.txt")
        ),
    )
    .unwrap();
    // The gate removes everything.
    let o = framecorr(&["filter", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let o = framecorr(&["filter", "--config", cfg.to_str().unwrap(), "--confidence-gate", "0.3"]);
    assert!(!o.stdout.is_empty());

    fs::write(&cfg, "half_window = 3\nhalfwindow = 2\n").unwrap();
    let o = framecorr(&["filter", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.toml:2"), "{}", stderr(&o));
}

#[test]
fn input_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let dp = dir.path().join("dets.txt");
    let gp = dir.path().join("gt.txt");
    fs::write(&dp, "0 10 10 20 20 0.9\n# note\n3 20 10 10 20 0.5\n").unwrap();
    fs::write(&gp, "0 p 15 15 10 10\n").unwrap();
    let o = framecorr(&["eval", "--detections", dp.to_str().unwrap(), "--ground-truth", gp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("dets.txt:3:"), "{e}");

    let o = framecorr(&["filter", "--frames", dir.path().join("nope").to_str().unwrap(), "--detections", dp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn usage_errors_exit_one() {
    let o = framecorr(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("usage"));
    let o = framecorr(&["eval", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = framecorr(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn missing_frame_in_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    synth(&out, &["--standard", "4", "--n-frames", "5"]);
    fs::remove_file(out.join("frames/001.pgm")).unwrap();
    let o = framecorr(&[
        "filter",
        "--frames",
        out.join("frames").to_str().unwrap(),
        "--detections",
        out.join("detections.txt").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing frame 1"), "{}", stderr(&o));
}
