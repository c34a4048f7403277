use std::path::Path;
use std::process::{Command, Output};

use gsdscope::io::{parse_image_csv, parse_profile_csv};

const CONFIG: &str = r#"{
  "state": {"nbar_x": 5, "nbar_y": 5, "nbar_z": 1.1},
  "grid": {"kind": "projected", "points": 16},
  "scan": {
    "a": {"start": "-2um", "stop": "2um", "pixels": 41},
    "b": {"start": "-40nm", "stop": "40nm", "pixels": 3}
  },
  "seed": 7
}"#;

fn gsdscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsdscope")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn center_value(args: &[&str]) -> f64 {
    let out = gsdscope(args);
    assert!(out.status.success(), "{}", stderr(&out));
    parse_profile_csv(&stdout(&out)).unwrap().profile.value[0]
}

#[test]
fn epsf_vortex_center_is_dark() {
    let out = gsdscope(&["epsf", "--waist", "4um", "--power", "1uW", "--tau", "20us", "--beam", "vortex"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# gsdscope profile v1");
    assert_eq!(lines[1], "coord_m,p_d");
    assert_eq!(lines[2], "0,0");
}

#[test]
fn epsf_missing_unit_names_the_flag() {
    let out = gsdscope(&["epsf", "--waist", "4", "--power", "1uW", "--tau", "20us", "--beam", "vortex"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--waist"), "{}", stderr(&out));
    let bad_beam = gsdscope(&["epsf", "--waist", "4um", "--power", "1uW", "--tau", "20us", "--beam", "donut"]);
    assert_eq!(bad_beam.status.code(), Some(2));
}

#[test]
fn epsf_phonon_number_matters_only_off_the_dark_centre() {
    let base = ["epsf", "--waist", "4um", "--power", "120uW", "--tau", "20us", "--points", "3"];
    let run = |beam: &str, nbar: &str, extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend(["--beam", beam, "--nbar-ax", nbar]);
        args.extend(extra);
        center_value(&args)
    };
    let rad10 = ["--nbar-rad", "10"];
    assert_eq!(run("vortex", "1", &rad10), 0.0);
    assert_eq!(run("vortex", "30", &rad10), 0.0);
    let (g1, g30) = (run("gaussian", "1", &rad10), run("gaussian", "30", &rad10));
    assert!((g1 - g30).abs() > 1e-3, "{g1} {g30}");
    // with the doubled phase argument the hot centre lies above the cold one
    let (v1, v30) = (run("gaussian", "1", &["--nbar-rad", "10", "--convention", "verbatim"]),
        run("gaussian", "30", &["--nbar-rad", "10", "--convention", "verbatim"]),);
    assert!(v30 > v1, "{v1} {v30}");
    // the Fock average agrees with the closed form at low temperature
    let exact = run("gaussian", "1", &["--exact", "--nbar-rad", "2"]);
    let closed = run("gaussian", "1", &["--nbar-rad", "2"]);
    assert!((exact - closed).abs() < 5e-2, "{exact} {closed}");
}

fn scan(dir: &Path, extra: &[&str]) -> (Output, String) {
    let cfg = write_config(dir, CONFIG);
    let out_dir = dir.join("out");
    let mut args = vec!["scan", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap()];
    args.extend(extra);
    let out = gsdscope(&args);
    let csv = std::fs::read_to_string(out_dir.join(extra.iter().position(|a| *a == "--stem").map_or("scan".into(), |i| extra[i + 1].to_string()) + ".csv"))
        .unwrap_or_default();
    (out, csv)
}

#[test]
fn scan_writes_image_pgm_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = scan(dir.path(), &["--pgm"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let image = parse_image_csv(&csv).unwrap();
    assert_eq!((image.width(), image.height()), (41, 3));
    assert!(image.values.iter().all(|v| (0.0..=1.0).contains(v)));
    let pgm = std::fs::read_to_string(dir.path().join("out/scan.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n41 3\n255\n"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/scan.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["config"]["state"]["nbar_z"], 1.1);
    // the sidecar config is itself a valid run configuration
    gsdscope::config::RunConfig::from_json(&sidecar["config"].to_string()).unwrap();
}

#[test]
fn scan_contrast_depends_on_axial_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let centre = |nbar: &str, stem: &str| {
        let (out, csv) = scan(dir.path(), &["--nbar-z", nbar, "--stem", stem]);
        assert!(out.status.success(), "{}", stderr(&out));
        let image = parse_image_csv(&csv).unwrap();
        let row = image.row(1).to_vec();
        let max = row.iter().cloned().fold(0.0, f64::max);
        (row[20], max)
    };
    let (cold, cold_max) = centre("1.1", "cold");
    let (hot, _) = centre("10", "hot");
    assert!(cold < 0.5 * cold_max, "{cold} {cold_max}");
    assert!(hot > cold, "{hot} {cold}");
}

#[test]
fn scan_is_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, first) = scan(dir.path(), &["--shots", "10", "--stem", "a"]);
    let (b, second) = scan(dir.path(), &["--shots", "10", "--stem", "b"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(first, second);
    let (c, other_seed) = scan(dir.path(), &["--shots", "10", "--seed", "8", "--stem", "c"]);
    assert!(c.status.success());
    assert_ne!(first, other_seed);

    let cfg = write_config(dir.path(), CONFIG);
    let run = |threads: &str, stem: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_gsdscope"))
            .env("GSDSCOPE_THREADS", threads)
            .args(["scan", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap(), "--stem", stem])
            .output()
            .unwrap();
        (out.status.code(), std::fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap_or_default())
    };
    let (c1, one) = run("1", "t1");
    let (c3, three) = run("3", "t3");
    assert_eq!((c1, c3), (Some(0), Some(0)));
    assert_eq!(one, three);
    assert_eq!(run("zero", "tz").0, Some(2));
}

#[test]
fn scan_without_scan_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let out = gsdscope(&["scan", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let bad = write_config(dir.path(), r#"{"beam": {"shape": "vortex", "power": "1mW", "waist": "4um", "tilt": 0}}"#);
    let out = gsdscope(&["scan", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("beam.tilt"), "{}", stderr(&out));
}

#[test]
fn fit_recovers_noiseless_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let data = dir.path().join("profile.csv");
    let out = gsdscope(&[
        "synth-profile", "--config", &cfg, "--sigma-z", "45nm", "--points", "81", "-o", data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = gsdscope(&["fit", data.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["converged"], true);
    let s = v["estimates"]["sigma_z"].as_f64().unwrap();
    assert!((s - 45e-9).abs() < 1e-11, "{s}");
    let p = v["estimates"]["power"].as_f64().unwrap();
    assert!((p - 1.2e-3).abs() < 1e-8, "{p}");
}

#[test]
fn fit_recovers_noisy_profile_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let data = dir.path().join("noisy.csv");
    let out = gsdscope(&[
        "synth-profile", "--config", &cfg, "--sigma-z", "32.6nm", "--points", "2001", "--shots", "10", "--seed", "3",
        "-o", data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // the file carries sigma_p; drop it so the shot-count weighting is used
    let text = std::fs::read_to_string(&data).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| if l.starts_with('#') { l.to_owned() } else { l.rsplitn(2, ',').nth(1).unwrap().to_owned() })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&data, stripped + "\n").unwrap();
    let out = gsdscope(&["fit", data.to_str().unwrap(), "--config", &cfg, "--shots", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let s = v["estimates"]["sigma_z"].as_f64().unwrap();
    assert!((s - 32.6e-9).abs() < 0.15 * 32.6e-9, "{s}");
}

#[test]
fn fit_rejects_too_few_points() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("short.csv");
    std::fs::write(&data, "# gsdscope profile v1\ncoord_m,p_d\n-1e-7,0.3\n0,0.1\n1e-7,0.3\n").unwrap();
    let out = gsdscope(&["fit", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("insufficient"), "{}", stderr(&out));
    std::fs::write(&data, "# gsdscope profile v1\ncoord_m,p_d\n0,abc\n").unwrap();
    assert_eq!(gsdscope(&["fit", data.to_str().unwrap()]).status.code(), Some(2));
}

fn spectrum(path: &Path, peak: f64) {
    let mut text = String::from("detuning_hz,p_d,shots\n");
    for i in 0..61 {
        let d = -30e3 + 1e3 * i as f64;
        let p = peak * 5e3f64.powi(2) / (d * d + 5e3f64.powi(2)) + 0.01;
        text += &format!("{d},{p},200\n");
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn thermometry_from_sideband_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let (red, blue, zero) = (dir.path().join("r.csv"), dir.path().join("b.csv"), dir.path().join("z.csv"));
    spectrum(&blue, 0.42);
    spectrum(&red, 0.42 * 0.5238 - 0.01 * (1.0 - 0.5238));
    let out = gsdscope(&["thermometry", red.to_str().unwrap(), blue.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let n = v["nbar"]["value"].as_f64().unwrap();
    assert!((n - 1.10).abs() < 0.022, "{n}");
    assert!(v["nbar"]["sigma"].as_f64().unwrap() > 0.0);

    let out = gsdscope(&["thermometry", blue.to_str().unwrap(), blue.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));

    let mut text = String::from("detuning_hz,p_d,shots\n");
    for i in 0..61 {
        text += &format!("{},0,200\n", -30e3 + 1e3 * i as f64);
    }
    std::fs::write(&zero, text).unwrap();
    let out = gsdscope(&["thermometry", zero.to_str().unwrap(), blue.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["nbar"]["value"].as_f64().unwrap(), 0.0);
}

fn budget_csv(dir: &Path, name: &str, extra: &[&str]) -> Vec<Vec<String>> {
    let path = dir.join(name);
    let mut args = vec!["budget", "--csv", path.to_str().unwrap()];
    args.extend(extra);
    let out = gsdscope(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn budget_rows_decades_and_waist_independence() {
    let dir = tempfile::tempdir().unwrap();
    let rows = budget_csv(dir.path(), "default.csv", &[]);
    assert_eq!(rows[0].join(","), gsdscope::budget::BUDGET_CSV_HEADER.join(","));
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["b_field_angle", "pulse_width", "power_broadening", "polarization"]);

    let rows = budget_csv(dir.path(), "pmax.csv", &["--p-max", "1"]);
    for r in &rows[1..] {
        let s: f64 = r[2].parse().unwrap();
        let decade: f64 = r[5].parse().unwrap();
        assert!((s.log10() - decade.log10()).abs() <= 1.0, "{r:?}");
    }

    let narrow = budget_csv(dir.path(), "w2.csv", &["--waist", "2um"]);
    let wide = budget_csv(dir.path(), "w8.csv", &["--waist", "8um"]);
    for (a, b) in narrow[1..].iter().zip(&wide[1..]) {
        let rel = |i: usize| {
            let (x, y): (f64, f64) = (a[i].parse().unwrap(), b[i].parse().unwrap());
            (x - y).abs() / x
        };
        assert!(rel(3) < 1e-12 && rel(4) < 1e-12, "{a:?} {b:?}");
    }
    assert_eq!(gsdscope(&["budget", "--p-max", "-1"]).status.code(), Some(2));
}
