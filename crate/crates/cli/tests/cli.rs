use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};
use windline_core::sei::SingleStarProfile;
use windline_core::spectra::ObservedSpectrum;
use windline_core::{presets, GridConfig};

fn windline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windline")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = windline(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn put(dir: &Path, name: &str, value: &impl serde::Serialize) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn coarse() -> GridConfig {
    GridConfig { core_rays: 12, halo_rays: 16, z_samples: 64, x_step: 0.03, occultation: true }
}

struct Fixture {
    dir: tempfile::TempDir,
    thick: String,
    thin: String,
    orbit: String,
    grid: String,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let thick = put(dir.path(), "thick.json", &presets::thick_wind());
        let thin = put(dir.path(), "thin.json", &presets::thin_shell());
        let orbit = put(dir.path(), "orbit.json", &presets::placeholder_orbit());
        let grid = put(dir.path(), "grid.json", &coarse());
        Fixture { dir, thick, thin, orbit, grid }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, seed: &str, phases: &str) -> PathBuf {
        let out = self.path(name);
        ok(&[
            "synth-obs",
            "--params1",
            &self.thick,
            "--params2",
            &self.thin,
            "--orbit",
            &self.orbit,
            "--seed",
            seed,
            "--n-phases",
            phases,
            "--grid",
            &self.grid,
            "--out",
            s(&out),
        ]);
        out
    }
}

fn flat_spectrum(id: &str, hjd: f64, level: f64) -> ObservedSpectrum {
    let wavelengths: Vec<f64> = (0..400).map(|i| 1520.0 + 0.1 * i as f64).collect();
    let fluxes = wavelengths.iter().map(|_| level).collect();
    ObservedSpectrum { id: id.into(), hjd, wavelengths, fluxes, phase: None }
}

#[test]
fn version_reports_numeric_fingerprint() {
    let out = ok(&["--version"]);
    assert!(out.starts_with("windline 0.1.0 (numeric fingerprint "), "{out}");
    assert!(out.contains(&windline_core::numeric_fingerprint()));
}

#[test]
fn profile_writes_table_and_law_tables() {
    let f = Fixture::new();
    let out = f.path("run/thick.dat");
    ok(&["profile", "--params", &f.thick, "--grid", &f.grid, "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let prof = SingleStarProfile::read_table(text.as_bytes()).unwrap();
    assert_eq!(prof.params, presets::thick_wind());
    assert!(prof.f_total.iter().any(|v| *v < 0.7));
    let laws = std::fs::read_to_string(f.path("run/laws.csv")).unwrap();
    assert!(laws.starts_with("r,w_of_r,w,dtau_dw,tau_beyond\n"));
    assert_eq!(laws.lines().count(), 201);
}

#[test]
fn profile_converges_under_grid_refinement() {
    let f = Fixture::new();
    let (a, b) = (f.path("a.dat"), f.path("b.dat"));
    ok(&["profile", "--params", &f.thick, "--out", s(&a)]);
    ok(&["profile", "--params", &f.thick, "--grid-res", "2", "--out", s(&b)]);
    let read = |p: &Path| SingleStarProfile::read_table(std::fs::read(p).unwrap().as_slice()).unwrap();
    let (pa, pb) = (read(&a), read(&b));
    assert!(pb.grid.len() > pa.grid.len());
    let xb = &pb.grid.x_values;
    let worst = pa
        .grid
        .x_values
        .iter()
        .zip(&pa.f_total)
        .map(|(&x, &fa)| {
            let i = xb.partition_point(|v| *v <= x).clamp(1, xb.len() - 1);
            let t = (x - xb[i - 1]) / (xb[i] - xb[i - 1]);
            let fb = pb.f_total[i - 1] + t * (pb.f_total[i] - pb.f_total[i - 1]);
            (fa - fb).abs() / fa
        })
        .fold(0.0, f64::max);
    assert!(worst < 5e-3, "relative change {worst}");
}

#[test]
fn bsei_exports_one_file_per_phase() {
    let f = Fixture::new();
    let phases = put(
        f.dir.path(),
        "phases.json",
        &json!([0.0, 0.25, {"phase": 0.5, "eclipse": {"kind": "primary", "lc": 0.8}}]),
    );
    let out = f.path("seq");
    ok(&[
        "bsei",
        "--params1",
        &f.thick,
        "--params2",
        &f.thin,
        "--orbit",
        &f.orbit,
        "--phases",
        &phases,
        "--grid",
        &f.grid,
        "--out",
        s(&out),
    ]);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        assert!(out.join(e["file"].as_str().unwrap()).is_file());
    }
    assert_eq!(entries[1]["file"], "bsei_phi0.2500.dat");
    let eclipsed = std::fs::read_to_string(out.join("bsei_phi0.5000.dat")).unwrap();
    let first: Vec<f64> = eclipsed.lines().nth(1).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - 0.8).abs() < 1e-6, "eclipsed continuum {}", first[1]);
}

#[test]
fn synth_obs_is_seeded() {
    let f = Fixture::new();
    let a = f.synth("a", "7", "4");
    let b = f.synth("b", "7", "4");
    let c = f.synth("c", "8", "4");
    for name in ["syn000.csv", "syn003.csv", "synth.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_ne!(std::fs::read(a.join("syn001.csv")).unwrap(), std::fs::read(c.join("syn001.csv")).unwrap());
    let spec = windline_core::spectra::load_spectrum(&a.join("syn002.csv")).unwrap();
    assert_eq!(spec.id, "syn002");
    assert!(
        (spec.hjd - (presets::placeholder_orbit().t0 + 0.5 * presets::placeholder_orbit().period_days)).abs() < 1e-6
    );
}

#[test]
fn lightcurve_of_flat_spectra_is_unity() {
    let f = Fixture::new();
    let dir = f.path("flat");
    std::fs::create_dir_all(&dir).unwrap();
    let orbit = presets::placeholder_orbit();
    for k in 0..5 {
        flat_spectrum(&format!("f{k}"), orbit.t0 + 0.2 * k as f64 * orbit.period_days, 0.97)
            .save(&dir.join(format!("f{k}.csv")))
            .unwrap();
    }
    let out = f.path("lc.csv");
    ok(&["lightcurve", "--orbit", &f.orbit, "--band", "1525:1530", "--out", s(&out), s(&dir)]);
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phase,lc,spectrum_id"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!((r[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn normalize_removes_a_tilted_continuum() {
    let f = Fixture::new();
    let mut spec = flat_spectrum("tilt", 2_450_000.0, 1.0);
    spec.fluxes = spec.wavelengths.iter().map(|l| 2.0 + 0.01 * (l - 1520.0)).collect();
    let input = f.path("tilt.csv");
    spec.save(&input).unwrap();
    let out = f.path("norm.csv");
    ok(&["normalize", "--input", s(&input), "--window", "1521:1523", "--window", "1556:1559", "--out", s(&out)]);
    let norm = windline_core::spectra::load_spectrum(&out).unwrap();
    assert!(norm.fluxes.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn fit_recovers_a_single_parameter() {
    let f = Fixture::new();
    let obs = f.synth("obs", "3", "6");
    let mut start = presets::thick_wind();
    start.t_tot_blue = 1.0;
    let start = put(f.dir.path(), "start.json", &start);
    let out = f.path("fit");
    let stdout = ok(&[
        "fit",
        "--obs",
        s(&obs),
        "--params1",
        &start,
        "--params2",
        &f.thin,
        "--orbit",
        &f.orbit,
        "--free",
        "t_tot_blue:primary:0.3:8",
        "--center",
        "1549.5",
        "--half-width",
        "12",
        "--sigma",
        "0.02",
        "--grid",
        &f.grid,
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("t_tot_blue (Primary) = "), "{stdout}");
    let best: Value = serde_json::from_str(&std::fs::read_to_string(out.join("params1.json")).unwrap()).unwrap();
    let t = best["t_tot_blue"].as_f64().unwrap();
    assert!((t - 3.0).abs() < 0.6, "recovered {t}");
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 7);
}

#[test]
fn exit_codes_classify_failures() {
    let f = Fixture::new();
    let out = f.path("x.dat");

    let mut bad = presets::thick_wind();
    bad.w0 = 0.9;
    bad.w1 = 0.5;
    let bad = put(f.dir.path(), "bad.json", &bad);
    let r = windline(&["profile", "--params", &bad, "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("w0") && err.contains("w1"), "{err}");

    let r = windline(&["profile", "--params", s(&f.path("missing.json")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));

    let garbage = f.path("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    assert_eq!(windline(&["profile", "--params", s(&garbage), "--out", s(&out)]).status.code(), Some(2));

    assert_eq!(
        windline(&["profile", "--params", &f.thick, "--grid-res", "0", "--out", s(&out)]).status.code(),
        Some(2)
    );
    assert_eq!(windline(&["profile"]).status.code(), Some(2));

    let unsorted = put(f.dir.path(), "unsorted.json", &json!([0.5, 0.1]));
    let r = windline(&[
        "bsei",
        "--params1",
        &f.thick,
        "--params2",
        &f.thin,
        "--orbit",
        &f.orbit,
        "--phases",
        &unsorted,
        "--out",
        s(&f.path("seq")),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let r = windline(&["lightcurve", "--orbit", &f.orbit, "--band", "1530:1520", "--out", s(&out), s(&f.path("none"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn serve_answers_health_checks() {
    let f = Fixture::new();
    let session = f.path("session.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_windline"))
        .args(["serve", "--port", "0", "--session", s(&session)])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited before listening");
        if let Some(rest) = line.trim().strip_prefix("listening on http://") {
            break rest.to_string();
        }
    };
    let mut conn = TcpStream::connect(&addr).unwrap();
    write!(conn, "GET /api/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    conn.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(&windline_core::numeric_fingerprint()));
}
