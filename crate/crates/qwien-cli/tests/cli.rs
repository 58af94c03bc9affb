use std::fs;
use std::path::Path;
use std::process::Command;

use qwien::wavefield::{total_norm, Space};
use qwien_cli::config::parse_config;
use qwien_cli::output::{read_spsl, METRICS_HEADER};
use qwien_cli::run::{run, RunError};

const SMALL: &str = r#"
[run]
mode = "far_field"

[beam]
energy = "100 keV"
waist = "10 um"
ell = 1
spin = "both"

[filter]
field = "1 mT"
reference_radius = "10 um"
length = "5 cm"

[grid]
n = 128
extent = "120 um"

[slices]
count = 10

[outputs]
far_field_zoom = 4
far_field_window = 64
"#;

fn qwien() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qwien"))
}

fn run_in(text: &str, dir: &Path) -> Result<qwien_cli::run::OutputBundle, RunError> {
    let mut cfg = parse_config(text).unwrap();
    cfg.outputs.directory = dir.to_path_buf();
    run(&cfg, text)
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_in(SMALL, a.path()).unwrap();
    run_in(SMALL, b.path()).unwrap();
    assert!(ra.files.len() > 10);
    for f in &ra.files {
        let name = f.file_name().unwrap();
        let (x, y) = (fs::read_to_string(f).ok(), fs::read_to_string(b.path().join(name)).ok());
        if name == "provenance.txt" {
            // only the output directory may differ
            let strip = |t: String| t.lines().filter(|l| !l.contains("directory:")).collect::<Vec<_>>().join("\n");
            assert_eq!(strip(x.unwrap()), strip(y.unwrap()));
            continue;
        }
        assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn metrics_table_has_expected_rows() {
    let d = tempfile::tempdir().unwrap();
    let bundle = run_in(SMALL, d.path()).unwrap();
    let csv = fs::read_to_string(d.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    assert_eq!(lines.count(), bundle.rows.len());
    assert!(csv.contains("conversion,up,,,flipped_fraction,"));
    assert!(csv.contains("separability,down,up,,metric,"));
    assert!(csv.contains("aperture,,,,r1_polarization_degree,"));
    assert!(csv.contains("oam,down,up,0,power,"));
    let flipped: Vec<f64> = bundle
        .rows
        .iter()
        .filter(|r| r.key == "flipped_fraction")
        .map(|r| r.value)
        .collect();
    assert_eq!(flipped.len(), 2);
    assert!((flipped[0] - flipped[1]).abs() < 1e-12 * flipped[0].max(1e-30) + 1e-15);
}

#[test]
fn spinor_dump_reads_back() {
    let d = tempfile::tempdir().unwrap();
    run_in(SMALL, d.path()).unwrap();
    let exit = read_spsl(fs::File::open(d.path().join("exit_up.spsl")).unwrap()).unwrap();
    assert_eq!(exit.grid.n, 128);
    assert_eq!(exit.space, Space::Real);
    assert!((exit.z - 0.05).abs() < 1e-15);
    assert!((total_norm(&exit) - 1.0).abs() < 1e-5);
    let far = read_spsl(fs::File::open(d.path().join("far_up.spsl")).unwrap()).unwrap();
    assert_eq!(far.space, Space::Fourier);
    assert_eq!(far.grid.n, 64);
    let pgm = fs::read(d.path().join("near_up_up_intensity.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n128 128\n65535\n"));
    assert_eq!(pgm.len(), 17 + 128 * 128 * 2);
}

#[test]
fn sampling_violation_is_refused_unless_overridden() {
    let text = SMALL.replace("\"1 mT\"", "\"40 mT\"");
    let d = tempfile::tempdir().unwrap();
    let e = run_in(&text, d.path()).unwrap_err();
    assert!(matches!(e, RunError::SamplingRefused { .. }), "{e}");
    assert!(e.to_string().contains("--override-sampling"));

    let path = d.path().join("strong.toml");
    fs::write(&path, &text).unwrap();
    let out = qwien().arg("--config").arg(&path).arg("--output-dir").arg(d.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = qwien()
        .arg("--config")
        .arg(&path)
        .arg("--output-dir")
        .arg(d.path().join("o"))
        .arg("--override-sampling")
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn check_only_reports_through_exit_code() {
    let d = tempfile::tempdir().unwrap();
    for (field, code) in [("1 mT", 0), ("40 mT", 1)] {
        let path = d.path().join("c.toml");
        let text = SMALL.replace("far_field\"", "check_only\"").replace("\"1 mT\"", &format!("\"{field}\""));
        fs::write(&path, text).unwrap();
        let out = qwien().arg("--config").arg(&path).arg("--output-dir").arg(d.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(code), "{field}");
        let csv = fs::read_to_string(d.path().join("metrics.csv")).unwrap();
        assert!(csv.contains("sampling,,,,margin,"));
        assert!(!d.path().join("exit_up.spsl").exists());
    }
}

#[test]
fn config_errors_name_the_line() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("bad.toml");
    fs::write(&path, SMALL.replace("n = 128", "n = 100")).unwrap();
    let out = qwien().arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 17") && err.contains("grid.n") && err.contains("128"), "{err}");

    let out = qwien().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn seed_and_config_are_recorded() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("c.toml");
    fs::write(&path, SMALL.replace("far_field\"", "check_only\"")).unwrap();
    let out = qwien().arg("--config").arg(&path).arg("--output-dir").arg(d.path()).arg("--seed").arg("42").output().unwrap();
    assert!(out.status.success());
    let prov = fs::read_to_string(d.path().join("provenance.txt")).unwrap();
    assert!(prov.contains("--seed 42"));
    assert!(prov.contains("hbar = 1.054571817e-34"));
    assert!(prov.contains("extent = \"120 um\""));
}

#[test]
fn near_field_skips_far_field_outputs() {
    let d = tempfile::tempdir().unwrap();
    let text = SMALL.replace("far_field\"", "near_field\"");
    let b = run_in(&text, d.path()).unwrap();
    assert!(b.rows.iter().all(|r| r.kind != "separability"));
    assert!(!d.path().join("far_up.spsl").exists());
    assert!(d.path().join("exit_down.spsl").exists());
}

#[test]
fn energy_spread_adds_averaged_channels() {
    let d = tempfile::tempdir().unwrap();
    let text = format!("{}\n[spectrum]\nsigma = \"0.7 eV\"\nsamples = 3\n", SMALL.replace("spin = \"both\"", "spin = \"down\""));
    let b = run_in(&text, d.path()).unwrap();
    let sep: Vec<_> = b.rows.iter().filter(|r| r.kind == "energy_spread").collect();
    assert_eq!(sep.len(), 1);
    assert!(sep[0].value.is_finite() && sep[0].value > 0.0);
    assert!(d.path().join("spread_down_up_intensity.pgm").exists());
}

#[test]
fn sweep_writes_one_row_per_case() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sweep]\nfields = [\"0.3 mT\", \"1 mT\"]\nenergies = [\"100 keV\"]\n",
        SMALL.replace("far_field\"", "sweep\"").replace("spin = \"both\"", "spin = \"down\"")
    );
    run_in(&text, d.path()).unwrap();
    let csv = fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("energy_kev,field_mt,relativistic_correction"));
    let frac = |l: &str| l.split(',').nth(5).unwrap().parse::<f64>().unwrap();
    // flipped fraction grows with field; the correction lowers it
    assert!(frac(lines[3]) > frac(lines[1]));
    assert!(frac(lines[2]) < frac(lines[1]));
}

#[test]
fn ray_trace_compares_with_wave() {
    let d = tempfile::tempdir().unwrap();
    let text = SMALL.replace("far_field\"", "ray_trace\"") + "\n[rays]\nradial = 20\nazimuthal = 24\nsteps = 200\n";
    let b = run_in(&text, d.path()).unwrap();
    let get = |kind: &str, key: &str| b.rows.iter().find(|r| r.kind == kind && r.key == key).unwrap().value;
    assert_eq!(get("rays", "count"), 480.0);
    assert!(get("comparison", "var_x_relative_difference").abs() < 0.2);
    assert!(d.path().join("rays_histogram.pgm").exists());
}
