//! Acceptance report: one PASS/FAIL line per criterion, followed by a tally.
//!
//! The report always runs every criterion. It exits with failure when a criterion cannot be
//! evaluated, and also when any verdict is FAIL if `QWIEN_ACCEPTANCE_STRICT=1` is set.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;

use qwien::analysis::{
    anisotropy_spectrum, energy_spread_channel, group_velocity_displacement, lg_far_field_ring_radius, linear_field_limit,
    ray_trace, raster_moments, sampling_check, separability_metric, total_intensity, EnergySpectrum, RaySet,
    Scenario, SEPARABLE_THRESHOLD,
};
use qwien::propagation::propagate_free;
use qwien::wavefield::{azimuthal_spectrum, make_lg_beam, total_norm, Grid, LgParams, Spin, SpinorField};
use qwien::{far_field_zoomed, run_multislice, translate_step, BeamParams, MultipoleFilter, RunOptions, SliceScheme};
use qwien_cli::config::parse_config;

/// Largest |norm - 1| seen by any full pipeline run in this report.
static NORM_ERRORS: Mutex<Vec<(String, f64)>> = Mutex::new(Vec::new());

fn record_norm(label: &str, field: &SpinorField) {
    NORM_ERRORS.lock().unwrap().push((label.to_string(), (total_norm(field) - 1.0).abs()));
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Criterion = fn() -> Result<Verdict, String>;

fn beam(kev: f64) -> BeamParams {
    BeamParams::from_kev(kev).unwrap()
}

fn options(relativistic: bool) -> RunOptions {
    RunOptions { relativistic_correction: relativistic, override_sampling: true, fringe_translation: true }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

// ---------------------------------------------------------------------------------------

fn table_conversion() -> Result<Verdict, String> {
    // (energy keV, field T, reference flipped fraction)
    let cells = [
        (100.0, 0.3e-3, 6e-5),
        (100.0, 1e-3, 7e-4),
        (100.0, 3e-3, 0.006),
        (100.0, 10e-3, 0.066),
        (40.0, 0.3e-3, 2.7e-4),
        (40.0, 1e-3, 0.003),
        (40.0, 3e-3, 0.027),
        (40.0, 10e-3, 0.25),
    ];
    let grid = Grid::new(1024, 200e-6).map_err(e)?;
    let ring = 10e-6;
    let mut all = true;
    let mut notes = Vec::new();
    for (kev, b0, reference) in cells {
        let mut got = [0.0; 2];
        for (k, relativistic) in [false, true].into_iter().enumerate() {
            let filter = MultipoleFilter::quadrupole(b0, ring, 0.05).map_err(e)?;
            let sc = Scenario {
                grid,
                beam: beam(kev),
                ell: 1,
                waist: ring * 2f64.sqrt(),
                scheme: SliceScheme::for_filter(&filter, 20, 0).map_err(e)?,
                filter,
                options: options(relativistic),
            };
            let exit = sc.run(Spin::Down).map_err(e)?;
            record_norm(&format!("table {kev} keV {} mT", b0 * 1e3), &exit);
            got[k] = exit.norms().0;
        }
        let ok = got.iter().any(|&g| rel(g, reference) <= 0.35);
        all &= ok;
        notes.push(format!(
            "{kev}keV/{}mT {:.2e} vs {:.2e}|{:.2e}{}",
            b0 * 1e3,
            reference,
            got[0],
            got[1],
            if ok { "" } else { " (out)" }
        ));
    }
    Ok(verdict(all, format!("flipped fraction reference vs off|on correction: {}", notes.join("; "))))
}

/// Thin annulus of radius `r0` and radial width `sigma`, carrying a unit vortex.
fn thin_ring(grid: &Grid, r0: f64, sigma: f64) -> SpinorField {
    let mut f = SpinorField::zeros(*grid);
    for i in 0..grid.n {
        for j in 0..grid.n {
            let (x, y) = (grid.coord(j), grid.coord(i));
            let r = x.hypot(y);
            let amp = (-(r - r0).powi(2) / (2.0 * sigma * sigma)).exp();
            f.down[[i, j]] = Complex64::from_polar(amp, y.atan2(x));
        }
    }
    let n = total_norm(&f);
    f.scale(1.0 / n.sqrt());
    f
}

fn thin_ring_oracle() -> Result<Verdict, String> {
    let grid = Grid::new(1024, 200e-6).map_err(e)?;
    let r0 = 10e-6;
    let length = 0.05;
    let input = thin_ring(&grid, r0, grid.dx);
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (kev, b0) in [(100.0, 0.3e-3), (100.0, 3e-3), (100.0, 10e-3), (40.0, 0.3e-3), (40.0, 3e-3), (40.0, 10e-3)] {
        let t = Instant::now();
        let bp = beam(kev);
        let filter = MultipoleFilter::quadrupole(b0, r0, length).map_err(e)?;
        let scheme = SliceScheme::for_filter(&filter, 20, 0).map_err(e)?;
        let exit = run_multislice(&input, &filter, &scheme, &bp, &options(true)).map_err(e)?;
        record_norm(&format!("thin ring {kev} keV {} mT", b0 * 1e3), &exit);
        let theta = bp.spin_rotation_per_tesla_metre() * b0 * length / (bp.gamma * bp.gamma);
        let expected = theta.sin().powi(2);
        let got = exit.norms().0;
        worst = worst.max(rel(got, expected));
        notes.push(format!("{kev}keV/{}mT {:.3}% ({:.1}s)", b0 * 1e3, 100.0 * rel(got, expected), t.elapsed().as_secs_f64()));
    }
    Ok(verdict(worst <= 0.05, format!("relative error vs sin^2 oracle: {}", notes.join("; "))))
}

fn group_velocity() -> Result<Verdict, String> {
    let dz = group_velocity_displacement(0.05, 5.0, &beam(100.0)).map_err(e)?;
    Ok(verdict(rel(dz, 2.5e-6) < 1e-12, format!("dz = {:.6} um", dz * 1e6)))
}

fn oam_selection() -> Result<Verdict, String> {
    let grid = Grid::new(256, 200e-6).map_err(e)?;
    let bp = beam(100.0);
    let mut notes = Vec::new();
    let mut all = true;
    // (charge, input ell, waist, input spin, accepted output m values)
    let cases: [(i32, i32, f64, Spin, &[i32]); 4] = [
        (-1, 1, 10e-6 * 2f64.sqrt(), Spin::Down, &[0]),
        (-1, 1, 10e-6 * 2f64.sqrt(), Spin::Up, &[2]),
        (-2, 0, 10e-6, Spin::Down, &[2, -2]),
        (-2, 0, 10e-6, Spin::Up, &[2, -2]),
    ];
    for (q, ell, waist, spin, want) in cases {
        let filter = MultipoleFilter::new(q, FRAC_PI_2, 0.1e-3, 10e-6, 0.05).map_err(e)?;
        let scheme = SliceScheme::for_filter(&filter, 20, 0).map_err(e)?;
        let input = make_lg_beam(&grid, &LgParams { ell, waist, spin }).map_err(e)?;
        let exit = run_multislice(&input, &filter, &scheme, &bp, &RunOptions::default()).map_err(e)?;
        record_norm(&format!("oam q={q} {}", spin.name()), &exit);
        let spec = azimuthal_spectrum(&exit, spin.flipped(), grid.n / 2).map_err(e)?;
        let frac: f64 = want.iter().map(|&m| spec.fraction(m)).sum();
        all &= frac >= 0.99;
        notes.push(format!("q={q} l={ell} {} -> m{:?}: {:.3}%", spin.name(), want, 100.0 * frac));
    }
    Ok(verdict(all, notes.join("; ")))
}

fn unitarity_and_diffraction() -> Result<Verdict, String> {
    let bp = beam(100.0);
    let grid = Grid::new(512, 80e-6).map_err(e)?;
    let w = 2e-6;
    let f = make_lg_beam(&grid, &LgParams { ell: 0, waist: w, spin: Spin::Up }).map_err(e)?;
    let mut g = f.clone();
    let z_r = PI * w * w / bp.wavelength;
    propagate_free(&mut g, z_r, &bp).map_err(e)?;
    let growth = (raster_moments(&total_intensity(&g), &grid)[2] / raster_moments(&total_intensity(&f), &grid)[2]).sqrt();
    let growth_err = rel(growth, 2f64.sqrt());

    // a fringed pipeline, in addition to every run made by the other criteria
    let filter = MultipoleFilter::quadrupole(1e-3, 10e-6, 0.03).map_err(e)?.with_fringes(1.0 / 0.03).map_err(e)?;
    let sc = Scenario {
        grid: Grid::new(512, 200e-6).map_err(e)?,
        beam: bp,
        ell: 1,
        waist: 10e-6,
        scheme: SliceScheme::for_filter(&filter, 20, 10).map_err(e)?,
        filter,
        options: RunOptions::default(),
    };
    record_norm("fringed pipeline", &sc.run(Spin::Up).map_err(e)?);

    let norms = NORM_ERRORS.lock().unwrap();
    let (label, worst) = norms.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let ok = worst <= 1e-6 && growth_err <= 0.01;
    Ok(verdict(
        ok,
        format!(
            "{} pipelines, worst |norm-1| = {worst:.2e} ({label}); width growth over z_R = {growth:.6} (error {:.2e})",
            norms.len(),
            growth_err
        ),
    ))
}

/// Off-centre Gaussian with a transverse phase ramp, rotated about the grid centre by `angle`
/// in the sense in which content is carried by the translation step.
fn rotated_blob(grid: &Grid, angle: f64) -> Array2<Complex64> {
    let (s, c) = angle.sin_cos();
    Array2::from_shape_fn((grid.n, grid.n), |(i, j)| {
        let (x, y) = (grid.coord(j), grid.coord(i));
        let (xr, yr) = (c * x - s * y, s * x + c * y);
        let (x0, y0, sg) = (20.0 * grid.dx, 5.0 * grid.dx, 8.0 * grid.dx);
        let r2 = ((xr - x0).powi(2) + (yr - y0).powi(2)) / (sg * sg);
        Complex64::from_polar((-0.5 * r2).exp(), 0.3 * xr / grid.dx)
    })
}

fn rotation_and_fringe_shift() -> Result<Verdict, String> {
    let bp = beam(100.0);
    let zeta = bp.translation_coefficient();

    // uniform axial field, A = (B/2)(-y, x): 2n translation steps rotate by n zeta B dz
    let grid = Grid::new(128, 256e-9 * 128.0).map_err(e)?;
    let steps = 64;
    let dz = 1e-3;
    let total_angle = 0.5;
    let b = 2.0 * total_angle / (steps as f64 * zeta * dz);
    let mut f = SpinorField::zeros(grid);
    f.up = rotated_blob(&grid, 0.0);
    let ax = Array2::from_shape_fn((grid.n, grid.n), |(i, _)| -0.5 * b * grid.coord(i));
    let ay = Array2::from_shape_fn((grid.n, grid.n), |(_, j)| 0.5 * b * grid.coord(j));
    for _ in 0..steps {
        translate_step(&mut f, &ax, &ay, dz, &bp).map_err(e)?;
    }
    let exact = rotated_blob(&grid, (steps / 2) as f64 * zeta * b * dz);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, w) in f.up.iter().zip(exact.iter()) {
        num += (a.norm() - w.norm()).powi(2);
        den += w.norm_sqr();
    }
    let rms = (num / den).sqrt();

    // centroid of a Gaussian at (R0, R0) carried through the entry fringe ramp
    let (b0, r0) = (1e-3, 100e-6);
    let ramp = 0.01;
    let filter = MultipoleFilter::quadrupole(b0, r0, 0.05).map_err(e)?.with_fringes(1.0 / ramp).map_err(e)?;
    let g = Grid::new(1024, 512e-6).map_err(e)?;
    let sigma = 5e-6;
    let mut blob = SpinorField::zeros(g);
    blob.up = Array2::from_shape_fn((g.n, g.n), |(i, j)| {
        let (x, y) = (g.coord(j) - r0, g.coord(i) - r0);
        Complex64::new((-(x * x + y * y) / (4.0 * sigma * sigma)).exp(), 0.0)
    });
    let centroid = |f: &SpinorField| {
        let m = raster_moments(&total_intensity(f), &g);
        [m[0], m[1]]
    };
    let before = centroid(&blob);
    let n_slices = 20;
    let h = ramp / n_slices as f64;
    for k in 0..n_slices {
        let (lo, hi) = (k as f64 * h, (k + 1) as f64 * h);
        let si = filter.slice_integrals(&g, lo, hi, bp.velocity).map_err(e)?;
        translate_step(&mut blob, &si.a_x, &si.a_y, si.dz, &bp).map_err(e)?;
    }
    let after = centroid(&blob);
    let shift = (after[0] - before[0]).hypot(after[1] - before[1]);
    let per_axis = (after[0] - before[0]).abs().max((after[1] - before[1]).abs());
    let within = per_axis >= 5e-9 && per_axis <= 20e-9;

    Ok(verdict(
        rms < 1e-3 && within,
        format!(
            "rotation by {:.3} rad over {steps} steps: rms amplitude error {rms:.2e}; fringe displacement at (R0, R0), \
             1 mT, R0 = 0.1 mm: {:.2} nm per axis ({:.2} nm total), accepted 5-20 nm",
            (steps / 2) as f64 * zeta * b * dz,
            per_axis * 1e9,
            shift * 1e9
        ),
    ))
}

fn ray_wave_cross_check() -> Result<Verdict, String> {
    let bp = beam(100.0);
    let grid = Grid::new(1024, 12e-6).map_err(e)?;
    let waist = 2f64.sqrt() * 1e-6;
    let mut ok = true;
    let mut notes = Vec::new();
    for b0 in [17e-3, 35e-3] {
        let filter = MultipoleFilter::quadrupole(b0, 1e-6, 0.04).map_err(e)?;
        let sc = Scenario {
            grid,
            beam: bp,
            ell: 1,
            waist,
            scheme: SliceScheme::for_filter(&filter, 200, 0).map_err(e)?,
            filter,
            options: options(true),
        };
        let exit = sc.run(Spin::Down).map_err(e)?;
        record_norm(&format!("ray cross-check {} mT", b0 * 1e3), &exit);
        let iw = total_intensity(&exit);
        let rays = RaySet::from_lg(&LgParams { ell: 1, waist, spin: Spin::Down }, &bp, 200, 200).map_err(e)?;
        let traced = ray_trace(&filter, &rays, 2000, &grid).map_err(e)?;
        let (mw, mr) = (raster_moments(&iw, &grid), raster_moments(&traced.histogram, &grid));
        let scale = (mw[2] + mw[3]).sqrt();
        let centroid_err = (mw[0] - mr[0]).hypot(mw[1] - mr[1]) / scale;
        let var_err = rel(mr[2], mw[2]).max(rel(mr[3], mw[3]));
        let cov_err = (mr[4] - mw[4]).abs() / (mw[2] * mw[3]).sqrt();
        let fourfold = |a: &[f64]| (1..=a.len()).max_by(|&i, &j| a[i - 1].total_cmp(&a[j - 1])) == Some(4);
        let (aw, ar) = (anisotropy_spectrum(&iw, &grid, 8), anisotropy_spectrum(&traced.histogram, &grid, 8));
        let moments_ok = centroid_err <= 0.05 && var_err <= 0.05 && cov_err <= 0.05;
        let symmetry_ok = fourfold(&aw) && fourfold(&ar);
        ok &= moments_ok && symmetry_ok;
        notes.push(format!(
            "{} mT: centroid {:.2e}, second moments {:.2}% (cov {:.2}%), fourfold wave {:.3}/rays {:.3} ({})",
            b0 * 1e3,
            centroid_err,
            100.0 * var_err,
            100.0 * cov_err,
            aw[3],
            ar[3],
            if symmetry_ok { "fourfold dominant" } else { "fourfold not dominant" }
        ));
    }
    Ok(verdict(ok, notes.join("; ")))
}

fn energy_spread_washout() -> Result<Verdict, String> {
    let filter = MultipoleFilter::quadrupole(0.1e-3, 10e-6, 0.05).map_err(e)?;
    let waist = 10e-6 * 2f64.sqrt();
    let sc = Scenario {
        grid: Grid::new(512, 200e-6).map_err(e)?,
        beam: beam(100.0),
        ell: 1,
        waist,
        scheme: SliceScheme::for_filter(&filter, 20, 0).map_err(e)?,
        filter,
        options: RunOptions::default(),
    };
    let ring = lg_far_field_ring_radius(1, waist);
    let project = |f: &SpinorField| far_field_zoomed(f, 8.0, 96);
    let far_grid = project(&sc.input(Spin::Down).map_err(e)?).map_err(e)?.grid;
    let mut metrics = Vec::new();
    for sigma in [0.1, 0.3, 0.7] {
        let spectrum = EnergySpectrum::gaussian(sc.beam.energy, sigma, 5).map_err(e)?;
        let (flipped, _) = energy_spread_channel(&sc, &spectrum, Spin::Down, project).map_err(e)?;
        metrics.push(separability_metric(&flipped, &far_grid, ring).map_err(e)?);
    }
    let ordered = metrics[0] > metrics[1] && metrics[1] > metrics[2];
    let washed = metrics[2] < SEPARABLE_THRESHOLD;
    Ok(verdict(
        ordered && washed,
        format!(
            "separability at sigma 0.1/0.3/0.7 eV = {:.3}/{:.3}/{:.3}; ordered {ordered}, below {SEPARABLE_THRESHOLD} at 0.7 eV {washed}",
            metrics[0], metrics[1], metrics[2]
        ),
    ))
}

fn fringe_study() -> Result<Verdict, String> {
    let grid = Grid::new(512, 200e-6).map_err(e)?;
    let waist = 10e-6;
    let ring = lg_far_field_ring_radius(1, waist);
    let mut ok = true;
    let mut notes = Vec::new();
    for (b0, ramp) in [(1e-3, 0.03), (0.1e-3, 0.30)] {
        let full = MultipoleFilter::quadrupole(b0, 10e-6, ramp).map_err(e)?.with_fringes(1.0 / ramp).map_err(e)?;
        let mut seps = [0.0; 2];
        for (k, filter) in [full, full.fringes_only().map_err(e)?].into_iter().enumerate() {
            let sc = Scenario {
                grid,
                beam: beam(100.0),
                ell: 1,
                waist,
                scheme: SliceScheme::for_filter(&filter, 20, 10).map_err(e)?,
                filter,
                options: RunOptions::default(),
            };
            let exit = sc.run(Spin::Down).map_err(e)?;
            record_norm(&format!("fringe study {} mT", b0 * 1e3), &exit);
            let far = far_field_zoomed(&exit, 8.0, 96).map_err(e)?;
            seps[k] = separability_metric(&far.intensity(Spin::Up), &far.grid, ring).map_err(e)?;
        }
        ok &= seps[0] > seps[1];
        notes.push(format!("1/a = {} cm, {} mT: full {:.3}, fringe-only {:.3}", ramp * 100.0, b0 * 1e3, seps[0], seps[1]));
    }
    Ok(verdict(ok, notes.join("; ")))
}

fn sampling_boundary() -> Result<Verdict, String> {
    let bp = beam(100.0);
    let grid = Grid::new(256, 25.6e-6).map_err(e)?;
    let r0 = 5e-6;
    let dz = 1e-4;
    let check = |b_dz: f64, dz: f64, g: &Grid| -> Result<bool, String> {
        let filter = MultipoleFilter::quadrupole(b_dz / dz, r0, dz).map_err(e)?.with_offset(1.0).map_err(e)?;
        let scheme = SliceScheme::for_filter(&filter, 1, 0).map_err(e)?;
        Ok(sampling_check(&filter, g, &scheme, &bp, Some(r0)).map_err(e)?.pass)
    };
    let target = 2e-7;
    let below = check(0.99 * target, dz, &grid)?;
    let above = check(1.01 * target, dz, &grid)?;
    let flagged_exactly = below && !above;

    // bisect the boundary the checker actually enforces
    let (mut lo, mut hi): (f64, f64) = (1e-12, 1e-5);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if check(mid, dz, &grid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // monotone in field, slice thickness (at fixed field) and pixel size
    let mut monotone = true;
    let mut prev = true;
    for k in 0..40 {
        let p = check(1e-9 * 1.25f64.powi(k), dz, &grid)?;
        monotone &= prev || !p;
        prev = p;
    }
    prev = true;
    for k in 0..40 {
        let t = 1e-6 * 1.3f64.powi(k);
        let p = check(1e-4 * t, t, &grid)?;
        monotone &= prev || !p;
        prev = p;
    }
    // once a field passes, finer pixels keep it passing
    prev = false;
    for dx_nm in [400.0, 200.0, 100.0, 50.0, 25.0] {
        let g = Grid::new(256, 256.0 * dx_nm * 1e-9).map_err(e)?;
        let p = check(1.5e-8, dz, &g)?;
        monotone &= !prev || p;
        prev = p;
    }
    Ok(verdict(
        flagged_exactly && monotone,
        format!(
            "at dx = 100 nm: B dz = 0.99x2e-7 passes {below}, 1.01x2e-7 passes {above}; enforced boundary {:.4e} T m \
             (flux quantum over dx {:.4e}); monotone {monotone}",
            lo,
            linear_field_limit(&bp, grid.dx)
        ),
    ))
}

fn determinism() -> Result<Verdict, String> {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quick_far_field.toml")).map_err(e)?;
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(e)?;
        let mut cfg = parse_config(&text).map_err(e)?;
        cfg.outputs.directory = dir.path().to_path_buf();
        qwien_cli::run::run(&cfg, &text).map_err(e)?;
        csvs.push(fs::read(dir.path().join("metrics.csv")).map_err(e)?);
    }
    Ok(verdict(csvs[0] == csvs[1] && !csvs[0].is_empty(), format!("two runs, metrics.csv {} bytes each, identical {}", csvs[0].len(), csvs[0] == csvs[1])))
}

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("conversion table", table_conversion),
        ("thin-ring oracle", thin_ring_oracle),
        ("group-velocity displacement", group_velocity),
        ("OAM selection rule", oam_selection),
        ("ray-wave cross-check", ray_wave_cross_check),
        ("energy-spread washout", energy_spread_washout),
        ("fringe study", fringe_study),
        ("sampling boundary", sampling_boundary),
        ("determinism", determinism),
        ("translation rotation and fringe shift", rotation_and_fringe_shift),
        ("unitarity and diffraction", unitarity_and_diffraction),
    ];
    // criterion numbers in report order; unitarity runs last so it sees every pipeline
    let numbers = [1, 2, 3, 4, 7, 8, 9, 10, 11, 6, 5];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut lines = Vec::new();
    let mut errors = 0;
    let mut failures = 0;
    for ((name, run), number) in criteria.iter().zip(numbers) {
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) && f != "acceptance" {
                continue;
            }
        }
        let t = Instant::now();
        let line = match run() {
            Ok(v) => {
                failures += usize::from(!v.pass);
                format!("{} criterion {number:>2} {name}: {} [{:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail, t.elapsed().as_secs_f64())
            }
            Err(msg) => {
                errors += 1;
                format!("FAIL criterion {number:>2} {name}: could not be evaluated: {msg}")
            }
        };
        println!("{line}");
        lines.push((number, line));
    }
    lines.sort_by_key(|l| l.0);
    println!("\nsummary:");
    for (_, l) in &lines {
        println!("  {}", l.split(':').next().unwrap_or(l));
    }
    println!("{} criteria, {} passed, {} failed", lines.len(), lines.len() - failures - errors, failures + errors);
    let strict = std::env::var("QWIEN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errors > 0 || (strict && failures > 0) {
        std::process::exit(1);
    }
}
