//! Executes a configured run and writes its output bundle.

use ndarray::Array2;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use qwien::analysis::{
    anisotropy_spectrum, aperture_polarization, conversion_fraction, energy_spread_channel, lg_far_field_ring_radius,
    probe_radius, ray_trace, raster_moments, sampling_check, separability_metric, total_intensity, EnergySpectrum,
    FarFieldChannels, RaySet, SamplingCriterion, SamplingReport, Scenario, SEPARABLE_THRESHOLD,
};
use qwien::wavefield::{azimuthal_spectrum, make_lg_beam, total_norm, LgParams, Spin, SpinorField};
use qwien::{
    beam_params, far_field, far_field_zoomed, run_multislice, BeamParams, MultipoleFilter, PhysicalConstants, RunOptions,
    SliceScheme,
};

use crate::config::{Mode, RunConfig};
use crate::output::{intensity_image, metrics_csv, phase_image, write_pgm16, write_spsl, MetricRow};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Simulation(#[from] qwien::Error),

    #[error("sampling check failed; rerun with --override-sampling to proceed anyway\n{report}")]
    SamplingRefused { report: String },

    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Files and metrics produced by one run.
#[derive(Debug, Clone)]
pub struct OutputBundle {
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
    pub rows: Vec<MetricRow>,
    /// Human-readable overview printed by the command-line tool.
    pub summary: String,
    /// False when `check_only` found a violation.
    pub sampling_pass: bool,
}

const OAM_ROWS: i32 = 8;

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn io<T>(&self, path: &Path, r: std::io::Result<T>) -> Result<T, RunError> {
        r.map_err(|source| RunError::Io { path: path.to_path_buf(), source })
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let p = self.path(name);
        self.io(&p, fs::write(&p, text))?;
        self.files.push(p);
        Ok(())
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<fs::File>), RunError> {
        let p = self.path(name);
        let f = self.io(&p, fs::File::create(&p))?;
        self.files.push(p.clone());
        Ok((p, BufWriter::new(f)))
    }

    fn pgm(&mut self, name: &str, px: &Array2<u16>) -> Result<(), RunError> {
        let (p, w) = self.create(name)?;
        self.io(&p, write_pgm16(w, px))
    }

    fn dump(&mut self, name: &str, field: &SpinorField) -> Result<(), RunError> {
        let (p, w) = self.create(name)?;
        self.io(&p, write_spsl(w, field))
    }
}

pub fn beam_for(energy_ev: f64) -> Result<BeamParams, RunError> {
    let consts = PhysicalConstants::CODATA_2018;
    Ok(beam_params(&consts, energy_ev * consts.elementary_charge)?)
}

pub fn filter_for(cfg: &RunConfig, field: f64) -> Result<MultipoleFilter, RunError> {
    let f = &cfg.filter;
    let mut filter = MultipoleFilter::new(f.q, f.beta, field, f.reference_radius, f.length)?;
    if let Some(l) = f.fringe_length {
        filter = filter.with_fringes(1.0 / l)?;
    }
    if f.compensation_offset != 0.0 {
        filter = filter.with_offset(f.compensation_offset)?;
    }
    if cfg.mode == Mode::FringeOnly {
        filter = filter.fringes_only()?;
    }
    Ok(filter)
}

/// The simulated set-up for a given beam energy and field strength.
pub fn scenario_for(cfg: &RunConfig, energy_ev: f64, field: f64) -> Result<Scenario, RunError> {
    let filter = filter_for(cfg, field)?;
    Ok(Scenario {
        grid: cfg.grid,
        beam: beam_for(energy_ev)?,
        ell: cfg.beam.ell,
        waist: cfg.beam.waist(),
        scheme: SliceScheme::for_filter(&filter, cfg.slices.count, cfg.slices.fringe_count)?,
        filter,
        options: RunOptions {
            relativistic_correction: cfg.filter.relativistic_correction,
            override_sampling: true,
            fringe_translation: cfg.filter.fringe_translation,
        },
    })
}

fn check(sc: &Scenario) -> Result<SamplingReport, RunError> {
    let input = sc.input(Spin::Up)?;
    Ok(sampling_check(&sc.filter, &sc.grid, &sc.scheme, &sc.beam, Some(probe_radius(&input)))?)
}

fn report_text(r: &SamplingReport) -> String {
    format!(
        "sampling: linear step {:.4} rad, quadratic step {:.4} rad, binding {}, margin {:.3} ({})",
        r.linear_phase_step,
        r.quadratic_phase_step,
        r.binding.name(),
        r.margin,
        if r.pass { "pass" } else { "FAIL" }
    )
}

fn sampling_rows(r: &SamplingReport, beam: &BeamParams, dx: f64) -> Vec<MetricRow> {
    vec![
        MetricRow::summary("sampling", "linear_phase_step", r.linear_phase_step),
        MetricRow::summary("sampling", "quadratic_phase_step", r.quadratic_phase_step),
        MetricRow::summary("sampling", "margin", r.margin),
        MetricRow::summary("sampling", "pass", if r.pass { 1.0 } else { 0.0 }),
        MetricRow::summary("sampling", "binding_quadratic", if r.binding == SamplingCriterion::Quadratic { 1.0 } else { 0.0 }),
        MetricRow::summary("sampling", "linear_field_limit", qwien::analysis::linear_field_limit(beam, dx)),
    ]
}

/// Runs the configured mode and writes every output into the configured directory.
/// `source` is the configuration text, echoed into the provenance record.
pub fn run(cfg: &RunConfig, source: &str) -> Result<OutputBundle, RunError> {
    let dir = cfg.outputs.directory.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let mut w = Writer { dir: dir.clone(), files: Vec::new() };
    let mut rows = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "mode {}", cfg.mode.name());

    let sc = scenario_for(cfg, cfg.beam.energy_ev, cfg.filter.field)?;
    let mut sampling_pass = true;
    if cfg.mode != Mode::RayTrace && cfg.mode != Mode::Sweep {
        let report = check(&sc)?;
        rows.extend(sampling_rows(&report, &sc.beam, sc.grid.dx));
        let _ = writeln!(summary, "{}", report_text(&report));
        sampling_pass = report.pass;
        if !report.pass && !cfg.override_sampling && cfg.mode != Mode::CheckOnly {
            return Err(RunError::SamplingRefused { report: report_text(&report) });
        }
    }

    match cfg.mode {
        Mode::CheckOnly => {}
        Mode::NearField | Mode::FarField | Mode::FringeOnly => {
            wave_modes(cfg, &sc, &mut w, &mut rows, &mut summary)?;
        }
        Mode::RayTrace => ray_mode(cfg, &sc, &mut w, &mut rows, &mut summary)?,
        Mode::Sweep => sweep_mode(cfg, &mut w, &mut rows, &mut summary)?,
    }

    if cfg.outputs.formats.metrics {
        w.text("metrics.csv", &metrics_csv(&rows))?;
    }
    w.text("provenance.txt", &provenance(cfg, source))?;
    Ok(OutputBundle { directory: dir, files: w.files, rows, summary, sampling_pass })
}

fn wave_modes(
    cfg: &RunConfig,
    sc: &Scenario,
    w: &mut Writer,
    rows: &mut Vec<MetricRow>,
    summary: &mut String,
) -> Result<(), RunError> {
    let far_mode = cfg.mode != Mode::NearField;
    let ring = lg_far_field_ring_radius(sc.ell.max(1), sc.waist);
    let zoom = cfg.outputs.far_field_zoom;
    let project = |f: &SpinorField| {
        if zoom == 1.0 {
            far_field(f)
        } else {
            far_field_zoomed(f, zoom, cfg.outputs.far_field_window)
        }
    };
    let mut fars: Vec<(Spin, SpinorField)> = Vec::new();
    for &spin in &cfg.beam.spins {
        let input = make_lg_beam(&sc.grid, &LgParams { ell: sc.ell, waist: sc.waist, spin })?;
        let exit = run_multislice(&input, &sc.filter, &sc.scheme, &sc.beam, &sc.options)?;
        let norm = total_norm(&exit);
        let rep = conversion_fraction(&exit, spin, ring.min(0.5 * sc.grid.n as f64 * sc.grid.dk()))?;
        rows.push(MetricRow::channel("conversion", spin, None, "flipped_fraction", rep.flipped_fraction));
        rows.push(MetricRow::channel("conversion", spin, None, "unflipped_fraction", rep.unflipped_fraction));
        rows.push(MetricRow::channel("conversion", spin, None, "norm_error", norm - 1.0));
        for out in [Spin::Up, Spin::Down] {
            let spec = azimuthal_spectrum(&exit, out, sc.grid.n / 2)?;
            for m in -OAM_ROWS..=OAM_ROWS {
                rows.push(MetricRow::oam(spin, out, m, spec.power(m)));
            }
        }
        let flipped_spec = azimuthal_spectrum(&exit, spin.flipped(), sc.grid.n / 2)?;
        let _ = writeln!(
            summary,
            "input {}: flipped fraction {:.4e}, flipped channel dominant m = {} ({:.2}%)",
            spin.name(),
            rep.flipped_fraction,
            flipped_spec.dominant(),
            100.0 * flipped_spec.fraction(flipped_spec.dominant())
        );
        if cfg.outputs.formats.dumps {
            w.dump(&format!("exit_{}.spsl", spin.name()), &exit)?;
        }
        if cfg.outputs.formats.images {
            for out in [Spin::Up, Spin::Down] {
                let tag = format!("near_{}_{}", spin.name(), out.name());
                let (px, max) = intensity_image(&exit.intensity(out));
                w.pgm(&format!("{tag}_intensity.pgm"), &px)?;
                w.pgm(&format!("{tag}_phase.pgm"), &phase_image(exit.component(out)))?;
                rows.push(MetricRow::channel("image", spin, Some(out), &format!("{tag}_intensity_max"), max));
            }
        }
        if far_mode {
            let far = project(&exit)?;
            let flipped = far.intensity(spin.flipped());
            let sep = separability_metric(&flipped, &far.grid, ring)?;
            rows.push(MetricRow::channel("separability", spin, Some(spin.flipped()), "metric", sep));
            let _ = writeln!(
                summary,
                "input {}: flipped-channel separability {:.3} ({})",
                spin.name(),
                sep,
                if sep >= SEPARABLE_THRESHOLD { "separable" } else { "not separable" }
            );
            if cfg.outputs.formats.images {
                for out in [Spin::Up, Spin::Down] {
                    let tag = format!("far_{}_{}", spin.name(), out.name());
                    let (px, max) = intensity_image(&far.intensity(out));
                    w.pgm(&format!("{tag}_intensity.pgm"), &px)?;
                    rows.push(MetricRow::channel("image", spin, Some(out), &format!("{tag}_intensity_max"), max));
                }
            }
            if cfg.outputs.formats.dumps {
                w.dump(&format!("far_{}.spsl", spin.name()), &far)?;
            }
            fars.push((spin, far));
        }
    }

    if far_mode && fars.len() == 2 {
        let (from_up, from_down) = (&fars[0].1, &fars[1].1);
        let ch = FarFieldChannels::from_fields(from_up, from_down)?;
        let half = 0.5 * ch.grid.n as f64 * ch.grid.dk();
        let radii: Vec<(f64, f64)> =
            cfg.outputs.apertures.iter().map(|&k| (k, k * ring)).filter(|&(_, r)| r <= half).collect();
        let pts = aperture_polarization(&ch, &radii.iter().map(|r| r.1).collect::<Vec<_>>())?;
        for ((mult, _), p) in radii.iter().zip(&pts) {
            rows.push(MetricRow::summary("aperture", &format!("r{mult}_polarization_degree"), p.polarization_degree));
            rows.push(MetricRow::summary("aperture", &format!("r{mult}_throughput"), p.throughput));
        }
    }

    if let (true, Some(spec)) = (far_mode, cfg.spectrum) {
        if spec.sigma_ev > 0.0 {
            let spectrum = EnergySpectrum::gaussian(sc.beam.energy, spec.sigma_ev, spec.samples)?;
            for &spin in &cfg.beam.spins {
                let (up, down) = energy_spread_channel(sc, &spectrum, spin, project)?;
                let flipped = if spin == Spin::Up { &down } else { &up };
                let far_grid = project(&sc.input(spin)?)?.grid;
                let sep = separability_metric(flipped, &far_grid, ring)?;
                rows.push(MetricRow::channel("energy_spread", spin, Some(spin.flipped()), "separability", sep));
                let _ = writeln!(summary, "input {}: energy-averaged separability {:.3} (sigma {} eV)", spin.name(), sep, spec.sigma_ev);
                if cfg.outputs.formats.images {
                    for (out, img) in [(Spin::Up, &up), (Spin::Down, &down)] {
                        let tag = format!("spread_{}_{}", spin.name(), out.name());
                        let (px, max) = intensity_image(img);
                        w.pgm(&format!("{tag}_intensity.pgm"), &px)?;
                        rows.push(MetricRow::channel("image", spin, Some(out), &format!("{tag}_intensity_max"), max));
                    }
                }
            }
        }
    }
    Ok(())
}

fn moment_rows(kind: &str, img: &Array2<f64>, grid: &qwien::Grid, rows: &mut Vec<MetricRow>) -> ([f64; 5], Vec<f64>) {
    let m = raster_moments(img, grid);
    for (k, v) in ["mean_x", "mean_y", "var_x", "var_y", "cov_xy"].iter().zip(m) {
        rows.push(MetricRow::summary(kind, k, v));
    }
    let a = anisotropy_spectrum(img, grid, 8);
    for (i, v) in a.iter().enumerate() {
        rows.push(MetricRow { kind: kind.into(), input_spin: None, output_spin: None, m: Some(i as i32 + 1), key: "anisotropy".into(), value: *v });
    }
    (m, a)
}

fn ray_mode(
    cfg: &RunConfig,
    sc: &Scenario,
    w: &mut Writer,
    rows: &mut Vec<MetricRow>,
    summary: &mut String,
) -> Result<(), RunError> {
    let params = LgParams { ell: sc.ell, waist: sc.waist, spin: cfg.beam.spins[0] };
    let rays = RaySet::from_lg(&params, &sc.beam, cfg.rays.radial, cfg.rays.azimuthal)?;
    let traced = ray_trace(&sc.filter, &rays, cfg.rays.steps, &sc.grid)?;
    rows.push(MetricRow::summary("rays", "count", rays.len() as f64));
    rows.push(MetricRow::summary("rays", "dropped", traced.dropped as f64));
    let (mr, ar) = moment_rows("rays", &traced.histogram, &sc.grid, rows);
    let dominant = |a: &[f64]| a.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i + 1, v) } else { b }).0;
    let _ = writeln!(
        summary,
        "rays: {} traced, {} dropped, <x^2> {:.4e} m^2, dominant anisotropy m = {}",
        rays.len(),
        traced.dropped,
        mr[2],
        dominant(&ar)
    );
    if cfg.outputs.formats.images {
        w.pgm("rays_histogram.pgm", &intensity_image(&traced.histogram).0)?;
    }
    if cfg.rays.compare_wave {
        let report = check(sc)?;
        rows.extend(sampling_rows(&report, &sc.beam, sc.grid.dx));
        if !report.pass && !cfg.override_sampling {
            return Err(RunError::SamplingRefused { report: report_text(&report) });
        }
        let exit = run_multislice(&sc.input(params.spin)?, &sc.filter, &sc.scheme, &sc.beam, &sc.options)?;
        let img = total_intensity(&exit);
        let (mw, aw) = moment_rows("wave", &img, &sc.grid, rows);
        for (k, i) in [("var_x", 2), ("var_y", 3)] {
            rows.push(MetricRow::summary("comparison", &format!("{k}_relative_difference"), mr[i] / mw[i] - 1.0));
        }
        let _ = writeln!(summary, "wave: <x^2> {:.4e} m^2, dominant anisotropy m = {}", mw[2], dominant(&aw));
        if cfg.outputs.formats.images {
            w.pgm("wave_intensity.pgm", &intensity_image(&img).0)?;
        }
    }
    Ok(())
}

fn sweep_mode(cfg: &RunConfig, w: &mut Writer, rows: &mut Vec<MetricRow>, summary: &mut String) -> Result<(), RunError> {
    let sweep = cfg.sweep.as_ref().expect("validated sweep section");
    let spin = if cfg.beam.spins.contains(&Spin::Down) { Spin::Down } else { Spin::Up };
    let mut csv = String::from("energy_kev,field_mt,relativistic_correction,sampling_margin,sampling_pass,flipped_fraction,norm_error\n");
    for &energy in &sweep.energies_ev {
        for &field in &sweep.fields {
            for rel in [false, true] {
                let mut sc = scenario_for(cfg, energy, field)?;
                sc.options.relativistic_correction = rel;
                let report = check(&sc)?;
                let (flipped, norm_err) = if report.pass || cfg.override_sampling {
                    let exit = sc.run(spin)?;
                    let (u, d) = exit.norms();
                    (if spin == Spin::Down { u } else { d }, u + d - 1.0)
                } else {
                    (f64::NAN, f64::NAN)
                };
                let _ = writeln!(
                    csv,
                    "{:.6e},{:.6e},{},{:.6e},{},{:.12e},{:.3e}",
                    energy / 1e3,
                    field * 1e3,
                    rel,
                    report.margin,
                    report.pass,
                    flipped,
                    norm_err
                );
                let tag = format!("{}keV_{}mT_{}", energy / 1e3, field * 1e3, if rel { "rel" } else { "nonrel" });
                rows.push(MetricRow::summary("sweep", &format!("{tag}_flipped_fraction"), flipped));
                rows.push(MetricRow::summary("sweep", &format!("{tag}_sampling_margin"), report.margin));
                let _ = writeln!(
                    summary,
                    "{:>6} keV {:>7} mT correction {:<5}: flipped {:.4e} (margin {:.3}{})",
                    energy / 1e3,
                    field * 1e3,
                    if rel { "on" } else { "off" },
                    flipped,
                    report.margin,
                    if report.pass { "" } else { ", sampling violated" }
                );
            }
        }
    }
    w.text("sweep.csv", &csv)
}

fn provenance(cfg: &RunConfig, source: &str) -> String {
    let c = PhysicalConstants::CODATA_2018;
    let mut s = String::new();
    let _ = writeln!(s, "qwien {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "mode: {}", cfg.mode.name());
    let _ = writeln!(s, "constants (CODATA 2018, g = {}):", c.g_factor);
    let _ = writeln!(s, "  hbar = {:e} J s", c.hbar);
    let _ = writeln!(s, "  electron_mass = {:e} kg", c.electron_mass);
    let _ = writeln!(s, "  elementary_charge = {:e} C", c.elementary_charge);
    let _ = writeln!(s, "  speed_of_light = {:e} m/s", c.speed_of_light);
    let _ = writeln!(s, "  bohr_magneton = {:e} J/T", c.bohr_magneton);
    let _ = writeln!(s, "resolved configuration:\n{cfg:#?}");
    let _ = writeln!(s, "configuration text:\n{source}");
    s
}

