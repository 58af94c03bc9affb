//! TOML run configuration: parsing, unit conversion and validation.

use serde::Deserialize;
use std::fmt;
use std::path::PathBuf;
use toml::Spanned;

use qwien::wavefield::Spin;
use qwien::Grid;

use crate::quantity::{to_si, Dimension, RawQuantity};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key, or section name for structural problems.
    pub key: String,
    /// 1-based line of the offending entry, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.message),
            None if self.key.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    NearField,
    FarField,
    FringeOnly,
    RayTrace,
    Sweep,
    CheckOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::NearField => "near_field",
            Mode::FarField => "far_field",
            Mode::FringeOnly => "fringe_only",
            Mode::RayTrace => "ray_trace",
            Mode::Sweep => "sweep",
            Mode::CheckOnly => "check_only",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "near_field" => Mode::NearField,
            "far_field" => Mode::FarField,
            "fringe_only" => Mode::FringeOnly,
            "ray_trace" => Mode::RayTrace,
            "sweep" => Mode::Sweep,
            "check_only" => Mode::CheckOnly,
            _ => return None,
        })
    }
}

/// How the beam size was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamSize {
    /// LG waist `w` (m).
    Waist(f64),
    /// Radius of maximum intensity `w sqrt(|l| / 2)` (m).
    RingRadius(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub energy_ev: f64,
    pub size: BeamSize,
    pub ell: i32,
    pub spins: Vec<Spin>,
}

impl BeamConfig {
    /// LG waist in metres. For `l = 0` the ring radius is taken to be the waist.
    pub fn waist(&self) -> f64 {
        match self.size {
            BeamSize::Waist(w) => w,
            BeamSize::RingRadius(r) if self.ell == 0 => r,
            BeamSize::RingRadius(r) => r / (self.ell.unsigned_abs() as f64 / 2.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub q: i32,
    pub beta: f64,
    pub field: f64,
    pub reference_radius: f64,
    pub length: f64,
    /// `1/a` (m), absent for hard edges.
    pub fringe_length: Option<f64>,
    pub relativistic_correction: bool,
    pub fringe_translation: bool,
    pub compensation_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceConfig {
    pub count: usize,
    pub fringe_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub sigma_ev: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub metrics: bool,
    pub images: bool,
    pub dumps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Formats,
    /// Far-field sampling refinement; 1 uses the plain FFT.
    pub far_field_zoom: f64,
    /// Far-field window size when zoomed.
    pub far_field_window: usize,
    /// Aperture radii as multiples of the l = 1 far-field ring radius.
    pub apertures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub fields: Vec<f64>,
    pub energies_ev: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayConfig {
    pub radial: usize,
    pub azimuthal: usize,
    pub steps: usize,
    pub compare_wave: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub override_sampling: bool,
    pub beam: BeamConfig,
    pub filter: FilterConfig,
    pub grid: Grid,
    pub slices: SliceConfig,
    pub spectrum: Option<SpectrumConfig>,
    pub outputs: OutputConfig,
    pub sweep: Option<SweepConfig>,
    pub rays: RayConfig,
}

// ---------------------------------------------------------------------------------------
// Raw file layout

type Q = Spanned<RawQuantity>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: Option<Spanned<RawRun>>,
    beam: Option<Spanned<RawBeam>>,
    filter: Option<Spanned<RawFilter>>,
    grid: Option<Spanned<RawGrid>>,
    slices: Option<Spanned<RawSlices>>,
    spectrum: Option<Spanned<RawSpectrum>>,
    outputs: Option<Spanned<RawOutputs>>,
    sweep: Option<Spanned<RawSweep>>,
    rays: Option<Spanned<RawRays>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<Spanned<String>>,
    override_sampling: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeam {
    energy: Q,
    waist: Option<Q>,
    ring_radius: Option<Q>,
    ell: Option<Spanned<i64>>,
    spin: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    q: Option<Spanned<i64>>,
    beta: Option<Q>,
    field: Q,
    reference_radius: Q,
    length: Q,
    fringe_length: Option<Q>,
    relativistic_correction: Option<bool>,
    fringe_translation: Option<bool>,
    compensation_offset: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Spanned<i64>,
    extent: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlices {
    count: Spanned<i64>,
    fringe_count: Option<Spanned<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    sigma: Q,
    samples: Option<Spanned<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<String>,
    formats: Option<Spanned<Vec<String>>>,
    far_field_zoom: Option<Spanned<f64>>,
    far_field_window: Option<Spanned<i64>>,
    apertures: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    fields: Spanned<Vec<RawQuantity>>,
    energies: Spanned<Vec<RawQuantity>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRays {
    radial: Option<Spanned<i64>>,
    azimuthal: Option<Spanned<i64>>,
    steps: Option<Spanned<i64>>,
    compare_wave: Option<bool>,
}

// ---------------------------------------------------------------------------------------
// Conversion

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, key: &str, span: std::ops::Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError { key: key.to_string(), line: Some(self.line(span.start)), message: message.into() })
    }

    fn quantity(&self, key: &str, q: &Q, dim: Dimension, unit: &str) -> Result<f64, ConfigError> {
        match to_si(q.get_ref(), dim, unit) {
            Ok(v) => Ok(v),
            Err(m) => self.err(key, q.span(), m),
        }
    }

    fn positive(&self, key: &str, q: &Q, dim: Dimension, unit: &str) -> Result<f64, ConfigError> {
        let v = self.quantity(key, q, dim, unit)?;
        if v > 0.0 {
            Ok(v)
        } else {
            self.err(key, q.span(), format!("must be positive, got {v:e}"))
        }
    }

    fn count(&self, key: &str, v: &Spanned<i64>, min: i64) -> Result<usize, ConfigError> {
        let x = *v.get_ref();
        if x < min {
            return self.err(key, v.span(), format!("must be at least {min}, got {x}"));
        }
        Ok(x as usize)
    }
}

fn missing(section: &str) -> ConfigError {
    ConfigError { key: String::new(), line: None, message: format!("missing section: {section}") }
}

/// Parses and validates a configuration file's text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let ctx = Ctx { text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| ctx.line(s.start));
        ConfigError { key: "toml".into(), line, message: e.message().trim().to_string() }
    })?;

    let beam_raw = raw.beam.ok_or_else(|| missing("beam"))?;
    let filter_raw = raw.filter.ok_or_else(|| missing("filter"))?;
    let grid_raw = raw.grid.ok_or_else(|| missing("grid"))?;
    let slices_raw = raw.slices.ok_or_else(|| missing("slices"))?;

    let (mode, override_sampling) = match &raw.run {
        None => (Mode::FarField, false),
        Some(r) => {
            let r = r.get_ref();
            let mode = match &r.mode {
                None => Mode::FarField,
                Some(m) => match Mode::parse(m.get_ref()) {
                    Some(mode) => mode,
                    None => {
                        return ctx.err(
                            "run.mode",
                            m.span(),
                            format!(
                                "unknown mode \"{}\" (expected near_field, far_field, fringe_only, ray_trace, sweep or check_only)",
                                m.get_ref()
                            ),
                        )
                    }
                },
            };
            (mode, r.override_sampling.unwrap_or(false))
        }
    };

    // beam
    let b = beam_raw.get_ref();
    let energy_ev = ctx.positive("beam.energy", &b.energy, Dimension::Energy, "keV")?;
    let size = match (&b.waist, &b.ring_radius) {
        (Some(w), None) => BeamSize::Waist(ctx.positive("beam.waist", w, Dimension::Length, "um")?),
        (None, Some(r)) => BeamSize::RingRadius(ctx.positive("beam.ring_radius", r, Dimension::Length, "um")?),
        (Some(_), Some(r)) => return ctx.err("beam.ring_radius", r.span(), "give either waist or ring_radius, not both"),
        (None, None) => return ctx.err("beam", beam_raw.span(), "missing beam size: set waist or ring_radius"),
    };
    let ell = match &b.ell {
        None => 1,
        Some(l) => match i32::try_from(*l.get_ref()) {
            Ok(v) if v.abs() <= 64 => v,
            _ => return ctx.err("beam.ell", l.span(), format!("OAM index {} out of range", l.get_ref())),
        },
    };
    let spins = match b.spin.as_ref().map(|s| (s.get_ref().as_str(), s.span())) {
        None | Some(("both", _)) => vec![Spin::Up, Spin::Down],
        Some(("up", _)) => vec![Spin::Up],
        Some(("down", _)) => vec![Spin::Down],
        Some((other, span)) => return ctx.err("beam.spin", span, format!("unknown spin \"{other}\" (expected up, down or both)")),
    };
    let beam = BeamConfig { energy_ev, size, ell, spins };

    // filter
    let f = filter_raw.get_ref();
    let q = match &f.q {
        None => -1,
        Some(q) if *q.get_ref() < 0 && *q.get_ref() >= -8 => *q.get_ref() as i32,
        Some(q) => return ctx.err("filter.q", q.span(), format!("topological charge must be in -8..=-1, got {}", q.get_ref())),
    };
    let beta = match &f.beta {
        None => std::f64::consts::FRAC_PI_2,
        Some(v) => ctx.quantity("filter.beta", v, Dimension::Angle, "deg")?,
    };
    let field = ctx.positive("filter.field", &f.field, Dimension::Field, "mT")?;
    let reference_radius = ctx.positive("filter.reference_radius", &f.reference_radius, Dimension::Length, "um")?;
    let length = ctx.positive("filter.length", &f.length, Dimension::Length, "cm")?;
    let fringe_length = match &f.fringe_length {
        None => None,
        Some(v) => {
            let l = ctx.positive("filter.fringe_length", v, Dimension::Length, "cm")?;
            if q != -1 {
                return ctx.err("filter.fringe_length", v.span(), "fringe fields are modelled for the quadrupole (q = -1) only");
            }
            Some(l)
        }
    };
    let compensation_offset = match &f.compensation_offset {
        None => 0.0,
        Some(o) if o.get_ref().is_finite() && o.get_ref().abs() < 1.0 => *o.get_ref(),
        Some(o) => return ctx.err("filter.compensation_offset", o.span(), "must be finite with magnitude below 1"),
    };
    let filter = FilterConfig {
        q,
        beta,
        field,
        reference_radius,
        length,
        fringe_length,
        relativistic_correction: f.relativistic_correction.unwrap_or(true),
        fringe_translation: f.fringe_translation.unwrap_or(true),
        compensation_offset,
    };

    // grid
    let g = grid_raw.get_ref();
    let n_raw = *g.n.get_ref();
    if n_raw < 1 {
        return ctx.err("grid.n", g.n.span(), format!("must be positive, got {n_raw}"));
    }
    let extent = ctx.positive("grid.extent", &g.extent, Dimension::Length, "um")?;
    let grid = match Grid::new(n_raw as usize, extent) {
        Ok(grid) => grid,
        Err(qwien::Error::InvalidParameter { name: "n", reason }) => return ctx.err("grid.n", g.n.span(), reason),
        Err(e) => return ctx.err("grid", grid_raw.span(), e.to_string()),
    };

    // slices
    let s = slices_raw.get_ref();
    let count = ctx.count("slices.count", &s.count, 1)?;
    let fringe_count = match &s.fringe_count {
        None => 10,
        Some(c) => ctx.count("slices.fringe_count", c, 1)?,
    };
    let slices = SliceConfig { count, fringe_count };

    let spectrum = match &raw.spectrum {
        None => None,
        Some(sp) => {
            let sp = sp.get_ref();
            let sigma_ev = ctx.quantity("spectrum.sigma", &sp.sigma, Dimension::Energy, "eV")?;
            if sigma_ev < 0.0 {
                return ctx.err("spectrum.sigma", sp.sigma.span(), "must not be negative");
            }
            let samples = match &sp.samples {
                None => 5,
                Some(n) => {
                    let v = ctx.count("spectrum.samples", n, 3)?;
                    if v % 2 == 0 {
                        return ctx.err("spectrum.samples", n.span(), format!("must be odd, got {v}"));
                    }
                    v
                }
            };
            Some(SpectrumConfig { sigma_ev, samples })
        }
    };

    let outputs = match &raw.outputs {
        None => OutputConfig {
            directory: PathBuf::from("qwien-out"),
            formats: Formats { metrics: true, images: true, dumps: true },
            far_field_zoom: 1.0,
            far_field_window: grid.n,
            apertures: default_apertures(),
        },
        Some(o) => {
            let o = o.get_ref();
            let formats = match &o.formats {
                None => Formats { metrics: true, images: true, dumps: true },
                Some(list) => {
                    let mut f = Formats { metrics: false, images: false, dumps: false };
                    for name in list.get_ref() {
                        match name.as_str() {
                            "metrics" => f.metrics = true,
                            "images" => f.images = true,
                            "dumps" => f.dumps = true,
                            other => {
                                return ctx.err(
                                    "outputs.formats",
                                    list.span(),
                                    format!("unknown format \"{other}\" (expected metrics, images or dumps)"),
                                )
                            }
                        }
                    }
                    f
                }
            };
            let far_field_zoom = match &o.far_field_zoom {
                None => 1.0,
                Some(z) if *z.get_ref() >= 1.0 && z.get_ref().is_finite() => *z.get_ref(),
                Some(z) => return ctx.err("outputs.far_field_zoom", z.span(), "must be at least 1"),
            };
            let far_field_window = match &o.far_field_window {
                None if far_field_zoom == 1.0 => grid.n,
                None => 128,
                Some(w) => {
                    let v = ctx.count("outputs.far_field_window", w, 2)?;
                    if v % 2 != 0 {
                        return ctx.err("outputs.far_field_window", w.span(), format!("must be even, got {v}"));
                    }
                    v
                }
            };
            let apertures = match &o.apertures {
                None => default_apertures(),
                Some(a) if a.get_ref().iter().all(|v| v.is_finite() && *v > 0.0) => a.get_ref().clone(),
                Some(a) => return ctx.err("outputs.apertures", a.span(), "aperture radii must be positive"),
            };
            OutputConfig {
                directory: PathBuf::from(o.directory.clone().unwrap_or_else(|| "qwien-out".into())),
                formats,
                far_field_zoom,
                far_field_window,
                apertures,
            }
        }
    };

    let sweep = match &raw.sweep {
        None => None,
        Some(sw) => {
            let sw = sw.get_ref();
            let mut fields = Vec::new();
            for q in sw.fields.get_ref() {
                match to_si(q, Dimension::Field, "mT") {
                    Ok(v) if v > 0.0 => fields.push(v),
                    Ok(v) => return ctx.err("sweep.fields", sw.fields.span(), format!("fields must be positive, got {v:e}")),
                    Err(m) => return ctx.err("sweep.fields", sw.fields.span(), m),
                }
            }
            let mut energies_ev = Vec::new();
            for q in sw.energies.get_ref() {
                match to_si(q, Dimension::Energy, "keV") {
                    Ok(v) if v > 0.0 => energies_ev.push(v),
                    Ok(v) => return ctx.err("sweep.energies", sw.energies.span(), format!("energies must be positive, got {v:e}")),
                    Err(m) => return ctx.err("sweep.energies", sw.energies.span(), m),
                }
            }
            if fields.is_empty() || energies_ev.is_empty() {
                return ctx.err("sweep", sw.fields.span(), "sweep needs at least one field and one energy");
            }
            Some(SweepConfig { fields, energies_ev })
        }
    };

    let rays = match &raw.rays {
        None => RayConfig { radial: 200, azimuthal: 200, steps: qwien::analysis::DEFAULT_RAY_STEPS, compare_wave: true },
        Some(r) => {
            let r = r.get_ref();
            RayConfig {
                radial: r.radial.as_ref().map_or(Ok(200), |v| ctx.count("rays.radial", v, 1))?,
                azimuthal: r.azimuthal.as_ref().map_or(Ok(200), |v| ctx.count("rays.azimuthal", v, 1))?,
                steps: r.steps.as_ref().map_or(Ok(qwien::analysis::DEFAULT_RAY_STEPS), |v| ctx.count("rays.steps", v, 1))?,
                compare_wave: r.compare_wave.unwrap_or(true),
            }
        }
    };

    // mode-specific requirements
    match mode {
        Mode::Sweep if sweep.is_none() => return Err(missing("sweep")),
        Mode::FringeOnly if filter.fringe_length.is_none() => {
            return ctx.err("filter.fringe_length", filter_raw.span(), "fringe_only mode needs a fringe_length")
        }
        _ => {}
    }

    Ok(RunConfig { mode, override_sampling, beam, filter, grid, slices, spectrum, outputs, sweep, rays })
}

fn default_apertures() -> Vec<f64> {
    vec![0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]
}
