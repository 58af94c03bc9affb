//! Diagnostics and post-processing: sampling limits, conversion and polarisation metrics,
//! energy-spread averaging, separability, and a classical ray-tracing cross-check.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{invalid, require_positive, Error, Result};
use crate::fields::{MultipoleFilter, Region};
use crate::kinematics::{beam_params, BeamParams};
use crate::propagation::{far_field, far_field_zoomed, run_multislice, RunOptions, SliceScheme};
use crate::wavefield::{azimuthal_spectrum, make_lg_beam, mixed_state_average, Grid, LgParams, Space, Spin, SpinorField};

// ---------------------------------------------------------------------------------------
// Sampling limits

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingCriterion {
    /// Uncompensated part of the `A_z` / `V_E` phase.
    Linear,
    /// The `A_z^2` phase that survives compensation.
    Quadratic,
}

impl SamplingCriterion {
    pub fn name(self) -> &'static str {
        match self {
            SamplingCriterion::Linear => "linear potential phase",
            SamplingCriterion::Quadratic => "quadratic potential phase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingReport {
    /// Worst inter-pixel phase step of the linear term over all slices (rad).
    pub linear_phase_step: f64,
    /// Worst inter-pixel phase step of the quadratic term over all slices (rad).
    pub quadratic_phase_step: f64,
    pub binding: SamplingCriterion,
    /// `pi / worst step`; infinite when no field acts.
    pub margin: f64,
    pub pass: bool,
    /// Index of the slice holding the binding step.
    pub worst_slice: usize,
}

impl SamplingReport {
    pub fn worst_phase_step(&self) -> f64 {
        self.linear_phase_step.max(self.quadratic_phase_step)
    }
}

/// Largest difference between horizontally or vertically adjacent samples; NaN marks
/// samples to skip.
fn max_neighbour_step(a: &Array2<f64>) -> f64 {
    let (r, c) = a.dim();
    let mut m = 0.0f64;
    for i in 0..r {
        for j in 0..c {
            let v = a[[i, j]];
            if v.is_nan() {
                continue;
            }
            if j + 1 < c && !a[[i, j + 1]].is_nan() {
                m = m.max((a[[i, j + 1]] - v).abs());
            }
            if i + 1 < r && !a[[i + 1, j]].is_nan() {
                m = m.max((a[[i + 1, j]] - v).abs());
            }
        }
    }
    m
}

/// Relative intensity that delimits the probe for sampling purposes.
pub const PROBE_INTENSITY_FLOOR: f64 = 1e-6;

/// Radius of the smallest centred disc holding every pixel brighter than
/// `PROBE_INTENSITY_FLOOR` times the peak intensity.
pub fn probe_radius(field: &SpinorField) -> f64 {
    let g = field.grid;
    let intensity = total_intensity(field);
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    let mut r2 = 0.0f64;
    for ((i, j), &v) in intensity.indexed_iter() {
        if v >= PROBE_INTENSITY_FLOOR * peak {
            let (x, y) = (g.coord(j), g.coord(i));
            r2 = r2.max(x * x + y * y);
        }
    }
    r2.sqrt()
}

/// Checks that no slice imprints a phase step of pi or more between neighbouring pixels.
///
/// The linear term uses `(e/hbar) |offset| max|int B_perp dz| dx`; the quadratic term uses
/// the exact neighbour difference of `e^2 int A_z^2 dz / (2 m* hbar v)`. Only pixel pairs
/// inside `probe_radius` are considered; `None` checks the whole grid.
pub fn sampling_check(
    filter: &MultipoleFilter,
    grid: &Grid,
    scheme: &SliceScheme,
    beam: &BeamParams,
    probe_radius: Option<f64>,
) -> Result<SamplingReport> {
    filter.validate()?;
    let c = &beam.consts;
    let lin = c.elementary_charge / c.hbar * filter.compensation_offset.abs();
    let quad = c.elementary_charge * c.elementary_charge / (2.0 * beam.m_star * c.hbar * beam.velocity);

    let n = grid.n;
    let r2_max = probe_radius.map_or(f64::INFINITY, |r| r * r);
    let inside = |i: usize, j: usize| {
        let (x, y) = (grid.coord(j), grid.coord(i));
        x * x + y * y <= r2_max
    };
    let mut a2 = Array2::from_elem((n, n), f64::NAN);
    let mut b_max = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if !inside(i, j) {
                continue;
            }
            let (x, y) = (grid.coord(j), grid.coord(i));
            let f = filter.core_field(x, y, beam.velocity);
            a2[[i, j]] = f.a[2] * f.a[2];
            b_max = b_max.max(f.b[0].abs()).max(f.b[1].abs());
        }
    }
    let a2_step = max_neighbour_step(&a2);

    let mut worst = (0.0f64, 0.0f64, 0usize, 0usize);
    for (idx, s) in scheme.slices().iter().enumerate() {
        let region = filter.region_of_interval(s.z_lo, s.z_hi)?;
        if region == Region::Outside {
            continue;
        }
        let (mk, mk2) = filter.profile_moments(s.z_lo, s.z_hi);
        let l = lin * b_max * mk.abs() * grid.dx;
        let q = quad * a2_step * mk2;
        if l > worst.0 {
            worst.0 = l;
            worst.2 = idx;
        }
        if q > worst.1 {
            worst.1 = q;
            worst.3 = idx;
        }
    }
    let (l, q) = (worst.0, worst.1);
    let (binding, step, slice) =
        if l >= q { (SamplingCriterion::Linear, l, worst.2) } else { (SamplingCriterion::Quadratic, q, worst.3) };
    let margin = if step > 0.0 { PI / step } else { f64::INFINITY };
    Ok(SamplingReport {
        linear_phase_step: l,
        quadratic_phase_step: q,
        binding,
        margin,
        pass: step < PI,
        worst_slice: slice,
    })
}

/// Largest `B dz` (T m) a slice may carry without compensation for pixel size `dx`.
pub fn linear_field_limit(beam: &BeamParams, dx: f64) -> f64 {
    PI * beam.consts.hbar / (beam.consts.elementary_charge * dx)
}

// ---------------------------------------------------------------------------------------
// Conversion and polarisation

#[derive(Debug, Clone)]
pub struct ConversionReport {
    pub input_spin: Spin,
    pub flipped_fraction: f64,
    pub unflipped_fraction: f64,
    /// `(m, power)` for the up component.
    pub oam_up: Vec<(i32, f64)>,
    /// `(m, power)` for the down component.
    pub oam_down: Vec<(i32, f64)>,
    /// Far-field power of (up, down) inside the aperture.
    pub aperture_pass: (f64, f64),
    pub polarization_degree: f64,
}

pub const OAM_LISTING_MAX: i32 = 8;

/// Spin-conversion summary of an exit field. The aperture is a disc of radius
/// `aperture` (cycles per metre) about zero frequency in the far field.
pub fn conversion_fraction(exit: &SpinorField, input_spin: Spin, aperture: f64) -> Result<ConversionReport> {
    exit.require_space(Space::Real)?;
    require_positive("aperture", aperture)?;
    let (up, down) = exit.norms();
    let (kept, flipped) = match input_spin {
        Spin::Up => (up, down),
        Spin::Down => (down, up),
    };
    let bins = exit.grid.n / 2;
    let oam_up = azimuthal_spectrum(exit, Spin::Up, bins)?.listing(OAM_LISTING_MAX);
    let oam_down = azimuthal_spectrum(exit, Spin::Down, bins)?.listing(OAM_LISTING_MAX);
    let far = far_field(exit)?;
    let pu = disc_power(&far.intensity(Spin::Up), &far.grid, aperture)?;
    let pd = disc_power(&far.intensity(Spin::Down), &far.grid, aperture)?;
    let polarization_degree = if pu + pd > 0.0 { (pu - pd) / (pu + pd) } else { 0.0 };
    Ok(ConversionReport {
        input_spin,
        flipped_fraction: flipped,
        unflipped_fraction: kept,
        oam_up,
        oam_down,
        aperture_pass: (pu, pd),
        polarization_degree,
    })
}

/// Power of a Fourier-space intensity raster inside a centred disc of radius `radius`.
fn disc_power(intensity: &Array2<f64>, grid: &Grid, radius: f64) -> Result<f64> {
    let half = (grid.n / 2) as f64 * grid.dk();
    if radius > half {
        return Err(invalid("aperture", format!("radius {radius:e} exceeds the far-field half-width {half:e}")));
    }
    let r2 = radius * radius;
    let mut sum = 0.0;
    for ((i, j), v) in intensity.indexed_iter() {
        let (kx, ky) = (grid.freq(j), grid.freq(i));
        if kx * kx + ky * ky <= r2 {
            sum += v;
        }
    }
    Ok(sum * grid.dk() * grid.dk())
}

/// Far-field intensities of every input/output spin channel, named `<input>_<output>`.
#[derive(Debug, Clone)]
pub struct FarFieldChannels {
    pub grid: Grid,
    pub up_up: Array2<f64>,
    pub up_down: Array2<f64>,
    pub down_up: Array2<f64>,
    pub down_down: Array2<f64>,
}

impl FarFieldChannels {
    pub fn from_fields(from_up: &SpinorField, from_down: &SpinorField) -> Result<Self> {
        from_up.require_space(Space::Fourier)?;
        from_down.require_space(Space::Fourier)?;
        from_up.grid.check_same(&from_down.grid)?;
        Ok(FarFieldChannels {
            grid: from_up.grid,
            up_up: from_up.intensity(Spin::Up),
            up_down: from_up.intensity(Spin::Down),
            down_up: from_down.intensity(Spin::Up),
            down_down: from_down.intensity(Spin::Down),
        })
    }

    pub fn channel(&self, input: Spin, output: Spin) -> &Array2<f64> {
        match (input, output) {
            (Spin::Up, Spin::Up) => &self.up_up,
            (Spin::Up, Spin::Down) => &self.up_down,
            (Spin::Down, Spin::Up) => &self.down_up,
            (Spin::Down, Spin::Down) => &self.down_down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AperturePoint {
    pub radius: f64,
    pub polarization_degree: f64,
    /// Fraction of the unpolarised input transmitted by the aperture.
    pub throughput: f64,
}

/// Polarisation and throughput of an unpolarised (equal-weight mixed) input versus aperture radius.
pub fn aperture_polarization(channels: &FarFieldChannels, radii: &[f64]) -> Result<Vec<AperturePoint>> {
    let out_up = mixed_state_average(&[channels.up_up.clone(), channels.down_up.clone()], &[0.5, 0.5])?;
    let out_down = mixed_state_average(&[channels.up_down.clone(), channels.down_down.clone()], &[0.5, 0.5])?;
    radii
        .iter()
        .map(|&r| {
            require_positive("aperture", r)?;
            let pu = disc_power(&out_up, &channels.grid, r)?;
            let pd = disc_power(&out_down, &channels.grid, r)?;
            let total = pu + pd;
            Ok(AperturePoint {
                radius: r,
                polarization_degree: if total > 0.0 { (pu - pd) / total } else { 0.0 },
                throughput: total,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------------------
// Energy spread

/// Axial separation of wave packets whose energies differ by `dv` volts after a path `length`.
pub fn group_velocity_displacement(length: f64, dv: f64, beam: &BeamParams) -> Result<f64> {
    require_positive("length", length)?;
    Ok(length * dv / beam.energy_ev())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    /// Mean kinetic energy (J).
    pub mean_energy: f64,
    /// Standard deviation (eV).
    pub sigma: f64,
    pub n_samples: usize,
    /// Offsets from the mean (eV), symmetric about zero.
    pub sample_offsets: Vec<f64>,
    /// Gaussian weights summing to one.
    pub weights: Vec<f64>,
}

impl EnergySpectrum {
    /// Samples at `0, +-sigma, +-2 sigma, ...` with Gaussian weights.
    pub fn gaussian(mean_energy: f64, sigma: f64, n_samples: usize) -> Result<Self> {
        require_positive("mean_energy", mean_energy)?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        if n_samples < 3 || n_samples % 2 == 0 {
            return Err(invalid("n_samples", format!("need an odd count >= 3, got {n_samples}")));
        }
        let h = (n_samples / 2) as i64;
        let js: Vec<f64> = (-h..=h).map(|j| j as f64).collect();
        let raw: Vec<f64> = js.iter().map(|j| (-0.5 * j * j).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(EnergySpectrum {
            mean_energy,
            sigma,
            n_samples,
            sample_offsets: js.iter().map(|j| j * sigma).collect(),
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }

    /// Fractional energy offset of each sample, used as the compensation offset.
    pub fn relative_offsets(&self, elementary_charge: f64) -> Vec<f64> {
        let mean_ev = self.mean_energy / elementary_charge;
        self.sample_offsets.iter().map(|d| d / mean_ev).collect()
    }
}

/// Complete description of one simulated set-up.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid,
    pub beam: BeamParams,
    pub ell: i32,
    pub waist: f64,
    pub filter: MultipoleFilter,
    pub scheme: SliceScheme,
    pub options: RunOptions,
}

impl Scenario {
    pub fn input(&self, spin: Spin) -> Result<SpinorField> {
        make_lg_beam(&self.grid, &LgParams { ell: self.ell, waist: self.waist, spin })
    }

    pub fn run(&self, spin: Spin) -> Result<SpinorField> {
        run_multislice(&self.input(spin)?, &self.filter, &self.scheme, &self.beam, &self.options)
    }

    /// Run with the filter mis-compensated by `offset` (fractional energy error).
    pub fn run_with_offset(&self, spin: Spin, offset: f64) -> Result<SpinorField> {
        let filter = self.filter.with_offset(offset)?;
        run_multislice(&self.input(spin)?, &filter, &self.scheme, &self.beam, &self.options)
    }

    /// Far-field ring radius of the input vortex (cycles per metre).
    pub fn ring_radius(&self) -> f64 {
        lg_far_field_ring_radius(self.ell.max(1), self.waist)
    }
}

/// Radius of maximum intensity of the far field of an LG vortex of waist `waist`.
pub fn lg_far_field_ring_radius(ell: i32, waist: f64) -> f64 {
    (ell.unsigned_abs() as f64 / 2.0).sqrt() / (PI * waist)
}

/// Weighted average of far-field intensities over the spectrum, for one input spin.
/// Returns the (up, down) output intensities on the far-field grid of `project`.
pub fn energy_spread_channel<F>(
    scenario: &Scenario,
    spectrum: &EnergySpectrum,
    input: Spin,
    project: F,
) -> Result<(Array2<f64>, Array2<f64>)>
where
    F: Fn(&SpinorField) -> Result<SpinorField> + Sync,
{
    let offsets = spectrum.relative_offsets(scenario.beam.consts.elementary_charge);
    let runs: Vec<(Array2<f64>, Array2<f64>)> = offsets
        .par_iter()
        .map(|&o| {
            let exit = scenario.run_with_offset(input, o)?;
            let far = project(&exit)?;
            Ok((far.intensity(Spin::Up), far.intensity(Spin::Down)))
        })
        .collect::<Result<_>>()?;
    let (ups, downs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok((mixed_state_average(&ups, &spectrum.weights)?, mixed_state_average(&downs, &spectrum.weights)?))
}

/// Energy-averaged far-field intensities of all four spin channels.
pub fn energy_spread_run(scenario: &Scenario, spectrum: &EnergySpectrum) -> Result<FarFieldChannels> {
    let (up_up, up_down) = energy_spread_channel(scenario, spectrum, Spin::Up, far_field)?;
    let (down_up, down_down) = energy_spread_channel(scenario, spectrum, Spin::Down, far_field)?;
    Ok(FarFieldChannels { grid: scenario.grid, up_up, up_down, down_up, down_down })
}

// ---------------------------------------------------------------------------------------
// Separability

/// Contrast threshold above which the central spot counts as separable.
pub const SEPARABLE_THRESHOLD: f64 = 0.5;

/// Mean intensity inside a disc of radius `ring_radius / 2` divided by the mean intensity
/// on the annulus `[0.75, 1.25] * ring_radius`, for a centred Fourier-space raster.
pub fn separability_metric(intensity: &Array2<f64>, grid: &Grid, ring_radius: f64) -> Result<f64> {
    require_positive("ring_radius", ring_radius)?;
    if intensity.dim() != (grid.n, grid.n) {
        return Err(Error::GridMismatch(format!("raster {:?} on a {}-point grid", intensity.dim(), grid.n)));
    }
    if intensity.iter().all(|v| *v == 0.0) {
        return Err(invalid("intensity", "raster is identically zero; separability is undefined"));
    }
    let (mut disc, mut nd, mut ring, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for ((i, j), v) in intensity.indexed_iter() {
        let r = grid.freq(j).hypot(grid.freq(i)) / ring_radius;
        if r <= 0.5 {
            disc += v;
            nd += 1;
        } else if (0.75..=1.25).contains(&r) {
            ring += v;
            nr += 1;
        }
    }
    if nd == 0 || nr == 0 {
        return Err(invalid("ring_radius", "disc or annulus contains no pixels; sample the far field more finely"));
    }
    let ring_mean = ring / nr as f64;
    if ring_mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((disc / nd as f64) / ring_mean)
}

/// Zoomed far field of the spin-flipped output for a given input spin: the channel in which
/// the converted OAM state appears.
pub fn flipped_far_field(exit: &SpinorField, input: Spin, zoom: f64, m: usize) -> Result<(Array2<f64>, Grid)> {
    let far = far_field_zoomed(exit, zoom, m)?;
    Ok((far.intensity(input.flipped()), far.grid))
}

/// Azimuthal harmonics of an intensity raster about the grid centre, `|sum I e^{-i m phi}| / sum I`
/// for `m = 1..=m_max`.
pub fn anisotropy_spectrum(intensity: &Array2<f64>, grid: &Grid, m_max: usize) -> Vec<f64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); m_max];
    let mut total = 0.0;
    for ((i, j), &v) in intensity.indexed_iter() {
        let (x, y) = (grid.coord(j), grid.coord(i));
        if x == 0.0 && y == 0.0 {
            total += v;
            continue;
        }
        let phi = y.atan2(x);
        for (m, a) in acc.iter_mut().enumerate() {
            *a += Complex64::from_polar(v, -((m + 1) as f64) * phi);
        }
        total += v;
    }
    acc.iter().map(|a| if total > 0.0 { a.norm() / total } else { 0.0 }).collect()
}

/// Centroid and second central moments `(<x>, <y>, <xx>, <yy>, <xy>)` of a raster.
pub fn raster_moments(intensity: &Array2<f64>, grid: &Grid) -> [f64; 5] {
    let mut s = [0.0f64; 6];
    for ((i, j), &v) in intensity.indexed_iter() {
        let (x, y) = (grid.coord(j), grid.coord(i));
        s[0] += v;
        s[1] += v * x;
        s[2] += v * y;
        s[3] += v * x * x;
        s[4] += v * y * y;
        s[5] += v * x * y;
    }
    let t = s[0];
    let (mx, my) = (s[1] / t, s[2] / t);
    [mx, my, s[3] / t - mx * mx, s[4] / t - my * my, s[5] / t - mx * my]
}

// ---------------------------------------------------------------------------------------
// Ray tracing

#[derive(Debug, Clone, PartialEq)]
pub struct RaySet {
    pub positions: Vec<[f64; 2]>,
    pub slopes: Vec<[f64; 2]>,
    /// Kinetic energy (J), shared by all rays.
    pub energy: f64,
}

impl RaySet {
    pub fn new(positions: Vec<[f64; 2]>, slopes: Vec<[f64; 2]>, energy: f64) -> Result<Self> {
        require_positive("energy", energy)?;
        if positions.len() != slopes.len() {
            return Err(invalid("slopes", "need one slope per position"));
        }
        let finite = positions.iter().chain(&slopes).all(|p| p[0].is_finite() && p[1].is_finite());
        if !finite {
            return Err(invalid("positions", "ray coordinates must be finite"));
        }
        if slopes.iter().any(|s| s[0].hypot(s[1]) > 0.1) {
            return Err(invalid("slopes", "rays must be paraxial (|slope| <= 0.1)"));
        }
        Ok(RaySet { positions, slopes, energy })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Deterministic stratified sample of an LG vortex: `n_radial` intensity quantiles times
    /// `n_azimuthal` angles. Slopes follow the local phase gradient, `-grad(phase) / k0`
    /// in the `exp(-i k0 z)` convention.
    pub fn from_lg(params: &LgParams, beam: &BeamParams, n_radial: usize, n_azimuthal: usize) -> Result<Self> {
        require_positive("waist", params.waist)?;
        if n_radial == 0 || n_azimuthal == 0 {
            return Err(invalid("n_radial", "need at least one ray"));
        }
        let l = params.ell.unsigned_abs();
        let golden = 0.5 * (5.0f64.sqrt() - 1.0);
        let mut positions = Vec::with_capacity(n_radial * n_azimuthal);
        let mut slopes = Vec::with_capacity(n_radial * n_azimuthal);
        for i in 0..n_radial {
            // 2 r^2 / w^2 follows a Gamma(l + 1) law
            let u = gamma_quantile(l + 1, (i as f64 + 0.5) / n_radial as f64);
            let r = params.waist * (0.5 * u).sqrt();
            let offset = (i as f64 * golden).fract();
            for k in 0..n_azimuthal {
                let phi = 2.0 * PI * (k as f64 + offset) / n_azimuthal as f64;
                let (s, c) = phi.sin_cos();
                positions.push([r * c, r * s]);
                let t = if r > 0.0 { -(params.ell as f64) / (beam.k0 * r) } else { 0.0 };
                slopes.push([-t * s, t * c]);
            }
        }
        RaySet::new(positions, slopes, beam.energy)
    }
}

/// Quantile of the Gamma(k, 1) distribution for integer shape `k`, by bisection.
fn gamma_quantile(k: u32, p: f64) -> f64 {
    let cdf = |u: f64| {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k {
            term *= u / j as f64;
            sum += term;
        }
        1.0 - (-u).exp() * sum
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct RayTraceResult {
    /// Rays that reached the exit plane inside the grid.
    pub exit: RaySet,
    /// Exit positions binned on the grid, normalised to unit sum.
    pub histogram: Array2<f64>,
    pub dropped: usize,
}

pub const DEFAULT_RAY_STEPS: usize = 10_000;

/// Phase-space state: position and momentum normalised by `m c`.
#[derive(Debug, Clone, Copy)]
struct RayState {
    x: f64,
    y: f64,
    u: [f64; 3],
}

struct Tracer<'a> {
    filter: &'a MultipoleFilter,
    v_design: f64,
    /// `-e / (m c)`: converts force per unit charge into d(u)/dt.
    qm: f64,
    c: f64,
    mc2: f64,
    e: f64,
}

impl Tracer<'_> {
    /// Derivatives with respect to z of (x, y, u).
    fn deriv(&self, s: &RayState, z: f64) -> (f64, f64, [f64; 3]) {
        let u = s.u;
        let g = (1.0 + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let vel = [self.c * u[0] / g, self.c * u[1] / g, self.c * u[2] / g];
        let f = self.filter.field_at(s.x, s.y, z, self.v_design);
        let e = self.filter.electric_field(s.x, s.y, z, self.v_design);
        let b = f.b;
        let vxb = [vel[1] * b[2] - vel[2] * b[1], vel[2] * b[0] - vel[0] * b[2], vel[0] * b[1] - vel[1] * b[0]];
        let inv_vz = 1.0 / vel[2];
        (
            u[0] / u[2],
            u[1] / u[2],
            [
                self.qm * (e[0] + vxb[0]) * inv_vz,
                self.qm * (e[1] + vxb[1]) * inv_vz,
                self.qm * (e[2] + vxb[2]) * inv_vz,
            ],
        )
    }

    fn step(&self, s: &RayState, z: f64, h: f64) -> RayState {
        let (dx, dy, du) = self.deriv(s, z);
        let mid = RayState {
            x: s.x + 0.5 * h * dx,
            y: s.y + 0.5 * h * dy,
            u: [s.u[0] + 0.5 * h * du[0], s.u[1] + 0.5 * h * du[1], s.u[2] + 0.5 * h * du[2]],
        };
        let (dx, dy, du) = self.deriv(&mid, z + 0.5 * h);
        RayState {
            x: s.x + h * dx,
            y: s.y + h * dy,
            u: [s.u[0] + h * du[0], s.u[1] + h * du[1], s.u[2] + h * du[2]],
        }
    }

    /// Kinetic-energy jump when crossing a hard edge into (`sign = +1`) or out of (`-1`)
    /// the potential `V_E`: transverse momentum is kept, the axial momentum absorbs the change.
    fn edge_kick(&self, s: &mut RayState, z_inside: f64, sign: f64) {
        let v_e = self.filter.field_at(s.x, s.y, z_inside, self.v_design).v_e;
        let u = s.u;
        let g = (1.0 + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let g_new = g + sign * self.e * v_e / self.mc2;
        let uz2 = g_new * g_new - 1.0 - u[0] * u[0] - u[1] * u[1];
        s.u[2] = uz2.max(0.0).sqrt();
    }
}

/// Integrates the relativistic Lorentz-force equations through the filter (entry to exit)
/// with a fixed-step second-order scheme using z as the independent variable.
/// Hard edges apply the potential step as an axial kick. No spin interaction is modelled.
pub fn ray_trace(
    filter: &MultipoleFilter,
    rays: &RaySet,
    n_steps: usize,
    grid: &Grid,
) -> Result<RayTraceResult> {
    filter.validate()?;
    if n_steps == 0 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    let beam = beam_params(&Default::default(), rays.energy)?;
    let consts = beam.consts;
    let tracer = Tracer {
        filter,
        v_design: beam.velocity,
        qm: -consts.elementary_charge / (consts.electron_mass * consts.speed_of_light),
        c: consts.speed_of_light,
        mc2: consts.rest_energy(),
        e: consts.elementary_charge,
    };
    let [z0, z1, z2, z3] = filter.boundaries();
    let total = z3 - z0;
    let segments: Vec<(f64, f64)> = [(z0, z1), (z1, z2), (z2, z3)].into_iter().filter(|(a, b)| b > a).collect();
    let p0 = beam.gamma * beam.velocity / consts.speed_of_light;
    let hard = !filter.has_fringes();
    let (core_lo, core_hi) = (filter.core_start(), filter.core_end());

    let traced: Vec<Option<([f64; 2], [f64; 2])>> = rays
        .positions
        .par_iter()
        .zip(&rays.slopes)
        .map(|(pos, slope)| {
            let norm = (1.0 + slope[0] * slope[0] + slope[1] * slope[1]).sqrt();
            let mut s = RayState { x: pos[0], y: pos[1], u: [p0 * slope[0] / norm, p0 * slope[1] / norm, p0 / norm] };
            for &(a, b) in &segments {
                let n = ((n_steps as f64 * (b - a) / total).round() as usize).max(1);
                let h = (b - a) / n as f64;
                if hard && a == core_lo {
                    tracer.edge_kick(&mut s, 0.5 * (core_lo + core_hi), 1.0);
                }
                for k in 0..n {
                    s = tracer.step(&s, a + k as f64 * h, h);
                }
                if hard && b == core_hi {
                    tracer.edge_kick(&mut s, 0.5 * (core_lo + core_hi), -1.0);
                }
            }
            let ok = s.x.is_finite() && s.y.is_finite() && s.u[2] > 0.0;
            ok.then(|| ([s.x, s.y], [s.u[0] / s.u[2], s.u[1] / s.u[2]]))
        })
        .collect();

    let n = grid.n;
    let mut histogram = Array2::zeros((n, n));
    let mut positions = Vec::new();
    let mut slopes = Vec::new();
    let mut dropped = 0;
    let centre = (n / 2) as f64;
    for t in traced {
        let Some((p, sl)) = t else {
            dropped += 1;
            continue;
        };
        let col = (p[0] / grid.dx + centre).round();
        let row = (p[1] / grid.dx + centre).round();
        if col < 0.0 || row < 0.0 || col >= n as f64 || row >= n as f64 {
            dropped += 1;
            continue;
        }
        histogram[[row as usize, col as usize]] += 1.0;
        positions.push(p);
        slopes.push(sl);
    }
    if positions.is_empty() {
        return Err(Error::AllRaysLost);
    }
    let count = positions.len() as f64;
    histogram.mapv_inplace(|v: f64| v / count);
    Ok(RayTraceResult { exit: RaySet { positions, slopes, energy: rays.energy }, histogram, dropped })
}

/// Normalised intensity `|psi_up|^2 + |psi_down|^2` summing to one over the grid.
pub fn total_intensity(field: &SpinorField) -> Array2<f64> {
    let mut i = Zip::from(&field.up).and(&field.down).map_collect(|u, d| u.norm_sqr() + d.norm_sqr());
    let s: f64 = i.sum();
    if s > 0.0 {
        i.mapv_inplace(|v| v / s);
    }
    i
}
