//! Multislice engine: per-slice interaction (scalar phase, spin mixing, transverse
//! translation) alternated with paraxial free-space propagation.
//!
//! Phase convention: the wave is written as `psi(x, y) exp(-i k0 z)`. In this convention
//! free propagation multiplies the spectrum by `exp(+i pi lambda dz K^2)`, the `A_z^2`
//! phase enters with a positive sign, and the spin-flip amplitude from down to up carries
//! `exp(+i alpha)`. A spin-down `exp(i phi)` vortex in a quadrupole therefore converts to
//! a spin-up `m = 0` state, and a spin-up `exp(i phi)` vortex to `m = 2`.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::analysis::{probe_radius, sampling_check, SamplingReport};
use crate::error::{invalid, require_positive, Error, Result};
use crate::fft2::{fftshift, Fft2};
use crate::fields::{MultipoleFilter, Region, SliceIntegrals};
use crate::kinematics::BeamParams;
use crate::spline;
use crate::wavefield::{bilinear, Grid, Space, SpinorField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slice {
    pub z_lo: f64,
    pub z_hi: f64,
    pub region: Region,
}

impl Slice {
    pub fn thickness(&self) -> f64 {
        self.z_hi - self.z_lo
    }
}

/// Ordered, contiguous partition of the beam path into slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceScheme {
    slices: Vec<Slice>,
}

fn uniform(z_lo: f64, z_hi: f64, count: usize, region: Region) -> Vec<Slice> {
    let h = (z_hi - z_lo) / count as f64;
    (0..count)
        .map(|i| Slice {
            z_lo: z_lo + i as f64 * h,
            z_hi: if i + 1 == count { z_hi } else { z_lo + (i + 1) as f64 * h },
            region,
        })
        .collect()
}

impl SliceScheme {
    pub fn new(slices: Vec<Slice>) -> Result<Self> {
        if slices.is_empty() {
            return Err(invalid("slices", "scheme has no slices"));
        }
        for (i, s) in slices.iter().enumerate() {
            if !(s.z_hi > s.z_lo) || !s.z_lo.is_finite() || !s.z_hi.is_finite() {
                return Err(invalid("slices", format!("slice {i} has non-increasing bounds")));
            }
            if i > 0 {
                let prev = slices[i - 1].z_hi;
                if (s.z_lo - prev).abs() > 1e-12 * s.thickness().max(prev.abs()) {
                    return Err(invalid("slices", format!("slice {i} does not start where slice {} ends", i - 1)));
                }
            }
        }
        Ok(SliceScheme { slices })
    }

    /// Uniform slicing of each filter region: `fringe_slices` per fringe, `core_slices` in the core.
    /// A zero-length core takes no slices.
    pub fn for_filter(filter: &MultipoleFilter, core_slices: usize, fringe_slices: usize) -> Result<Self> {
        let has_core = filter.core_length > 0.0;
        if has_core && core_slices == 0 {
            return Err(invalid("core_slices", "need at least one core slice"));
        }
        let [z0, z1, z2, z3] = filter.boundaries();
        let mut slices = Vec::new();
        if filter.has_fringes() {
            if fringe_slices == 0 {
                return Err(invalid("fringe_slices", "filter has fringes but no fringe slices were requested"));
            }
            slices.extend(uniform(z0, z1, fringe_slices, Region::EntryFringe));
        }
        if has_core {
            slices.extend(uniform(z1, z2, core_slices, Region::Core));
        }
        if filter.has_fringes() {
            slices.extend(uniform(z2, z3, fringe_slices, Region::ExitFringe));
        }
        Self::new(slices)
    }

    /// Field-free drift from `z_lo` to `z_hi`.
    pub fn free(z_lo: f64, z_hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("count", "need at least one slice"));
        }
        Self::new(uniform(z_lo, z_hi, count, Region::Outside))
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn z_start(&self) -> f64 {
        self.slices[0].z_lo
    }

    pub fn z_end(&self) -> f64 {
        self.slices[self.slices.len() - 1].z_hi
    }

    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.slices.iter().map(|s| s.z_lo).collect();
        b.push(self.z_end());
        b
    }

    /// Scheme with every slice split in two.
    pub fn halved(&self) -> Self {
        let slices = self
            .slices
            .iter()
            .flat_map(|s| {
                let mid = 0.5 * (s.z_lo + s.z_hi);
                [Slice { z_hi: mid, ..*s }, Slice { z_lo: mid, ..*s }]
            })
            .collect();
        SliceScheme { slices }
    }
}

/// Fourier-space free-propagation factor for one slice thickness, stored in FFT order.
#[derive(Debug, Clone)]
pub struct PropagatorKernel {
    pub grid: Grid,
    pub dz: f64,
    pub wavelength: f64,
    pub fourier_phase: Array2<Complex64>,
}

impl PropagatorKernel {
    pub fn new(grid: &Grid, dz: f64, wavelength: f64) -> Result<Self> {
        require_positive("dz", dz)?;
        require_positive("wavelength", wavelength)?;
        let n = grid.n;
        let dk = grid.dk();
        let freq = |i: usize| if i < n / 2 { i as f64 * dk } else { (i as f64 - n as f64) * dk };
        let c = PI * wavelength * dz;
        let fourier_phase = Array2::from_shape_fn((n, n), |(i, j)| {
            let (ky, kx) = (freq(i), freq(j));
            Complex64::from_polar(1.0, c * (kx * kx + ky * ky))
        });
        Ok(PropagatorKernel { grid: *grid, dz, wavelength, fourier_phase })
    }
}

/// Pixelwise scalar phase from the slice-integrated potentials.
pub fn interaction_phase(field: &mut SpinorField, integrals: &SliceIntegrals, beam: &BeamParams) -> Result<()> {
    field.require_space(Space::Real)?;
    check_raster(&field.grid, &integrals.a_z)?;
    if integrals.is_field_free() {
        return Ok(());
    }
    let c = &beam.consts;
    let lin = c.elementary_charge / c.hbar;
    let pot = c.elementary_charge / (c.hbar * beam.velocity);
    let quad = c.elementary_charge * c.elementary_charge / (2.0 * beam.m_star * c.hbar * beam.velocity);
    Zip::from(&mut field.up)
        .and(&mut field.down)
        .and(&integrals.a_z)
        .and(&integrals.v_e)
        .and(&integrals.a_z_sq)
        .par_for_each(|u, d, &az, &ve, &az2| {
            let t = Complex64::from_polar(1.0, lin * az - pot * ve + quad * az2);
            *u *= t;
            *d *= t;
        });
    Ok(())
}

fn check_raster<T>(grid: &Grid, a: &Array2<T>) -> Result<()> {
    if a.dim() == (grid.n, grid.n) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("raster {:?} on a {}-point grid", a.dim(), grid.n)))
    }
}

/// Per-pixel spin rotation by the slice-integrated transverse field.
pub fn pauli_step(
    field: &mut SpinorField,
    b_x: &Array2<f64>,
    b_y: &Array2<f64>,
    beam: &BeamParams,
    relativistic_correction: bool,
) -> Result<()> {
    field.require_space(Space::Real)?;
    check_raster(&field.grid, b_x)?;
    check_raster(&field.grid, b_y)?;
    let mut coef = beam.spin_rotation_per_tesla_metre();
    if relativistic_correction {
        coef /= beam.gamma * beam.gamma;
    }
    Zip::from(&mut field.up).and(&mut field.down).and(b_x).and(b_y).par_for_each(|u, d, &bx, &by| {
        let b = bx.hypot(by);
        if b == 0.0 {
            return;
        }
        let (s, c) = (coef * b).sin_cos();
        let e = Complex64::new(bx / b, by / b); // exp(i alpha)
        let up = *u;
        let down = *d;
        *u = up * c + Complex64::new(-e.im, e.re) * s * down;
        *d = Complex64::new(e.im, e.re) * s * up + down * c;
    });
    Ok(())
}

/// The 2x2 spin-rotation matrix applied by `pauli_step` for a given integrated field.
pub fn pauli_matrix(bx: f64, by: f64, coef: f64) -> [[Complex64; 2]; 2] {
    let b = bx.hypot(by);
    if b == 0.0 {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        return [[one, zero], [zero, one]];
    }
    let (s, c) = (coef * b).sin_cos();
    let e = Complex64::new(bx / b, by / b);
    [
        [Complex64::new(c, 0.0), Complex64::new(-e.im, e.re) * s],
        [Complex64::new(e.im, e.re) * s, Complex64::new(c, 0.0)],
    ]
}

/// Free propagation through the kernel's thickness.
pub fn fresnel_propagate(field: &mut SpinorField, kernel: &PropagatorKernel, fft: &Fft2) -> Result<()> {
    field.require_space(Space::Real)?;
    field.grid.check_same(&kernel.grid)?;
    if fft.len() != field.grid.n {
        return Err(Error::GridMismatch(format!("FFT plan for n = {} used on n = {}", fft.len(), field.grid.n)));
    }
    for comp in [&mut field.up, &mut field.down] {
        if comp.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            continue;
        }
        fft.forward(comp);
        Zip::from(&mut *comp).and(&kernel.fourier_phase).par_for_each(|v, &p| *v *= p);
        fft.inverse(comp);
    }
    field.z += kernel.dz;
    Ok(())
}

/// Convenience: free propagation over `distance` in one step.
pub fn propagate_free(field: &mut SpinorField, distance: f64, beam: &BeamParams) -> Result<()> {
    let kernel = PropagatorKernel::new(&field.grid, distance, beam.wavelength)?;
    fresnel_propagate(field, &kernel, &Fft2::new(field.grid.n))
}

/// Transports the wavefunction along the transverse vector potential: the new value at `r`
/// is the old value at the departure point `r + zeta A dz`, `zeta = e / (hbar k0)`, found
/// with a midpoint rule and read by cubic-spline interpolation.
pub fn translate_step(
    field: &mut SpinorField,
    a_x: &Array2<f64>,
    a_y: &Array2<f64>,
    dz: f64,
    beam: &BeamParams,
) -> Result<()> {
    field.require_space(Space::Real)?;
    check_raster(&field.grid, a_x)?;
    check_raster(&field.grid, a_y)?;
    let g = field.grid;
    let scale = beam.translation_coefficient() * dz / g.dx;
    let max_px = Zip::from(a_x).and(a_y).fold(0.0f64, |m, &ax, &ay| m.max(scale * ax.hypot(ay)));
    if max_px > 1.0 {
        return Err(Error::StepTooLarge { max_pixels: max_px });
    }
    if max_px == 0.0 {
        return Ok(());
    }
    // displacement in pixels, packed as complex (column, row) for bilinear lookup
    let disp = Zip::from(a_x).and(a_y).map_collect(|&ax, &ay| Complex64::new(scale * ax, scale * ay));
    let departure = Array2::from_shape_fn((g.n, g.n), |(i, j)| {
        let d0 = disp[[i, j]];
        let dm = bilinear(&disp, j as f64 + 0.5 * d0.re, i as f64 + 0.5 * d0.im);
        (j as f64 + dm.re, i as f64 + dm.im)
    });
    for comp in [&mut field.up, &mut field.down] {
        let coeffs = spline::coefficients(comp);
        Zip::from(&mut *comp).and(&departure).par_for_each(|v, &(c, r)| {
            *v = spline::evaluate(&coeffs, c, r);
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Use `B / gamma^2` for the spin rotation.
    pub relativistic_correction: bool,
    /// Run even if the sampling check fails.
    pub override_sampling: bool,
    /// Apply the transverse translation in fringe slices.
    pub fringe_translation: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { relativistic_correction: true, override_sampling: false, fringe_translation: true }
    }
}

/// Propagates `input` through every slice of `scheme`; returns the exit-plane field.
pub fn run_multislice(
    input: &SpinorField,
    filter: &MultipoleFilter,
    scheme: &SliceScheme,
    beam: &BeamParams,
    options: &RunOptions,
) -> Result<SpinorField> {
    input.require_space(Space::Real)?;
    filter.validate()?;
    let grid = input.grid;
    if !options.override_sampling {
        let report: SamplingReport = sampling_check(filter, &grid, scheme, beam, Some(probe_radius(input)))?;
        if !report.pass {
            return Err(Error::SamplingViolation { criterion: report.binding.name(), phase_step: report.worst_phase_step() });
        }
    }
    let fft = Fft2::new(grid.n);
    let mut field = input.clone();
    field.z = scheme.z_start();
    let mut kernels: HashMap<u64, PropagatorKernel> = HashMap::new();
    let mut core_cache: Option<(u64, SliceIntegrals)> = None;
    for s in scheme.slices() {
        let dz = s.thickness();
        if s.region != Region::Outside {
            let fresh;
            let ints = match &core_cache {
                Some((key, ints)) if s.region == Region::Core && *key == dz.to_bits() => ints,
                _ => {
                    let computed = filter.slice_integrals(&grid, s.z_lo, s.z_hi, beam.velocity)?;
                    if computed.region != s.region {
                        return Err(invalid(
                            "scheme",
                            format!(
                                "slice [{:e}, {:e}] tagged {} lies in {}",
                                s.z_lo,
                                s.z_hi,
                                s.region.name(),
                                computed.region.name()
                            ),
                        ));
                    }
                    if s.region == Region::Core {
                        core_cache = Some((dz.to_bits(), computed));
                        &core_cache.as_ref().expect("just stored").1
                    } else {
                        fresh = computed;
                        &fresh
                    }
                }
            };
            interaction_phase(&mut field, ints, beam)?;
            pauli_step(&mut field, &ints.b_x, &ints.b_y, beam, options.relativistic_correction)?;
            if options.fringe_translation && matches!(s.region, Region::EntryFringe | Region::ExitFringe) {
                translate_step(&mut field, &ints.a_x, &ints.a_y, dz, beam)?;
            }
        }
        let kernel = kernels
            .entry(dz.to_bits())
            .or_insert_with(|| PropagatorKernel::new(&grid, dz, beam.wavelength).expect("positive slice thickness"));
        let z_before = field.z;
        fresnel_propagate(&mut field, kernel, &fft)?;
        field.z = z_before + dz;
    }
    field.z = scheme.z_end();
    Ok(field)
}

/// Centred Fourier transform of both components, scaled so the result approximates the
/// continuous transform and preserves the integrated norm.
pub fn far_field(field: &SpinorField) -> Result<SpinorField> {
    field.require_space(Space::Real)?;
    let g = field.grid;
    let fft = Fft2::new(g.n);
    let area = g.dx * g.dx;
    let transform = |a: &Array2<Complex64>| {
        let mut s = fftshift(a);
        fft.forward(&mut s);
        let mut out = fftshift(&s);
        out.par_mapv_inplace(|c| c * area);
        out
    };
    Ok(SpinorField { grid: g, up: transform(&field.up), down: transform(&field.down), z: field.z, space: Space::Fourier })
}

/// Centred Fourier transform sampled `zoom` times more finely than `far_field`, on an
/// `m x m` window about zero frequency (matrix DFT). The window need not hold the full norm.
pub fn far_field_zoomed(field: &SpinorField, zoom: f64, m: usize) -> Result<SpinorField> {
    field.require_space(Space::Real)?;
    require_positive("zoom", zoom)?;
    if m < 2 || m % 2 != 0 {
        return Err(invalid("m", format!("window size must be even and >= 2, got {m}")));
    }
    let g = field.grid;
    let n = g.n;
    let dk = g.dk() / zoom;
    // w[(x, K)] = exp(-2 pi i K x)
    let kernel = Array2::from_shape_fn((n, m), |(i, j)| {
        let x = g.coord(i);
        let k = (j as f64 - (m / 2) as f64) * dk;
        Complex64::from_polar(1.0, -2.0 * PI * k * x)
    });
    let area = g.dx * g.dx;
    let transform = |a: &Array2<Complex64>| {
        if a.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            return Array2::zeros((m, m));
        }
        // rows are y, columns are x: contract x first, then y
        let t = a.dot(&kernel);
        let mut out = kernel.t().dot(&t);
        out.mapv_inplace(|c| c * area);
        out
    };
    let out_grid = Grid { n: m, extent: g.extent * zoom, dx: g.extent * zoom / m as f64 };
    Ok(SpinorField { grid: out_grid, up: transform(&field.up), down: transform(&field.down), z: field.z, space: Space::Fourier })
}
