//! Sampling grid, two-component spinor wavefunction and beam diagnostics.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{invalid, require_positive, Error, Result};

/// Square transverse grid of `n x n` samples spanning `extent` metres.
/// Pixel `i` sits at `(i - n/2) dx`, so the optical axis is sample `n/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub extent: f64,
    pub dx: f64,
}

impl Grid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 64 || !n.is_power_of_two() {
            let hint = n.max(64).next_power_of_two();
            return Err(invalid("n", format!("grid size must be a power of two >= 64, got {n}; try {hint}")));
        }
        require_positive("extent", extent)?;
        Ok(Grid { n, extent, dx: extent / n as f64 })
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx
    }

    /// Spatial-frequency spacing of the conjugate grid (cycles per metre).
    pub fn dk(&self) -> f64 {
        1.0 / self.extent
    }

    /// Centred spatial frequency of Fourier-space pixel `i`.
    pub fn freq(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dk()
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.extent
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && (self.extent - other.extent).abs() <= 1e-12 * self.extent
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} over {:e} m vs {}x{} over {:e} m",
                self.n, self.n, self.extent, other.n, other.n, other.extent
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Real,
    Fourier,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Real => "real",
            Space::Fourier => "fourier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Down => "down",
        }
    }
}

/// Spinor wavefunction on a grid. Rows index y, columns index x.
/// In Fourier space the samples approximate the continuous transform, so norms use `dk^2`.
#[derive(Debug, Clone)]
pub struct SpinorField {
    pub grid: Grid,
    pub up: Array2<Complex64>,
    pub down: Array2<Complex64>,
    pub z: f64,
    pub space: Space,
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        SpinorField {
            grid,
            up: Array2::zeros((grid.n, grid.n)),
            down: Array2::zeros((grid.n, grid.n)),
            z: 0.0,
            space: Space::Real,
        }
    }

    pub fn component(&self, spin: Spin) -> &Array2<Complex64> {
        match spin {
            Spin::Up => &self.up,
            Spin::Down => &self.down,
        }
    }

    pub fn component_mut(&mut self, spin: Spin) -> &mut Array2<Complex64> {
        match spin {
            Spin::Up => &mut self.up,
            Spin::Down => &mut self.down,
        }
    }

    pub fn cell_area(&self) -> f64 {
        match self.space {
            Space::Real => self.grid.dx * self.grid.dx,
            Space::Fourier => self.grid.dk() * self.grid.dk(),
        }
    }

    pub fn require_space(&self, space: Space) -> Result<()> {
        if self.space == space {
            Ok(())
        } else {
            Err(Error::WrongSpace { expected: space.name(), found: self.space.name() })
        }
    }

    /// Integrated probability of each component `(up, down)`.
    pub fn norms(&self) -> (f64, f64) {
        let da = self.cell_area();
        (sum_norm_sqr(&self.up) * da, sum_norm_sqr(&self.down) * da)
    }

    pub fn intensity(&self, spin: Spin) -> Array2<f64> {
        self.component(spin).mapv(|c| c.norm_sqr())
    }

    pub fn scale(&mut self, s: f64) {
        self.up.mapv_inplace(|c| c * s);
        self.down.mapv_inplace(|c| c * s);
    }
}

fn sum_norm_sqr(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// Probability summed over both spin components.
pub fn total_norm(field: &SpinorField) -> f64 {
    let (u, d) = field.norms();
    u + d
}

/// Laguerre-Gauss vortex `(r/w)^|l| exp(-r^2/w^2) exp(i l phi)` occupying one spin component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgParams {
    pub ell: i32,
    pub waist: f64,
    pub spin: Spin,
}

/// Relative intensity below which the beam is taken to have left the window.
const EDGE_INTENSITY: f64 = 1e-6;

/// Radius beyond which the LG intensity stays below `EDGE_INTENSITY` of its peak.
fn lg_support_radius(ell: u32, waist: f64) -> f64 {
    let l = ell as f64;
    let log_rel = |t: f64| {
        // t = r / w; log of intensity relative to its maximum at t^2 = l / 2
        let peak = if ell == 0 { 0.0 } else { l * (0.5 * l).ln() - l };
        let val = if ell == 0 { -2.0 * t * t } else { 2.0 * l * t.ln() - 2.0 * t * t };
        val - peak
    };
    let mut t = (0.5 * l).sqrt().max(0.1);
    while log_rel(t) > EDGE_INTENSITY.ln() {
        t += 0.01;
    }
    t * waist
}

pub fn make_lg_beam(grid: &Grid, params: &LgParams) -> Result<SpinorField> {
    require_positive("waist", params.waist)?;
    let w = params.waist;
    let min_pixels_per_waist = 8.0;
    if w < min_pixels_per_waist * grid.dx {
        let required_n = ((min_pixels_per_waist * grid.extent / w).ceil() as usize).next_power_of_two();
        return Err(Error::UnderResolved { waist: w, extent: grid.extent, n: grid.n, required_n });
    }
    if w > grid.extent / 8.0 {
        return Err(invalid(
            "waist",
            format!("waist {w:e} m exceeds one eighth of the grid extent {:e} m; widen the grid", grid.extent),
        ));
    }
    let support = lg_support_radius(params.ell.unsigned_abs(), w);
    if support > grid.half_width() {
        return Err(invalid(
            "waist",
            format!(
                "beam with waist {w:e} m and l = {} extends to {support:e} m, beyond the grid half-width {:e} m",
                params.ell,
                grid.half_width()
            ),
        ));
    }
    let l = params.ell;
    let la = l.unsigned_abs() as i32;
    let mut field = SpinorField::zeros(*grid);
    Zip::indexed(field.component_mut(params.spin)).par_for_each(|(i, j), v| {
        let x = grid.coord(j);
        let y = grid.coord(i);
        let r2 = (x * x + y * y) / (w * w);
        let amp = r2.sqrt().powi(la) * (-r2).exp();
        *v = Complex64::from_polar(amp, l as f64 * y.atan2(x));
    });
    let norm = total_norm(&field);
    field.scale(1.0 / norm.sqrt());
    Ok(field)
}

/// Bilinear interpolation of a complex raster at fractional pixel coordinates (column, row).
/// Samples outside the grid read as zero.
pub fn bilinear(a: &Array2<Complex64>, col: f64, row: f64) -> Complex64 {
    let n = a.nrows() as isize;
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = col - c0;
    let fr = row - r0;
    let (c0, r0) = (c0 as isize, r0 as isize);
    let at = |r: isize, c: isize| {
        if r >= 0 && r < n && c >= 0 && c < n {
            a[[r as usize, c as usize]]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    at(r0, c0) * ((1.0 - fc) * (1.0 - fr))
        + at(r0, c0 + 1) * (fc * (1.0 - fr))
        + at(r0 + 1, c0) * ((1.0 - fc) * fr)
        + at(r0 + 1, c0 + 1) * (fc * fr)
}

/// OAM content of one spin component, resolved by azimuthal index `m` and radius.
#[derive(Debug, Clone)]
pub struct AzimuthalSpectrum {
    /// Number of azimuthal samples per circle; harmonics span `-samples/2 .. samples/2`.
    pub samples: usize,
    pub radii: Vec<f64>,
    /// Power per harmonic, summed over radius, in FFT order (index `m mod samples`).
    power: Vec<f64>,
    /// Power per radial bin for `|m| <= radial_m_max`, indexed `[bin, m + radial_m_max]`.
    pub radial: Array2<f64>,
    pub radial_m_max: i32,
}

impl AzimuthalSpectrum {
    pub fn power(&self, m: i32) -> f64 {
        let s = self.samples as i64;
        if (m as i64).abs() >= s / 2 {
            return 0.0;
        }
        self.power[(m as i64).rem_euclid(s) as usize]
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn fraction(&self, m: i32) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.power(m) / t
        } else {
            0.0
        }
    }

    /// Harmonic with the largest power.
    pub fn dominant(&self) -> i32 {
        let s = self.samples as i32;
        let (idx, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        let idx = idx as i32;
        if idx >= s / 2 {
            idx - s
        } else {
            idx
        }
    }

    /// `(m, power)` pairs for `|m| <= m_max`.
    pub fn listing(&self, m_max: i32) -> Vec<(i32, f64)> {
        (-m_max..=m_max).map(|m| (m, self.power(m))).collect()
    }
}

pub const RADIAL_M_MAX: i32 = 8;

/// Decomposes one component into `exp(i m phi)` harmonics on `r_bins` concentric circles
/// covering the inscribed disc, with `4n` bilinear samples per circle.
/// Summed over `m` the powers reproduce the component norm inside the disc.
pub fn azimuthal_spectrum(field: &SpinorField, spin: Spin, r_bins: usize) -> Result<AzimuthalSpectrum> {
    field.require_space(Space::Real)?;
    if r_bins == 0 {
        return Err(invalid("r_bins", "need at least one radial bin"));
    }
    let g = field.grid;
    let comp = field.component(spin);
    let samples = 4 * g.n;
    let r_max = g.half_width() - 2.0 * g.dx;
    let dr = r_max / r_bins as f64;
    let radii: Vec<f64> = (0..r_bins).map(|j| (j as f64 + 0.5) * dr).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(samples);
    let centre = (g.n / 2) as f64;
    let mm = RADIAL_M_MAX;

    use rayon::prelude::*;
    let per_ring: Vec<Vec<f64>> = radii
        .par_iter()
        .map(|&r| {
            let mut buf: Vec<Complex64> = (0..samples)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / samples as f64;
                    bilinear(comp, centre + r * phi.cos() / g.dx, centre + r * phi.sin() / g.dx)
                })
                .collect();
            fft.process(&mut buf);
            let weight = 2.0 * PI * r * dr / (samples as f64 * samples as f64);
            buf.iter().map(|c| c.norm_sqr() * weight).collect()
        })
        .collect();

    let mut power = vec![0.0; samples];
    let mut radial = Array2::zeros((r_bins, (2 * mm + 1) as usize));
    for (j, ring) in per_ring.iter().enumerate() {
        for (p, v) in power.iter_mut().zip(ring) {
            *p += v;
        }
        for m in -mm..=mm {
            radial[[j, (m + mm) as usize]] = ring[(m as i64).rem_euclid(samples as i64) as usize];
        }
    }
    Ok(AzimuthalSpectrum { samples, radii, power, radial, radial_m_max: mm })
}

/// Weighted incoherent sum of intensity rasters; weights are normalised to unit sum.
pub fn mixed_state_average(intensities: &[Array2<f64>], weights: &[f64]) -> Result<Array2<f64>> {
    if intensities.is_empty() || intensities.len() != weights.len() {
        return Err(invalid(
            "weights",
            format!("need one weight per raster, got {} rasters and {} weights", intensities.len(), weights.len()),
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights", "weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(invalid("weights", "weights sum to zero"));
    }
    let shape = intensities[0].dim();
    let mut out = Array2::zeros(shape);
    for (img, &w) in intensities.iter().zip(weights) {
        if img.dim() != shape {
            return Err(Error::GridMismatch(format!("raster shapes {:?} and {:?} differ", shape, img.dim())));
        }
        out.scaled_add(w / total, img);
    }
    Ok(out)
}
