//! Static magnetic and electric fields of a multipolar Wien filter.
//!
//! The core field has topological charge `q < 0`: `Bx - i By = B0 e^{-i beta} (x + i y)^n / R0^n`
//! with `n = |q|`, and `A = (0, 0, A_z)` with `curl A = B`. The electric potential
//! `V_E = v A_z (1 + offset)` compensates the transverse magnetic force for the design speed.
//! Linear fringe ramps of slope `a` are available for the quadrupole.

use ndarray::Array2;
use rayon::prelude::*;
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

use crate::error::{invalid, require_positive, Error, Result};
use crate::wavefield::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    EntryFringe,
    Core,
    ExitFringe,
    Outside,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::EntryFringe => "entry_fringe",
            Region::Core => "core",
            Region::ExitFringe => "exit_fringe",
            Region::Outside => "outside",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipoleFilter {
    /// Topological charge, a negative integer.
    pub q: i32,
    /// Orientation offset of the field pattern (rad).
    pub beta: f64,
    /// Field magnitude at `r0` (T).
    pub b0: f64,
    /// Reference radius (m).
    pub r0: f64,
    pub core_length: f64,
    /// Fringe slope `a` (1/m); zero means hard edges.
    pub fringe_a: f64,
    /// Axial position where the entry fringe (or the core, for hard edges) begins.
    pub z_entry: f64,
    /// Residual fraction of the electric potential, zero for perfect compensation.
    pub compensation_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub b: [f64; 3],
    pub a: [f64; 3],
    pub v_e: f64,
}

impl MultipoleFilter {
    /// Hard-edged filter starting at `z = 0`, perfectly compensated.
    pub fn new(q: i32, beta: f64, b0: f64, r0: f64, core_length: f64) -> Result<Self> {
        let f = MultipoleFilter {
            q,
            beta,
            b0,
            r0,
            core_length,
            fringe_a: 0.0,
            z_entry: 0.0,
            compensation_offset: 0.0,
        };
        f.validate()?;
        Ok(f)
    }

    /// Standard quadrupole orientation, `B = (B0/R0) (y, x, 0)` in the core.
    pub fn quadrupole(b0: f64, r0: f64, core_length: f64) -> Result<Self> {
        Self::new(-1, FRAC_PI_2, b0, r0, core_length)
    }

    pub fn with_fringes(mut self, a: f64) -> Result<Self> {
        self.fringe_a = a;
        self.validate()?;
        Ok(self)
    }

    /// The same ramps placed back to back with no core between them.
    pub fn fringes_only(mut self) -> Result<Self> {
        if !self.has_fringes() {
            return Err(invalid("fringe_a", "fringe-only filter needs fringe ramps"));
        }
        self.core_length = 0.0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_entry(mut self, z_entry: f64) -> Result<Self> {
        self.z_entry = z_entry;
        self.validate()?;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: f64) -> Result<Self> {
        self.compensation_offset = offset;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q >= 0 {
            return Err(invalid("q", format!("topological charge must be negative, got {}", self.q)));
        }
        require_positive("b0", self.b0)?;
        require_positive("r0", self.r0)?;
        if !(self.fringe_a.is_finite() && self.fringe_a >= 0.0) {
            return Err(invalid("fringe_a", format!("must be finite and >= 0, got {}", self.fringe_a)));
        }
        // a zero-length core is allowed only between two fringe ramps
        if !(self.core_length.is_finite() && (self.core_length > 0.0 || (self.core_length == 0.0 && self.fringe_a > 0.0))) {
            return Err(invalid("core_length", format!("must be positive, got {}", self.core_length)));
        }
        if self.fringe_a > 0.0 && self.q != -1 {
            return Err(invalid("fringe_a", "fringe fields are modelled for the quadrupole (q = -1) only"));
        }
        if !self.beta.is_finite() || !self.z_entry.is_finite() || !self.compensation_offset.is_finite() {
            return Err(invalid("filter", "beta, z_entry and compensation_offset must be finite"));
        }
        Ok(())
    }

    pub fn order(&self) -> u32 {
        self.q.unsigned_abs()
    }

    pub fn has_fringes(&self) -> bool {
        self.fringe_a > 0.0
    }

    pub fn fringe_length(&self) -> f64 {
        if self.has_fringes() {
            1.0 / self.fringe_a
        } else {
            0.0
        }
    }

    pub fn core_start(&self) -> f64 {
        self.z_entry + self.fringe_length()
    }

    pub fn core_end(&self) -> f64 {
        self.core_start() + self.core_length
    }

    pub fn z_exit(&self) -> f64 {
        self.core_end() + self.fringe_length()
    }

    /// Region boundaries in increasing z: entry, core start, core end, exit.
    pub fn boundaries(&self) -> [f64; 4] {
        [self.z_entry, self.core_start(), self.core_end(), self.z_exit()]
    }

    pub fn region_at(&self, z: f64) -> Region {
        let [z0, z1, z2, z3] = self.boundaries();
        if z < z0 || z > z3 {
            Region::Outside
        } else if z < z1 {
            Region::EntryFringe
        } else if z <= z2 {
            Region::Core
        } else {
            Region::ExitFringe
        }
    }

    /// Longitudinal profile `k(z)` and its slope: 1 in the core, linear ramps in the fringes.
    pub fn profile(&self, z: f64) -> (f64, f64) {
        let a = self.fringe_a;
        match self.region_at(z) {
            Region::Outside => (0.0, 0.0),
            Region::Core => (1.0, 0.0),
            Region::EntryFringe => (1.0 - a * (self.core_start() - z), a),
            Region::ExitFringe => (1.0 - a * (z - self.core_end()), -a),
        }
    }

    /// Rotation that maps the canonical quadrupole (beta = pi/2) onto this orientation.
    fn quad_rotation(&self) -> f64 {
        0.5 * (self.beta - FRAC_PI_2)
    }

    /// `A_z` of the core for unit profile, without the compensation potential.
    pub fn core_a_z(&self, x: f64, y: f64) -> f64 {
        let n = self.order() as i32;
        let w = Complex64::new(x, y);
        let phase = Complex64::from_polar(1.0, -self.beta);
        let scale = self.b0 / ((n + 1) as f64 * self.r0.powi(n));
        (Complex64::new(0.0, -1.0) * phase * w.powi(n + 1)).re * scale
    }

    /// Transverse core field for unit profile.
    pub fn core_b_perp(&self, x: f64, y: f64) -> [f64; 2] {
        let n = self.order() as i32;
        let w = Complex64::new(x, y);
        let c = Complex64::from_polar(self.b0 / self.r0.powi(n), -self.beta) * w.powi(n);
        // c = Bx - i By
        [c.re, -c.im]
    }

    /// Fields of the core region at transverse position (x, y) for beam speed `v`.
    pub fn core_field(&self, x: f64, y: f64, v: f64) -> FieldSample {
        let a_z = self.core_a_z(x, y);
        let [bx, by] = self.core_b_perp(x, y);
        FieldSample {
            b: [bx, by, 0.0],
            a: [0.0, 0.0, a_z],
            v_e: v * a_z * (1.0 + self.compensation_offset),
        }
    }

    /// Quadrupole fields for profile value `k` and slope `dk`.
    fn quad_field(&self, x: f64, y: f64, k: f64, dk: f64, v: f64) -> FieldSample {
        let psi = self.quad_rotation();
        let (s, c) = psi.sin_cos();
        // coordinates in the canonical frame
        let xr = c * x + s * y;
        let yr = -s * x + c * y;
        let g = self.b0 / self.r0;
        let bxr = g * k * yr;
        let byr = g * k * xr;
        let bz = g * dk * xr * yr;
        let axr = -0.25 * g * dk * xr * yr * yr;
        let ayr = 0.25 * g * dk * xr * xr * yr;
        let a_z = -0.5 * g * k * (xr * xr - yr * yr);
        FieldSample {
            b: [c * bxr - s * byr, s * bxr + c * byr, bz],
            a: [c * axr - s * ayr, s * axr + c * ayr, a_z],
            v_e: v * a_z * (1.0 + self.compensation_offset),
        }
    }

    /// Fields a distance `z` (0 <= z <= 1/a) past the start of a fringe ramp that
    /// decays from the core value to zero (exit orientation).
    pub fn fringe_field(&self, x: f64, y: f64, z: f64, v: f64) -> Result<FieldSample> {
        if !self.has_fringes() {
            return Err(invalid("fringe_a", "filter has hard edges, no fringe field"));
        }
        let len = self.fringe_length();
        if !(0.0..=len).contains(&z) {
            return Err(invalid("z", format!("must lie in [0, {len:e}] m, got {z:e}")));
        }
        let a = self.fringe_a;
        Ok(self.quad_field(x, y, 1.0 - a * z, -a, v))
    }

    /// Electric field `-grad V_E` at a lab-frame position for beam speed `v`.
    pub fn electric_field(&self, x: f64, y: f64, z: f64, v: f64) -> [f64; 3] {
        let region = self.region_at(z);
        if region == Region::Outside {
            return [0.0; 3];
        }
        let scale = v * (1.0 + self.compensation_offset);
        let (k, dk) = if self.has_fringes() { self.profile(z) } else { (1.0, 0.0) };
        let unit = if self.q == -1 { self.quad_field(x, y, 1.0, 0.0, v) } else { self.core_field(x, y, v) };
        // grad A_z = (-B_y, B_x) for a field derived from A = A_z z
        [
            scale * k * unit.b[1],
            -scale * k * unit.b[0],
            -scale * dk * unit.a[2],
        ]
    }

    /// Fields at a lab-frame position.
    pub fn field_at(&self, x: f64, y: f64, z: f64, v: f64) -> FieldSample {
        match self.region_at(z) {
            Region::Outside => FieldSample::default(),
            Region::Core if !self.has_fringes() => self.core_field(x, y, v),
            _ => {
                let (k, dk) = self.profile(z);
                if self.q == -1 {
                    self.quad_field(x, y, k, dk, v)
                } else {
                    self.core_field(x, y, v)
                }
            }
        }
    }

    /// Region containing the whole interval `[z_lo, z_hi]`, or an error naming the crossed boundary.
    pub fn region_of_interval(&self, z_lo: f64, z_hi: f64) -> Result<Region> {
        if !(z_hi > z_lo) {
            return Err(invalid("slice", format!("empty or reversed interval [{z_lo:e}, {z_hi:e}]")));
        }
        let tol = 1e-9 * (z_hi - z_lo);
        let bounds = self.boundaries();
        for &b in &bounds {
            if z_lo < b - tol && z_hi > b + tol {
                return Err(Error::StraddlesBoundary { z_lo, z_hi, boundary: b });
            }
        }
        Ok(self.region_at(0.5 * (z_lo + z_hi)))
    }

    /// `int k dz` and `int k^2 dz` over an interval inside one region.
    pub fn profile_moments(&self, z_lo: f64, z_hi: f64) -> (f64, f64) {
        let (k0, dk) = self.profile(0.5 * (z_lo + z_hi));
        let h = z_hi - z_lo;
        if dk == 0.0 {
            return (k0 * h, k0 * k0 * h);
        }
        // k is linear: exact moments from the midpoint value and slope
        (k0 * h, k0 * k0 * h + dk * dk * h * h * h / 12.0)
    }

    /// Slice-integrated rasters over `[z_lo, z_hi]` on `grid` for beam speed `v`.
    pub fn slice_integrals(&self, grid: &Grid, z_lo: f64, z_hi: f64, v: f64) -> Result<SliceIntegrals> {
        let region = self.region_of_interval(z_lo, z_hi)?;
        let dz = z_hi - z_lo;
        let n = grid.n;
        let mut out = SliceIntegrals::zeros(n, region, dz);
        if region == Region::Outside {
            return Ok(out);
        }
        let (mk, mk2) = self.profile_moments(z_lo, z_hi);
        let (_, dk) = self.profile(0.5 * (z_lo + z_hi));
        let fringe = region != Region::Core && self.q == -1;
        let offset = self.compensation_offset;
        let samples: Vec<[f64; 8]> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let x = grid.coord(idx % n);
                let y = grid.coord(idx / n);
                let unit = if self.q == -1 { self.quad_field(x, y, 1.0, dk, v) } else { self.core_field(x, y, v) };
                let a1 = unit.a[2];
                let (bz, ax, ay) = if fringe { (unit.b[2] * dz, unit.a[0], unit.a[1]) } else { (0.0, 0.0, 0.0) };
                [a1 * mk, a1 * a1 * mk2, v * a1 * (1.0 + offset) * mk, unit.b[0] * mk, unit.b[1] * mk, bz, ax, ay]
            })
            .collect();
        let rasters = [
            &mut out.a_z,
            &mut out.a_z_sq,
            &mut out.v_e,
            &mut out.b_x,
            &mut out.b_y,
            &mut out.b_z,
            &mut out.a_x,
            &mut out.a_y,
        ];
        for (k, raster) in rasters.into_iter().enumerate() {
            for (dst, src) in raster.iter_mut().zip(&samples) {
                *dst = src[k];
            }
        }
        Ok(out)
    }
}

/// Field quantities integrated over one slice, sampled on the grid (row = y, column = x).
#[derive(Debug, Clone)]
pub struct SliceIntegrals {
    pub region: Region,
    pub dz: f64,
    /// `int A_z dz`
    pub a_z: Array2<f64>,
    /// `int A_z^2 dz`
    pub a_z_sq: Array2<f64>,
    /// `int V_E dz`
    pub v_e: Array2<f64>,
    /// `int B_x dz`
    pub b_x: Array2<f64>,
    /// `int B_y dz`
    pub b_y: Array2<f64>,
    /// `int B_z dz`
    pub b_z: Array2<f64>,
    /// Slice-averaged transverse vector potential (non-zero in fringes only).
    pub a_x: Array2<f64>,
    pub a_y: Array2<f64>,
}

impl SliceIntegrals {
    pub fn zeros(n: usize, region: Region, dz: f64) -> Self {
        let z = || Array2::zeros((n, n));
        SliceIntegrals {
            region,
            dz,
            a_z: z(),
            a_z_sq: z(),
            v_e: z(),
            b_x: z(),
            b_y: z(),
            b_z: z(),
            a_x: z(),
            a_y: z(),
        }
    }

    pub fn is_field_free(&self) -> bool {
        self.region == Region::Outside
    }
}
