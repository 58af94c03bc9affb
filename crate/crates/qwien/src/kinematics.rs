//! Relativistic beam kinematics and the spin-precession length scale.

use crate::error::{invalid, require_positive, Result};

/// Physical constants used throughout the simulation (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub electron_mass: f64,
    pub elementary_charge: f64,
    pub speed_of_light: f64,
    pub g_factor: f64,
    pub bohr_magneton: f64,
}

impl PhysicalConstants {
    /// CODATA 2018 values with g = 2.
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: 1.054_571_817e-34,
        electron_mass: 9.109_383_701_5e-31,
        elementary_charge: 1.602_176_634e-19,
        speed_of_light: 299_792_458.0,
        g_factor: 2.0,
        bohr_magneton: 9.274_010_078_3e-24,
    };

    pub fn rest_energy(&self) -> f64 {
        self.electron_mass * self.speed_of_light * self.speed_of_light
    }

    pub fn planck(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("hbar", self.hbar)?;
        require_positive("electron_mass", self.electron_mass)?;
        require_positive("elementary_charge", self.elementary_charge)?;
        require_positive("speed_of_light", self.speed_of_light)?;
        require_positive("bohr_magneton", self.bohr_magneton)?;
        if !self.g_factor.is_finite() {
            return Err(invalid("g_factor", "must be finite"));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// Kinematic state of a monochromatic electron beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    /// Kinetic energy in joules.
    pub energy: f64,
    pub wavelength: f64,
    pub k0: f64,
    pub velocity: f64,
    pub gamma: f64,
    /// Relativistic mass gamma * m.
    pub m_star: f64,
    pub consts: PhysicalConstants,
}

/// Derives wavelength, wavenumber, speed, gamma and relativistic mass from kinetic energy.
pub fn beam_params(consts: &PhysicalConstants, energy: f64) -> Result<BeamParams> {
    consts.validate()?;
    require_positive("energy", energy)?;
    let mc2 = consts.rest_energy();
    // x = eps / mc^2 keeps gamma^2 - 1 = x (2 + x) free of cancellation at low energy.
    let x = energy / mc2;
    let gamma = 1.0 + x;
    let momentum = consts.electron_mass * consts.speed_of_light * (x * (2.0 + x)).sqrt();
    let k0 = momentum / consts.hbar;
    let velocity = consts.speed_of_light * (x * (2.0 + x)).sqrt() / gamma;
    Ok(BeamParams {
        energy,
        wavelength: 2.0 * std::f64::consts::PI / k0,
        k0,
        velocity,
        gamma,
        m_star: gamma * consts.electron_mass,
        consts: *consts,
    })
}

impl BeamParams {
    pub fn from_kev(energy_kev: f64) -> Result<Self> {
        let c = PhysicalConstants::CODATA_2018;
        beam_params(&c, energy_kev * 1e3 * c.elementary_charge)
    }

    pub fn energy_ev(&self) -> f64 {
        self.energy / self.consts.elementary_charge
    }

    /// Coefficient `(g/2) mu_B / (hbar v)`: spin rotation angle per unit of `|B| dz` (rad / T m).
    pub fn spin_rotation_per_tesla_metre(&self) -> f64 {
        0.5 * self.consts.g_factor * self.consts.bohr_magneton / (self.consts.hbar * self.velocity)
    }

    /// Translation coefficient `e / (hbar k0)` linking `A dz` to a transverse shift.
    pub fn translation_coefficient(&self) -> f64 {
        self.consts.elementary_charge / (self.consts.hbar * self.k0)
    }

    /// Full spin-flip period `Lambda = 2 pi hbar v / (mu_B |B|)` for a uniform field `b`.
    pub fn pauli_pitch(&self, b: f64) -> Result<f64> {
        require_positive("b", b)?;
        Ok(2.0 * std::f64::consts::PI / (self.spin_rotation_per_tesla_metre() * b))
    }
}
