//! Physical quantities written as `"<number> <unit>"` strings or bare numbers.

use serde::Deserialize;

/// A quantity as it appears in the config file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RawQuantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Converted to electron-volts.
    Energy,
    /// Converted to metres.
    Length,
    /// Converted to tesla.
    Field,
    /// Converted to radians.
    Angle,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Energy => &[("meV", 1e-3), ("eV", 1.0), ("keV", 1e3), ("MeV", 1e6)],
            Dimension::Length => &[
                ("nm", 1e-9),
                ("um", 1e-6),
                ("μm", 1e-6),
                ("µm", 1e-6),
                ("mm", 1e-3),
                ("cm", 1e-2),
                ("m", 1.0),
            ],
            Dimension::Field => &[("uT", 1e-6), ("μT", 1e-6), ("µT", 1e-6), ("mT", 1e-3), ("T", 1.0)],
            Dimension::Angle => &[("deg", std::f64::consts::PI / 180.0), ("rad", 1.0)],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Energy => "energy",
            Dimension::Length => "length",
            Dimension::Field => "magnetic field",
            Dimension::Angle => "angle",
        }
    }
}

/// Converts to SI (eV for energies). Bare numbers are read in `default_unit`.
pub fn to_si(raw: &RawQuantity, dim: Dimension, default_unit: &str) -> Result<f64, String> {
    let units = dim.units();
    let scale_of = |u: &str| units.iter().find(|(name, _)| *name == u).map(|(_, s)| *s);
    let (value, unit) = match raw {
        RawQuantity::Number(v) => (*v, default_unit.to_string()),
        RawQuantity::Text(s) => {
            let s = s.trim();
            let split = s
                .char_indices()
                .find(|&(i, c)| c.is_alphabetic() && !(matches!(c, 'e' | 'E') && is_exponent(s, i)))
                .map_or(s.len(), |(i, _)| i);
            let (num, unit) = s.split_at(split);
            let num = num.trim();
            let value: f64 = num.parse().map_err(|_| format!("cannot read a number from \"{s}\""))?;
            let unit = unit.trim();
            (value, if unit.is_empty() { default_unit.to_string() } else { unit.to_string() })
        }
    };
    let scale = scale_of(&unit).ok_or_else(|| {
        let known: Vec<&str> = units.iter().map(|(n, _)| *n).collect();
        format!("unknown {} unit \"{unit}\" (expected one of {})", dim.name(), known.join(", "))
    })?;
    if !value.is_finite() {
        return Err(format!("value {value} is not finite"));
    }
    Ok(value * scale)
}

/// True when the `e` at byte `i` is an exponent marker inside a number like `1e-3`.
fn is_exponent(s: &str, i: usize) -> bool {
    let before = s[..i].chars().last();
    let after = s[i + 1..].chars().next();
    matches!(before, Some(c) if c.is_ascii_digit() || c == '.')
        && matches!(after, Some(c) if c.is_ascii_digit() || c == '-' || c == '+')
}
