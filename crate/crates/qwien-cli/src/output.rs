//! On-disk formats: spinor dumps, 16-bit graymaps and the metrics table.

use ndarray::Array2;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use qwien::wavefield::{Grid, Space, Spin, SpinorField};

pub const SPSL_MAGIC: &[u8; 4] = b"SPSL";
pub const SPSL_VERSION: u32 = 1;
pub const SPSL_HEADER_LEN: usize = 64;

/// Writes a spinor dump: a 64-byte little-endian header followed by the up then down
/// components, row-major, as interleaved 32-bit real and imaginary parts.
///
/// Header layout: magic (4), version u32, n u32, channel count u32, extent f64,
/// z f64, space tag u32 (0 real, 1 Fourier), zero padding to 64 bytes.
pub fn write_spsl<W: Write>(mut w: W, field: &SpinorField) -> io::Result<()> {
    let mut header = [0u8; SPSL_HEADER_LEN];
    header[0..4].copy_from_slice(SPSL_MAGIC);
    header[4..8].copy_from_slice(&SPSL_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(field.grid.n as u32).to_le_bytes());
    header[12..16].copy_from_slice(&2u32.to_le_bytes());
    header[16..24].copy_from_slice(&field.grid.extent.to_le_bytes());
    header[24..32].copy_from_slice(&field.z.to_le_bytes());
    let tag: u32 = match field.space {
        Space::Real => 0,
        Space::Fourier => 1,
    };
    header[32..36].copy_from_slice(&tag.to_le_bytes());
    w.write_all(&header)?;
    let n = field.grid.n;
    let mut buf = Vec::with_capacity(n * n * 8);
    for comp in [&field.up, &field.down] {
        buf.clear();
        for c in comp.iter() {
            buf.extend_from_slice(&(c.re as f32).to_le_bytes());
            buf.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_spsl<R: Read>(mut r: R) -> io::Result<SpinorField> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut header = [0u8; SPSL_HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != SPSL_MAGIC {
        return Err(bad("not a spinor dump (bad magic)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(4) != SPSL_VERSION {
        return Err(bad("unsupported dump version"));
    }
    let n = u32_at(8) as usize;
    if u32_at(12) != 2 {
        return Err(bad("expected two spinor channels"));
    }
    let extent = f64_at(16);
    let z = f64_at(24);
    let space = match u32_at(32) {
        0 => Space::Real,
        1 => Space::Fourier,
        _ => return Err(bad("unknown space tag")),
    };
    // Fourier-space dumps may hold zoomed windows whose size is not a power of two
    let grid = Grid { n, extent, dx: extent / n as f64 };
    let mut read_component = || -> io::Result<Array2<Complex64>> {
        let mut bytes = vec![0u8; n * n * 8];
        r.read_exact(&mut bytes)?;
        let vals: Vec<Complex64> = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
                let im = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Array2::from_shape_vec((n, n), vals).map_err(|e| bad(&e.to_string()))
    };
    let up = read_component()?;
    let down = read_component()?;
    Ok(SpinorField { grid, up, down, z, space })
}

/// Binary 16-bit graymap (big-endian samples, as the format requires).
pub fn write_pgm16<W: Write>(mut w: W, pixels: &Array2<u16>) -> io::Result<()> {
    let (rows, cols) = pixels.dim();
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    let mut buf = Vec::with_capacity(rows * cols * 2);
    for v in pixels.iter() {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)
}

/// Linear intensity map scaled so the brightest pixel is white. Returns the pixels and the
/// intensity that maps to full scale.
pub fn intensity_image(intensity: &Array2<f64>) -> (Array2<u16>, f64) {
    let max = intensity.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    (intensity.mapv(|v| (v * scale).round().clamp(0.0, 65535.0) as u16), max)
}

/// Phase mapped linearly from `[-pi, pi]` to `[0, 65535]`.
pub fn phase_image(field: &Array2<Complex64>) -> Array2<u16> {
    field.mapv(|c| {
        let t = (c.arg() + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        (t * 65535.0).round().clamp(0.0, 65535.0) as u16
    })
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub kind: String,
    pub input_spin: Option<Spin>,
    pub output_spin: Option<Spin>,
    pub m: Option<i32>,
    pub key: String,
    pub value: f64,
}

impl MetricRow {
    pub fn summary(kind: &str, key: &str, value: f64) -> Self {
        MetricRow { kind: kind.into(), input_spin: None, output_spin: None, m: None, key: key.into(), value }
    }

    pub fn channel(kind: &str, input: Spin, output: Option<Spin>, key: &str, value: f64) -> Self {
        MetricRow { kind: kind.into(), input_spin: Some(input), output_spin: output, m: None, key: key.into(), value }
    }

    pub fn oam(input: Spin, output: Spin, m: i32, value: f64) -> Self {
        MetricRow {
            kind: "oam".into(),
            input_spin: Some(input),
            output_spin: Some(output),
            m: Some(m),
            key: "power".into(),
            value,
        }
    }
}

pub const METRICS_HEADER: &str = "kind,input_spin,output_spin,m,key,value";

/// CSV text with a header row. Values use a fixed exponent format so equal runs give equal bytes.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    let spin = |s: Option<Spin>| s.map_or("", |s| s.name());
    for r in rows {
        let m = r.m.map_or(String::new(), |m| m.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.12e}",
            r.kind,
            spin(r.input_spin),
            spin(r.output_spin),
            m,
            r.key,
            r.value
        );
    }
    out
}
