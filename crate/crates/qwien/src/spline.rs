//! Cubic B-spline interpolation of complex rasters with mirror boundaries.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

fn prefilter_line(c: &mut [Complex64]) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in c.iter_mut() {
        *v *= gain;
    }
    // causal initialisation, truncated once z^k drops below machine precision
    let horizon = ((f64::EPSILON.ln() / z.abs().ln()).ceil() as usize).min(n);
    let mut zk = z;
    let mut sum = c[0];
    for v in c.iter().take(horizon).skip(1) {
        sum += *v * zk;
        zk *= z;
    }
    c[0] = sum;
    for k in 1..n {
        let prev = c[k - 1];
        c[k] += prev * z;
    }
    c[n - 1] = (c[n - 1] + c[n - 2] * z) * (z / (z * z - 1.0));
    for k in (0..n - 1).rev() {
        let next = c[k + 1];
        c[k] = (next - c[k]) * z;
    }
}

/// Interpolation coefficients for `samples` (rows then columns filtered).
pub fn coefficients(samples: &Array2<Complex64>) -> Array2<Complex64> {
    let mut c = samples.as_standard_layout().into_owned();
    c.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        prefilter_line(row.as_slice_mut().expect("contiguous row"));
    });
    let mut t = c.t().as_standard_layout().into_owned();
    t.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        prefilter_line(row.as_slice_mut().expect("contiguous row"));
    });
    t.t().as_standard_layout().into_owned()
}

fn weights(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0,
        (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0,
        t * t * t / 6.0,
    ]
}

fn mirror(i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Evaluates the spline at fractional (column, row) coordinates.
pub fn evaluate(coeffs: &Array2<Complex64>, col: f64, row: f64) -> Complex64 {
    let (nr, nc) = coeffs.dim();
    let c0 = col.floor();
    let r0 = row.floor();
    let wc = weights(col - c0);
    let wr = weights(row - r0);
    let (c0, r0) = (c0 as isize, r0 as isize);
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, wa) in wr.iter().enumerate() {
        let r = mirror(r0 - 1 + a as isize, nr as isize);
        let mut line = Complex64::new(0.0, 0.0);
        for (b, wb) in wc.iter().enumerate() {
            let c = mirror(c0 - 1 + b as isize, nc as isize);
            line += coeffs[[r, c]] * *wb;
        }
        acc += line * *wa;
    }
    acc
}
