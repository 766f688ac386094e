use num_complex::Complex64;

use super::matrix::{identity, is_finite, CMatrix};
use crate::{Error, Result};

/// Scaled input norm targeted before the Taylor series is applied.
const SCALED_NORM: f64 = 0.5;
/// Taylor order. With a scaled norm of 0.5 the truncation term is below
/// 0.5^19 / 19! ~ 2e-23, far under double-precision rounding.
const TAYLOR_ORDER: usize = 18;
/// Inputs past this 1-norm overflow in the squaring phase.
const MAX_NORM: f64 = 700.0;

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The input is scaled by `2^-s` until its 1-norm is at most 0.5, the series
/// is summed by Horner's rule, and the result squared `s` times.
pub fn expm(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(identity(0));
    }
    let norm = one_norm(m);
    if !norm.is_finite() || norm > MAX_NORM {
        return Err(Error::numerical(format!(
            "expm input norm {norm} is outside the supported range"
        )));
    }
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m * Complex64::new(0.5f64.powi(squarings), 0.0);

    // Horner: I + A/1 (I + A/2 (I + ... (I + A/N))).
    let eye = identity(n);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = &eye + (&scaled * &acc) * Complex64::new(1.0 / k as f64, 0.0);
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    if !is_finite(&acc) {
        return Err(Error::numerical("expm produced non-finite entries"));
    }
    Ok(acc)
}
