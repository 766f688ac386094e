use num_complex::Complex64;

use super::matrix::{CMatrix, CVector};
use crate::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Singular values in ascending order with their right singular vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `values[i]` is the i-th smallest singular value.
    pub values: Vec<f64>,
    /// Column `i` is the right singular vector for `values[i]`.
    pub vectors: CMatrix,
}

impl Svd {
    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Phase-rotates column `q` by `phase` and then applies the real plane
/// rotation `p' = c p - s q`, `q' = s p + c q`.
fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (a, b) = (&mut lo[p], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let yq = *y * phase;
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Full singular value decomposition by one-sided (Hestenes) Jacobi.
///
/// Tall inputs are first reduced to their square triangular QR factor, which
/// has the same singular values and right singular vectors. Column pairs are
/// then rotated until mutually orthogonal; the column norms are the singular
/// values and the accumulated rotations the right singular vectors. Small
/// singular values come out with absolute error of order `eps * |m|`, which
/// is what nullspace detection needs.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    if rows == 0 || n == 0 {
        return Err(Error::domain("svd of an empty matrix"));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("svd input has non-finite entries"));
    }
    let work = if rows > n {
        m.clone().qr().r()
    } else {
        m.clone()
    };
    let mut cols: Vec<Vec<Complex64>> = work
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();

    let tol = f64::EPSILON * (work.nrows() as f64).sqrt();
    // Columns below eps * |A| are numerically zero and are left alone.
    let negligible = (f64::EPSILON * work.norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norm_sq(&cols[p]);
                let beta = norm_sq(&cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                let g = gamma.norm();
                if alpha <= negligible || beta <= negligible || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical("Jacobi SVD did not converge"));
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (norm_sq(c).sqrt(), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let values = order.iter().map(|&(s, _)| s).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[order[c].1][r]);
    Ok(Svd { values, vectors })
}

/// Ascending singular values and the `k` right singular vectors belonging to
/// the smallest of them.
pub fn svd_values_and_nullspace(m: &CMatrix, k: usize) -> Result<(Vec<f64>, Vec<CVector>)> {
    if k > m.ncols() {
        return Err(Error::domain(format!(
            "requested {k} null vectors from a matrix with {} columns",
            m.ncols()
        )));
    }
    let d = svd(m)?;
    let vecs = (0..k).map(|i| d.vector(i)).collect();
    Ok((d.values, vecs))
}
