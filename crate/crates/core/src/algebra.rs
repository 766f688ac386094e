//! Lie algebras described by their structure constants.
//!
//! A `t`-dimensional algebra with basis `T_1..T_t` is fixed by the tensor
//! `A_ijk` in `[T_i, T_j] = sum_k A_ijk T_k`. Generator ordering matters and
//! is frozen for the built-ins:
//!
//! * `so3`: `(J_1, J_2, J_3)` with `[J_i, J_j] = eps_ijk J_k`
//! * `so21`: `(K_x, K_y, J_z)` with `[J_z, K_x] = K_y`, `[J_z, K_y] = -K_x`,
//!   `[K_x, K_y] = -J_z`
//! * `so31`: `(J_1, J_2, J_3, K_1, K_2, K_3)` with `[J_i, J_j] = eps_ijk J_k`,
//!   `[J_i, K_j] = eps_ijk K_k`, `[K_i, K_j] = -eps_ijk J_k`

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default tolerance for exact-integer structure constants.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Dense structure-constant tensor of a Lie algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructureConstantsJson", into = "StructureConstantsJson")]
pub struct StructureConstants {
    dim: usize,
    /// Row-major `i -> j -> k`.
    a: Vec<f64>,
    name: Option<String>,
}

/// JSON form: `{"dim": t, "structure_constants": [[[...]]]}`.
#[derive(Serialize, Deserialize)]
struct StructureConstantsJson {
    dim: usize,
    structure_constants: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<StructureConstantsJson> for StructureConstants {
    type Error = Error;

    fn try_from(j: StructureConstantsJson) -> Result<Self> {
        let sc = Self::from_nested(&j.structure_constants)?;
        if sc.dim != j.dim {
            return Err(Error::shape(format!(
                "declared dim {} but tensor has leading extent {}",
                j.dim, sc.dim
            )));
        }
        Ok(sc)
    }
}

impl From<StructureConstants> for StructureConstantsJson {
    fn from(sc: StructureConstants) -> Self {
        Self {
            dim: sc.dim,
            structure_constants: sc.to_nested(),
        }
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

impl StructureConstants {
    /// All-zero tensor (the abelian algebra of dimension `dim`).
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            a: vec![0.0; dim * dim * dim],
            name: None,
        }
    }

    /// Builds from a nested `t x t x t` array, checking the shape.
    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = nested.len();
        if dim == 0 {
            return Err(Error::shape("structure constants need at least one generator"));
        }
        let mut a = Vec::with_capacity(dim * dim * dim);
        for (i, plane) in nested.iter().enumerate() {
            if plane.len() != dim {
                return Err(Error::shape(format!(
                    "A[{i}] has {} rows, expected {dim}",
                    plane.len()
                )));
            }
            for (j, row) in plane.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::shape(format!(
                        "A[{i}][{j}] has {} entries, expected {dim}",
                        row.len()
                    )));
                }
                a.extend_from_slice(row);
            }
        }
        Ok(Self { dim, a, name: None })
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let t = self.dim;
        (0..t)
            .map(|i| {
                (0..t)
                    .map(|j| (0..t).map(|k| self.get(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }

    /// Number of generators `t`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Built-in name (`"so3"`, `"so21"`, `"so31"`) when this is a built-in.
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.a[(i * self.dim + j) * self.dim + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let t = self.dim;
        self.a[(i * t + j) * t + k] = value;
        self.name = None;
    }

    /// Sets `A_ijk = value` and `A_jik = -value`.
    fn set_bracket(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let t = self.dim;
        self.a[(i * t + j) * t + k] = value;
        self.a[(j * t + i) * t + k] = -value;
    }

    fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    /// Looks up a built-in algebra by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "so3" => Ok(so3_constants()),
            "so21" => Ok(so21_constants()),
            "so31" => Ok(so31_constants()),
            other => Err(Error::domain(format!(
                "unknown algebra {other:?}; expected so3, so21 or so31"
            ))),
        }
    }

    /// Relabels generators: the result's generator `i` is this algebra's
    /// generator `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let t = self.dim;
        let mut seen = vec![false; t];
        if perm.len() != t || perm.iter().any(|&p| p >= t || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("not a permutation of the generator indices"));
        }
        let mut inv = vec![0; t];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let mut out = Self::zeros(t);
        for i in 0..t {
            for j in 0..t {
                for k in 0..t {
                    out.a[(i * t + j) * t + inv[k]] = self.get(perm[i], perm[j], k);
                }
            }
        }
        Ok(out)
    }

    /// Largest `|A_ijk + A_jik|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let t = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..t {
            for j in 0..t {
                for k in 0..t {
                    worst = worst.max((self.get(i, j, k) + self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    /// Largest `|sum_m (A_ijm A_mkl + A_jkm A_mil + A_kim A_mjl)|`.
    pub fn jacobi_residual(&self) -> f64 {
        let t = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..t {
            for j in 0..t {
                for k in 0..t {
                    for l in 0..t {
                        let s: f64 = (0..t)
                            .map(|m| {
                                self.get(i, j, m) * self.get(m, k, l)
                                    + self.get(j, k, m) * self.get(m, i, l)
                                    + self.get(k, i, m) * self.get(m, j, l)
                            })
                            .sum();
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Tensor equality up to `tol`, ignoring names.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self
                .a
                .iter()
                .zip(&other.a)
                .all(|(x, y)| (x - y).abs() <= tol)
    }
}

/// so(3): `A_ijk = eps_ijk`.
pub fn so3_constants() -> StructureConstants {
    let mut sc = StructureConstants::zeros(3);
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                sc.a[(i * 3 + j) * 3 + k] = levi_civita(i, j, k);
            }
        }
    }
    sc.named("so3")
}

/// so(2,1) with generators ordered `(K_x, K_y, J_z)`.
pub fn so21_constants() -> StructureConstants {
    const KX: usize = 0;
    const KY: usize = 1;
    const JZ: usize = 2;
    let mut sc = StructureConstants::zeros(3);
    sc.set_bracket(JZ, KX, KY, 1.0);
    sc.set_bracket(JZ, KY, KX, -1.0);
    sc.set_bracket(KX, KY, JZ, -1.0);
    sc.named("so21")
}

/// so(3,1) with generators ordered `(J_1, J_2, J_3, K_1, K_2, K_3)`.
pub fn so31_constants() -> StructureConstants {
    let mut sc = StructureConstants::zeros(6);
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let e = levi_civita(i, j, k);
                if e == 0.0 {
                    continue;
                }
                sc.a[(i * 6 + j) * 6 + k] = e;
                // [J_i, K_j] = eps K_k and [K_j, J_i] = -eps K_k.
                sc.a[(i * 6 + (j + 3)) * 6 + (k + 3)] = e;
                sc.a[((j + 3) * 6 + i) * 6 + (k + 3)] = -e;
                sc.a[((i + 3) * 6 + (j + 3)) * 6 + k] = -e;
            }
        }
    }
    sc.named("so31")
}

/// Which defining identity a tensor violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Identity {
    Antisymmetry,
    Jacobi,
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identity::Antisymmetry => f.write_str("antisymmetry"),
            Identity::Jacobi => f.write_str("Jacobi identity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub identity: Identity,
    pub residual: f64,
}

/// Violated identities; empty when the tensor defines a Lie algebra.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks antisymmetry and the Jacobi identity within `tol`.
pub fn validate(sc: &StructureConstants, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let anti = sc.antisymmetry_residual();
    if anti > tol {
        violations.push(Violation {
            identity: Identity::Antisymmetry,
            residual: anti,
        });
    }
    let jac = sc.jacobi_residual();
    if jac > tol {
        violations.push(Violation {
            identity: Identity::Jacobi,
            residual: jac,
        });
    }
    ValidationReport { violations }
}

/// An algebra reference in JSON: either a built-in name or a full tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgebraSource {
    Name(String),
    Tensor(StructureConstants),
}

impl AlgebraSource {
    pub fn resolve(&self) -> Result<StructureConstants> {
        match self {
            AlgebraSource::Name(n) => StructureConstants::builtin(n),
            AlgebraSource::Tensor(sc) => Ok(sc.clone()),
        }
    }
}

impl From<&StructureConstants> for AlgebraSource {
    fn from(sc: &StructureConstants) -> Self {
        match sc.name() {
            Some(n) => AlgebraSource::Name(n.to_string()),
            None => AlgebraSource::Tensor(sc.clone()),
        }
    }
}
