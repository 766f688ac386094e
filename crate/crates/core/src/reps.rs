//! Explicit Lie algebra representations.
//!
//! Generators are always stored as complex matrices; `Field::Real` only
//! records that the imaginary parts are meant to vanish. Analytic references
//! follow the ladder construction with the anti-Hermitian rescaling
//! `L = -i J`, so the so(3) relations hold as `[L_i, L_j] = eps_ijk L_k`
//! without a factor of `i`. Phase and basis conventions are otherwise
//! arbitrary, so everything downstream compares representations through
//! commutator residuals and intertwiners, never entry by entry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algebra::{
    so21_constants, so31_constants, so3_constants, AlgebraSource, StructureConstants,
};
use crate::numerics::{
    c64, commutator, expm, identity, kron, l1_norm, to_pairs, CMatrix, Complex64,
};
use crate::{Error, Result};

/// Closure tolerance stored with analytic representations.
pub const ANALYTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// A nonnegative half-integer spin, stored as `2j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Spin(u32);

impl Spin {
    pub const ZERO: Spin = Spin(0);
    pub const HALF: Spin = Spin(1);
    pub const ONE: Spin = Spin(2);

    pub fn from_twice(twice: u32) -> Self {
        Spin(twice)
    }

    /// Accepts any `j` with `2j` a nonnegative integer.
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !(twice >= 0.0) || twice.fract() != 0.0 || twice > u32::MAX as f64 {
            return Err(Error::domain(format!("spin {j} is not a nonnegative half-integer")));
        }
        Ok(Spin(twice as u32))
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// `2j + 1`.
    pub fn multiplicity(self) -> usize {
        self.0 as usize + 1
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for Spin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::domain(format!("cannot parse spin {s:?}"));
        match s.split_once('/') {
            Some((num, "2")) => num.parse::<u32>().map(Spin).map_err(|_| bad()),
            Some(_) => Err(bad()),
            None => s.parse::<u32>().map(|v| Spin(2 * v)).map_err(|_| bad()),
        }
    }
}

/// Spin labels of an irreducible representation; primed when learned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepLabel {
    pub spins: Vec<Spin>,
    pub learned: bool,
}

impl RepLabel {
    pub fn analytic(spins: &[Spin]) -> Self {
        Self {
            spins: spins.to_vec(),
            learned: false,
        }
    }

    pub fn learned(mut self) -> Self {
        self.learned = true;
        self
    }
}

impl fmt::Display for RepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prime = if self.learned { "'" } else { "" };
        match self.spins.as_slice() {
            [s] => write!(f, "{s}{prime}"),
            spins => {
                f.write_str("(")?;
                for (i, s) in spins.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{s}{prime}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A list of generator matrices representing an algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraRep {
    pub algebra: StructureConstants,
    pub field: Field,
    pub generators: Vec<CMatrix>,
    pub label: String,
    /// Commutator-closure tolerance this representation is held to.
    pub tolerance: f64,
}

impl AlgebraRep {
    /// Checks generator count and shapes; closure is not enforced here.
    pub fn new(
        algebra: StructureConstants,
        field: Field,
        generators: Vec<CMatrix>,
        label: impl Into<String>,
        tolerance: f64,
    ) -> Result<Self> {
        if generators.len() != algebra.dim() {
            return Err(Error::shape(format!(
                "algebra has {} generators, representation supplies {}",
                algebra.dim(),
                generators.len()
            )));
        }
        let n = generators[0].nrows();
        if n == 0 || generators.iter().any(|g| g.nrows() != n || g.ncols() != n) {
            return Err(Error::shape("generators must share one nonzero square shape"));
        }
        Ok(Self {
            algebra,
            field,
            generators,
            label: label.into(),
            tolerance,
        })
    }

    /// The `n`-dimensional trivial (all-zero) representation.
    pub fn trivial(algebra: &StructureConstants, n: usize) -> Self {
        Self {
            algebra: algebra.clone(),
            field: Field::Real,
            generators: vec![CMatrix::zeros(n, n); algebra.dim()],
            label: if n == 1 {
                "trivial".to_string()
            } else {
                format!("trivial^{n}")
            },
            tolerance: ANALYTIC_TOLERANCE,
        }
    }

    /// Representation dimension `n`.
    pub fn dim(&self) -> usize {
        self.generators[0].nrows()
    }

    /// `[T_i, T_j] - sum_k A_ijk T_k`.
    pub fn bracket_residual(&self, i: usize, j: usize) -> CMatrix {
        let mut r = commutator(&self.generators[i], &self.generators[j]);
        for (k, g) in self.generators.iter().enumerate() {
            let a = self.algebra.get(i, j, k);
            if a != 0.0 {
                r -= g * c64(a, 0.0);
            }
        }
        r
    }

    /// Largest L1 norm of the bracket residual over `i < j`.
    pub fn closure_residual(&self) -> f64 {
        let t = self.generators.len();
        let mut worst: f64 = 0.0;
        for i in 0..t {
            for j in (i + 1)..t {
                worst = worst.max(l1_norm(&self.bracket_residual(i, j)));
            }
        }
        worst
    }

    pub fn satisfies_closure(&self) -> bool {
        self.closure_residual() <= self.tolerance
    }

    /// `sum_i b_i T_i`.
    pub fn algebra_element(&self, coeffs: &[f64]) -> Result<CMatrix> {
        if coeffs.len() != self.generators.len() {
            return Err(Error::shape(format!(
                "{} coefficients for {} generators",
                coeffs.len(),
                self.generators.len()
            )));
        }
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for (b, g) in coeffs.iter().zip(&self.generators) {
            m += g * c64(*b, 0.0);
        }
        Ok(m)
    }

    /// Group element `exp(sum_i b_i T_i)`.
    pub fn exp(&self, coeffs: &[f64]) -> Result<CMatrix> {
        expm(&self.algebra_element(coeffs)?)
    }

    pub(crate) fn check_same_algebra(&self, other: &Self) -> Result<()> {
        if self.algebra.approx_eq(&other.algebra, 0.0) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "representations {:?} and {:?} belong to different algebras",
                self.label, other.label
            )))
        }
    }

    fn combined_field(&self, other: &Self) -> Field {
        if self.field == Field::Real && other.field == Field::Real {
            Field::Real
        } else {
            Field::Complex
        }
    }
}

/// Block-diagonal direct sum.
pub fn direct_sum(r1: &AlgebraRep, r2: &AlgebraRep) -> Result<AlgebraRep> {
    r1.check_same_algebra(r2)?;
    let (n1, n2) = (r1.dim(), r2.dim());
    let generators = r1
        .generators
        .iter()
        .zip(&r2.generators)
        .map(|(a, b)| {
            let mut m = CMatrix::zeros(n1 + n2, n1 + n2);
            m.view_mut((0, 0), (n1, n1)).copy_from(a);
            m.view_mut((n1, n1), (n2, n2)).copy_from(b);
            m
        })
        .collect();
    Ok(AlgebraRep {
        algebra: r1.algebra.clone(),
        field: r1.combined_field(r2),
        generators,
        label: format!("{}+{}", r1.label, r2.label),
        tolerance: r1.tolerance.max(r2.tolerance),
    })
}

/// Tensor product at the algebra level: `T_i (x) I + I (x) T'_i`, so that
/// exponentiation reproduces the Kronecker product of group elements.
pub fn tensor_product(r1: &AlgebraRep, r2: &AlgebraRep) -> Result<AlgebraRep> {
    r1.check_same_algebra(r2)?;
    let (i1, i2) = (identity(r1.dim()), identity(r2.dim()));
    let generators = r1
        .generators
        .iter()
        .zip(&r2.generators)
        .map(|(a, b)| kron(a, &i2) + kron(&i1, b))
        .collect();
    Ok(AlgebraRep {
        algebra: r1.algebra.clone(),
        field: r1.combined_field(r2),
        generators,
        label: format!("{}x{}", r1.label, r2.label),
        tolerance: r1.tolerance.max(r2.tolerance) * (r1.dim() * r2.dim()) as f64,
    })
}

/// Physics-convention spin-j matrices `(J_x, J_y, J_z)`, Hermitian, with
/// basis `m = j, j-1, ..., -j`.
fn hermitian_spin_matrices(j: Spin) -> [CMatrix; 3] {
    let n = j.multiplicity();
    let jv = j.value();
    let mut jp = CMatrix::zeros(n, n);
    let mut jz = CMatrix::zeros(n, n);
    for a in 0..n {
        let m = jv - a as f64;
        jz[(a, a)] = c64(m, 0.0);
        if a > 0 {
            // J_+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>
            jp[(a - 1, a)] = c64((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * c64(0.5, 0.0);
    let jy = (&jp - &jm) * c64(0.0, -0.5);
    [jx, jy, jz]
}

/// Anti-Hermitian so(3) generators `L = -i J` satisfying
/// `[L_i, L_j] = eps_ijk L_k`.
fn so3_generators(j: Spin) -> [CMatrix; 3] {
    let minus_i = c64(0.0, -1.0);
    hermitian_spin_matrices(j).map(|m| m * minus_i)
}

/// The `(2j+1)`-dimensional irreducible representation of so(3).
pub fn spin_rep_so3(j: Spin) -> AlgebraRep {
    AlgebraRep {
        algebra: so3_constants(),
        field: Field::Complex,
        generators: so3_generators(j).to_vec(),
        label: RepLabel::analytic(&[j]).to_string(),
        tolerance: ANALYTIC_TOLERANCE,
    }
}

/// so(2,1) irreducible representation via `K_x = -i L_x`, `K_y = -i L_y`,
/// `J_z = L_z`.
pub fn rep_so21(j: Spin) -> AlgebraRep {
    let [lx, ly, lz] = so3_generators(j);
    let minus_i = c64(0.0, -1.0);
    AlgebraRep {
        algebra: so21_constants(),
        field: Field::Complex,
        generators: vec![lx * minus_i, ly * minus_i, lz],
        label: RepLabel::analytic(&[j]).to_string(),
        tolerance: ANALYTIC_TOLERANCE,
    }
}

/// so(3,1) irreducible representation `(j1, j2)`.
///
/// `A_i` acts as spin `j1` on the left tensor factor and `B_i` as spin `j2`
/// on the right; the rotation and boost generators are recovered as
/// `J_i = A_i + B_i` and `K_i = -i (A_i - B_i)`.
pub fn rep_so31(j1: Spin, j2: Spin) -> AlgebraRep {
    let left = so3_generators(j1);
    let right = so3_generators(j2);
    let (i1, i2) = (identity(j1.multiplicity()), identity(j2.multiplicity()));
    let a: Vec<CMatrix> = left.iter().map(|l| kron(l, &i2)).collect();
    let b: Vec<CMatrix> = right.iter().map(|r| kron(&i1, r)).collect();
    let minus_i = c64(0.0, -1.0);
    let mut generators: Vec<CMatrix> = (0..3).map(|i| &a[i] + &b[i]).collect();
    generators.extend((0..3).map(|i| (&a[i] - &b[i]) * minus_i));
    AlgebraRep {
        algebra: so31_constants(),
        field: Field::Complex,
        generators,
        label: RepLabel::analytic(&[j1, j2]).to_string(),
        tolerance: ANALYTIC_TOLERANCE,
    }
}

/// Real defining representation of so(n,1) acting on spacetime coordinates
/// `(t, x_1, .., x_n)` for `n = 2` (so21) or `n = 3` (so31). Boost
/// generators mix `t` with `x_i`; rotation generators rotate the spatial
/// axes.
pub fn spacetime_rep(spatial_dims: usize) -> Result<AlgebraRep> {
    let d = spatial_dims + 1;
    // e_a e_b^T
    let unit = |a: usize, b: usize| {
        let mut m = CMatrix::zeros(d, d);
        m[(a, b)] = c64(1.0, 0.0);
        m
    };
    let boost = |i: usize| unit(0, i) + unit(i, 0);
    // Rotation taking axis `from` towards axis `to`.
    let rot = |from: usize, to: usize| unit(to, from) - unit(from, to);
    let (algebra, generators, label) = match spatial_dims {
        2 => (so21_constants(), vec![boost(1), boost(2), rot(1, 2)], "spacetime(2+1)"),
        3 => (
            so31_constants(),
            vec![rot(2, 3), rot(3, 1), rot(1, 2), boost(1), boost(2), boost(3)],
            "spacetime(3+1)",
        ),
        n => {
            return Err(Error::domain(format!(
                "spacetime representation needs 2 or 3 spatial dims, got {n}"
            )))
        }
    };
    AlgebraRep::new(algebra, Field::Real, generators, label, ANALYTIC_TOLERANCE)
}

/// Analytic irreducible representations of a built-in algebra with
/// dimension at most `max_dim`, in increasing spin order.
pub fn analytic_irreps(algebra: &StructureConstants, max_dim: usize) -> Result<Vec<AlgebraRep>> {
    let name = algebra
        .name()
        .ok_or_else(|| Error::domain("analytic representations exist only for built-in algebras"))?;
    let mut out = Vec::new();
    match name {
        "so3" | "so21" => {
            for twice in 0..max_dim as u32 {
                let j = Spin::from_twice(twice);
                out.push(if name == "so3" { spin_rep_so3(j) } else { rep_so21(j) });
            }
        }
        "so31" => {
            for total in 0..(2 * max_dim as u32) {
                for t1 in 0..=total {
                    let (j1, j2) = (Spin::from_twice(t1), Spin::from_twice(total - t1));
                    if j1.multiplicity() * j2.multiplicity() <= max_dim {
                        out.push(rep_so31(j1, j2));
                    }
                }
            }
        }
        other => return Err(Error::domain(format!("no analytic irreps for {other}"))),
    }
    Ok(out)
}

/// Analytic irreducible representation named by its spin label, e.g. `"1"`
/// or `"1/2"` for so3/so21 and `"(1/2,1/2)"` for so31.
pub fn analytic_irrep(algebra: &StructureConstants, label: &str) -> Result<AlgebraRep> {
    let spins: Vec<Spin> = label
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|s| s.trim_end_matches('\'').parse())
        .collect::<Result<_>>()?;
    match (algebra.name(), spins.as_slice()) {
        (Some("so3"), [j]) => Ok(spin_rep_so3(*j)),
        (Some("so21"), [j]) => Ok(rep_so21(*j)),
        (Some("so31"), [j1, j2]) => Ok(rep_so31(*j1, *j2)),
        _ => Err(Error::domain(format!(
            "no analytic representation {label:?} for this algebra"
        ))),
    }
}

/// JSON representation file:
/// `{"algebra", "field", "label", "generators": [[[ [re, im], .. ]]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepFile {
    pub algebra: AlgebraSource,
    pub field: Field,
    pub label: String,
    pub generators: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl From<&AlgebraRep> for RepFile {
    fn from(rep: &AlgebraRep) -> Self {
        let generators = rep
            .generators
            .iter()
            .map(to_pairs)
            .collect();
        RepFile {
            algebra: AlgebraSource::from(&rep.algebra),
            field: rep.field,
            label: rep.label.clone(),
            generators,
            tolerance: Some(rep.tolerance),
        }
    }
}

impl RepFile {
    pub fn into_rep(self) -> Result<AlgebraRep> {
        let algebra = self.algebra.resolve()?;
        let mut generators = Vec::with_capacity(self.generators.len());
        for (gi, g) in self.generators.iter().enumerate() {
            let n = g.len();
            if n == 0 || g.iter().any(|row| row.len() != n) {
                return Err(Error::shape(format!("generator {gi} is not a nonempty square matrix")));
            }
            generators.push(CMatrix::from_fn(n, n, |r, c| {
                let [re, im] = g[r][c];
                Complex64::new(re, im)
            }));
        }
        AlgebraRep::new(
            algebra,
            self.field,
            generators,
            self.label,
            self.tolerance.unwrap_or(ANALYTIC_TOLERANCE),
        )
    }
}

impl Serialize for AlgebraRep {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RepFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AlgebraRep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        RepFile::deserialize(d)?
            .into_rep()
            .map_err(serde::de::Error::custom)
    }
}
